#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "har/attack.hpp"
#include "har/classifier.hpp"
#include "har/data.hpp"
#include "har/hierarchy.hpp"

namespace har {

double fine_accuracy(const std::vector<int>& preds,
                     const std::vector<int>& labels);
double coarse_accuracy(const std::vector<int>& preds,
                       const std::vector<int>& labels, const Hierarchy& h);

// Among fine-misclassified samples, the fraction still coarse-correct.
// Absent (not 0) when nothing is misclassified.
std::optional<double> within_coarse_ratio(const std::vector<int>& preds,
                                          const std::vector<int>& labels,
                                          const Hierarchy& h);

// Fraction of outcomes whose attack failed to reach any target.
// Outcomes must carry target flags (multi-target or targeted modes).
double targeted_robust_accuracy(const std::vector<AttackOutcome>& outcomes);

struct EvalOptions {
  AttackSpec untargeted;  // applied to the full test set
  AttackSpec worst_case;  // applied to a seeded subsample
  bool run_worst_case = true;
  std::optional<AttackSpec> coarse_net;  // composite models only
  std::size_t subsample = 1000;
  std::uint64_t subsample_seed = 0;  // independent of attack streams
  int workers = 1;
  std::string config_hash;
};

struct EvalReport {
  double clean_fine_acc = 0.0;
  double clean_coarse_acc = 0.0;
  double attacked_fine_acc = 0.0;
  double attacked_coarse_acc = 0.0;
  std::optional<double> within_coarse;  // under the untargeted attack
  std::optional<double> targeted_robust_acc;
  std::optional<double> worst_case_coarse_acc;
  std::optional<double> coarse_net_coarse_acc;
  double coarse_chance = 0.0;  // 1 / coarse_count
  std::size_t n_samples = 0;
  std::size_t n_subsample = 0;
  AttackSpec untargeted_spec;
  AttackSpec worst_case_spec;
  std::uint64_t seed = 0;
  std::string config_hash;
};

// Clean metrics and the untargeted attack cover the full set; the
// worst-case (and optional coarse-net) runs cover a subsample chosen by
// a dedicated stream from subsample_seed. Oversized subsamples clamp
// with a warning on stderr.
EvalReport evaluate(const Model& m, const Dataset& test, const Hierarchy& h,
                    const EvalOptions& opts);

}  // namespace har
