#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "har/classifier.hpp"
#include "har/graph.hpp"
#include "har/hierarchy.hpp"
#include "har/rng.hpp"
#include "har/tensor.hpp"

namespace har {

enum class Norm { linf, l2 };

enum class AttackMode {
  untargeted,
  targeted,
  worst_case_hierarchical,
  coarse_net_targeted,
  average_case,
  best_case,
};

std::string to_string(Norm n);
std::string to_string(AttackMode m);
Norm norm_from_string(const std::string& s);
AttackMode mode_from_string(const std::string& s);

struct AttackSpec {
  Norm norm = Norm::linf;
  double epsilon = 8.0 / 255.0;
  double alpha = -1.0;  // negative resolves to epsilon / 4
  int iterations = 20;
  AttackMode mode = AttackMode::untargeted;
  int target = -1;  // fine id, targeted mode only
  bool random_init = true;
  std::uint64_t seed = 0;

  double step_size() const { return alpha < 0.0 ? epsilon / 4.0 : alpha; }
};

// Throws SpecError on k < 1 or a negative/non-finite epsilon.
void validate_attack_spec(const AttackSpec& spec);

struct AttackOutcome {
  Tensor x_adv;  // [1, d]
  bool succeeded_fine = false;    // prediction != y*
  bool succeeded_coarse = false;  // coarse of prediction != z*
  std::optional<bool> succeeded_target;
  std::vector<int> targets_tried;  // coarse ids for the coarse-net mode
  int iterations_used = 0;  // steps along the returned trajectory
  int predicted = -1;
  double linf_delta = 0.0;
  double l2_delta = 0.0;
};

// Seed-splitting scheme. Batch runs give sample i the stream
// seed ^ i; every targeted trajectory inside a multi-target mode draws
// from mix(stream, target). Standalone targeted attacks use the same
// derivation, so a worst-case run is reproducible target-for-target by
// independent single-target calls with the same spec seed.
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index);
std::uint64_t target_seed(std::uint64_t stream, int target);

// x + eta, clipped and re-projected. linf: eta_i ~ U(-eps, eps); l2:
// eta uniform in the eps-ball (spherical direction, radius
// eps * u^(1/d)). Row-wise over batches.
Tensor random_init(const Tensor& x, const AttackSpec& spec, Rng& rng);

// Projection onto the eps-ball around x_orig intersected with the
// [0,1] box, row-wise. Bitwise idempotent.
Tensor project(const Tensor& x_cand, const Tensor& x_orig,
               const AttackSpec& spec);

// Single PGD steps: ascent on loss(x, y_star) / descent on
// loss(x, target), followed by projection. l2 uses g/||g||_2 per row;
// zero-gradient rows stay put.
Tensor pgd_step_untargeted(const Model& m, const Tensor& x_j,
                           const Tensor& x_orig, int y_star,
                           const AttackSpec& spec);
Tensor pgd_step_targeted(const Model& m, const Tensor& x_j,
                         const Tensor& x_orig, int target,
                         const AttackSpec& spec);

// One-step sign attack: k=1, alpha=eps, no random init.
Tensor fgsm(const Model& m, const Tensor& x, int y_star, double epsilon,
            Norm norm = Norm::linf);

// Scalar loss of the perturbed input; shared by attacks and the
// adversarial training inner loops.
using LossBuilder = std::function<Var(Graph&, Var x)>;

Tensor loss_input_grad(const LossBuilder& loss, const Tensor& x);

// k projected steps on an arbitrary loss over a batch; direction +1
// maximizes, -1 minimizes. Consumes rng only for random init.
Tensor pgd_perturb(const LossBuilder& loss, const Tensor& x,
                   const AttackSpec& spec, int direction, Rng& rng);

// Single-sample attack dispatch for untargeted / targeted /
// worst_case_hierarchical / average_case / best_case. x is [1, d];
// spec.seed is the per-sample stream. Targeted modes require
// cross-coarse targets; an empty candidate set raises DomainError.
AttackOutcome pgd_attack(const Model& m, const Hierarchy& h, const Tensor& x,
                         int y_star, const AttackSpec& spec);

// Worst-case iteration over coarse targets z != coarse_of(y_star),
// stepping on the coarse net's loss; termination follows the coarse
// net's own prediction, success flags follow the full composite model.
AttackOutcome coarse_net_attack(const HarModel& m, const Tensor& x, int y_star,
                                const AttackSpec& spec);

// Runs spec.mode over every row; per-sample streams come from
// sample_seed(spec.seed, row). Parallel and serial runs agree bitwise.
std::vector<AttackOutcome> attack_dataset(const Model& m, const Hierarchy& h,
                                          const Tensor& xs,
                                          const std::vector<int>& ys,
                                          const AttackSpec& spec,
                                          int workers = 1);

}  // namespace har
