#include "har/metrics.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include "har/errors.hpp"
#include "har/rng.hpp"

namespace har {

double fine_accuracy(const std::vector<int>& preds,
                     const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw DimensionError("prediction and label counts differ");
  if (preds.empty())
    throw UndefinedMetricError("fine accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double coarse_accuracy(const std::vector<int>& preds,
                       const std::vector<int>& labels, const Hierarchy& h) {
  if (preds.size() != labels.size())
    throw DimensionError("prediction and label counts differ");
  if (preds.empty())
    throw UndefinedMetricError("coarse accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (h.coarse_of(preds[i]) == h.coarse_of(labels[i])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::optional<double> within_coarse_ratio(const std::vector<int>& preds,
                                          const std::vector<int>& labels,
                                          const Hierarchy& h) {
  if (preds.size() != labels.size())
    throw DimensionError("prediction and label counts differ");
  std::size_t missed = 0, within = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) continue;
    ++missed;
    if (h.coarse_of(preds[i]) == h.coarse_of(labels[i])) ++within;
  }
  if (missed == 0) return std::nullopt;
  return static_cast<double>(within) / static_cast<double>(missed);
}

double targeted_robust_accuracy(const std::vector<AttackOutcome>& outcomes) {
  if (outcomes.empty())
    throw UndefinedMetricError("targeted robust accuracy of an empty set");
  std::size_t resisted = 0;
  for (const AttackOutcome& o : outcomes) {
    if (!o.succeeded_target.has_value())
      throw ContractError("outcome carries no target flag");
    if (!*o.succeeded_target) ++resisted;
  }
  return static_cast<double>(resisted) /
         static_cast<double>(outcomes.size());
}

namespace {

std::vector<int> outcome_preds(const std::vector<AttackOutcome>& outcomes) {
  std::vector<int> preds;
  preds.reserve(outcomes.size());
  for (const AttackOutcome& o : outcomes) preds.push_back(o.predicted);
  return preds;
}

double coarse_acc_of_outcomes(const std::vector<AttackOutcome>& outcomes) {
  if (outcomes.empty())
    throw UndefinedMetricError("coarse accuracy of an empty set");
  std::size_t kept = 0;
  for (const AttackOutcome& o : outcomes)
    if (!o.succeeded_coarse) ++kept;
  return static_cast<double>(kept) / static_cast<double>(outcomes.size());
}

}  // namespace

EvalReport evaluate(const Model& m, const Dataset& test, const Hierarchy& h,
                    const EvalOptions& opts) {
  if (test.size() == 0)
    throw UndefinedMetricError("evaluation of an empty test set");
  if (test.fine_count != h.fine_count())
    throw DimensionError("dataset fine count does not match hierarchy");

  EvalReport rep;
  rep.n_samples = test.size();
  rep.untargeted_spec = opts.untargeted;
  rep.worst_case_spec = opts.worst_case;
  rep.seed = opts.subsample_seed;
  rep.config_hash = opts.config_hash;
  rep.coarse_chance = 1.0 / static_cast<double>(h.coarse_count());

  const std::vector<int> clean_preds = m.predict_labels(test.features);
  rep.clean_fine_acc = fine_accuracy(clean_preds, test.fine_labels);
  rep.clean_coarse_acc = coarse_accuracy(clean_preds, test.fine_labels, h);

  AttackSpec unt = opts.untargeted;
  unt.mode = AttackMode::untargeted;
  const std::vector<AttackOutcome> unt_outcomes =
      attack_dataset(m, h, test.features, test.fine_labels, unt,
                     opts.workers);
  const std::vector<int> adv_preds = outcome_preds(unt_outcomes);
  rep.attacked_fine_acc = fine_accuracy(adv_preds, test.fine_labels);
  rep.attacked_coarse_acc = coarse_accuracy(adv_preds, test.fine_labels, h);
  rep.within_coarse = within_coarse_ratio(adv_preds, test.fine_labels, h);
  if (rep.attacked_fine_acc > rep.attacked_coarse_acc ||
      rep.clean_fine_acc > rep.clean_coarse_acc)
    throw ContractError("fine accuracy exceeded coarse accuracy");

  if (opts.run_worst_case || opts.coarse_net.has_value()) {
    std::size_t want = opts.subsample;
    if (want > test.size()) {
      std::cerr << "subsample " << want << " exceeds test set size "
                << test.size() << "; clamping\n";
      want = test.size();
    }
    if (want == 0) want = test.size();
    std::vector<std::size_t> idx(test.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng sub_rng(opts.subsample_seed);
    sub_rng.shuffle(idx);
    idx.resize(want);
    std::sort(idx.begin(), idx.end());

    Tensor xs({want, test.dim()});
    std::vector<int> ys(want);
    for (std::size_t r = 0; r < want; ++r) {
      std::span<const double> src = test.features.row_span(idx[r]);
      std::span<double> dst = xs.row_span(r);
      std::copy(src.begin(), src.end(), dst.begin());
      ys[r] = test.fine_labels[idx[r]];
    }
    rep.n_subsample = want;

    if (opts.run_worst_case) {
      AttackSpec wc = opts.worst_case;
      wc.mode = AttackMode::worst_case_hierarchical;
      const std::vector<AttackOutcome> wc_outcomes =
          attack_dataset(m, h, xs, ys, wc, opts.workers);
      rep.targeted_robust_acc = targeted_robust_accuracy(wc_outcomes);
      rep.worst_case_coarse_acc = coarse_acc_of_outcomes(wc_outcomes);
    }
    if (opts.coarse_net.has_value()) {
      AttackSpec cn = *opts.coarse_net;
      cn.mode = AttackMode::coarse_net_targeted;
      const std::vector<AttackOutcome> cn_outcomes =
          attack_dataset(m, h, xs, ys, cn, opts.workers);
      rep.coarse_net_coarse_acc = coarse_acc_of_outcomes(cn_outcomes);
    }
  }
  return rep;
}

}  // namespace har
