#include "har/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>
#include <utility>

#include "har/errors.hpp"

namespace har {

std::string to_string(Norm n) { return n == Norm::linf ? "linf" : "l2"; }

std::string to_string(AttackMode m) {
  switch (m) {
    case AttackMode::untargeted: return "untargeted";
    case AttackMode::targeted: return "targeted";
    case AttackMode::worst_case_hierarchical: return "hier-worst";
    case AttackMode::coarse_net_targeted: return "coarse-targeted";
    case AttackMode::average_case: return "hier-avg";
    case AttackMode::best_case: return "hier-best";
  }
  throw ContractError("unknown attack mode value");
}

Norm norm_from_string(const std::string& s) {
  if (s == "linf") return Norm::linf;
  if (s == "l2") return Norm::l2;
  throw ParseError("unknown norm '" + s + "' (expected linf or l2)");
}

AttackMode mode_from_string(const std::string& s) {
  if (s == "untargeted") return AttackMode::untargeted;
  if (s == "targeted") return AttackMode::targeted;
  if (s == "hier-worst") return AttackMode::worst_case_hierarchical;
  if (s == "coarse-targeted") return AttackMode::coarse_net_targeted;
  if (s == "hier-avg") return AttackMode::average_case;
  if (s == "hier-best") return AttackMode::best_case;
  throw ParseError("unknown attack mode '" + s + "'");
}

void validate_attack_spec(const AttackSpec& spec) {
  if (spec.iterations < 1)
    throw SpecError("attack needs at least one iteration, got " +
                    std::to_string(spec.iterations));
  if (!std::isfinite(spec.epsilon) || spec.epsilon < 0.0)
    throw SpecError("epsilon must be a finite nonnegative real");
  if (!std::isfinite(spec.step_size()) || spec.step_size() < 0.0)
    throw SpecError("step size must be a finite nonnegative real");
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  return seed ^ index;
}

std::uint64_t target_seed(std::uint64_t stream, int target) {
  return Rng::mix(stream, static_cast<std::uint64_t>(target));
}

Tensor random_init(const Tensor& x, const AttackSpec& spec, Rng& rng) {
  if (x.rank() != 2) throw DimensionError("random_init expects [n, d] rows");
  const std::size_t n = x.rows(), d = x.cols();
  Tensor cand(x.shape());
  if (spec.norm == Norm::linf) {
    for (std::size_t i = 0; i < cand.size(); ++i)
      cand[i] = x[i] + rng.uniform(-spec.epsilon, spec.epsilon);
  } else {
    std::vector<double> dir(d);
    for (std::size_t i = 0; i < n; ++i) {
      double norm_sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dir[j] = rng.normal();
        norm_sq += dir[j] * dir[j];
      }
      const double norm = std::sqrt(norm_sq);
      const double radius =
          spec.epsilon *
          std::pow(rng.uniform01(), 1.0 / static_cast<double>(d));
      std::span<const double> xi = x.row_span(i);
      std::span<double> ci = cand.row_span(i);
      if (norm == 0.0) {
        for (std::size_t j = 0; j < d; ++j) ci[j] = xi[j];
      } else {
        for (std::size_t j = 0; j < d; ++j)
          ci[j] = xi[j] + radius * dir[j] / norm;
      }
    }
  }
  return project(cand, x, spec);
}

Tensor project(const Tensor& x_cand, const Tensor& x_orig,
               const AttackSpec& spec) {
  if (!x_cand.same_shape(x_orig))
    throw DimensionError("project operands must share a shape");
  if (x_cand.rank() != 2) throw DimensionError("project expects [n, d] rows");
  const std::size_t n = x_cand.rows(), d = x_cand.cols();
  Tensor out(x_cand.shape());
  if (spec.norm == Norm::linf) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double lo = std::max(0.0, x_orig[i] - spec.epsilon);
      const double hi = std::min(1.0, x_orig[i] + spec.epsilon);
      out[i] = std::min(std::max(x_cand[i], lo), hi);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const double> ci = x_cand.row_span(i);
      std::span<const double> oi = x_orig.row_span(i);
      std::span<double> ri = out.row_span(i);
      double norm_sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double delta = ci[j] - oi[j];
        norm_sq += delta * delta;
      }
      const double norm = std::sqrt(norm_sq);
      if (norm > spec.epsilon * (1.0 + 1e-9)) {
        const double s = spec.epsilon / norm;
        for (std::size_t j = 0; j < d; ++j) ri[j] = oi[j] + (ci[j] - oi[j]) * s;
      } else {
        for (std::size_t j = 0; j < d; ++j) ri[j] = ci[j];
      }
      for (std::size_t j = 0; j < d; ++j)
        ri[j] = std::min(std::max(ri[j], 0.0), 1.0);
    }
  }
  return out;
}

Tensor loss_input_grad(const LossBuilder& loss, const Tensor& x) {
  Graph g;
  const Var xv = g.leaf(x, true);
  const Var l = loss(g, xv);
  g.backward(l);
  return g.grad(xv);
}

namespace {

using StopCheck = std::function<bool(const Tensor&, int)>;

Tensor apply_step(const Tensor& x, const Tensor& grad, const Tensor& orig,
                  int direction, const AttackSpec& spec) {
  const double alpha = spec.step_size();
  const std::size_t n = x.rows(), d = x.cols();
  Tensor cand(x.shape());
  if (spec.norm == Norm::linf) {
    for (std::size_t i = 0; i < cand.size(); ++i) {
      const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
      cand[i] = x[i] + direction * alpha * s;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const double> xi = x.row_span(i);
      std::span<const double> gi = grad.row_span(i);
      std::span<double> ci = cand.row_span(i);
      double norm_sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) norm_sq += gi[j] * gi[j];
      const double norm = std::sqrt(norm_sq);
      if (norm == 0.0) {
        for (std::size_t j = 0; j < d; ++j) ci[j] = xi[j];
      } else {
        const double s = direction * alpha / norm;
        for (std::size_t j = 0; j < d; ++j) ci[j] = xi[j] + s * gi[j];
      }
    }
  }
  return project(cand, orig, spec);
}

Tensor pgd_core(const LossBuilder& loss, const Tensor& x_orig,
                const AttackSpec& spec, int direction, Rng& rng,
                const StopCheck& stop, int* steps_taken) {
  Tensor x = spec.random_init ? random_init(x_orig, spec, rng) : x_orig;
  int taken = 0;
  for (int j = 1; j <= spec.iterations; ++j) {
    const Tensor grad = loss_input_grad(loss, x);
    x = apply_step(x, grad, x_orig, direction, spec);
    taken = j;
    if (stop && stop(x, j)) break;
  }
  if (steps_taken) *steps_taken = taken;
  return x;
}

LossBuilder model_ce(const Model& m, int label) {
  return [&m, label](Graph& g, Var xv) {
    const std::size_t rows = g.value(xv).rows();
    return cross_entropy(g, m.forward(g, xv), std::vector<int>(rows, label));
  };
}

double linf_dist(std::span<const double> a, std::span<const double> b) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    best = std::max(best, std::abs(a[i] - b[i]));
  return best;
}

double l2_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double delta = a[i] - b[i];
    acc += delta * delta;
  }
  return std::sqrt(acc);
}

AttackOutcome make_outcome(const Model& m, const Hierarchy& h,
                           const Tensor& x_orig, int y_star,
                           const AttackSpec& spec, Tensor x_adv,
                           std::optional<bool> succeeded_target,
                           std::vector<int> targets_tried, int steps) {
  AttackOutcome o;
  o.x_adv = std::move(x_adv);
  o.predicted = m.predict_labels(o.x_adv)[0];
  o.succeeded_fine = o.predicted != y_star;
  o.succeeded_coarse = h.coarse_of(o.predicted) != h.coarse_of(y_star);
  o.succeeded_target = succeeded_target;
  o.targets_tried = std::move(targets_tried);
  o.iterations_used = steps;
  o.linf_delta = linf_dist(o.x_adv.row_span(0), x_orig.row_span(0));
  o.l2_delta = l2_dist(o.x_adv.row_span(0), x_orig.row_span(0));

  if (!o.x_adv.all_finite())
    throw ContractError("attack produced a non-finite x_adv");
  for (std::size_t i = 0; i < o.x_adv.size(); ++i)
    if (o.x_adv[i] < 0.0 || o.x_adv[i] > 1.0)
      throw ContractError("attack output left the [0,1] box");
  const double tol = spec.epsilon + 1e-6;
  const double dist = spec.norm == Norm::linf ? o.linf_delta : o.l2_delta;
  if (dist > tol)
    throw ContractError("attack output left the epsilon ball: " +
                        std::to_string(dist) + " > " + std::to_string(tol));
  return o;
}

void check_attack_inputs(const Model& m, const Hierarchy& h, const Tensor& x,
                         int y_star) {
  if (x.rank() != 2 || x.rows() != 1)
    throw DimensionError("attack expects a single [1, d] sample");
  if (x.cols() != m.input_dim())
    throw DimensionError("sample dim " + std::to_string(x.cols()) +
                         " does not match model input dim " +
                         std::to_string(m.input_dim()));
  if (static_cast<int>(m.class_count()) != h.fine_count())
    throw DimensionError("model classes do not match hierarchy fine count");
  if (y_star < 0 || y_star >= h.fine_count())
    throw DomainError("label " + std::to_string(y_star) + " outside [0, " +
                      std::to_string(h.fine_count()) + ")");
}

std::vector<int> cross_coarse_targets(const Hierarchy& h, int y_star) {
  std::vector<int> s = h.candidate_targets(y_star);
  if (s.empty())
    throw DomainError("no cross-coarse target exists for label " +
                      std::to_string(y_star) +
                      " (single-coarse hierarchy)");
  return s;
}

}  // namespace

Tensor pgd_step_untargeted(const Model& m, const Tensor& x_j,
                           const Tensor& x_orig, int y_star,
                           const AttackSpec& spec) {
  validate_attack_spec(spec);
  const Tensor grad = loss_input_grad(model_ce(m, y_star), x_j);
  return apply_step(x_j, grad, x_orig, +1, spec);
}

Tensor pgd_step_targeted(const Model& m, const Tensor& x_j,
                         const Tensor& x_orig, int target,
                         const AttackSpec& spec) {
  validate_attack_spec(spec);
  const Tensor grad = loss_input_grad(model_ce(m, target), x_j);
  return apply_step(x_j, grad, x_orig, -1, spec);
}

Tensor fgsm(const Model& m, const Tensor& x, int y_star, double epsilon,
            Norm norm) {
  AttackSpec spec;
  spec.norm = norm;
  spec.epsilon = epsilon;
  spec.alpha = epsilon;
  spec.iterations = 1;
  spec.random_init = false;
  validate_attack_spec(spec);
  Rng rng(0);
  return pgd_core(model_ce(m, y_star), x, spec, +1, rng, nullptr, nullptr);
}

Tensor pgd_perturb(const LossBuilder& loss, const Tensor& x,
                   const AttackSpec& spec, int direction, Rng& rng) {
  validate_attack_spec(spec);
  if (direction != 1 && direction != -1)
    throw ContractError("direction must be +1 or -1");
  return pgd_core(loss, x, spec, direction, rng, nullptr, nullptr);
}

AttackOutcome pgd_attack(const Model& m, const Hierarchy& h, const Tensor& x,
                         int y_star, const AttackSpec& spec) {
  validate_attack_spec(spec);
  check_attack_inputs(m, h, x, y_star);

  switch (spec.mode) {
    case AttackMode::untargeted: {
      Rng rng(spec.seed);
      int steps = 0;
      Tensor xa = pgd_core(model_ce(m, y_star), x, spec, +1, rng, nullptr,
                           &steps);
      return make_outcome(m, h, x, y_star, spec, std::move(xa), std::nullopt,
                          {}, steps);
    }
    case AttackMode::targeted: {
      const std::vector<int> s = cross_coarse_targets(h, y_star);
      if (std::find(s.begin(), s.end(), spec.target) == s.end())
        throw SpecError("targeted attack needs a cross-coarse target id, got " +
                        std::to_string(spec.target));
      Rng rng(target_seed(spec.seed, spec.target));
      int steps = 0;
      Tensor xa = pgd_core(model_ce(m, spec.target), x, spec, -1, rng, nullptr,
                           &steps);
      AttackOutcome o = make_outcome(m, h, x, y_star, spec, std::move(xa),
                                     false, {spec.target}, steps);
      o.succeeded_target = o.predicted == spec.target;
      return o;
    }
    case AttackMode::average_case: {
      const std::vector<int> s = cross_coarse_targets(h, y_star);
      Rng selector(spec.seed);
      const int t = s[selector.uniform_int(s.size())];
      Rng rng(target_seed(spec.seed, t));
      int steps = 0;
      Tensor xa = pgd_core(model_ce(m, t), x, spec, -1, rng, nullptr, &steps);
      AttackOutcome o = make_outcome(m, h, x, y_star, spec, std::move(xa),
                                     false, {t}, steps);
      o.succeeded_target = o.predicted == t;
      return o;
    }
    case AttackMode::worst_case_hierarchical: {
      const std::vector<int> s = cross_coarse_targets(h, y_star);
      std::vector<int> tried;
      Tensor xa;
      int steps = 0;
      bool success = false;
      for (int t : s) {
        Rng rng(target_seed(spec.seed, t));
        int st = 0;
        Tensor cand =
            pgd_core(model_ce(m, t), x, spec, -1, rng, nullptr, &st);
        tried.push_back(t);
        const int pred = m.predict_labels(cand)[0];
        xa = std::move(cand);
        steps = st;
        if (pred == t) {
          success = true;
          break;
        }
      }
      return make_outcome(m, h, x, y_star, spec, std::move(xa), success,
                          std::move(tried), steps);
    }
    case AttackMode::best_case: {
      const std::vector<int> s = cross_coarse_targets(h, y_star);
      std::vector<int> tried;
      Tensor best_x, last_x;
      int best_steps = std::numeric_limits<int>::max();
      int last_steps = 0;
      bool found = false;
      for (int t : s) {
        Rng rng(target_seed(spec.seed, t));
        int st = 0;
        Tensor cand = pgd_core(
            model_ce(m, t), x, spec, -1, rng,
            [&m, t](const Tensor& xc, int) {
              return m.predict_labels(xc)[0] == t;
            },
            &st);
        tried.push_back(t);
        const bool hit = m.predict_labels(cand)[0] == t;
        if (hit && st < best_steps) {
          best_steps = st;
          best_x = cand;
          found = true;
        }
        last_x = std::move(cand);
        last_steps = st;
      }
      if (found)
        return make_outcome(m, h, x, y_star, spec, std::move(best_x), true,
                            std::move(tried), best_steps);
      return make_outcome(m, h, x, y_star, spec, std::move(last_x), false,
                          std::move(tried), last_steps);
    }
    case AttackMode::coarse_net_targeted:
      throw SpecError("coarse-net attack needs a composite model; use "
                      "coarse_net_attack");
  }
  throw ContractError("unknown attack mode value");
}

AttackOutcome coarse_net_attack(const HarModel& m, const Tensor& x, int y_star,
                                const AttackSpec& spec) {
  validate_attack_spec(spec);
  const Hierarchy& h = m.hierarchy();
  check_attack_inputs(m, h, x, y_star);
  if (h.coarse_count() < 2)
    throw DomainError("coarse-net attack needs at least two coarse classes");
  const int z_star = h.coarse_of(y_star);

  std::vector<int> tried;
  Tensor xa;
  int steps = 0;
  bool surrogate = false;
  int z_hit = -1;
  for (int z = 0; z < h.coarse_count(); ++z) {
    if (z == z_star) continue;
    Rng rng(target_seed(spec.seed, z));
    const LossBuilder loss = [&m, z](Graph& g, Var xv) {
      const std::size_t rows = g.value(xv).rows();
      return cross_entropy(g, m.forward_coarse(g, xv),
                           std::vector<int>(rows, z));
    };
    int st = 0;
    Tensor cand = pgd_core(loss, x, spec, -1, rng, nullptr, &st);
    tried.push_back(z);
    const Tensor cp = m.predict_coarse(cand);
    const int zp = static_cast<int>(argmax(cp.row_span(0)));
    xa = std::move(cand);
    steps = st;
    if (zp == z) {
      surrogate = true;
      z_hit = z;
      break;
    }
  }
  AttackOutcome o = make_outcome(m, h, x, y_star, spec, std::move(xa), false,
                                 std::move(tried), steps);
  o.succeeded_target = surrogate && h.coarse_of(o.predicted) == z_hit;
  return o;
}

std::vector<AttackOutcome> attack_dataset(const Model& m, const Hierarchy& h,
                                          const Tensor& xs,
                                          const std::vector<int>& ys,
                                          const AttackSpec& spec,
                                          int workers) {
  validate_attack_spec(spec);
  if (xs.rank() != 2) throw DimensionError("attack_dataset expects [n, d]");
  if (ys.size() != xs.rows())
    throw DimensionError("label count does not match sample count");
  const HarModel* harm = dynamic_cast<const HarModel*>(&m);
  if (spec.mode == AttackMode::coarse_net_targeted && !harm)
    throw SpecError("coarse-net attack requires a har model");
  if (workers < 1) workers = 1;

  const std::size_t n = xs.rows(), d = xs.cols();
  std::vector<AttackOutcome> out(n);
  std::mutex err_mutex;
  std::exception_ptr first_error;

  auto work = [&](std::size_t start) {
    try {
      for (std::size_t i = start; i < n; i += static_cast<std::size_t>(workers)) {
        {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (first_error) return;
        }
        AttackSpec s = spec;
        s.seed = sample_seed(spec.seed, i);
        std::span<const double> row = xs.row_span(i);
        Tensor xi({1, d}, std::vector<double>(row.begin(), row.end()));
        out[i] = s.mode == AttackMode::coarse_net_targeted
                     ? coarse_net_attack(*harm, xi, ys[i], s)
                     : pgd_attack(m, h, xi, ys[i], s);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(work, static_cast<std::size_t>(w));
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace har
