// Acceptance suite: one test case and one printed PASS/FAIL line per
// criterion. Criteria 5-9 share a lazily built fixture (synthetic
// dataset, standard + adversarially trained flat models, and an
// adversarially trained composite model, over seeds 1-3).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "har/attack.hpp"
#include "har/classifier.hpp"
#include "har/data.hpp"
#include "har/errors.hpp"
#include "har/graph.hpp"
#include "har/hierarchy.hpp"
#include "har/metrics.hpp"
#include "har/rng.hpp"
#include "har/train.hpp"
#include "test_util.hpp"

using namespace har;

namespace {

double now_s() {
  using clk = std::chrono::steady_clock;
  return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

double wilson_lower(double phat, double n, double z = 1.645) {
  const double z2 = z * z;
  return (phat + z2 / (2.0 * n) -
          z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n))) /
         (1.0 + z2 / n);
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto as = a.data(), bs = b.data();
  return std::memcmp(as.data(), bs.data(), as.size() * sizeof(double)) == 0;
}

bool params_equal(const Classifier& a, const Classifier& b) {
  if (a.dims() != b.dims()) return false;
  for (std::size_t l = 0; l < a.layer_count(); ++l)
    if (!bitwise_equal(a.weight(l), b.weight(l)) ||
        !bitwise_equal(a.bias(l), b.bias(l)))
      return false;
  return true;
}

Tensor row_of(const Tensor& xs, std::size_t i) {
  Tensor x({1, xs.cols()});
  const auto src = xs.row_span(i);
  std::copy(src.begin(), src.end(), x.row_span(0).begin());
  return x;
}

// Outcomes collected by earlier criteria; criterion 4 audits them all.
std::vector<AttackOutcome>& outcome_pool() {
  static std::vector<AttackOutcome> pool;
  return pool;
}

// ---- shared fixture for criteria 5-9 ----------------------------------
//
// Geometry chosen so that fine classes are not robustly separable at the
// attack budget while coarse classes are: coarse centroids 0.32 apart,
// fine centroids 0.13 apart, noise sigma 0.025, linf budget 0.08 in
// dimension 8. Untargeted PGD then shreds fine accuracy but mostly stays
// inside the true coarse class, and the composite model's dedicated
// binary coarse net holds the cross-coarse line at least as well as a
// flat model of comparable size (flat 366 parameters, composite 424).

struct SeedRun {
  EvalReport flat_std;
  EvalReport flat_adv;
  EvalReport har_adv;
};

struct Fixture {
  double build_seconds = 0.0;
  std::vector<SeedRun> runs;
};

Fixture build_fixture() {
  const double t0 = now_s();
  Fixture fx;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthSpec sp;
    sp.coarse_count = 2;
    sp.fines_per_coarse = 3;
    sp.dim = 8;
    sp.per_class = 400;
    sp.coarse_separation = 0.32;
    sp.fine_separation = 0.13;
    sp.noise_sigma = 0.025;
    sp.seed = seed;
    Generated g = generate(sp);
    auto [train, test] = split(g.data, 0.5, Rng::mix(seed, 1));
    const Hierarchy& h = g.hierarchy;

    TrainConfig base;
    base.epochs = 30;
    base.batch_size = 64;
    base.lr.initial = 0.05;
    base.lr.decay_epochs = {22, 27};
    base.seed = seed;

    TrainConfig advc = base;
    advc.method = TrainMethod::adv;
    AttackSpec inner;
    inner.epsilon = 0.08;
    inner.iterations = 10;
    advc.inner = inner;

    Classifier flat_std({8, 24, 6}), flat_adv({8, 24, 6});
    {
      Rng r(Rng::mix(seed, 1));
      flat_std.init_params(r);
    }
    {
      Rng r(Rng::mix(seed, 1));
      flat_adv.init_params(r);
    }
    train_classifier(flat_std, train, h, base);
    train_classifier(flat_adv, train, h, advc);

    Classifier coarse({8, 16, 2});
    std::vector<Classifier> fines = {Classifier({8, 10, 3}),
                                     Classifier({8, 10, 3})};
    {
      Rng r(Rng::mix(component_seed(seed, 0), 1));
      coarse.init_params(r);
    }
    {
      Rng r(Rng::mix(component_seed(seed, 1), 1));
      fines[0].init_params(r);
    }
    {
      Rng r(Rng::mix(component_seed(seed, 2), 1));
      fines[1].init_params(r);
    }
    HarModel har_adv(std::move(coarse), std::move(fines), h);
    train_har(har_adv, train, advc, true);

    EvalOptions eo;
    eo.untargeted.epsilon = 0.08;
    eo.untargeted.iterations = 20;
    eo.untargeted.seed = seed;
    eo.worst_case = eo.untargeted;
    eo.worst_case.iterations = 50;
    eo.subsample = 300;
    eo.subsample_seed = Rng::mix(seed, 2);
    eo.workers = 8;

    SeedRun run;
    run.flat_std = evaluate(flat_std, test, h, eo);
    run.flat_adv = evaluate(flat_adv, test, h, eo);
    EvalOptions eh = eo;
    eh.coarse_net = eo.worst_case;
    run.har_adv = evaluate(har_adv, test, h, eh);
    fx.runs.push_back(std::move(run));

    // A cross-mode outcome pool over a slice of the test set, audited by
    // criterion 4.
    const std::size_t n_pool = 60;
    Tensor xs({n_pool, test.dim()});
    std::vector<int> ys(n_pool);
    for (std::size_t i = 0; i < n_pool; ++i) {
      const auto src = test.features.row_span(i);
      std::copy(src.begin(), src.end(), xs.row_span(i).begin());
      ys[i] = test.fine_labels[i];
    }
    for (AttackMode mode :
         {AttackMode::untargeted, AttackMode::worst_case_hierarchical,
          AttackMode::average_case, AttackMode::best_case}) {
      AttackSpec s = eo.untargeted;
      s.mode = mode;
      s.iterations = mode == AttackMode::worst_case_hierarchical ? 50 : 20;
      for (const Model* m :
           std::initializer_list<const Model*>{&flat_adv, &har_adv}) {
        auto outs = attack_dataset(*m, h, xs, ys, s, 8);
        outcome_pool().insert(outcome_pool().end(), outs.begin(), outs.end());
      }
    }
    AttackSpec cn = eo.worst_case;
    cn.mode = AttackMode::coarse_net_targeted;
    auto outs = attack_dataset(har_adv, h, xs, ys, cn, 8);
    outcome_pool().insert(outcome_pool().end(), outs.begin(), outs.end());
  }
  fx.build_seconds = now_s() - t0;
  return fx;
}

const Fixture& fixture() {
  static Fixture fx = build_fixture();
  return fx;
}

void report_line(int criterion, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s %s\n", criterion, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

}  // namespace

// ---- criterion 1: gradient correctness ---------------------------------

TEST_CASE("gradient correctness across ops and end-to-end losses") {
  const double t0 = now_s();
  Rng rng(101);
  double worst = 0.0;
  int cases = 0;

  const auto check_case = [&](const std::function<double(const Tensor&)>& f,
                              const std::function<Tensor(const Tensor&)>& grad,
                              const Tensor& x) {
    const Tensor analytic = grad(x);
    const Tensor numeric = testutil::numeric_grad(f, x);
    worst = std::max(worst, testutil::max_rel_err(analytic, numeric));
    ++cases;
  };

  const Hierarchy h = parse_hierarchy("A: a0, a1, a2\nB: b0, b1, b2\n");

  // affine: gradients w.r.t. input, weight, and bias (20 cases).
  for (int c = 0; c < 20; ++c) {
    const std::size_t n = 1 + rng.uniform_int(3), d = 2 + rng.uniform_int(3),
                      m = 2 + rng.uniform_int(3);
    Tensor x = testutil::random_tensor(rng, {n, d});
    Tensor w = testutil::random_tensor(rng, {d, m});
    Tensor b = testutil::random_tensor(rng, {m});
    const auto loss_of = [&](const Tensor& xi, const Tensor& wi,
                             const Tensor& bi, int wrt) {
      return std::pair(
          [&, wrt](const Tensor& v) {
            Graph g;
            Var lx = g.leaf(wrt == 0 ? v : xi);
            Var lw = g.leaf(wrt == 1 ? v : wi);
            Var lb = g.leaf(wrt == 2 ? v : bi);
            return g.value(sum(g, relu(g, affine(g, lx, lw, lb)))).item();
          },
          [&, wrt](const Tensor& v) {
            Graph g;
            Var lx = g.leaf(wrt == 0 ? v : xi, true);
            Var lw = g.leaf(wrt == 1 ? v : wi, true);
            Var lb = g.leaf(wrt == 2 ? v : bi, true);
            Var out = sum(g, relu(g, affine(g, lx, lw, lb)));
            g.backward(out);
            return g.grad(wrt == 0 ? lx : wrt == 1 ? lw : lb);
          });
    };
    const int wrt = c % 3;
    auto [f, gr] = loss_of(x, w, b, wrt);
    check_case(f, gr, wrt == 0 ? x : wrt == 1 ? w : b);
  }

  // relu alone (10 cases).
  for (int c = 0; c < 10; ++c) {
    Tensor x = testutil::random_tensor(rng, {2, 5});
    check_case(
        [](const Tensor& v) {
          Graph g;
          return g.value(sum(g, relu(g, g.leaf(v)))).item();
        },
        [](const Tensor& v) {
          Graph g;
          Var lx = g.leaf(v, true);
          g.backward(sum(g, relu(g, lx)));
          return g.grad(lx);
        },
        x);
  }

  // softmax + cross entropy on logits (10 cases).
  for (int c = 0; c < 10; ++c) {
    Tensor z = testutil::random_tensor(rng, {3, 4});
    const std::vector<int> ys = {static_cast<int>(rng.uniform_int(4)),
                                 static_cast<int>(rng.uniform_int(4)),
                                 static_cast<int>(rng.uniform_int(4))};
    check_case(
        [&](const Tensor& v) {
          Graph g;
          return g.value(cross_entropy(g, softmax(g, g.leaf(v)), ys)).item();
        },
        [&](const Tensor& v) {
          Graph g;
          Var lz = g.leaf(v, true);
          g.backward(cross_entropy(g, softmax(g, lz), ys));
          return g.grad(lz);
        },
        z);
  }

  // KL divergence through softmax, w.r.t. both sides (15 cases).
  for (int c = 0; c < 15; ++c) {
    Tensor zp = testutil::random_tensor(rng, {2, 4});
    Tensor zq = testutil::random_tensor(rng, {2, 4});
    const bool wrt_p = c % 2 == 0;
    check_case(
        [&](const Tensor& v) {
          Graph g;
          Var p = softmax(g, g.leaf(wrt_p ? v : zp));
          Var q = softmax(g, g.leaf(wrt_p ? zq : v));
          return g.value(kl_divergence(g, p, q)).item();
        },
        [&](const Tensor& v) {
          Graph g;
          Var lp = g.leaf(wrt_p ? v : zp, wrt_p);
          Var lq = g.leaf(wrt_p ? zq : v, !wrt_p);
          g.backward(
              kl_divergence(g, softmax(g, lp), softmax(g, lq)));
          return g.grad(wrt_p ? lp : lq);
        },
        wrt_p ? zp : zq);
  }

  // End-to-end flat CE through a two-layer net (15 cases).
  Classifier flat({5, 7, 6});
  {
    Rng ir(7);
    flat.init_params(ir);
  }
  for (int c = 0; c < 15; ++c) {
    Tensor x = testutil::random_tensor(rng, {2, 5}, 0.05, 0.95);
    const std::vector<int> ys = {static_cast<int>(rng.uniform_int(6)),
                                 static_cast<int>(rng.uniform_int(6))};
    check_case(
        [&](const Tensor& v) {
          Graph g;
          return g.value(cross_entropy(g, flat.forward(g, g.leaf(v)), ys))
              .item();
        },
        [&](const Tensor& v) {
          Graph g;
          Var lx = g.leaf(v, true);
          g.backward(cross_entropy(g, flat.forward(g, lx), ys));
          return g.grad(lx);
        },
        x);
  }

  // Hierarchical CE: fine term plus coarse-marginal term (15 cases).
  for (int c = 0; c < 15; ++c) {
    Tensor x = testutil::random_tensor(rng, {2, 5}, 0.05, 0.95);
    const int y0 = static_cast<int>(rng.uniform_int(6));
    const int y1 = static_cast<int>(rng.uniform_int(6));
    const std::vector<int> ys = {y0, y1};
    const std::vector<int> zs = {h.coarse_of(y0), h.coarse_of(y1)};
    check_case(
        [&](const Tensor& v) {
          Graph g;
          Var probs = flat.forward(g, g.leaf(v));
          Var loss = add(g, cross_entropy(g, probs, ys),
                         cross_entropy(g, coarse_marginal(g, probs, h), zs));
          return g.value(loss).item();
        },
        [&](const Tensor& v) {
          Graph g;
          Var lx = g.leaf(v, true);
          Var probs = flat.forward(g, lx);
          g.backward(add(g, cross_entropy(g, probs, ys),
                         cross_entropy(g, coarse_marginal(g, probs, h), zs)));
          return g.grad(lx);
        },
        x);
  }

  // Composed hierarchical model loss, input gradient (15 cases).
  Classifier cnet({5, 6, 2});
  std::vector<Classifier> fnets = {Classifier({5, 6, 3}),
                                   Classifier({5, 6, 3})};
  {
    Rng ir(8);
    cnet.init_params(ir);
    fnets[0].init_params(ir);
    fnets[1].init_params(ir);
  }
  const HarModel harm(std::move(cnet), std::move(fnets), h);
  for (int c = 0; c < 15; ++c) {
    Tensor x = testutil::random_tensor(rng, {2, 5}, 0.05, 0.95);
    const std::vector<int> ys = {static_cast<int>(rng.uniform_int(6)),
                                 static_cast<int>(rng.uniform_int(6))};
    check_case(
        [&](const Tensor& v) {
          Graph g;
          return g.value(cross_entropy(g, harm.forward(g, g.leaf(v)), ys))
              .item();
        },
        [&](const Tensor& v) {
          Graph g;
          Var lx = g.leaf(v, true);
          g.backward(cross_entropy(g, harm.forward(g, lx), ys));
          return g.grad(lx);
        },
        x);
  }

  const double dt = now_s() - t0;
  const bool pass = cases == 100 && worst <= 1e-4 && dt < 60.0;
  report_line(1, pass,
              fmt("gradient checks: %d cases, max rel err %.2e (%.1fs)",
                  cases, worst, dt));
  CHECK(cases == 100);
  CHECK(worst <= 1e-4);
  CHECK(dt < 60.0);
}

// ---- criterion 2: feasibility + projection idempotence -----------------

TEST_CASE("feasibility and projection idempotence over randomized attacks") {
  const double t0 = now_s();
  const Hierarchy h = parse_hierarchy("A: a0, a1\nB: b0, b1\n");

  Classifier flat({6, 10, 4});
  {
    Rng r(21);
    flat.init_params(r);
  }
  Classifier cnet({6, 8, 2});
  std::vector<Classifier> fnets = {Classifier({6, 6, 2}),
                                   Classifier({6, 6, 2})};
  {
    Rng r(22);
    cnet.init_params(r);
    fnets[0].init_params(r);
    fnets[1].init_params(r);
  }
  const HarModel harm(std::move(cnet), std::move(fnets), h);

  Rng rng(202);
  const int total = 10000;
  int violations = 0, non_idempotent = 0;
  for (int i = 0; i < total; ++i) {
    AttackSpec spec;
    spec.norm = rng.uniform_int(2) == 0 ? Norm::linf : Norm::l2;
    spec.epsilon = rng.uniform_int(10) == 0 ? 0.0 : rng.uniform(0.002, 0.25);
    spec.alpha = rng.uniform_int(2) == 0 ? -1.0 : rng.uniform(0.001, 0.12);
    spec.iterations = 1 + static_cast<int>(rng.uniform_int(6));
    spec.random_init = rng.uniform_int(2) == 0;
    spec.seed = static_cast<std::uint64_t>(i);

    Tensor x({1, 6});
    for (double& v : x.data()) v = rng.uniform(0.0, 1.0);
    const int y = static_cast<int>(rng.uniform_int(4));

    const int mode_pick = static_cast<int>(rng.uniform_int(6));
    const bool use_har = mode_pick == 4 || rng.uniform_int(2) == 0;
    const Model& m = use_har ? static_cast<const Model&>(harm)
                             : static_cast<const Model&>(flat);

    AttackOutcome out;
    switch (mode_pick) {
      case 0:
        spec.mode = AttackMode::untargeted;
        out = pgd_attack(m, h, x, y, spec);
        break;
      case 1:
        spec.mode = AttackMode::worst_case_hierarchical;
        out = pgd_attack(m, h, x, y, spec);
        break;
      case 2:
        spec.mode = AttackMode::average_case;
        out = pgd_attack(m, h, x, y, spec);
        break;
      case 3:
        spec.mode = AttackMode::best_case;
        out = pgd_attack(m, h, x, y, spec);
        break;
      case 4:
        spec.mode = AttackMode::coarse_net_targeted;
        out = coarse_net_attack(harm, x, y, spec);
        break;
      default: {
        spec.mode = AttackMode::targeted;
        const std::vector<int> cands = h.candidate_targets(y);
        spec.target = cands[rng.uniform_int(cands.size())];
        out = pgd_attack(m, h, x, y, spec);
        break;
      }
    }

    double linf = 0.0, l2sq = 0.0;
    bool in_box = true;
    const auto xd = x.data();
    const auto ad = out.x_adv.data();
    for (std::size_t j = 0; j < xd.size(); ++j) {
      const double d = ad[j] - xd[j];
      linf = std::max(linf, std::fabs(d));
      l2sq += d * d;
      if (!(ad[j] >= 0.0 && ad[j] <= 1.0)) in_box = false;
    }
    const double norm_val = spec.norm == Norm::linf ? linf : std::sqrt(l2sq);
    if (!(norm_val <= spec.epsilon + 1e-6) || !in_box) ++violations;

    const Tensor re = project(out.x_adv, x, spec);
    if (!bitwise_equal(re, out.x_adv)) ++non_idempotent;

    outcome_pool().push_back(std::move(out));
  }

  const double dt = now_s() - t0;
  const bool pass = violations == 0 && non_idempotent == 0 && dt < 120.0;
  report_line(2, pass,
              fmt("feasibility: %d invocations, %d violations, %d "
                  "non-idempotent projections (%.1fs)",
                  total, violations, non_idempotent, dt));
  CHECK(violations == 0);
  CHECK(non_idempotent == 0);
  CHECK(dt < 120.0);
}

// ---- criterion 3: multi-target attack vs brute-force oracle ------------

TEST_CASE("worst-case multi-target attack equals a brute-force oracle") {
  const double t0 = now_s();

  SynthSpec sp;
  sp.coarse_count = 2;
  sp.fines_per_coarse = 2;
  sp.dim = 6;
  sp.per_class = 50;
  sp.coarse_separation = 0.5;
  sp.fine_separation = 0.2;
  sp.noise_sigma = 0.05;
  sp.seed = 31;
  Generated g = generate(sp);
  const Hierarchy& h = g.hierarchy;

  Classifier frozen({6, 12, 4});
  {
    Rng r(32);
    frozen.init_params(r);
  }

  AttackSpec spec;
  spec.epsilon = 0.1;
  spec.iterations = 10;
  spec.mode = AttackMode::worst_case_hierarchical;
  spec.seed = 777;

  const std::vector<AttackOutcome> worst = attack_dataset(
      frozen, h, g.data.features, g.data.fine_labels, spec, 8);
  REQUIRE(worst.size() == 200);

  int mismatches = 0;
  for (std::size_t i = 0; i < worst.size(); ++i) {
    const int y = g.data.fine_labels[i];
    const Tensor x = row_of(g.data.features, i);
    const std::uint64_t stream = sample_seed(spec.seed, i);

    bool oracle_success = false;
    std::vector<int> tried;
    Tensor oracle_x;
    for (int target : h.candidate_targets(y)) {
      AttackSpec single = spec;
      single.mode = AttackMode::targeted;
      single.target = target;
      single.seed = stream;
      const AttackOutcome o = pgd_attack(frozen, h, x, y, single);
      tried.push_back(target);
      oracle_x = o.x_adv;
      if (o.succeeded_target.value_or(false)) {
        oracle_success = true;
        break;
      }
    }

    const bool same = worst[i].succeeded_target.value_or(false) ==
                          oracle_success &&
                      worst[i].targets_tried == tried &&
                      bitwise_equal(worst[i].x_adv, oracle_x);
    if (!same) ++mismatches;
  }

  const double dt = now_s() - t0;
  const bool pass = mismatches == 0 && dt < 120.0;
  report_line(
      3, pass,
      fmt("oracle equivalence: %zu/%zu samples exact, %d mismatches (%.1fs)",
          worst.size() - mismatches, worst.size(), mismatches, dt));
  CHECK(mismatches == 0);
  CHECK(dt < 120.0);
}

// ---- criterion 4: definitional implications -----------------------------

TEST_CASE("success-flag implications and accuracy ordering hold everywhere") {
  const Fixture& fx = fixture();

  std::size_t checked = 0, broken = 0;
  for (const AttackOutcome& o : outcome_pool()) {
    ++checked;
    if (o.succeeded_target.value_or(false) && !o.succeeded_coarse) ++broken;
    if (o.succeeded_coarse && !o.succeeded_fine) ++broken;
  }

  std::size_t reports = 0, report_breaks = 0;
  for (const SeedRun& r : fx.runs) {
    for (const EvalReport* rep : {&r.flat_std, &r.flat_adv, &r.har_adv}) {
      ++reports;
      if (rep->clean_fine_acc > rep->clean_coarse_acc) ++report_breaks;
      if (rep->attacked_fine_acc > rep->attacked_coarse_acc) ++report_breaks;
    }
  }

  const bool pass = checked > 10000 && broken == 0 && report_breaks == 0;
  report_line(4, pass,
              fmt("implications: %zu outcomes, %zu violations; %zu reports, "
                  "%zu ordering breaks",
                  checked, broken, reports, report_breaks));
  CHECK(checked > 10000);
  CHECK(broken == 0);
  CHECK(report_breaks == 0);
}

// ---- criterion 5: within-coarse concentration ---------------------------

TEST_CASE("untargeted misses concentrate within the true coarse class") {
  const Fixture& fx = fixture();
  const EvalReport& rep = fx.runs[0].flat_std;

  const double n = static_cast<double>(rep.n_samples);
  const long misses = std::lround((1.0 - rep.attacked_fine_acc) * n);
  const double ratio = rep.within_coarse.value_or(0.0);
  const double lb = wilson_lower(ratio, static_cast<double>(misses));
  const double chance = rep.coarse_chance;
  const double dt = fx.build_seconds;

  const bool pass = misses >= 500 && lb > chance && dt < 600.0;
  report_line(5, pass,
              fmt("within-coarse ratio %.3f (95%% lower bound %.3f) vs "
                  "chance %.2f over %ld misses (fixture %.1fs)",
                  ratio, lb, chance, misses, dt));
  CHECK(misses >= 500);
  CHECK(lb > chance);
  CHECK(dt < 600.0);
}

// ---- criterion 6: targeted much stronger than untargeted-coarse ---------

TEST_CASE("worst-case targeted attack undercuts untargeted coarse accuracy") {
  const Fixture& fx = fixture();
  const EvalReport& rep = fx.runs[0].flat_std;

  const double targeted = rep.targeted_robust_acc.value_or(1.0);
  const double coarse = rep.attacked_coarse_acc;
  const bool pass = targeted <= coarse - 0.20;
  report_line(6, pass,
              fmt("targeted robust acc %.3f vs untargeted coarse acc %.3f "
                  "(gap %.3f, need >= 0.20)",
                  targeted, coarse, coarse - targeted));
  CHECK(targeted <= coarse - 0.20);
}

// ---- criterion 7: adversarial training beats standard --------------------

TEST_CASE("adversarial training wins on robust fine accuracy in every seed") {
  const Fixture& fx = fixture();
  bool all = true;
  std::string detail;
  for (std::size_t s = 0; s < fx.runs.size(); ++s) {
    const double adv = fx.runs[s].flat_adv.attacked_fine_acc;
    const double std_acc = fx.runs[s].flat_std.attacked_fine_acc;
    all = all && adv > std_acc;
    detail += fmt("seed%zu %.3f>%.3f ", s + 1, adv, std_acc);
    CHECK(adv > std_acc);
  }
  const bool pass = all && fx.build_seconds < 1200.0;
  report_line(7, pass, "robust fine acc " + detail +
                           fmt("(fixture %.1fs)", fx.build_seconds));
  CHECK(fx.build_seconds < 1200.0);
}

// ---- criterion 8: composite at least as robust under targeted attack ----

TEST_CASE("composite model holds worst-case targeted robustness") {
  const Fixture& fx = fixture();
  std::vector<double> har_v, flat_v;
  std::string detail;
  for (std::size_t s = 0; s < fx.runs.size(); ++s) {
    har_v.push_back(fx.runs[s].har_adv.targeted_robust_acc.value_or(0.0));
    flat_v.push_back(fx.runs[s].flat_adv.targeted_robust_acc.value_or(0.0));
    detail += fmt("seed%zu %.3f/%.3f ", s + 1, har_v.back(), flat_v.back());
  }
  const double mh = median3(har_v), mf = median3(flat_v);
  const bool pass = mh >= mf && fx.build_seconds < 1800.0;
  report_line(8, pass,
              fmt("targeted robust acc (composite/flat) %smedian %.3f vs "
                  "%.3f (fixture %.1fs)",
                  detail.c_str(), mh, mf, fx.build_seconds));
  CHECK(mh >= mf);
  CHECK(fx.build_seconds < 1800.0);
}

// ---- criterion 9: coarse-net attack no stronger than the full attack ----

TEST_CASE("attacking the coarse net alone is no stronger than the full attack") {
  const Fixture& fx = fixture();
  std::vector<double> cn_v, full_v;
  std::string detail;
  for (std::size_t s = 0; s < fx.runs.size(); ++s) {
    cn_v.push_back(fx.runs[s].har_adv.coarse_net_coarse_acc.value_or(0.0));
    full_v.push_back(fx.runs[s].har_adv.worst_case_coarse_acc.value_or(1.0));
    detail += fmt("seed%zu %.3f/%.3f ", s + 1, cn_v.back(), full_v.back());
  }
  const double mc = median3(cn_v), mf = median3(full_v);
  const bool pass = mc >= mf;
  report_line(9, pass,
              fmt("robust coarse acc (coarse-net/full) %smedian %.3f vs %.3f",
                  detail.c_str(), mc, mf));
  CHECK(mc >= mf);
}

// ---- criterion 10: degenerate equivalences ------------------------------

TEST_CASE("degenerate configurations collapse to their base cases bitwise") {
  SynthSpec sp;
  sp.coarse_count = 2;
  sp.fines_per_coarse = 2;
  sp.dim = 4;
  sp.per_class = 16;
  sp.coarse_separation = 0.6;
  sp.fine_separation = 0.25;
  sp.noise_sigma = 0.05;
  sp.seed = 41;
  Generated g = generate(sp);

  const auto fresh = [] {
    Classifier m({4, 8, 4});
    Rng r(42);
    m.init_params(r);
    return m;
  };
  TrainConfig base;
  base.epochs = 3;
  base.batch_size = 16;
  base.lr.initial = 0.1;
  base.lr.decay_epochs = {};
  base.seed = 43;

  // TRADES with beta 0 never runs its inner loop and matches standard.
  Classifier a = fresh(), b = fresh();
  TrainConfig tr = base;
  tr.method = TrainMethod::trades;
  tr.beta = 0.0;
  tr.inner = AttackSpec{};
  tr.inner->epsilon = 0.05;
  tr.inner->iterations = 3;
  train_classifier(a, g.data, tr);
  train_classifier(b, g.data, base);
  const bool trades_ok = params_equal(a, b);

  // Hierarchical CE with one coarse class has no coarse term to learn.
  SynthSpec sp1 = sp;
  sp1.coarse_count = 1;
  sp1.fines_per_coarse = 4;
  sp1.seed = 44;
  Generated g1 = generate(sp1);
  Classifier c = fresh(), d = fresh();
  TrainConfig advc = base;
  advc.method = TrainMethod::adv;
  advc.inner = AttackSpec{};
  advc.inner->epsilon = 0.05;
  advc.inner->iterations = 3;
  TrainConfig hcec = advc;
  hcec.method = TrainMethod::adv_hce;
  train_classifier(c, g1.data, g1.hierarchy, hcec);
  train_classifier(d, g1.data, g1.hierarchy, advc);
  const bool hce_ok = params_equal(c, d);

  // Zero-budget attacks return the input bit for bit in every mode.
  Classifier frozen = fresh();
  Classifier cnet({4, 6, 2});
  std::vector<Classifier> fnets = {Classifier({4, 6, 2}),
                                   Classifier({4, 6, 2})};
  {
    Rng r(45);
    cnet.init_params(r);
    fnets[0].init_params(r);
    fnets[1].init_params(r);
  }
  const HarModel harm(std::move(cnet), std::move(fnets), g.hierarchy);
  bool eps0_ok = true;
  for (std::size_t i = 0; i < 8; ++i) {
    const Tensor x = row_of(g.data.features, i);
    const int y = g.data.fine_labels[i];
    for (AttackMode mode :
         {AttackMode::untargeted, AttackMode::worst_case_hierarchical,
          AttackMode::average_case, AttackMode::best_case}) {
      AttackSpec s;
      s.epsilon = 0.0;
      s.iterations = 3;
      s.mode = mode;
      s.seed = i;
      const AttackOutcome o = pgd_attack(frozen, g.hierarchy, x, y, s);
      if (!bitwise_equal(o.x_adv, x)) eps0_ok = false;
    }
    AttackSpec s;
    s.epsilon = 0.0;
    s.iterations = 3;
    s.mode = AttackMode::coarse_net_targeted;
    s.seed = i;
    const AttackOutcome o = coarse_net_attack(harm, x, y, s);
    if (!bitwise_equal(o.x_adv, x)) eps0_ok = false;
  }

  const bool pass = trades_ok && hce_ok && eps0_ok;
  report_line(10, pass,
              fmt("degenerate equivalences: trades-beta0==standard %s, "
                  "single-coarse-hce==adv %s, eps0 identity %s",
                  trades_ok ? "yes" : "NO", hce_ok ? "yes" : "NO",
                  eps0_ok ? "yes" : "NO"));
  CHECK(trades_ok);
  CHECK(hce_ok);
  CHECK(eps0_ok);
}

// ---- criterion 11: CLI determinism --------------------------------------

TEST_CASE("cli artifacts reproduce bitwise across re-runs and worker counts") {
  const std::string cli = HAR_CLI_PATH;
  testutil::TmpDir dir("accept_cli");

  const std::string gen =
      "gen-data --coarse 2 --fines 2 --dim 4 --per-class 12 --coarse-sep 0.6"
      " --fine-sep 0.25 --sigma 0.05 --train-frac 0.75 --seed 5 --out ";
  REQUIRE(testutil::run_cli(cli, gen + (dir / "d1").string(), dir).rc == 0);
  REQUIRE(testutil::run_cli(cli, gen + (dir / "d2").string(), dir).rc == 0);
  bool gen_ok = true;
  for (const char* f :
       {"hierarchy.txt", "train.bin", "test.bin", "manifest.json"})
    gen_ok = gen_ok && testutil::same_bytes(dir / ("d1/" + std::string(f)),
                                            dir / ("d2/" + std::string(f)));

  const std::string d = (dir / "d1").string();
  const std::string train_flat =
      "train --data " + d + "/train.bin --hierarchy " + d +
      "/hierarchy.txt --epochs 2 --batch 16 --dims 6 --decay-epochs 99"
      " --seed 5 --out ";
  REQUIRE(testutil::run_cli(cli, train_flat + (dir / "m1").string(), dir).rc ==
          0);
  REQUIRE(testutil::run_cli(cli, train_flat + (dir / "m2").string(), dir).rc ==
          0);
  REQUIRE(testutil::run_cli(
              cli, train_flat + (dir / "h1").string() + " --model har", dir)
              .rc == 0);
  REQUIRE(testutil::run_cli(
              cli, train_flat + (dir / "h2").string() + " --model har", dir)
              .rc == 0);
  const bool train_ok =
      testutil::same_bytes(dir / "m1/model.ckpt", dir / "m2/model.ckpt") &&
      testutil::same_bytes(dir / "h1/model.ckpt", dir / "h2/model.ckpt");

  const std::string attack =
      "attack --model " + (dir / "h1/model.ckpt").string() + " --data " + d +
      "/test.bin --hierarchy " + d + "/hierarchy.txt --mode hier-worst"
      " --eps 0.1 --iters 3 --subsample 8 --seed 4 --out ";
  REQUIRE(testutil::run_cli(cli, attack + (dir / "a1.jsonl").string(), dir)
              .rc == 0);
  REQUIRE(testutil::run_cli(cli, attack + (dir / "a2.jsonl").string(), dir)
              .rc == 0);
  REQUIRE(testutil::run_cli(
              cli, attack + (dir / "a8.jsonl").string() + " --workers 8", dir)
              .rc == 0);
  const bool attack_ok =
      testutil::same_bytes(dir / "a1.jsonl", dir / "a2.jsonl");
  const bool workers_ok =
      testutil::same_bytes(dir / "a1.jsonl", dir / "a8.jsonl");

  const std::string eval =
      "eval --model " + (dir / "h1/model.ckpt").string() + " --data " + d +
      "/test.bin --hierarchy " + d + "/hierarchy.txt --eps 0.1 --iters 2"
      " --worst-iters 3 --subsample 6 --seed 4 --out ";
  REQUIRE(testutil::run_cli(cli, eval + (dir / "e1.json").string(), dir).rc ==
          0);
  REQUIRE(testutil::run_cli(cli, eval + (dir / "e2.json").string(), dir).rc ==
          0);
  const bool eval_ok = testutil::same_bytes(dir / "e1.json", dir / "e2.json");

  const std::string report =
      "report --eval " + (dir / "e1.json").string() + " --outcomes " +
      (dir / "a1.jsonl").string() + " --plot --out ";
  REQUIRE(testutil::run_cli(cli, report + (dir / "r1").string(), dir).rc == 0);
  REQUIRE(testutil::run_cli(cli, report + (dir / "r2").string(), dir).rc == 0);
  bool report_ok = true;
  for (const auto& e : std::filesystem::directory_iterator(dir / "r1"))
    report_ok = report_ok &&
                testutil::same_bytes(e.path(), dir / "r2" / e.path().filename());

  const bool pass =
      gen_ok && train_ok && attack_ok && workers_ok && eval_ok && report_ok;
  report_line(11, pass,
              fmt("cli determinism: gen %s, train %s, attack %s, workers8 %s, "
                  "eval %s, report %s",
                  gen_ok ? "ok" : "NO", train_ok ? "ok" : "NO",
                  attack_ok ? "ok" : "NO", workers_ok ? "ok" : "NO",
                  eval_ok ? "ok" : "NO", report_ok ? "ok" : "NO"));
  CHECK(gen_ok);
  CHECK(train_ok);
  CHECK(attack_ok);
  CHECK(workers_ok);
  CHECK(eval_ok);
  CHECK(report_ok);
}
