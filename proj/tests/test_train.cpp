#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "har/attack.hpp"
#include "har/classifier.hpp"
#include "har/data.hpp"
#include "har/errors.hpp"
#include "har/graph.hpp"
#include "har/hierarchy.hpp"
#include "har/train.hpp"
#include "test_util.hpp"

using namespace har;

namespace {

Hierarchy toy_hierarchy() { return parse_hierarchy("A: a0, a1\nB: b0, b1\n"); }

Generated toy_data(std::uint64_t seed = 3, int per_class = 20) {
  SynthSpec sp;
  sp.coarse_count = 2;
  sp.fines_per_coarse = 2;
  sp.dim = 4;
  sp.per_class = per_class;
  sp.coarse_separation = 0.6;
  sp.fine_separation = 0.25;
  sp.noise_sigma = 0.05;
  sp.seed = seed;
  return generate(sp);
}

bool params_equal(const Classifier& a, const Classifier& b) {
  if (a.dims() != b.dims()) return false;
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    auto wa = a.weight(l).data(), wb = b.weight(l).data();
    for (std::size_t i = 0; i < wa.size(); ++i)
      if (wa[i] != wb[i]) return false;
    auto ba = a.bias(l).data(), bb = b.bias(l).data();
    for (std::size_t i = 0; i < ba.size(); ++i)
      if (ba[i] != bb[i]) return false;
  }
  return true;
}

bool params_equal(const HarModel& a, const HarModel& b) {
  if (!params_equal(a.coarse_net(), b.coarse_net())) return false;
  for (std::size_t z = 0; z < a.fine_nets().size(); ++z)
    if (!params_equal(a.fine_nets()[z], b.fine_nets()[z])) return false;
  return true;
}

TrainConfig quick_cfg(TrainMethod method, int epochs, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.method = method;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.lr.initial = 0.1;
  cfg.lr.decay_epochs = {};
  cfg.seed = seed;
  if (method != TrainMethod::standard) {
    AttackSpec inner;
    inner.epsilon = 0.05;
    inner.iterations = 3;
    cfg.inner = inner;
  }
  return cfg;
}

}  // namespace

TEST_CASE("method strings round trip") {
  for (const char* s : {"standard", "adv", "adv-t", "trades", "adv-hce"})
    CHECK(to_string(method_from_string(s)) == s);
  CHECK_THROWS_AS(method_from_string("sgd"), ParseError);
}

TEST_CASE("learning rate staircase decays exactly at its boundaries") {
  LrSchedule lr;
  lr.initial = 0.1;
  lr.decay_factor = 0.1;
  lr.decay_epochs = {3, 5};
  CHECK(lr.at(0) == doctest::Approx(0.1));
  CHECK(lr.at(2) == doctest::Approx(0.1));
  CHECK(lr.at(3) == doctest::Approx(0.01));
  CHECK(lr.at(4) == doctest::Approx(0.01));
  CHECK(lr.at(5) == doctest::Approx(0.001));
  CHECK(lr.at(9) == doctest::Approx(0.001));
}

TEST_CASE("sgd step arithmetic") {
  SUBCASE("plain gradient descent when momentum and decay are off") {
    Tensor w({2}, {1.0, -1.0});
    Tensor g({2}, {0.5, 0.25});
    TrainConfig cfg;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    cfg.lr.initial = 0.1;
    cfg.lr.decay_epochs = {};
    SgdState st;
    sgd_step({&w}, {g}, st, cfg, 0);
    CHECK(w[0] == doctest::Approx(1.0 - 0.1 * 0.5));
    CHECK(w[1] == doctest::Approx(-1.0 - 0.1 * 0.25));
  }

  SUBCASE("two momentum steps on a constant gradient compound to 2.9 lr g") {
    Tensor w({1}, {0.0});
    Tensor g({1}, {1.0});
    TrainConfig cfg;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    cfg.lr.initial = 0.1;
    cfg.lr.decay_epochs = {};
    SgdState st;
    sgd_step({&w}, {g}, st, cfg, 0);
    sgd_step({&w}, {g}, st, cfg, 0);
    CHECK(w[0] == doctest::Approx(-2.9 * 0.1 * 1.0));
  }

  SUBCASE("weight decay adds wd*w to the gradient") {
    Tensor w({1}, {2.0});
    Tensor g({1}, {0.0});
    TrainConfig cfg;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.5;
    cfg.lr.initial = 0.1;
    cfg.lr.decay_epochs = {};
    SgdState st;
    sgd_step({&w}, {g}, st, cfg, 0);
    CHECK(w[0] == doctest::Approx(2.0 - 0.1 * (0.5 * 2.0)));
  }

  SUBCASE("shape mismatches are rejected") {
    Tensor w({2});
    Tensor g({3});
    TrainConfig cfg;
    SgdState st;
    std::vector<Tensor*> params = {&w};
    CHECK_THROWS_AS(sgd_step(params, {g}, st, cfg, 0), DimensionError);
  }
}

TEST_CASE("config validation") {
  TrainConfig cfg = quick_cfg(TrainMethod::standard, 1, 0);
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), SpecError);
  cfg = quick_cfg(TrainMethod::standard, 1, 0);
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), SpecError);
  cfg = quick_cfg(TrainMethod::standard, 1, 0);
  cfg.inner = AttackSpec{};  // standard must not carry an inner attack
  CHECK_THROWS_AS(cfg.validate(), SpecError);
  cfg = quick_cfg(TrainMethod::adv, 1, 0);
  cfg.inner.reset();
  CHECK_THROWS_AS(cfg.validate(), SpecError);
  cfg = quick_cfg(TrainMethod::trades, 1, 0);
  cfg.beta = -1.0;
  CHECK_THROWS_AS(cfg.validate(), SpecError);
}

TEST_CASE("zero epochs leave the model untouched") {
  Generated g = toy_data();
  Classifier m({4, 8, 4});
  Rng rng(5);
  m.init_params(rng);
  Classifier before = m;
  TrainLog log = train_classifier(m, g.data, quick_cfg(TrainMethod::standard, 0, 1));
  CHECK(params_equal(m, before));
  CHECK(log.epochs.empty());
}

TEST_CASE("training is bitwise reproducible per seed") {
  Generated g = toy_data();
  Classifier a({4, 8, 4}), b({4, 8, 4});
  Rng ra(5), rb(5);
  a.init_params(ra);
  b.init_params(rb);
  train_classifier(a, g.data, quick_cfg(TrainMethod::adv, 3, 9));
  train_classifier(b, g.data, quick_cfg(TrainMethod::adv, 3, 9));
  CHECK(params_equal(a, b));

  Classifier c({4, 8, 4});
  Rng rc(5);
  c.init_params(rc);
  train_classifier(c, g.data, quick_cfg(TrainMethod::adv, 3, 10));
  CHECK_FALSE(params_equal(a, c));
}

TEST_CASE("bad inputs are rejected") {
  Generated g = toy_data();
  Classifier m({4, 8, 4});
  Dataset empty;
  empty.fine_count = 4;
  CHECK_THROWS_AS(
      train_classifier(m, empty, quick_cfg(TrainMethod::standard, 1, 0)),
      TrainError);

  Classifier wrong_dim({3, 8, 4});
  CHECK_THROWS_AS(
      train_classifier(wrong_dim, g.data,
                       quick_cfg(TrainMethod::standard, 1, 0)),
      DimensionError);

  Classifier small_out({4, 8, 2});
  CHECK_THROWS_AS(
      train_classifier(small_out, g.data,
                       quick_cfg(TrainMethod::standard, 1, 0)),
      DomainError);

  // Hierarchy-dependent methods need the hierarchy overload.
  CHECK_THROWS_AS(
      train_classifier(m, g.data, quick_cfg(TrainMethod::adv_t, 1, 0)),
      SpecError);
  CHECK_THROWS_AS(
      train_classifier(m, g.data, quick_cfg(TrainMethod::adv_hce, 1, 0)),
      SpecError);
}

TEST_CASE("training loss blowups surface with epoch context") {
  Generated g = toy_data();
  Classifier m({4, 8, 4});
  Rng rng(6);
  m.init_params(rng);
  TrainConfig cfg = quick_cfg(TrainMethod::standard, 12, 1);
  cfg.lr.initial = 1e20;
  cfg.weight_decay = 0.5;
  cfg.momentum = 0.9;
  try {
    train_classifier(m, g.data, cfg);
    FAIL("expected TrainError");
  } catch (const TrainError& e) {
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("inner perturbation helper is feasible and deterministic") {
  Generated g = toy_data();
  Classifier m({4, 8, 4});
  Rng init(7);
  m.init_params(init);
  Tensor xb({4, 4});
  for (std::size_t i = 0; i < 4; ++i)
    std::copy(g.data.features.row_span(i).begin(),
              g.data.features.row_span(i).end(), xb.row_span(i).begin());
  std::vector<int> yb(g.data.fine_labels.begin(),
                      g.data.fine_labels.begin() + 4);

  const LossBuilder ce = [&](Graph& gg, Var x) {
    return cross_entropy(gg, m.forward(gg, x), yb);
  };
  AttackSpec spec;
  spec.epsilon = 0.05;
  spec.iterations = 3;

  Rng r1(11), r2(11);
  Tensor a = pgd_perturb(ce, xb, spec, +1, r1);
  Tensor b = pgd_perturb(ce, xb, spec, +1, r2);
  auto da = a.data(), db = b.data(), dx = xb.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    CHECK(da[i] == db[i]);
    CHECK(std::fabs(da[i] - dx[i]) <= 0.05 + 1e-9);
    CHECK(da[i] >= 0.0);
    CHECK(da[i] <= 1.0);
  }

  Rng r3(11);
  CHECK_THROWS_AS(pgd_perturb(ce, xb, spec, 0, r3), ContractError);
}

TEST_CASE("adversarial training with a zero-budget inner loop equals standard") {
  Generated g = toy_data();
  Classifier a({4, 8, 4}), b({4, 8, 4});
  Rng ra(8), rb(8);
  a.init_params(ra);
  b.init_params(rb);

  TrainConfig adv = quick_cfg(TrainMethod::adv, 3, 21);
  adv.inner->epsilon = 0.0;
  adv.inner->random_init = false;
  TrainConfig std_cfg = quick_cfg(TrainMethod::standard, 3, 21);

  train_classifier(a, g.data, adv);
  train_classifier(b, g.data, std_cfg);
  CHECK(params_equal(a, b));
}

TEST_CASE("trades with zero beta equals standard bitwise") {
  Generated g = toy_data();
  Classifier a({4, 8, 4}), b({4, 8, 4});
  Rng ra(9), rb(9);
  a.init_params(ra);
  b.init_params(rb);

  TrainConfig tr = quick_cfg(TrainMethod::trades, 3, 22);
  tr.beta = 0.0;
  train_classifier(a, g.data, tr);
  train_classifier(b, g.data, quick_cfg(TrainMethod::standard, 3, 22));
  CHECK(params_equal(a, b));
}

TEST_CASE("trades beta changes the optimum") {
  Generated g = toy_data();
  Classifier a({4, 8, 4}), b({4, 8, 4});
  Rng ra(10), rb(10);
  a.init_params(ra);
  b.init_params(rb);
  TrainConfig t1 = quick_cfg(TrainMethod::trades, 3, 23);
  t1.beta = 1.0;
  TrainConfig t9 = quick_cfg(TrainMethod::trades, 3, 23);
  t9.beta = 9.0;
  train_classifier(a, g.data, t1);
  train_classifier(b, g.data, t9);
  CHECK_FALSE(params_equal(a, b));
}

TEST_CASE("hierarchical cross entropy matches the worked example") {
  // F = [0.2, 0.4, 0.3, 0.1], y = 3, coarse blocks {0,1} {2,3}:
  // fine term -ln 0.1, coarse term -ln(0.3 + 0.1).
  Hierarchy h = toy_hierarchy();
  Graph g;
  Var probs = g.leaf(Tensor({1, 4}, {0.2, 0.4, 0.3, 0.1}));
  Var fine_ce = cross_entropy(g, probs, {3});
  Var coarse_ce = cross_entropy(g, coarse_marginal(g, probs, h), {1});
  const double total = g.value(add(g, fine_ce, coarse_ce)).item();
  CHECK(total == doctest::Approx(-std::log(0.1) - std::log(0.4)));
  // Both terms are nonnegative, so the sum dominates the fine term.
  CHECK(g.value(coarse_ce).item() >= 0.0);
  CHECK(total >= g.value(fine_ce).item());
}

TEST_CASE("hce training with a single coarse class equals adv bitwise") {
  SynthSpec sp;
  sp.coarse_count = 1;
  sp.fines_per_coarse = 4;
  sp.dim = 4;
  sp.per_class = 12;
  sp.coarse_separation = 0.6;
  sp.fine_separation = 0.25;
  sp.noise_sigma = 0.05;
  sp.seed = 4;
  Generated g = generate(sp);

  Classifier a({4, 8, 4}), b({4, 8, 4});
  Rng ra(11), rb(11);
  a.init_params(ra);
  b.init_params(rb);
  train_classifier(a, g.data, g.hierarchy, quick_cfg(TrainMethod::adv_hce, 3, 24));
  train_classifier(b, g.data, g.hierarchy, quick_cfg(TrainMethod::adv, 3, 24));
  CHECK(params_equal(a, b));
}

TEST_CASE("adv-t needs cross-coarse targets") {
  SynthSpec sp;
  sp.coarse_count = 1;
  sp.fines_per_coarse = 4;
  sp.dim = 4;
  sp.per_class = 8;
  sp.coarse_separation = 0.6;
  sp.fine_separation = 0.25;
  sp.noise_sigma = 0.05;
  sp.seed = 5;
  Generated g = generate(sp);
  Classifier m({4, 8, 4});
  Rng rng(12);
  m.init_params(rng);
  CHECK_THROWS_AS(
      train_classifier(m, g.data, g.hierarchy, quick_cfg(TrainMethod::adv_t, 1, 0)),
      TrainError);

  // With two coarse classes it trains and differs from plain adv.
  Generated g2 = toy_data();
  Classifier a({4, 8, 4}), b({4, 8, 4});
  Rng ra(13), rb(13);
  a.init_params(ra);
  b.init_params(rb);
  train_classifier(a, g2.data, g2.hierarchy, quick_cfg(TrainMethod::adv_t, 3, 25));
  train_classifier(b, g2.data, g2.hierarchy, quick_cfg(TrainMethod::adv, 3, 25));
  CHECK_FALSE(params_equal(a, b));
}

TEST_CASE("har training is component-independent and parallel-safe") {
  Generated g = toy_data(6, 24);
  const Hierarchy& h = g.hierarchy;

  const auto fresh = [&](std::uint64_t seed) {
    Classifier coarse({4, 6, 2});
    std::vector<Classifier> fines = {Classifier({4, 6, 2}),
                                     Classifier({4, 6, 2})};
    Rng r0(Rng::mix(component_seed(seed, 0), 1));
    coarse.init_params(r0);
    for (int z = 0; z < 2; ++z) {
      Rng rz(Rng::mix(component_seed(seed, 1 + z), 1));
      fines[z].init_params(rz);
    }
    return HarModel(std::move(coarse), std::move(fines), h);
  };

  HarModel serial = fresh(31);
  HarModel parallel = fresh(31);
  TrainConfig cfg = quick_cfg(TrainMethod::adv, 3, 31);
  std::vector<TrainLog> logs_s = train_har(serial, g.data, cfg, false);
  std::vector<TrainLog> logs_p = train_har(parallel, g.data, cfg, true);
  CHECK(params_equal(serial, parallel));
  REQUIRE(logs_s.size() == 3);  // coarse + one per coarse class
  REQUIRE(logs_p.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    REQUIRE(logs_s[c].epochs.size() == 3);
    for (std::size_t e = 0; e < 3; ++e)
      CHECK(logs_s[c].epochs[e].loss == logs_p[c].epochs[e].loss);
  }

  SUBCASE("hierarchy-dependent methods are rejected for components") {
    HarModel m = fresh(32);
    CHECK_THROWS_AS(train_har(m, g.data, quick_cfg(TrainMethod::adv_t, 1, 0)),
                    SpecError);
    CHECK_THROWS_AS(
        train_har(m, g.data, quick_cfg(TrainMethod::adv_hce, 1, 0)),
        SpecError);
  }
}

TEST_CASE("training log serializes a csv with the config hash") {
  testutil::TmpDir dir("log");
  TrainLog log;
  log.epochs.push_back({0, 0.1, 1.5, 0.25});
  log.epochs.push_back({1, 0.1, 1.2, 0.5});
  log.save_csv(dir / "log.csv", "deadbeef");
  const std::string text = testutil::read_file(dir / "log.csv");
  CHECK(text.find("# config_hash=deadbeef") == 0);
  CHECK(text.find("epoch,lr,train_loss,train_acc") != std::string::npos);
  CHECK(text.find("0,0.1,1.5,0.25") != std::string::npos);
  CHECK(text.find("1,0.1,1.2,0.5") != std::string::npos);
}

TEST_CASE("uniform integer draws cover their range evenly") {
  // Backs the uniform cross-coarse target draws used in training.
  Rng rng(77);
  const int n = 10000;
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_int(4)];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int c = 0; c < 4; ++c)
    CHECK(std::fabs(counts[c] - n / 4.0) < 3 * sigma);
}
