#include "har/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>
#include <utility>

#include "har/errors.hpp"
#include "har/rng.hpp"

namespace har {

std::string to_string(TrainMethod m) {
  switch (m) {
    case TrainMethod::standard: return "standard";
    case TrainMethod::adv: return "adv";
    case TrainMethod::adv_t: return "adv-t";
    case TrainMethod::trades: return "trades";
    case TrainMethod::adv_hce: return "adv-hce";
  }
  throw ContractError("unknown train method value");
}

TrainMethod method_from_string(const std::string& s) {
  if (s == "standard") return TrainMethod::standard;
  if (s == "adv") return TrainMethod::adv;
  if (s == "adv-t") return TrainMethod::adv_t;
  if (s == "trades") return TrainMethod::trades;
  if (s == "adv-hce") return TrainMethod::adv_hce;
  throw ParseError("unknown training method '" + s + "'");
}

double LrSchedule::at(int epoch) const {
  double lr = initial;
  for (int boundary : decay_epochs)
    if (epoch >= boundary) lr *= decay_factor;
  return lr;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw SpecError("epochs must be >= 0");
  if (batch_size < 1) throw SpecError("batch size must be >= 1");
  if (!(momentum >= 0.0) || momentum >= 1.0)
    throw SpecError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw SpecError("weight decay must be >= 0");
  if (!(lr.initial > 0.0)) throw SpecError("initial lr must be positive");
  if (!(lr.decay_factor > 0.0) || lr.decay_factor > 1.0)
    throw SpecError("lr decay factor must lie in (0, 1]");
  if (beta < 0.0) throw SpecError("trades beta must be >= 0");
  if (method == TrainMethod::standard) {
    if (inner.has_value())
      throw SpecError("standard training takes no inner attack spec");
  } else {
    if (!inner.has_value())
      throw SpecError(to_string(method) + " training needs an inner attack spec");
    validate_attack_spec(*inner);
  }
}

void sgd_step(const std::vector<Tensor*>& params,
              const std::vector<Tensor>& grads, SgdState& state,
              const TrainConfig& cfg, int epoch) {
  if (params.size() != grads.size())
    throw DimensionError("parameter and gradient counts differ");
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const Tensor* p : params) state.velocity.emplace_back(p->shape());
  }
  if (state.velocity.size() != params.size())
    throw DimensionError("sgd state does not match parameter count");
  const double lr = cfg.lr.at(epoch);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i];
    const Tensor& g = grads[i];
    Tensor& v = state.velocity[i];
    if (!w.same_shape(g) || !w.same_shape(v))
      throw DimensionError("sgd shapes out of sync at parameter " +
                           std::to_string(i));
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = cfg.momentum * v[j] + (g[j] + cfg.weight_decay * w[j]);
      w[j] -= lr * v[j];
    }
  }
}

namespace {

LossBuilder ce_builder(const Classifier& m, std::vector<int> labels) {
  return [&m, labels = std::move(labels)](Graph& g, Var xv) {
    return cross_entropy(g, m.forward(g, xv), labels);
  };
}

LossBuilder kl_builder(const Classifier& m, Tensor clean_probs) {
  return [&m, p = std::move(clean_probs)](Graph& g, Var xv) {
    const Var pv = g.leaf(p);
    return kl_divergence(g, pv, m.forward(g, xv));
  };
}

LossBuilder hce_builder(const Classifier& m, const Hierarchy& h,
                        std::vector<int> fine, std::vector<int> coarse) {
  return [&m, &h, fine = std::move(fine),
          coarse = std::move(coarse)](Graph& g, Var xv) {
    const Var p = m.forward(g, xv);
    const Var fine_ce = cross_entropy(g, p, fine);
    const Var coarse_ce = cross_entropy(g, coarse_marginal(g, p, h), coarse);
    return add(g, fine_ce, coarse_ce);
  };
}

struct BatchResult {
  double loss = 0.0;
  std::size_t correct = 0;
};

BatchResult train_batch(Classifier& model, const Tensor& xb,
                        const std::vector<int>& yb, const Hierarchy* h,
                        const TrainConfig& cfg, int epoch, SgdState& sgd,
                        Rng& rng) {
  const bool trades_active =
      cfg.method == TrainMethod::trades && cfg.beta != 0.0;
  const bool hce_active =
      cfg.method == TrainMethod::adv_hce && h->coarse_count() > 1;

  std::vector<int> zb;
  if (hce_active) {
    zb.reserve(yb.size());
    for (int y : yb) zb.push_back(h->coarse_of(y));
  }

  Tensor x_outer = xb;
  Tensor x_trades;
  switch (cfg.method) {
    case TrainMethod::standard:
      break;
    case TrainMethod::trades:
      if (trades_active) {
        Tensor clean_probs = model.predict(xb);
        x_trades = pgd_perturb(kl_builder(model, std::move(clean_probs)), xb,
                               *cfg.inner, +1, rng);
      }
      break;
    case TrainMethod::adv:
      x_outer = pgd_perturb(ce_builder(model, yb), xb, *cfg.inner, +1, rng);
      break;
    case TrainMethod::adv_t: {
      std::vector<int> targets;
      targets.reserve(yb.size());
      for (int y : yb) {
        const std::vector<int> s = h->candidate_targets(y);
        if (s.empty())
          throw TrainError("no cross-coarse target exists for label " +
                           std::to_string(y));
        targets.push_back(s[rng.uniform_int(s.size())]);
      }
      x_outer = pgd_perturb(ce_builder(model, std::move(targets)), xb,
                            *cfg.inner, -1, rng);
      break;
    }
    case TrainMethod::adv_hce: {
      const LossBuilder inner_loss =
          hce_active ? hce_builder(model, *h, yb, zb) : ce_builder(model, yb);
      x_outer = pgd_perturb(inner_loss, xb, *cfg.inner, +1, rng);
      break;
    }
  }

  Graph g;
  const Binding bind = model.bind(g);
  const Var xv = g.leaf(x_outer);
  const Var probs = Classifier::forward_bound(g, xv, bind);
  Var loss{};
  if (trades_active) {
    const Var xa = g.leaf(x_trades);
    const Var probs_adv = Classifier::forward_bound(g, xa, bind);
    const Var kl = kl_divergence(g, probs, probs_adv);
    loss = add(g, cross_entropy(g, probs, yb), scale(g, kl, cfg.beta));
  } else if (hce_active) {
    loss = add(g, cross_entropy(g, probs, yb),
               cross_entropy(g, coarse_marginal(g, probs, *h), zb));
  } else {
    loss = cross_entropy(g, probs, yb);
  }
  g.backward(loss);

  std::vector<Tensor*> params;
  std::vector<Tensor> grads;
  params.reserve(bind.params.size());
  grads.reserve(bind.params.size());
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    params.push_back(&model.weight(l));
    params.push_back(&model.bias(l));
  }
  for (Var p : bind.params) grads.push_back(g.grad(p));
  sgd_step(params, grads, sgd, cfg, epoch);

  BatchResult r;
  r.loss = g.value(loss).item();
  const Tensor& pv = g.value(probs);
  for (std::size_t i = 0; i < pv.rows(); ++i)
    if (static_cast<int>(argmax(pv.row_span(i))) == yb[i]) ++r.correct;
  return r;
}

TrainLog train_impl(Classifier& model, const Dataset& data,
                    const Hierarchy* h, const TrainConfig& cfg) {
  cfg.validate();
  if ((cfg.method == TrainMethod::adv_t ||
       cfg.method == TrainMethod::adv_hce) &&
      h == nullptr)
    throw SpecError(to_string(cfg.method) + " training needs a hierarchy");
  if (data.size() == 0) throw TrainError("empty training set");
  if (model.input_dim() != data.dim())
    throw DimensionError("model input dim " +
                         std::to_string(model.input_dim()) +
                         " does not match data dim " +
                         std::to_string(data.dim()));
  for (int y : data.fine_labels)
    if (y < 0 || y >= static_cast<int>(model.class_count()))
      throw DomainError("label " + std::to_string(y) +
                        " does not fit a model with " +
                        std::to_string(model.class_count()) + " classes");
  if (h != nullptr &&
      (cfg.method == TrainMethod::adv_t ||
       cfg.method == TrainMethod::adv_hce) &&
      static_cast<int>(model.class_count()) != h->fine_count())
    throw DimensionError("model classes do not match hierarchy fine count");

  const std::size_t n = data.size(), d = data.dim();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  Rng rng(cfg.seed);
  SgdState sgd;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainLog log;
  log.epochs.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t b = std::min(bs, n - start);
      Tensor xb({b, d});
      std::vector<int> yb(b);
      for (std::size_t i = 0; i < b; ++i) {
        std::span<const double> src = data.features.row_span(order[start + i]);
        std::span<double> dst = xb.row_span(i);
        std::copy(src.begin(), src.end(), dst.begin());
        yb[i] = data.fine_labels[order[start + i]];
      }
      const BatchResult r = train_batch(model, xb, yb, h, cfg, epoch, sgd, rng);
      if (!std::isfinite(r.loss))
        throw TrainError("loss diverged at epoch " + std::to_string(epoch));
      loss_sum += r.loss * static_cast<double>(b);
      correct += r.correct;
    }
    log.epochs.push_back(EpochStats{
        epoch, cfg.lr.at(epoch), loss_sum / static_cast<double>(n),
        static_cast<double>(correct) / static_cast<double>(n)});
  }
  return log;
}

}  // namespace

TrainLog train_classifier(Classifier& m, const Dataset& data,
                          const TrainConfig& cfg) {
  return train_impl(m, data, nullptr, cfg);
}

TrainLog train_classifier(Classifier& m, const Dataset& data,
                          const Hierarchy& h, const TrainConfig& cfg) {
  return train_impl(m, data, &h, cfg);
}

std::uint64_t component_seed(std::uint64_t seed, int component) {
  return Rng::mix(seed, static_cast<std::uint64_t>(component));
}

std::vector<TrainLog> train_har(HarModel& m, const Dataset& data,
                                const TrainConfig& cfg, bool parallel) {
  cfg.validate();
  if (cfg.method == TrainMethod::adv_t || cfg.method == TrainMethod::adv_hce)
    throw SpecError(to_string(cfg.method) +
                    " applies to flat models only; har components train "
                    "with standard, adv, or trades");
  const Hierarchy& h = m.hierarchy();
  if (data.fine_count != h.fine_count())
    throw DimensionError("dataset fine count does not match har hierarchy");

  const std::size_t d = data.dim();
  const int c = h.coarse_count();

  Dataset coarse_ds;
  coarse_ds.features = data.features;
  coarse_ds.fine_count = c;
  coarse_ds.hierarchy_hash = data.hierarchy_hash;
  coarse_ds.fine_labels.reserve(data.size());
  for (int y : data.fine_labels) coarse_ds.fine_labels.push_back(h.coarse_of(y));

  std::vector<int> within(static_cast<std::size_t>(h.fine_count()));
  for (int z = 0; z < c; ++z) {
    const std::vector<int>& members = h.fines_of(z);
    for (std::size_t j = 0; j < members.size(); ++j)
      within[static_cast<std::size_t>(members[j])] = static_cast<int>(j);
  }
  std::vector<std::vector<std::size_t>> rows_of(static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < data.size(); ++i)
    rows_of[static_cast<std::size_t>(h.coarse_of(data.fine_labels[i]))]
        .push_back(i);

  std::vector<Dataset> fine_ds(static_cast<std::size_t>(c));
  for (int z = 0; z < c; ++z) {
    const auto& rows = rows_of[static_cast<std::size_t>(z)];
    if (rows.empty())
      throw TrainError("coarse class '" +
                       h.coarse_names()[static_cast<std::size_t>(z)] +
                       "' has no training samples");
    Dataset& ds = fine_ds[static_cast<std::size_t>(z)];
    ds.fine_count = static_cast<int>(h.fines_of(z).size());
    ds.hierarchy_hash = data.hierarchy_hash;
    ds.features = Tensor({rows.size(), d});
    ds.fine_labels.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::span<const double> src = data.features.row_span(rows[r]);
      std::span<double> dst = ds.features.row_span(r);
      std::copy(src.begin(), src.end(), dst.begin());
      ds.fine_labels[r] =
          within[static_cast<std::size_t>(data.fine_labels[rows[r]])];
    }
  }

  const int components = c + 1;
  std::vector<TrainLog> logs(static_cast<std::size_t>(components));
  std::vector<std::exception_ptr> errors(
      static_cast<std::size_t>(components));
  auto run_component = [&](int comp) {
    try {
      TrainConfig local = cfg;
      local.seed = component_seed(cfg.seed, comp);
      if (comp == 0)
        logs[0] = train_classifier(m.coarse_net(), coarse_ds, local);
      else
        logs[static_cast<std::size_t>(comp)] = train_classifier(
            m.fine_nets()[static_cast<std::size_t>(comp - 1)],
            fine_ds[static_cast<std::size_t>(comp - 1)], local);
    } catch (...) {
      errors[static_cast<std::size_t>(comp)] = std::current_exception();
    }
  };

  if (parallel) {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(components));
    for (int comp = 0; comp < components; ++comp)
      pool.emplace_back(run_component, comp);
    for (std::thread& t : pool) t.join();
  } else {
    for (int comp = 0; comp < components; ++comp) run_component(comp);
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  return logs;
}

void TrainLog::save_csv(const std::filesystem::path& path,
                        const std::string& config_hash) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IntegrityError("cannot open " + path.string() + " for writing");
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "epoch,lr,train_loss,train_acc\n";
  char buf[160];
  for (const EpochStats& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", e.epoch, e.lr,
                  e.loss, e.accuracy);
    out << buf;
  }
  if (!out) throw IntegrityError("write failed for " + path.string());
}

}  // namespace har
