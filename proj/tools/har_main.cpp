#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "har/attack.hpp"
#include "har/classifier.hpp"
#include "har/data.hpp"
#include "har/errors.hpp"
#include "har/hierarchy.hpp"
#include "har/metrics.hpp"
#include "har/report.hpp"
#include "har/rng.hpp"
#include "har/serialize.hpp"
#include "har/train.hpp"

namespace {

using namespace har;
namespace fs = std::filesystem;

// Stream tags hung off the user seed: 1 drives parameter init and the
// train/test split, 2 drives subsample selection. Attack streams use
// the raw seed, so the tagged streams never collide with them.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kSubsampleStream = 2;

double parse_ratio(const std::string& s, const char* flag) {
  const auto bad = [&]() -> ParseError {
    return ParseError(std::string(flag) + ": cannot parse '" + s + "'");
  };
  try {
    const std::size_t slash = s.find('/');
    if (slash != std::string::npos) {
      std::size_t p1 = 0, p2 = 0;
      const double num = std::stod(s.substr(0, slash), &p1);
      const double den = std::stod(s.substr(slash + 1), &p2);
      if (p1 != slash || p2 != s.size() - slash - 1) throw bad();
      if (den == 0.0)
        throw ParseError(std::string(flag) + ": zero denominator in '" + s +
                         "'");
      return num / den;
    }
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw bad();
    return v;
  } catch (const std::invalid_argument&) {
    throw bad();
  } catch (const std::out_of_range&) {
    throw bad();
  }
}

double parse_alpha(const std::string& s) {
  if (s == "auto") return -1.0;
  return parse_ratio(s, "--alpha");
}

struct ConfigText {
  std::string text;

  ConfigText& kv(const std::string& k, const std::string& v) {
    text += k;
    text += '=';
    text += v;
    text += ';';
    return *this;
  }
  ConfigText& kv(const std::string& k, const char* v) {
    return kv(k, std::string(v));
  }
  ConfigText& kv(const std::string& k, double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return kv(k, std::string(b));
  }
  ConfigText& kv(const std::string& k, int v) {
    return kv(k, std::to_string(v));
  }
  ConfigText& kv(const std::string& k, std::uint64_t v) {
    return kv(k, std::to_string(v));
  }
  ConfigText& kv(const std::string& k, bool v) {
    return kv(k, std::string(v ? "1" : "0"));
  }
  template <class T>
  ConfigText& kv(const std::string& k, const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(v[i]);
    }
    return kv(k, s);
  }

  std::string hash() const {
    char b[24];
    std::snprintf(b, sizeof b, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text)));
    return b;
  }
};

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IntegrityError("cannot open " + p.string() + " for writing");
  out << content;
  if (!out) throw IntegrityError("write failed for " + p.string());
}

std::vector<std::size_t> pick_subsample(std::size_t n, std::size_t want,
                                        std::uint64_t stream_seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (want == 0 || want >= n) return idx;
  Rng rng(stream_seed);
  rng.shuffle(idx);
  idx.resize(want);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct Subset {
  Tensor xs;
  std::vector<int> ys;
};

Subset take_rows(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Subset out;
  out.xs = Tensor({idx.size(), ds.dim()});
  out.ys.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = ds.features.row_span(idx[i]);
    std::copy(src.begin(), src.end(), out.xs.row_span(i).begin());
    out.ys.push_back(ds.fine_labels[idx[i]]);
  }
  return out;
}

void check_model_data(const LoadedCheckpoint& ck, const Hierarchy& h,
                      const Dataset& data) {
  if (ck.hierarchy_hash != h.hash())
    throw IntegrityError("checkpoint was trained against a different hierarchy");
  if (ck.model().class_count() != static_cast<std::size_t>(data.fine_count))
    throw IntegrityError("checkpoint class count does not match dataset");
  if (ck.model().input_dim() != data.dim())
    throw IntegrityError("checkpoint input dim does not match dataset");
}

// --- gen-data ---------------------------------------------------------

struct GenArgs {
  int coarse = 2;
  int fines = 2;
  int dim = 8;
  int per_class = 200;
  double coarse_sep = 1.2;
  double fine_sep = 0.35;
  double sigma = 0.12;
  double train_frac = 0.8;
  std::uint64_t seed = 0;
  std::string out;
};

void run_gen_data(const GenArgs& a) {
  if (!(a.train_frac > 0.0 && a.train_frac < 1.0))
    throw SpecError("--train-frac must lie strictly between 0 and 1");

  ConfigText cfg;
  cfg.kv("cmd", "gen-data")
      .kv("coarse", a.coarse)
      .kv("fines", a.fines)
      .kv("dim", a.dim)
      .kv("per_class", a.per_class)
      .kv("coarse_sep", a.coarse_sep)
      .kv("fine_sep", a.fine_sep)
      .kv("sigma", a.sigma)
      .kv("train_frac", a.train_frac)
      .kv("seed", a.seed);
  const std::string hash = cfg.hash();

  SynthSpec sp;
  sp.coarse_count = a.coarse;
  sp.fines_per_coarse = a.fines;
  sp.dim = a.dim;
  sp.per_class = a.per_class;
  sp.coarse_separation = a.coarse_sep;
  sp.fine_separation = a.fine_sep;
  sp.noise_sigma = a.sigma;
  sp.seed = a.seed;

  Generated g = generate(sp);
  auto [train, test] = split(g.data, a.train_frac, Rng::mix(a.seed, kInitStream));

  const fs::path out(a.out);
  fs::create_directories(out);
  save_hierarchy(g.hierarchy, out / "hierarchy.txt");
  save_dataset(train, out / "train.bin");
  save_dataset(test, out / "test.bin");

  nlohmann::json m;
  m["config_hash"] = hash;
  m["seed"] = a.seed;
  m["coarse_count"] = a.coarse;
  m["fines_per_coarse"] = a.fines;
  m["dim"] = a.dim;
  m["per_class"] = a.per_class;
  m["coarse_separation"] = a.coarse_sep;
  m["fine_separation"] = a.fine_sep;
  m["noise_sigma"] = a.sigma;
  m["train_fraction"] = a.train_frac;
  m["hierarchy_hash"] = g.hierarchy.hash();
  m["n_train"] = train.size();
  m["n_test"] = test.size();
  m["files"] = {{"hierarchy", "hierarchy.txt"},
                {"train", "train.bin"},
                {"test", "test.bin"}};
  write_text(out / "manifest.json", m.dump(2) + "\n");

  std::cout << "wrote " << (out / "hierarchy.txt").string() << ", train.bin ("
            << train.size() << "), test.bin (" << test.size()
            << "), manifest.json  config_hash=" << hash << "\n";
}

// --- train ------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string hierarchy;
  std::string model = "flat";
  std::string method = "standard";
  int epochs = 60;
  int batch = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double wd = 2e-4;
  std::vector<int> decay_epochs = {30, 45};
  double decay_factor = 0.1;
  double beta = 9.0;
  std::string eps = "8/255";
  std::string alpha = "auto";
  int inner_iters = 10;
  std::string inner_norm = "linf";
  std::vector<std::size_t> dims = {64};
  bool serial = false;
  std::uint64_t seed = 0;
  std::string out;
};

void run_train(const TrainArgs& a) {
  const Hierarchy h = load_hierarchy(a.hierarchy);
  const Dataset data = load_dataset(a.data, h);
  const TrainMethod method = method_from_string(a.method);

  TrainConfig cfg;
  cfg.method = method;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.lr.initial = a.lr;
  cfg.lr.decay_factor = a.decay_factor;
  cfg.lr.decay_epochs = a.decay_epochs;
  cfg.momentum = a.momentum;
  cfg.weight_decay = a.wd;
  cfg.beta = a.beta;
  cfg.seed = a.seed;
  if (method != TrainMethod::standard) {
    AttackSpec inner;
    inner.norm = norm_from_string(a.inner_norm);
    inner.epsilon = parse_ratio(a.eps, "--eps");
    inner.alpha = parse_alpha(a.alpha);
    inner.iterations = a.inner_iters;
    cfg.inner = inner;
  }
  cfg.validate();

  ConfigText ct;
  ct.kv("cmd", "train")
      .kv("model", a.model)
      .kv("method", a.method)
      .kv("epochs", a.epochs)
      .kv("batch", a.batch)
      .kv("lr", a.lr)
      .kv("momentum", a.momentum)
      .kv("wd", a.wd)
      .kv("decay_epochs", a.decay_epochs)
      .kv("decay_factor", a.decay_factor)
      .kv("beta", a.beta)
      .kv("eps", a.eps)
      .kv("alpha", a.alpha)
      .kv("inner_iters", a.inner_iters)
      .kv("inner_norm", a.inner_norm)
      .kv("dims", a.dims)
      .kv("seed", a.seed)
      .kv("hierarchy_hash", h.hash());
  const std::string hash = ct.hash();

  const fs::path out(a.out);
  fs::create_directories(out);
  const CheckpointMeta meta{a.seed, hash};

  if (a.model == "flat") {
    std::vector<std::size_t> dims;
    dims.push_back(data.dim());
    dims.insert(dims.end(), a.dims.begin(), a.dims.end());
    dims.push_back(static_cast<std::size_t>(h.fine_count()));
    Classifier net(dims);
    Rng init_rng(Rng::mix(a.seed, kInitStream));
    net.init_params(init_rng);

    const TrainLog log = train_classifier(net, data, h, cfg);
    net.quantize_params_f32();
    save_checkpoint(net, meta, h.hash(), out / "model.ckpt");
    log.save_csv(out / "train_log.csv", hash);
    std::cout << "wrote " << (out / "model.ckpt").string()
              << " and train_log.csv  config_hash=" << hash << "\n";
    return;
  }

  const int C = h.coarse_count();
  std::vector<std::size_t> coarse_dims;
  coarse_dims.push_back(data.dim());
  coarse_dims.insert(coarse_dims.end(), a.dims.begin(), a.dims.end());
  coarse_dims.push_back(static_cast<std::size_t>(C));
  Classifier coarse(coarse_dims);
  {
    Rng r(Rng::mix(component_seed(a.seed, 0), kInitStream));
    coarse.init_params(r);
  }
  std::vector<Classifier> fines;
  for (int z = 0; z < C; ++z) {
    std::vector<std::size_t> fd;
    fd.push_back(data.dim());
    fd.insert(fd.end(), a.dims.begin(), a.dims.end());
    fd.push_back(h.fines_of(z).size());
    Classifier net(fd);
    Rng r(Rng::mix(component_seed(a.seed, 1 + z), kInitStream));
    net.init_params(r);
    fines.push_back(std::move(net));
  }
  HarModel model(std::move(coarse), std::move(fines), h);

  const std::vector<TrainLog> logs = train_har(model, data, cfg, !a.serial);
  model.quantize_params_f32();
  save_checkpoint(model, meta, out / "model.ckpt");
  logs[0].save_csv(out / "train_log_coarse.csv", hash);
  for (int z = 0; z < C; ++z)
    logs[1 + z].save_csv(out / ("train_log_fine_" + std::to_string(z) + ".csv"),
                         hash);
  std::cout << "wrote " << (out / "model.ckpt").string() << " and " << (1 + C)
            << " training logs  config_hash=" << hash << "\n";
}

// --- attack -----------------------------------------------------------

struct AttackArgs {
  std::string model;
  std::string data;
  std::string hierarchy;
  std::string mode = "untargeted";
  std::string norm = "linf";
  std::string eps = "8/255";
  std::string alpha = "auto";
  int iters = 20;
  bool no_random_init = false;
  std::size_t subsample = 1000;
  int workers = 1;
  std::uint64_t seed = 0;
  std::string out;
};

void run_attack(const AttackArgs& a) {
  const LoadedCheckpoint ck = load_checkpoint(a.model);
  const Hierarchy h = load_hierarchy(a.hierarchy);
  const Dataset data = load_dataset(a.data, h);
  check_model_data(ck, h, data);

  AttackSpec spec;
  spec.norm = norm_from_string(a.norm);
  spec.epsilon = parse_ratio(a.eps, "--eps");
  spec.alpha = parse_alpha(a.alpha);
  spec.iterations = a.iters;
  spec.mode = mode_from_string(a.mode);
  spec.random_init = !a.no_random_init;
  spec.seed = a.seed;
  validate_attack_spec(spec);

  ConfigText ct;
  ct.kv("cmd", "attack")
      .kv("mode", a.mode)
      .kv("norm", a.norm)
      .kv("eps", a.eps)
      .kv("alpha", a.alpha)
      .kv("iters", a.iters)
      .kv("random_init", !a.no_random_init)
      .kv("subsample", static_cast<std::uint64_t>(a.subsample))
      .kv("seed", a.seed)
      .kv("model_hash", ck.meta.config_hash)
      .kv("hierarchy_hash", h.hash());
  const std::string hash = ct.hash();

  Subset sel;
  if (spec.mode == AttackMode::untargeted) {
    sel.xs = data.features;
    sel.ys = data.fine_labels;
  } else {
    const auto idx = pick_subsample(data.size(), a.subsample,
                                    Rng::mix(a.seed, kSubsampleStream));
    sel = take_rows(data, idx);
  }

  const std::vector<AttackOutcome> outcomes =
      attack_dataset(ck.model(), h, sel.xs, sel.ys, spec, a.workers);

  OutcomeMeta meta;
  meta.mode = to_string(spec.mode);
  meta.norm = to_string(spec.norm);
  meta.eps = spec.epsilon;
  meta.k = spec.iterations;
  meta.seed = a.seed;
  meta.config_hash = hash;
  write_outcomes_jsonl(a.out, meta, outcomes);

  std::size_t fine_ok = 0, coarse_ok = 0;
  for (const AttackOutcome& o : outcomes) {
    if (!o.succeeded_fine) ++fine_ok;
    if (!o.succeeded_coarse) ++coarse_ok;
  }
  std::cout << "wrote " << a.out << " (" << outcomes.size()
            << " records)  robust fine " << fine_ok << "/" << outcomes.size()
            << ", robust coarse " << coarse_ok << "/" << outcomes.size()
            << "  config_hash=" << hash << "\n";
}

// --- eval -------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string data;
  std::string hierarchy;
  std::string norm = "linf";
  std::string eps = "8/255";
  std::string alpha = "auto";
  int iters = 20;
  int worst_iters = 0;
  bool skip_worst = false;
  bool coarse_net = false;
  std::size_t subsample = 1000;
  int workers = 1;
  std::uint64_t seed = 0;
  std::string out;
};

void run_eval(const EvalArgs& a) {
  const LoadedCheckpoint ck = load_checkpoint(a.model);
  const Hierarchy h = load_hierarchy(a.hierarchy);
  const Dataset data = load_dataset(a.data, h);
  check_model_data(ck, h, data);
  if (a.coarse_net && ck.kind != CheckpointKind::har)
    throw SpecError("--coarse-net needs a composite checkpoint");

  ConfigText ct;
  ct.kv("cmd", "eval")
      .kv("norm", a.norm)
      .kv("eps", a.eps)
      .kv("alpha", a.alpha)
      .kv("iters", a.iters)
      .kv("worst_iters", a.worst_iters)
      .kv("skip_worst", a.skip_worst)
      .kv("coarse_net", a.coarse_net)
      .kv("subsample", static_cast<std::uint64_t>(a.subsample))
      .kv("seed", a.seed)
      .kv("model_hash", ck.meta.config_hash)
      .kv("hierarchy_hash", h.hash());
  const std::string hash = ct.hash();

  EvalOptions opts;
  opts.untargeted.norm = norm_from_string(a.norm);
  opts.untargeted.epsilon = parse_ratio(a.eps, "--eps");
  opts.untargeted.alpha = parse_alpha(a.alpha);
  opts.untargeted.iterations = a.iters;
  opts.untargeted.mode = AttackMode::untargeted;
  opts.untargeted.seed = a.seed;
  validate_attack_spec(opts.untargeted);

  opts.worst_case = opts.untargeted;
  opts.worst_case.mode = AttackMode::worst_case_hierarchical;
  opts.worst_case.iterations = a.worst_iters > 0 ? a.worst_iters : a.iters;
  opts.run_worst_case = !a.skip_worst;
  if (a.coarse_net) {
    AttackSpec cn = opts.worst_case;
    cn.mode = AttackMode::coarse_net_targeted;
    opts.coarse_net = cn;
  }
  opts.subsample = a.subsample;
  opts.subsample_seed = Rng::mix(a.seed, kSubsampleStream);
  opts.workers = a.workers;
  opts.config_hash = hash;

  EvalReport rep = evaluate(ck.model(), data, h, opts);
  rep.seed = a.seed;
  save_eval_report(rep, a.out);

  std::cout << "wrote " << a.out << "  clean fine "
            << format_rate(rep.clean_fine_acc) << ", attacked fine "
            << format_rate(rep.attacked_fine_acc) << ", attacked coarse "
            << format_rate(rep.attacked_coarse_acc)
            << "  config_hash=" << hash << "\n";
}

// --- report -----------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> evals;
  std::vector<std::string> labels;
  std::vector<std::string> outcomes;
  bool plot = false;
  std::string out;
};

std::string stem_of(const std::string& p) { return fs::path(p).stem().string(); }

void run_report(const ReportArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.evals.size())
    throw SpecError("--label count must match --eval count");
  if (a.evals.empty() && a.outcomes.empty())
    throw SpecError("nothing to report: pass --eval and/or --outcomes");

  ConfigText ct;
  ct.kv("cmd", "report").kv("plot", a.plot);
  for (const std::string& p : a.evals) ct.kv("eval", stem_of(p));
  for (const std::string& p : a.outcomes) ct.kv("outcomes", stem_of(p));
  for (const std::string& l : a.labels) ct.kv("label", l);
  const std::string hash = ct.hash();

  const fs::path out(a.out);
  fs::create_directories(out);

  if (!a.evals.empty()) {
    std::vector<LabeledReport> runs;
    for (std::size_t i = 0; i < a.evals.size(); ++i) {
      const std::string label =
          a.labels.empty() ? stem_of(a.evals[i]) : a.labels[i];
      runs.emplace_back(label, load_eval_report(a.evals[i]));
    }
    const Table tables[] = {accuracy_table(runs), within_coarse_table(runs),
                            targeted_table(runs),
                            attack_comparison_table(runs)};
    const char* names[] = {"accuracy", "within_coarse", "targeted",
                           "attack_comparison"};
    for (int i = 0; i < 4; ++i) {
      write_text(out / (std::string(names[i]) + ".csv"),
                 tables[i].to_csv(hash));
      write_text(out / (std::string(names[i]) + ".md"),
                 tables[i].to_markdown(hash));
    }
  }

  std::vector<std::pair<std::string,
                        std::pair<OutcomeMeta, std::vector<OutcomeRecord>>>>
      oruns;
  for (const std::string& p : a.outcomes)
    oruns.emplace_back(stem_of(p), read_outcomes_jsonl(p));
  if (!oruns.empty()) {
    const Table t = outcomes_table(oruns);
    write_text(out / "outcomes.csv", t.to_csv(hash));
    write_text(out / "outcomes.md", t.to_markdown(hash));
  }

  if (a.plot) {
    std::map<std::string, Series> by_eps, by_k;
    for (const auto& [label, run] : oruns) {
      const auto& [meta, recs] = run;
      if (recs.empty()) continue;
      std::size_t fine_ok = 0;
      for (const OutcomeRecord& r : recs)
        if (!r.succeeded_fine) ++fine_ok;
      const double acc = static_cast<double>(fine_ok) /
                         static_cast<double>(recs.size());
      char eb[32];
      std::snprintf(eb, sizeof eb, "%.4g", meta.eps);
      const std::string ek =
          meta.mode + " " + meta.norm + " k=" + std::to_string(meta.k);
      const std::string kk =
          meta.mode + " " + meta.norm + " eps=" + eb;
      by_eps[ek].name = ek;
      by_eps[ek].points.emplace_back(meta.eps, acc);
      by_k[kk].name = kk;
      by_k[kk].points.emplace_back(static_cast<double>(meta.k), acc);
    }
    const auto to_sorted = [](std::map<std::string, Series>& m) {
      std::vector<Series> v;
      for (auto& [key, s] : m) {
        std::sort(s.points.begin(), s.points.end());
        v.push_back(std::move(s));
      }
      return v;
    };
    std::vector<Series> se = to_sorted(by_eps);
    std::vector<Series> sk = to_sorted(by_k);
    write_text(out / "acc_vs_eps.svg",
               line_chart_svg("Robust fine accuracy vs epsilon", "epsilon",
                              "robust fine accuracy", se, hash));
    write_text(out / "acc_vs_k.svg",
               line_chart_svg("Robust fine accuracy vs iterations",
                              "iterations", "robust fine accuracy", sk, hash));
  }

  std::cout << "wrote report artifacts to " << out.string()
            << "  config_hash=" << hash << "\n";
}

void add_seed(CLI::App* sub, std::uint64_t& seed) {
  sub->add_option("--seed", seed, "RNG seed (env HAR_SEED when unset)")
      ->envname("HAR_SEED")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical adversarial robustness toolkit"};
  app.require_subcommand(1);

  GenArgs ga;
  TrainArgs ta;
  AttackArgs aa;
  EvalArgs ea;
  ReportArgs ra;

  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate a synthetic hierarchical dataset");
  gen->add_option("--coarse", ga.coarse, "coarse class count")
      ->capture_default_str();
  gen->add_option("--fines", ga.fines, "fine classes per coarse class")
      ->capture_default_str();
  gen->add_option("--dim", ga.dim, "feature dimension")->capture_default_str();
  gen->add_option("--per-class", ga.per_class, "samples per fine class")
      ->capture_default_str();
  gen->add_option("--coarse-sep", ga.coarse_sep,
                  "distance between coarse centroids")
      ->capture_default_str();
  gen->add_option("--fine-sep", ga.fine_sep,
                  "distance between fine centroids within a coarse cluster")
      ->capture_default_str();
  gen->add_option("--sigma", ga.sigma, "per-coordinate noise")
      ->capture_default_str();
  gen->add_option("--train-frac", ga.train_frac, "train split fraction")
      ->capture_default_str();
  add_seed(gen, ga.seed);
  gen->add_option("--out", ga.out, "output directory")->required();
  gen->callback([&ga] { run_gen_data(ga); });

  CLI::App* tr = app.add_subcommand("train", "Train a flat or composite model");
  tr->add_option("--data", ta.data, "training dataset (HARDATA1)")->required();
  tr->add_option("--hierarchy", ta.hierarchy, "hierarchy file")->required();
  tr->add_option("--model", ta.model, "architecture")
      ->check(CLI::IsMember({"flat", "har"}))
      ->capture_default_str();
  tr->add_option("--method", ta.method,
                 "standard|adv|adv-t|trades|adv-hce")
      ->capture_default_str();
  tr->add_option("--epochs", ta.epochs, "epoch count")->capture_default_str();
  tr->add_option("--batch", ta.batch, "batch size")->capture_default_str();
  tr->add_option("--lr", ta.lr, "initial learning rate")
      ->capture_default_str();
  tr->add_option("--momentum", ta.momentum, "SGD momentum")
      ->capture_default_str();
  tr->add_option("--wd", ta.wd, "weight decay")->capture_default_str();
  tr->add_option("--decay-epochs", ta.decay_epochs,
                 "epochs at which the learning rate decays")
      ->capture_default_str();
  tr->add_option("--decay-factor", ta.decay_factor, "learning rate multiplier")
      ->capture_default_str();
  tr->add_option("--beta", ta.beta, "TRADES regularization weight")
      ->capture_default_str();
  tr->add_option("--eps", ta.eps,
                 "inner-attack budget (decimal or fraction like 8/255)")
      ->capture_default_str();
  tr->add_option("--alpha", ta.alpha, "inner-attack step size, or 'auto'")
      ->capture_default_str();
  tr->add_option("--inner-iters", ta.inner_iters, "inner-attack iterations")
      ->capture_default_str();
  tr->add_option("--inner-norm", ta.inner_norm, "inner-attack norm")
      ->check(CLI::IsMember({"linf", "l2"}))
      ->capture_default_str();
  tr->add_option("--dims", ta.dims, "hidden layer widths")
      ->capture_default_str();
  tr->add_flag("--serial", ta.serial,
               "train composite components one at a time");
  add_seed(tr, ta.seed);
  tr->add_option("--out", ta.out, "output directory")->required();
  tr->callback([&ta] { run_train(ta); });

  CLI::App* at = app.add_subcommand("attack", "Attack a checkpoint and record outcomes");
  at->add_option("--model", aa.model, "checkpoint path")->required();
  at->add_option("--data", aa.data, "evaluation dataset")->required();
  at->add_option("--hierarchy", aa.hierarchy, "hierarchy file")->required();
  at->add_option("--mode", aa.mode, "attack mode")
      ->check(CLI::IsMember({"untargeted", "hier-worst", "hier-avg",
                             "hier-best", "coarse-targeted"}))
      ->capture_default_str();
  at->add_option("--norm", aa.norm, "perturbation norm")
      ->check(CLI::IsMember({"linf", "l2"}))
      ->capture_default_str();
  at->add_option("--eps", aa.eps, "budget (decimal or fraction like 8/255)")
      ->capture_default_str();
  at->add_option("--alpha", aa.alpha, "step size, or 'auto' for eps/4")
      ->capture_default_str();
  at->add_option("--iters", aa.iters, "PGD iterations")->capture_default_str();
  at->add_flag("--no-random-init", aa.no_random_init,
               "start from the clean input");
  at->add_option("--subsample", aa.subsample,
                 "sample cap for multi-target modes (0 = all)")
      ->capture_default_str();
  at->add_option("--workers", aa.workers, "parallel workers")
      ->capture_default_str();
  add_seed(at, aa.seed);
  at->add_option("--out", aa.out, "outcome JSONL path")->required();
  at->callback([&aa] { run_attack(aa); });

  CLI::App* ev = app.add_subcommand("eval", "Full evaluation report for a checkpoint");
  ev->add_option("--model", ea.model, "checkpoint path")->required();
  ev->add_option("--data", ea.data, "evaluation dataset")->required();
  ev->add_option("--hierarchy", ea.hierarchy, "hierarchy file")->required();
  ev->add_option("--norm", ea.norm, "perturbation norm")
      ->check(CLI::IsMember({"linf", "l2"}))
      ->capture_default_str();
  ev->add_option("--eps", ea.eps, "budget (decimal or fraction like 8/255)")
      ->capture_default_str();
  ev->add_option("--alpha", ea.alpha, "step size, or 'auto' for eps/4")
      ->capture_default_str();
  ev->add_option("--iters", ea.iters, "untargeted PGD iterations")
      ->capture_default_str();
  ev->add_option("--worst-iters", ea.worst_iters,
                 "worst-case PGD iterations (0 = same as --iters)")
      ->capture_default_str();
  ev->add_flag("--skip-worst", ea.skip_worst, "skip the worst-case attack");
  ev->add_flag("--coarse-net", ea.coarse_net,
               "also attack through the coarse net (composite models)");
  ev->add_option("--subsample", ea.subsample,
                 "worst-case sample cap (0 = all)")
      ->capture_default_str();
  ev->add_option("--workers", ea.workers, "parallel workers")
      ->capture_default_str();
  add_seed(ev, ea.seed);
  ev->add_option("--out", ea.out, "report JSON path")->required();
  ev->callback([&ea] { run_eval(ea); });

  CLI::App* rp = app.add_subcommand("report", "Render tables and plots from eval/outcome files");
  rp->add_option("--eval", ra.evals, "eval report JSON (repeatable)");
  rp->add_option("--label", ra.labels,
                 "row label for the matching --eval (repeatable)");
  rp->add_option("--outcomes", ra.outcomes, "outcome JSONL (repeatable)");
  rp->add_flag("--plot", ra.plot, "emit accuracy-vs-eps and accuracy-vs-k SVGs");
  rp->add_option("--out", ra.out, "output directory")->required();
  rp->callback([&ra] { run_report(ra); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
