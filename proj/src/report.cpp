#include "har/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "har/errors.hpp"

namespace har {

namespace {

using nlohmann::json;

json spec_to_json(const AttackSpec& s) {
  json j;
  j["norm"] = to_string(s.norm);
  j["eps"] = s.epsilon;
  j["alpha"] = s.alpha;
  j["iters"] = s.iterations;
  j["mode"] = to_string(s.mode);
  j["target"] = s.target;
  j["random_init"] = s.random_init;
  j["seed"] = s.seed;
  return j;
}

AttackSpec spec_from_json(const json& j) {
  AttackSpec s;
  s.norm = norm_from_string(j.at("norm").get<std::string>());
  s.epsilon = j.at("eps").get<double>();
  s.alpha = j.at("alpha").get<double>();
  s.iterations = j.at("iters").get<int>();
  s.mode = mode_from_string(j.at("mode").get<std::string>());
  s.target = j.at("target").get<int>();
  s.random_init = j.at("random_init").get<bool>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

json opt_to_json(const std::optional<double>& v) {
  if (v.has_value()) return *v;
  return nullptr;
}

std::optional<double> opt_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

void write_outcomes_jsonl(const std::filesystem::path& path,
                          const OutcomeMeta& meta,
                          const std::vector<AttackOutcome>& outcomes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IntegrityError("cannot open " + path.string() + " for writing");
  json m;
  m["meta"] = true;
  m["mode"] = meta.mode;
  m["norm"] = meta.norm;
  m["eps"] = meta.eps;
  m["k"] = meta.k;
  m["seed"] = meta.seed;
  m["config_hash"] = meta.config_hash;
  out << m.dump() << "\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const AttackOutcome& o = outcomes[i];
    json r;
    r["index"] = i;
    r["mode"] = meta.mode;
    r["norm"] = meta.norm;
    r["eps"] = meta.eps;
    r["k"] = meta.k;
    r["succeeded_fine"] = o.succeeded_fine;
    r["succeeded_coarse"] = o.succeeded_coarse;
    if (o.succeeded_target.has_value())
      r["succeeded_target"] = *o.succeeded_target;
    else
      r["succeeded_target"] = nullptr;
    r["targets_tried"] = o.targets_tried;
    r["l2_delta"] = o.l2_delta;
    r["linf_delta"] = o.linf_delta;
    out << r.dump() << "\n";
  }
  if (!out) throw IntegrityError("write failed for " + path.string());
}

std::pair<OutcomeMeta, std::vector<OutcomeRecord>> read_outcomes_jsonl(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + path.string());
  std::string line;
  OutcomeMeta meta;
  std::vector<OutcomeRecord> records;
  bool have_meta = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
    try {
      if (!have_meta) {
        if (!j.value("meta", false))
          throw ParseError(path.string() + ": first line must be the meta record");
        meta.mode = j.at("mode").get<std::string>();
        meta.norm = j.at("norm").get<std::string>();
        meta.eps = j.at("eps").get<double>();
        meta.k = j.at("k").get<int>();
        meta.seed = j.at("seed").get<std::uint64_t>();
        meta.config_hash = j.at("config_hash").get<std::string>();
        have_meta = true;
        continue;
      }
      OutcomeRecord r;
      r.index = j.at("index").get<std::size_t>();
      r.succeeded_fine = j.at("succeeded_fine").get<bool>();
      r.succeeded_coarse = j.at("succeeded_coarse").get<bool>();
      if (!j.at("succeeded_target").is_null())
        r.succeeded_target = j.at("succeeded_target").get<bool>();
      r.targets_tried = j.at("targets_tried").get<std::vector<int>>();
      r.l2_delta = j.at("l2_delta").get<double>();
      r.linf_delta = j.at("linf_delta").get<double>();
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  if (!have_meta)
    throw ParseError(path.string() + ": missing meta record");
  return {std::move(meta), std::move(records)};
}

std::string eval_report_to_json(const EvalReport& rep) {
  json j;
  j["clean_fine_acc"] = rep.clean_fine_acc;
  j["clean_coarse_acc"] = rep.clean_coarse_acc;
  j["attacked_fine_acc"] = rep.attacked_fine_acc;
  j["attacked_coarse_acc"] = rep.attacked_coarse_acc;
  j["within_coarse_ratio"] = opt_to_json(rep.within_coarse);
  j["targeted_robust_acc"] = opt_to_json(rep.targeted_robust_acc);
  j["worst_case_coarse_acc"] = opt_to_json(rep.worst_case_coarse_acc);
  j["coarse_net_coarse_acc"] = opt_to_json(rep.coarse_net_coarse_acc);
  j["coarse_chance"] = rep.coarse_chance;
  j["n_samples"] = rep.n_samples;
  j["n_subsample"] = rep.n_subsample;
  j["untargeted_spec"] = spec_to_json(rep.untargeted_spec);
  j["worst_case_spec"] = spec_to_json(rep.worst_case_spec);
  j["seed"] = rep.seed;
  j["config_hash"] = rep.config_hash;
  return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad eval report json: ") + e.what());
  }
  try {
    EvalReport rep;
    rep.clean_fine_acc = j.at("clean_fine_acc").get<double>();
    rep.clean_coarse_acc = j.at("clean_coarse_acc").get<double>();
    rep.attacked_fine_acc = j.at("attacked_fine_acc").get<double>();
    rep.attacked_coarse_acc = j.at("attacked_coarse_acc").get<double>();
    rep.within_coarse = opt_from_json(j.at("within_coarse_ratio"));
    rep.targeted_robust_acc = opt_from_json(j.at("targeted_robust_acc"));
    rep.worst_case_coarse_acc = opt_from_json(j.at("worst_case_coarse_acc"));
    rep.coarse_net_coarse_acc = opt_from_json(j.at("coarse_net_coarse_acc"));
    rep.coarse_chance = j.at("coarse_chance").get<double>();
    rep.n_samples = j.at("n_samples").get<std::size_t>();
    rep.n_subsample = j.at("n_subsample").get<std::size_t>();
    rep.untargeted_spec = spec_from_json(j.at("untargeted_spec"));
    rep.worst_case_spec = spec_from_json(j.at("worst_case_spec"));
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.config_hash = j.at("config_hash").get<std::string>();
    return rep;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad eval report json: ") + e.what());
  }
}

void save_eval_report(const EvalReport& rep,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IntegrityError("cannot open " + path.string() + " for writing");
  out << eval_report_to_json(rep);
  if (!out) throw IntegrityError("write failed for " + path.string());
}

EvalReport load_eval_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return eval_report_from_json(buf.str());
}

std::string format_rate(const std::optional<double>& v) {
  if (!v.has_value()) return "—";
  return fmt(*v, "%.4f");
}

std::string Table::to_csv(const std::string& config_hash) const {
  std::ostringstream out;
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out << ",";
    out << csv_cell(columns[c]);
  }
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ",";
      out << csv_cell(row[c]);
    }
    out << "\n";
  }
  return out.str();
}

std::string Table::to_markdown(const std::string& config_hash) const {
  std::ostringstream out;
  out << "## " << title << "\n\n";
  out << "|";
  for (const std::string& c : columns) out << " " << c << " |";
  out << "\n|";
  for (std::size_t c = 0; c < columns.size(); ++c) out << " --- |";
  out << "\n";
  for (const auto& row : rows) {
    out << "|";
    for (const std::string& cell : row) out << " " << cell << " |";
    out << "\n";
  }
  if (!config_hash.empty())
    out << "\nconfig_hash: " << config_hash << "\n";
  return out.str();
}

Table accuracy_table(const std::vector<LabeledReport>& runs) {
  Table t;
  t.title = "Accuracy under untargeted attack";
  t.columns = {"model", "clean fine", "clean coarse", "attacked fine",
               "attacked coarse"};
  for (const auto& [label, rep] : runs)
    t.rows.push_back({label, format_rate(rep.clean_fine_acc),
                      format_rate(rep.clean_coarse_acc),
                      format_rate(rep.attacked_fine_acc),
                      format_rate(rep.attacked_coarse_acc)});
  return t;
}

Table within_coarse_table(const std::vector<LabeledReport>& runs) {
  Table t;
  t.title = "Within-coarse misclassification under untargeted attack";
  t.columns = {"model", "attacked fine", "attacked coarse",
               "within-coarse ratio", "coarse chance"};
  for (const auto& [label, rep] : runs)
    t.rows.push_back({label, format_rate(rep.attacked_fine_acc),
                      format_rate(rep.attacked_coarse_acc),
                      format_rate(rep.within_coarse),
                      format_rate(rep.coarse_chance)});
  return t;
}

Table targeted_table(const std::vector<LabeledReport>& runs) {
  Table t;
  t.title = "Worst-case targeted robustness";
  t.columns = {"model", "norm", "eps", "k", "targeted robust acc",
               "coarse acc under attack"};
  for (const auto& [label, rep] : runs) {
    const AttackSpec& s = rep.worst_case_spec;
    t.rows.push_back({label, to_string(s.norm), fmt(s.epsilon),
                      std::to_string(s.iterations),
                      format_rate(rep.targeted_robust_acc),
                      format_rate(rep.worst_case_coarse_acc)});
  }
  return t;
}

Table attack_comparison_table(const std::vector<LabeledReport>& runs) {
  Table t;
  t.title = "Coarse-net attack vs full-model attack (coarse accuracy)";
  t.columns = {"model", "coarse-net attack", "full-model attack"};
  for (const auto& [label, rep] : runs)
    t.rows.push_back({label, format_rate(rep.coarse_net_coarse_acc),
                      format_rate(rep.worst_case_coarse_acc)});
  return t;
}

Table outcomes_table(
    const std::vector<std::pair<
        std::string, std::pair<OutcomeMeta, std::vector<OutcomeRecord>>>>&
        runs) {
  Table t;
  t.title = "Attack outcome summary";
  t.columns = {"run",  "mode", "norm",
               "eps",  "k",    "n",
               "robust fine acc", "robust coarse acc", "targeted robust acc"};
  for (const auto& [label, data] : runs) {
    const OutcomeMeta& meta = data.first;
    const std::vector<OutcomeRecord>& recs = data.second;
    std::optional<double> fine, coarse, targeted;
    if (!recs.empty()) {
      std::size_t f = 0, c = 0, tgt = 0, with_tgt = 0;
      for (const OutcomeRecord& r : recs) {
        if (!r.succeeded_fine) ++f;
        if (!r.succeeded_coarse) ++c;
        if (r.succeeded_target.has_value()) {
          ++with_tgt;
          if (!*r.succeeded_target) ++tgt;
        }
      }
      const double n = static_cast<double>(recs.size());
      fine = static_cast<double>(f) / n;
      coarse = static_cast<double>(c) / n;
      if (with_tgt == recs.size())
        targeted = static_cast<double>(tgt) / n;
    }
    t.rows.push_back({label, meta.mode, meta.norm, fmt(meta.eps),
                      std::to_string(meta.k), std::to_string(recs.size()),
                      format_rate(fine), format_rate(coarse),
                      format_rate(targeted)});
  }
  return t;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string line_chart_svg(const std::string& title,
                           const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series,
                           const std::string& config_hash) {
  const double width = 640, height = 420;
  const double ml = 70, mr = 150, mt = 45, mb = 55;
  const double pw = width - ml - mr, ph = height - mt - mb;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const Series& s : series)
    for (const auto& [x, y] : s.points) {
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const auto sx = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * pw;
  };
  const auto sy = [&](double y) {
    return mt + ph - (y - ymin) / (ymax - ymin) * ph;
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  if (!config_hash.empty())
    out << "<!-- config_hash=" << config_hash << " -->\n";
  out << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << title
      << "</text>\n";

  out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    out << "<line x1=\"" << fmt(sx(fx), "%.2f") << "\" y1=\"" << mt + ph
        << "\" x2=\"" << fmt(sx(fx), "%.2f") << "\" y2=\"" << mt + ph + 5
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fmt(sx(fx), "%.2f") << "\" y=\"" << mt + ph + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << fmt(fx, "%.4g") << "</text>\n";
    out << "<line x1=\"" << ml - 5 << "\" y1=\"" << fmt(sy(fy), "%.2f")
        << "\" x2=\"" << ml << "\" y2=\"" << fmt(sy(fy), "%.2f")
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml - 9 << "\" y=\"" << fmt(sy(fy) + 4, "%.2f")
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << fmt(fy, "%.4g") << "</text>\n";
  }
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\">" << x_label << "</text>\n";
  out << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\" transform=\"rotate(-90 18 " << mt + ph / 2
      << ")\">" << y_label << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof kPalette / sizeof *kPalette)];
    std::ostringstream pts;
    for (const auto& [x, y] : series[s].points)
      pts << fmt(sx(x), "%.2f") << "," << fmt(sy(y), "%.2f") << " ";
    out << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\""
        << color << "\" stroke-width=\"2\"/>\n";
    for (const auto& [x, y] : series[s].points)
      out << "<circle cx=\"" << fmt(sx(x), "%.2f") << "\" cy=\""
          << fmt(sy(y), "%.2f") << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << ml + pw + 12 << "\" y=\""
        << mt + 14 + 18 * static_cast<double>(s)
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color
        << "\">" << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace har
