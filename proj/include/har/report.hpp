#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "har/attack.hpp"
#include "har/metrics.hpp"

namespace har {

struct OutcomeMeta {
  std::string mode;
  std::string norm;
  double eps = 0.0;
  int k = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct OutcomeRecord {
  std::size_t index = 0;
  bool succeeded_fine = false;
  bool succeeded_coarse = false;
  std::optional<bool> succeeded_target;
  std::vector<int> targets_tried;
  double l2_delta = 0.0;
  double linf_delta = 0.0;
};

// JSON lines: a meta record first, then one record per sample.
void write_outcomes_jsonl(const std::filesystem::path& path,
                          const OutcomeMeta& meta,
                          const std::vector<AttackOutcome>& outcomes);
std::pair<OutcomeMeta, std::vector<OutcomeRecord>> read_outcomes_jsonl(
    const std::filesystem::path& path);

std::string eval_report_to_json(const EvalReport& rep);
EvalReport eval_report_from_json(const std::string& text);
void save_eval_report(const EvalReport& rep,
                      const std::filesystem::path& path);
EvalReport load_eval_report(const std::filesystem::path& path);

struct Table {
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv(const std::string& config_hash) const;
  std::string to_markdown(const std::string& config_hash) const;
};

// "—" for absent metrics, fixed 4 decimals otherwise.
std::string format_rate(const std::optional<double>& v);

using LabeledReport = std::pair<std::string, EvalReport>;

Table accuracy_table(const std::vector<LabeledReport>& runs);
Table within_coarse_table(const std::vector<LabeledReport>& runs);
Table targeted_table(const std::vector<LabeledReport>& runs);
Table attack_comparison_table(const std::vector<LabeledReport>& runs);

// Summary of raw outcome files: robust accuracies per run.
Table outcomes_table(
    const std::vector<std::pair<
        std::string, std::pair<OutcomeMeta, std::vector<OutcomeRecord>>>>&
        runs);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // sorted by x by caller
};

std::string line_chart_svg(const std::string& title,
                           const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series,
                           const std::string& config_hash);

}  // namespace har
