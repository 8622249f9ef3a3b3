#pragma once

// Human Normalized Score: per-stage raw scores in [0,3] combined by
// tactile-reliance weights, HNS = sum(w_i * s_i) / (3 * sum(w_i)), plus
// per-task success rules evaluated as conjunctions of stage comparisons.
// Task schemes are plain data files; score sheets hold one run per line.

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace vtp::eval {

class SchemeError : public std::runtime_error {
 public:
  explicit SchemeError(const std::string& what) : std::runtime_error(what) {}
};

struct StageSpec {
  int index = 0;       // 1-based
  double weight = 1.0;  // tactile reliance
  std::string description;
};

enum class CmpOp { Eq, Ge, Gt, Le, Lt };

struct StageCondition {
  int stage = 0;  // 1-based
  CmpOp op = CmpOp::Ge;
  double value = 0.0;

  bool holds(const std::vector<double>& scores) const;
};

struct TaskScheme {
  std::string task;
  std::vector<StageSpec> stages;
  std::vector<StageCondition> success_rule;  // conjunction

  void validate() const;
};

double hns(const std::vector<double>& scores, const std::vector<StageSpec>& specs);
bool success(const std::vector<double>& scores, const TaskScheme& scheme);

TaskScheme parse_scheme(std::istream& is, const std::string& origin);
TaskScheme load_scheme(const std::filesystem::path& path);
// Loads "<dir>/<task>.scheme".
TaskScheme load_scheme_for_task(const std::filesystem::path& dir, const std::string& task);

struct ScoreSheetRow {
  std::string task;
  std::vector<double> scores;
};

// One run per line: task name then s_1..s_N, whitespace separated.
std::vector<ScoreSheetRow> parse_score_sheet(std::istream& is);
std::vector<ScoreSheetRow> load_score_sheet(const std::filesystem::path& path);

struct HnsReport {
  std::string task;
  std::vector<std::vector<double>> run_scores;
  std::vector<double> run_hns;
  std::vector<bool> run_success;
  std::vector<double> stage_means;
  double mean_hns = 0.0;
  double success_rate = 0.0;
};

HnsReport evaluate_runs(const std::vector<std::vector<double>>& run_scores,
                        const TaskScheme& scheme);

// Tab-separated table mirroring the per-task result tables: one line per
// run, then an aggregate row of stage means, mean HNS and success rate.
void write_report(std::ostream& os, const HnsReport& report, uint64_t config_digest);

}  // namespace vtp::eval
