#include "vtp/hns.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace vtp::eval {

bool StageCondition::holds(const std::vector<double>& scores) const {
  double s = scores.at(static_cast<size_t>(stage - 1));
  switch (op) {
    case CmpOp::Eq: return s == value;
    case CmpOp::Ge: return s >= value;
    case CmpOp::Gt: return s > value;
    case CmpOp::Le: return s <= value;
    case CmpOp::Lt: return s < value;
  }
  return false;
}

void TaskScheme::validate() const {
  if (task.empty()) throw SchemeError("scheme: missing task name");
  if (stages.empty()) throw SchemeError("scheme " + task + ": no stages");
  for (size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].index != static_cast<int>(i + 1)) {
      throw SchemeError("scheme " + task + ": stages must be numbered 1..N in order");
    }
    if (!(stages[i].weight > 0.0)) {
      throw SchemeError("scheme " + task + ": stage weights must be positive");
    }
  }
  for (const StageCondition& c : success_rule) {
    if (c.stage < 1 || c.stage > static_cast<int>(stages.size())) {
      throw SchemeError("scheme " + task + ": success rule references undefined stage " +
                        std::to_string(c.stage));
    }
  }
}

double hns(const std::vector<double>& scores, const std::vector<StageSpec>& specs) {
  if (scores.size() != specs.size()) {
    throw SchemeError("hns: " + std::to_string(scores.size()) + " scores for " +
                      std::to_string(specs.size()) + " stages");
  }
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0) || !(scores[i] <= 3.0)) {
      throw SchemeError("hns: stage " + std::to_string(i + 1) + " score " +
                        std::to_string(scores[i]) + " outside [0,3]");
    }
    num += specs[i].weight * scores[i];
    den += specs[i].weight;
  }
  return num / (3.0 * den);
}

bool success(const std::vector<double>& scores, const TaskScheme& scheme) {
  if (scores.size() != scheme.stages.size()) {
    throw SchemeError("success: score count does not match scheme " + scheme.task);
  }
  for (const StageCondition& c : scheme.success_rule) {
    if (!c.holds(scores)) return false;
  }
  return true;
}

namespace {

CmpOp parse_op(const std::string& tok, const std::string& origin) {
  if (tok == "==") return CmpOp::Eq;
  if (tok == ">=") return CmpOp::Ge;
  if (tok == ">") return CmpOp::Gt;
  if (tok == "<=") return CmpOp::Le;
  if (tok == "<") return CmpOp::Lt;
  throw SchemeError(origin + ": unknown comparison '" + tok + "'");
}

}  // namespace

TaskScheme parse_scheme(std::istream& is, const std::string& origin) {
  TaskScheme scheme;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string where = origin + ":" + std::to_string(line_no);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "task") {
      ls >> scheme.task;
    } else if (kind == "stage") {
      StageSpec spec;
      std::string weight_kw;
      ls >> spec.index >> weight_kw >> spec.weight;
      if (!ls || weight_kw != "weight") throw SchemeError(where + ": want 'stage N weight W desc'");
      std::getline(ls, spec.description);
      size_t pos = spec.description.find_first_not_of(" \t");
      spec.description = pos == std::string::npos ? "" : spec.description.substr(pos);
      scheme.stages.push_back(spec);
    } else if (kind == "rule") {
      // conjunction: s<k> OP value [&& ...]
      std::string tok;
      while (ls >> tok) {
        if (tok == "&&") continue;
        if (tok.size() < 2 || tok[0] != 's') throw SchemeError(where + ": want s<stage>");
        StageCondition c;
        c.stage = std::stoi(tok.substr(1));
        std::string op_tok;
        if (!(ls >> op_tok >> c.value)) throw SchemeError(where + ": incomplete comparison");
        c.op = parse_op(op_tok, where);
        scheme.success_rule.push_back(c);
      }
    } else {
      throw SchemeError(where + ": unknown directive '" + kind + "'");
    }
  }
  scheme.validate();
  return scheme;
}

TaskScheme load_scheme(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw SchemeError("cannot open scheme file " + path.string());
  return parse_scheme(is, path.filename().string());
}

TaskScheme load_scheme_for_task(const std::filesystem::path& dir, const std::string& task) {
  return load_scheme(dir / (task + ".scheme"));
}

std::vector<ScoreSheetRow> parse_score_sheet(std::istream& is) {
  std::vector<ScoreSheetRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ScoreSheetRow row;
    if (!(ls >> row.task)) {
      throw SchemeError("score sheet row " + std::to_string(line_no) + ": missing task name");
    }
    double s;
    while (ls >> s) row.scores.push_back(s);
    if (!ls.eof()) {
      throw SchemeError("score sheet row " + std::to_string(line_no) + ": malformed score");
    }
    if (row.scores.empty()) {
      throw SchemeError("score sheet row " + std::to_string(line_no) + ": no scores");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ScoreSheetRow> load_score_sheet(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw SchemeError("cannot open score sheet " + path.string());
  return parse_score_sheet(is);
}

HnsReport evaluate_runs(const std::vector<std::vector<double>>& run_scores,
                        const TaskScheme& scheme) {
  HnsReport report;
  report.task = scheme.task;
  report.run_scores = run_scores;
  report.stage_means.assign(scheme.stages.size(), 0.0);
  int successes = 0;
  for (const std::vector<double>& scores : run_scores) {
    report.run_hns.push_back(hns(scores, scheme.stages));
    bool ok = success(scores, scheme);
    report.run_success.push_back(ok);
    successes += ok ? 1 : 0;
    for (size_t i = 0; i < scores.size(); ++i) report.stage_means[i] += scores[i];
  }
  if (!run_scores.empty()) {
    double n = static_cast<double>(run_scores.size());
    for (double& m : report.stage_means) m /= n;
    double sum = 0.0;
    for (double h : report.run_hns) sum += h;
    report.mean_hns = sum / n;
    report.success_rate = static_cast<double>(successes) / n;
  }
  return report;
}

void write_report(std::ostream& os, const HnsReport& report, uint64_t config_digest) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_digest));
  os << "# config_digest=" << buf << "\n";
  os << "# task=" << report.task << "\n";
  os << "# run";
  for (size_t i = 0; i < report.stage_means.size(); ++i) os << "\tstage" << (i + 1);
  os << "\thns\tsuccess\n";
  for (size_t r = 0; r < report.run_scores.size(); ++r) {
    os << r;
    for (double s : report.run_scores[r]) {
      std::snprintf(buf, sizeof(buf), "\t%.4g", s);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "\t%.4f\t%d", report.run_hns[r],
                  report.run_success[r] ? 1 : 0);
    os << buf << "\n";
  }
  os << "aggregate";
  for (double m : report.stage_means) {
    std::snprintf(buf, sizeof(buf), "\t%.4g", m);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "\t%.4f\t%.2f", report.mean_hns, report.success_rate);
  os << buf << "\n";
}

}  // namespace vtp::eval
