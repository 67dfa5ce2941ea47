#include "matu/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "matu/errors.hpp"
#include "matu/scorer.hpp"

namespace matu {

double auroc(const std::vector<LabeledScore>& items) {
  std::size_t n_correct = 0, n_incorrect = 0;
  for (const auto& it : items) (it.correct ? n_correct : n_incorrect) += 1;
  if (n_correct == 0 || n_incorrect == 0)
    throw DegenerateLabels("AUROC needs both classes; got " +
                           std::to_string(n_correct) + " correct and " +
                           std::to_string(n_incorrect) + " incorrect");

  // Average ranks of U (ties share their rank), then the Mann-Whitney form:
  // concordance = (rank-sum of incorrect − n_i(n_i+1)/2) / (n_i · n_c).
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return items[a].U < items[b].U;
  });
  std::vector<double> rank(items.size());
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j + 1 < items.size() &&
           items[order[j + 1]].U == items[order[i]].U)
      ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 +
                       1.0;  // ranks are 1-based
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum_incorrect = 0.0;
  for (std::size_t k = 0; k < items.size(); ++k)
    if (!items[k].correct) rank_sum_incorrect += rank[k];
  const double ni = static_cast<double>(n_incorrect);
  const double nc = static_cast<double>(n_correct);
  return (rank_sum_incorrect - ni * (ni + 1) / 2.0) / (ni * nc);
}

double auarc(const std::vector<LabeledScore>& items) {
  if (items.empty()) return 0.0;
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (items[a].U != items[b].U) return items[a].U < items[b].U;
    return a < b;  // stable index tie-break
  });
  double kept_correct = 0.0;
  double area = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    kept_correct += items[order[k]].correct;
    area += kept_correct / static_cast<double>(k + 1);
  }
  return area / static_cast<double>(order.size());
}

std::vector<EvalReport> evaluate_dataset(
    const std::map<std::string, std::vector<std::pair<std::string, double>>>&
        method_scores,
    const std::map<std::string, int>& labels) {
  std::vector<EvalReport> reports;
  for (const auto& [method, scores] : method_scores) {
    EvalReport report;
    report.method_id = method;
    std::vector<LabeledScore> joined;
    std::size_t unlabeled = 0;
    for (const auto& [task_id, u] : scores) {
      auto it = labels.find(task_id);
      if (it == labels.end()) {
        ++unlabeled;
        continue;
      }
      joined.push_back({task_id, u, it->second});
    }
    if (joined.empty())
      throw NoOverlap("method " + method +
                      ": no scored task has a label (scores " +
                      std::to_string(scores.size()) + ", labels " +
                      std::to_string(labels.size()) + ")");
    if (unlabeled > 0)
      report.diagnostics.push_back(
          {"UnlabeledTasks", std::to_string(unlabeled) +
                                 " scored task(s) had no label and were "
                                 "excluded"});
    report.n = joined.size();
    report.auroc = auroc(joined);
    report.auarc = auarc(joined);
    reports.push_back(std::move(report));
  }
  return reports;
}

RoutingResult select_by_uncertainty(
    const std::vector<std::vector<BackboneCandidate>>& per_task_candidates) {
  if (per_task_candidates.empty())
    throw EmptyCandidates("routing needs at least one task");
  RoutingResult result;
  result.n_tasks = per_task_candidates.size();
  double chosen_correct = 0.0;
  double random_correct = 0.0;
  for (std::size_t t = 0; t < per_task_candidates.size(); ++t) {
    const auto& cands = per_task_candidates[t];
    if (cands.empty())
      throw EmptyCandidates("task " + std::to_string(t) + " has no candidates");
    std::size_t best = 0;
    double mean = 0.0;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (cands[c].U < cands[best].U) best = c;  // strict: ties keep first
      mean += cands[c].correct;
    }
    chosen_correct += cands[best].correct;
    random_correct += mean / static_cast<double>(cands.size());
  }
  result.accuracy = chosen_correct / static_cast<double>(result.n_tasks);
  result.random_expectation =
      random_correct / static_cast<double>(result.n_tasks);
  return result;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  // Minimal CSV: quoted fields may contain commas and doubled quotes.
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

std::map<std::string, int> load_labels_csv(std::istream& in) {
  std::map<std::string, int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("task_id,", 0) == 0) continue;  // header
    const auto fields = split_csv_line(line);
    if (fields.size() < 2)
      throw MalformedLine(line_no, "labels row needs task_id,correct");
    const std::string& v = fields[1];
    if (v != "0" && v != "1")
      throw DataError("SchemaViolation", "labels line " +
                                             std::to_string(line_no) +
                                             ": correct must be 0 or 1, got " +
                                             v);
    labels[fields[0]] = v == "1" ? 1 : 0;
  }
  return labels;
}

void save_labels_csv(std::ostream& out,
                     const std::map<std::string, int>& labels) {
  out << "task_id,correct\n";
  for (const auto& [task_id, correct] : labels)
    out << task_id << ',' << correct << '\n';
}

std::vector<std::pair<std::string, double>> load_scores_csv(std::istream& in) {
  std::vector<std::pair<std::string, double>> scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("task_id,", 0) == 0) continue;  // header
    const auto fields = split_csv_line(line);
    if (fields.size() < 2)
      throw MalformedLine(line_no, "scores row needs task_id,U");
    try {
      scores.emplace_back(fields[0], std::stod(fields[1]));
    } catch (const std::exception&) {
      throw MalformedLine(line_no, "U is not a number: " + fields[1]);
    }
  }
  return scores;
}

void write_eval_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "method,n,auroc,auarc\n";
  for (const EvalReport& r : reports) {
    out << r.method_id << ',' << r.n << ',' << format_double(r.auroc) << ','
        << format_double(r.auarc) << '\n';
  }
}

}  // namespace matu
