#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "matu/trajectory.hpp"

namespace matu {

struct LabeledScore {
  std::string task_id;
  double U = 0.0;
  int correct = 0;  // 1 = correct, 0 = incorrect
};

struct EvalReport {
  std::string method_id;
  double auroc = 0.0;
  double auarc = 0.0;
  std::size_t n = 0;
  std::vector<Diagnostic> diagnostics;
};

// Probability that a uniformly random correct item has strictly lower U than
// a uniformly random incorrect one, ties counted half. Computed via the
// rank-sum form; equals exhaustive pairwise concordance.
double auroc(const std::vector<LabeledScore>& items);

// Mean accuracy over coverage levels k/n, k = 1..n, retaining the k
// least-uncertain items (ascending U, stable original-index tie-break).
double auarc(const std::vector<LabeledScore>& items);

// One report per method; tasks without a label are dropped with a count in
// diagnostics. Iteration over methods is name-ordered, so output is stable.
std::vector<EvalReport> evaluate_dataset(
    const std::map<std::string, std::vector<std::pair<std::string, double>>>&
        method_scores,
    const std::map<std::string, int>& labels);

struct BackboneCandidate {
  std::string backbone;
  double U = 0.0;
  int correct = 0;
};

struct RoutingResult {
  double accuracy = 0.0;            // mean correctness of the min-U choices
  double random_expectation = 0.0;  // mean correctness of uniform choices
  std::size_t n_tasks = 0;
};

// Per task, pick the candidate with minimal U; ties resolve to the earliest
// entry, so callers list candidates in declared backbone order.
RoutingResult select_by_uncertainty(
    const std::vector<std::vector<BackboneCandidate>>& per_task_candidates);

// Labels file: CSV "task_id,correct" with correct in {0,1}.
std::map<std::string, int> load_labels_csv(std::istream& in);
void save_labels_csv(std::ostream& out, const std::map<std::string, int>& labels);

// Scores file: CSV "task_id,U" (a summary CSV's first two columns also work).
std::vector<std::pair<std::string, double>> load_scores_csv(std::istream& in);

void write_eval_csv(std::ostream& out, const std::vector<EvalReport>& reports);

}  // namespace matu
