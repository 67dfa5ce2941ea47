#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "matu/parafac2.hpp"
#include "matu/tensor.hpp"
#include "matu/trajectory.hpp"

namespace matu {

enum class LossMode { relative, absolute };

struct RankLoss {
  int rank = 0;
  double loss_rel = 0.0;
  double loss_abs = 0.0;
};

struct UncertaintyReport {
  std::string task_id;
  std::vector<RankLoss> per_rank_losses;  // every rank 1..R_max, no gaps
  double U = 0.0;                         // sum of the selected per-rank losses
  int R_max = 0;
  std::optional<double> normalized_U;
  std::vector<Diagnostic> diagnostics;
};

struct LoadingReport {
  int component = 0;
  // |S[i, r]| per slice, keyed by (run_index, agent_id)
  std::vector<std::pair<std::pair<int, std::string>, double>> slice_loadings;
  std::map<int, double> run_loadings;  // mean over that run's agent slices
  std::map<std::string, double> agent_loadings;  // mean over runs
  std::optional<double> mean_correct;
  std::optional<double> mean_incorrect;
  std::optional<double> separation_ratio;  // mean(incorrect) / mean(correct)
};

// Fits ranks 1..r_max, warm-starting each rank from the previous best so the
// best loss can only shrink as rank grows. Returns one result per rank.
std::vector<FitResult> sweep_ranks(const RaggedTensor& t, int r_max,
                                   const FitConfig& base_cfg);

// Full scoring of one task: rank sweep plus the summed-loss aggregate U.
// r_max is clipped to the tensor's feasible range (≤ d and ≤ tallest slice),
// with a diagnostic when clipping happened.
UncertaintyReport score_task(const std::string& task_id,
                             const RaggedTensor& tensor, int r_max,
                             const FitConfig& cfg,
                             LossMode mode = LossMode::relative);

// Min-max normalization over the given set; a constant set maps to zeros.
std::vector<std::pair<std::string, double>> normalize_scores(
    const std::vector<std::pair<std::string, double>>& scores);

// Interpretability readout for one latent component: per-slice loading
// magnitudes with run/agent marginal means, plus group means and their
// ratio when per-run correctness labels are available.
LoadingReport factor_loading_report(const FitResult& fit_result,
                                    const RaggedTensor& tensor, int component,
                                    const TaskRecord* rec = nullptr);

// Report serialization. JSONL: one report object per line, fixed key order.
// CSV: "task_id,U,normalized_U". Both are timestamp-free and byte-stable.
void write_reports_jsonl(std::ostream& out,
                         const std::vector<UncertaintyReport>& reports);
void write_summary_csv(std::ostream& out,
                       const std::vector<UncertaintyReport>& reports);
std::string loading_report_json(const LoadingReport& r,
                                const std::string& task_id);

// Shortest round-trip decimal representation, locale-independent.
std::string format_double(double v);

// Quotes a CSV field only when it contains a delimiter, quote, or newline.
std::string csv_field(const std::string& s);

}  // namespace matu
