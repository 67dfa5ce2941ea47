#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "matu/baselines.hpp"
#include "matu/embedding.hpp"
#include "matu/evaluation.hpp"
#include "matu/parafac2.hpp"
#include "matu/scorer.hpp"
#include "matu/synthetic.hpp"
#include "matu/tensor.hpp"
#include "matu/trajectory.hpp"

namespace matu {

struct PipelineConfig {
  std::string log_path;
  std::string cache_path;
  std::string labels_path;
  std::string output_dir = ".";
  EmbedServiceConfig embed;
  int d_target = 256;  // clipped to the cached vectors' native dimension
  FitConfig fit;
  int r_max = 8;
  std::set<StepKind> step_filter = default_step_filter();
  LossMode loss_mode = LossMode::relative;
  int jobs = 1;
  bool write_metrics = true;
};

struct IngestSummary {
  std::size_t n_tasks = 0;
  std::size_t n_runs = 0;
  std::size_t n_steps = 0;
  // (task_id, diagnostic) pairs from validate_task_record
  std::vector<std::pair<std::string, Diagnostic>> diagnostics;
};

struct EmbedSummary {
  std::size_t n_texts = 0;   // unique texts needing vectors
  std::size_t n_fetched = 0;  // texts not already cached
  std::size_t cache_size = 0;
};

struct ScoreSummary {
  std::size_t n_tasks = 0;
  std::string reports_path;
  std::string summary_path;
};

struct BaselineSummary {
  std::size_t n_tasks = 0;
  std::string scores_path;
  std::vector<std::pair<std::string, Diagnostic>> diagnostics;
};

struct EvalSummary {
  std::vector<EvalReport> reports;
  std::string eval_path;
};

struct RouteSummary {
  RoutingResult result;
  std::string out_path;
};

struct InterpretSummary {
  std::size_t n_reports = 0;
  std::string path;
};

// Parse + validate the trajectory log.
IngestSummary run_ingest(const PipelineConfig& cfg);

// Fill the embedding cache for every retained step text and final answer.
EmbedSummary run_embed(const PipelineConfig& cfg);

// Full scoring pass: tensors, rank sweeps, dataset-level normalization,
// reports.jsonl + summary.csv in output_dir. Deterministic given the seed;
// wall-clock timing goes only to the metrics sidecar.
ScoreSummary run_score(const PipelineConfig& cfg);

// Spectral agreement scores (clipped-cosine proxy over per-run final
// answers) to baseline.csv. When agreement_file is set, scores that single
// externally supplied matrix instead and writes one row ("external").
BaselineSummary run_baseline(const PipelineConfig& cfg,
                             const std::string& agreement_file = "");

// Joins per-method score CSVs with the labels file into eval.csv.
EvalSummary run_eval(const PipelineConfig& cfg,
                     const std::vector<std::pair<std::string, std::string>>&
                         method_score_paths);

// Routing CSV "task_id,backbone,U,correct": per task pick the min-U
// backbone (first-listed wins ties) and compare against random selection.
RouteSummary run_route(const PipelineConfig& cfg,
                       const std::string& candidates_path);

// Demo dataset writer (log + cache + labels under the configured paths).
struct SynthSummary {
  std::size_t n_tasks = 0;
  std::size_t cache_entries = 0;
};
SynthSummary run_synth(const PipelineConfig& cfg,
                       const SyntheticDatasetConfig& synth);

// Per-component factor-loading reports at the given rank, to loadings.jsonl.
// component < 0 means every component of the fit.
InterpretSummary run_interpret(const PipelineConfig& cfg, int rank,
                               int component = -1,
                               const std::string& only_task = "");

}  // namespace matu
