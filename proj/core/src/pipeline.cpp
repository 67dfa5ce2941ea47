#include "matu/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "matu/errors.hpp"
#include "json.hpp"

namespace matu {
namespace {

namespace fs = std::filesystem;

std::vector<TaskRecord> parse_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("IoError", "cannot open log file " + path);
  return parse_trajectory_log(in);
}

std::shared_ptr<EmbeddingCache> open_cache(const PipelineConfig& cfg) {
  auto cache = std::make_shared<EmbeddingCache>();
  if (!cfg.cache_path.empty() && fs::exists(cfg.cache_path))
    cache->load_file(cfg.cache_path);
  return cache;
}

// Unique texts the tensor/baseline paths will need, in first-use order.
std::vector<std::string> collect_texts(const std::vector<TaskRecord>& tasks,
                                       const std::set<StepKind>& filter) {
  std::vector<std::string> texts;
  std::set<std::string> seen;
  auto add = [&](const std::string& t) {
    if (seen.insert(t).second) texts.push_back(t);
  };
  for (const TaskRecord& rec : tasks) {
    for (const RunTrajectory& run : rec.runs) {
      for (const AgentTrace& trace : run.traces)
        for (const StepRecord& step : trace.steps)
          if (filter.count(step.kind)) add(step.content);
      if (run.final_answer) add(*run.final_answer);
    }
  }
  return texts;
}

std::string output_file(const PipelineConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return (fs::path(cfg.output_dir) / name).string();
}

void write_metrics(const PipelineConfig& cfg, const std::string& stage,
                   double wall_ms, std::size_t n_tasks) {
  if (!cfg.write_metrics) return;
  // Timing and timestamps live only in this sidecar, never in report bodies,
  // so reports stay byte-reproducible.
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["wall_ms"] = wall_ms;
  j["tasks"] = n_tasks;
  const auto now = std::chrono::system_clock::now();
  j["unix_time"] =
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch())
          .count();
  std::ofstream out(output_file(cfg, "metrics.json"), std::ios::trunc);
  out << j.dump(2) << '\n';
}

class Stopwatch {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ =
      std::chrono::steady_clock::now();
};

// Runs fn(i) for i in [0, n) on cfg.jobs threads. The first exception wins
// and is rethrown on the calling thread.
void parallel_for(int jobs, std::size_t n,
                  const std::function<void(std::size_t)>& fn) {
  const int workers =
      std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (first_error) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Embedding closure for tensor building: full vector from the gateway,
// then prefix truncation + L2 normalization at the effective dimension.
StepEmbeddingFn make_embedder(EmbeddingGateway& gateway, int d_target,
                              int* d_effective) {
  return [&gateway, d_target, d_effective](const std::string& text) {
    EmbeddingVector full = std::move(gateway.embed_texts({text}).front());
    const int native = static_cast<int>(full.values.size());
    const int d_eff = std::min(d_target, native);
    if (d_effective) *d_effective = d_eff;
    return reduce_and_normalize(full, d_eff);
  };
}

}  // namespace

IngestSummary run_ingest(const PipelineConfig& cfg) {
  const std::vector<TaskRecord> tasks = parse_log_file(cfg.log_path);
  IngestSummary summary;
  summary.n_tasks = tasks.size();
  for (const TaskRecord& rec : tasks) {
    summary.n_runs += rec.runs.size();
    for (const RunTrajectory& run : rec.runs)
      for (const AgentTrace& trace : run.traces)
        summary.n_steps += trace.steps.size();
    for (Diagnostic& d : validate_task_record(rec))
      summary.diagnostics.emplace_back(rec.task_id, std::move(d));
  }
  return summary;
}

EmbedSummary run_embed(const PipelineConfig& cfg) {
  const std::vector<TaskRecord> tasks = parse_log_file(cfg.log_path);
  auto cache = open_cache(cfg);
  const std::size_t before = cache->size();
  EmbeddingGateway gateway(cfg.embed, cache);

  const std::vector<std::string> texts =
      collect_texts(tasks, cfg.step_filter);
  gateway.embed_texts(texts);

  EmbedSummary summary;
  summary.n_texts = texts.size();
  summary.cache_size = cache->size();
  summary.n_fetched = cache->size() - before;
  if (cfg.cache_path.empty())
    throw DataError("InvalidConfig", "embed requires a cache path to write");
  cache->save_file(cfg.cache_path);
  return summary;
}

ScoreSummary run_score(const PipelineConfig& cfg) {
  Stopwatch watch;
  const std::vector<TaskRecord> tasks = parse_log_file(cfg.log_path);
  if (tasks.empty()) throw DataError("EmptyLog", "log has no tasks");
  auto cache = open_cache(cfg);
  EmbeddingGateway gateway(cfg.embed, cache);

  // Warm the cache in one batched pass so per-step lookups are hits.
  gateway.embed_texts(collect_texts(tasks, cfg.step_filter));

  std::vector<UncertaintyReport> reports(tasks.size());
  parallel_for(cfg.jobs, tasks.size(), [&](std::size_t i) {
    std::vector<Diagnostic> build_warnings;
    int d_eff = 0;
    const StepEmbeddingFn embed = make_embedder(gateway, cfg.d_target, &d_eff);
    const RaggedTensor tensor =
        build_ragged_tensor(tasks[i], embed, cfg.step_filter, &build_warnings);
    UncertaintyReport report = score_task(tasks[i].task_id, tensor, cfg.r_max,
                                          cfg.fit, cfg.loss_mode);
    if (d_eff < cfg.d_target)
      report.diagnostics.push_back(
          {"DimTargetClipped",
           "d_target " + std::to_string(cfg.d_target) + " clipped to native " +
               std::to_string(d_eff)});
    report.diagnostics.insert(report.diagnostics.end(),
                              build_warnings.begin(), build_warnings.end());
    reports[i] = std::move(report);
  });

  std::vector<std::pair<std::string, double>> scores;
  scores.reserve(reports.size());
  for (const auto& r : reports) scores.emplace_back(r.task_id, r.U);
  const auto normalized = normalize_scores(scores);
  for (std::size_t i = 0; i < reports.size(); ++i)
    reports[i].normalized_U = normalized[i].second;

  ScoreSummary summary;
  summary.n_tasks = reports.size();
  summary.reports_path = output_file(cfg, "reports.jsonl");
  summary.summary_path = output_file(cfg, "summary.csv");
  {
    std::ofstream out(summary.reports_path, std::ios::trunc);
    if (!out)
      throw DataError("IoError", "cannot write " + summary.reports_path);
    write_reports_jsonl(out, reports);
  }
  {
    std::ofstream out(summary.summary_path, std::ios::trunc);
    if (!out)
      throw DataError("IoError", "cannot write " + summary.summary_path);
    write_summary_csv(out, reports);
  }
  write_metrics(cfg, "score", watch.ms(), reports.size());
  return summary;
}

BaselineSummary run_baseline(const PipelineConfig& cfg,
                             const std::string& agreement_file) {
  BaselineSummary summary;
  summary.scores_path = output_file(cfg, "baseline.csv");

  if (!agreement_file.empty()) {
    std::ifstream in(agreement_file);
    if (!in)
      throw DataError("IoError",
                      "cannot open agreement file " + agreement_file);
    std::vector<Diagnostic> warnings;
    const AgreementMatrix agr = load_agreement_csv(in, &warnings);
    const double score = eigv_agreement_score(agr);
    std::ofstream out(summary.scores_path, std::ios::trunc);
    out << "task_id,U\n" << "external," << format_double(score) << '\n';
    summary.n_tasks = 1;
    for (Diagnostic& d : warnings)
      summary.diagnostics.emplace_back("external", std::move(d));
    return summary;
  }

  const std::vector<TaskRecord> tasks = parse_log_file(cfg.log_path);
  if (tasks.empty()) throw DataError("EmptyLog", "log has no tasks");
  auto cache = open_cache(cfg);
  EmbeddingGateway gateway(cfg.embed, cache);

  std::ofstream out(summary.scores_path, std::ios::trunc);
  if (!out) throw DataError("IoError", "cannot write " + summary.scores_path);
  out << "task_id,U\n";
  for (const TaskRecord& rec : tasks) {
    // One response text per run: the final answer when present, otherwise the
    // run's last retained step.
    std::vector<std::string> texts;
    for (const RunTrajectory& run : rec.runs) {
      if (run.final_answer) {
        texts.push_back(*run.final_answer);
        continue;
      }
      const std::string* last = nullptr;
      for (const AgentTrace& trace : run.traces)
        for (const StepRecord& step : trace.steps)
          if (cfg.step_filter.count(step.kind)) last = &step.content;
      if (last) {
        texts.push_back(*last);
        summary.diagnostics.emplace_back(
            rec.task_id,
            Diagnostic{"NoFinalAnswer",
                       "run " + std::to_string(run.run_index) +
                           " has no final answer; using its last step"});
      }
    }
    if (texts.size() < 2)
      throw DataError("InsufficientResponses",
                      "task " + rec.task_id +
                          " has fewer than 2 responses for the baseline");

    int d_eff = 0;
    const StepEmbeddingFn embed = make_embedder(gateway, cfg.d_target, &d_eff);
    std::vector<EmbeddingVector> unit;
    unit.reserve(texts.size());
    for (const std::string& t : texts) unit.push_back(embed(t));
    const double score = eigv_agreement_score(agreement_from_embeddings(unit));
    out << csv_field(rec.task_id) << ',' << format_double(score) << '\n';
    ++summary.n_tasks;
  }
  return summary;
}

EvalSummary run_eval(const PipelineConfig& cfg,
                     const std::vector<std::pair<std::string, std::string>>&
                         method_score_paths) {
  if (cfg.labels_path.empty())
    throw DataError("InvalidConfig", "eval requires a labels file");
  std::ifstream labels_in(cfg.labels_path);
  if (!labels_in)
    throw DataError("IoError", "cannot open labels file " + cfg.labels_path);
  const auto labels = load_labels_csv(labels_in);

  std::map<std::string, std::vector<std::pair<std::string, double>>> methods;
  for (const auto& [method, path] : method_score_paths) {
    std::ifstream in(path);
    if (!in) throw DataError("IoError", "cannot open scores file " + path);
    methods[method] = load_scores_csv(in);
  }

  EvalSummary summary;
  summary.reports = evaluate_dataset(methods, labels);
  summary.eval_path = output_file(cfg, "eval.csv");
  std::ofstream out(summary.eval_path, std::ios::trunc);
  if (!out) throw DataError("IoError", "cannot write " + summary.eval_path);
  write_eval_csv(out, summary.reports);
  return summary;
}

RouteSummary run_route(const PipelineConfig& cfg,
                       const std::string& candidates_path) {
  std::ifstream in(candidates_path);
  if (!in)
    throw DataError("IoError",
                    "cannot open candidates file " + candidates_path);

  // task_id → candidates in file order (declared backbone order)
  std::map<std::string, std::vector<BackboneCandidate>> by_task;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("task_id,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string task_id, backbone, u_str, c_str;
    if (!std::getline(ss, task_id, ',') || !std::getline(ss, backbone, ',') ||
        !std::getline(ss, u_str, ',') || !std::getline(ss, c_str))
      throw MalformedLine(line_no,
                          "routing row needs task_id,backbone,U,correct");
    BackboneCandidate cand;
    cand.backbone = backbone;
    try {
      cand.U = std::stod(u_str);
    } catch (const std::exception&) {
      throw MalformedLine(line_no, "U is not a number: " + u_str);
    }
    if (c_str != "0" && c_str != "1")
      throw MalformedLine(line_no, "correct must be 0 or 1, got " + c_str);
    cand.correct = c_str == "1" ? 1 : 0;
    by_task[task_id].push_back(std::move(cand));
  }

  std::vector<std::vector<BackboneCandidate>> per_task;
  per_task.reserve(by_task.size());
  for (auto& [task_id, cands] : by_task) per_task.push_back(std::move(cands));

  RouteSummary summary;
  summary.result = select_by_uncertainty(per_task);
  summary.out_path = output_file(cfg, "routing.csv");
  std::ofstream out(summary.out_path, std::ios::trunc);
  if (!out) throw DataError("IoError", "cannot write " + summary.out_path);
  out << "n_tasks,min_u_accuracy,random_expectation\n"
      << summary.result.n_tasks << ','
      << format_double(summary.result.accuracy) << ','
      << format_double(summary.result.random_expectation) << '\n';
  return summary;
}

SynthSummary run_synth(const PipelineConfig& cfg,
                       const SyntheticDatasetConfig& synth) {
  if (cfg.log_path.empty() || cfg.cache_path.empty() ||
      cfg.labels_path.empty())
    throw DataError("InvalidConfig",
                    "synth requires log, cache, and labels paths");
  SyntheticDatasetConfig effective = synth;
  effective.model_id = cfg.embed.model_id;
  const SyntheticDataset ds = generate_synthetic_dataset(effective);
  write_synthetic_dataset(ds, cfg.log_path, cfg.cache_path, cfg.labels_path);
  SynthSummary summary;
  summary.n_tasks = ds.tasks.size();
  summary.cache_entries = ds.cache->size();
  return summary;
}

InterpretSummary run_interpret(const PipelineConfig& cfg, int rank,
                               int component, const std::string& only_task) {
  const std::vector<TaskRecord> tasks = parse_log_file(cfg.log_path);
  auto cache = open_cache(cfg);
  EmbeddingGateway gateway(cfg.embed, cache);

  InterpretSummary summary;
  summary.path = output_file(cfg, "loadings.jsonl");
  std::ofstream out(summary.path, std::ios::trunc);
  if (!out) throw DataError("IoError", "cannot write " + summary.path);

  for (const TaskRecord& rec : tasks) {
    if (!only_task.empty() && rec.task_id != only_task) continue;
    int d_eff = 0;
    const StepEmbeddingFn embed = make_embedder(gateway, cfg.d_target, &d_eff);
    const RaggedTensor tensor =
        build_ragged_tensor(rec, embed, cfg.step_filter, nullptr);
    FitConfig fit_cfg = cfg.fit;
    fit_cfg.rank = std::min<int>(
        rank, static_cast<int>(std::min<Eigen::Index>(tensor.d,
                                                      tensor.max_rows())));
    const FitResult fr = fit(tensor, fit_cfg);
    const int r_lo = component >= 0 ? component : 0;
    const int r_hi = component >= 0 ? component + 1 : fr.factors.rank();
    for (int r = r_lo; r < r_hi; ++r) {
      const LoadingReport report =
          factor_loading_report(fr, tensor, r, &rec);
      out << loading_report_json(report, rec.task_id) << '\n';
      ++summary.n_reports;
    }
  }
  if (summary.n_reports == 0)
    throw DataError("NoOverlap", only_task.empty()
                                     ? "no tasks to interpret"
                                     : "task " + only_task + " not in log");
  return summary;
}

}  // namespace matu
