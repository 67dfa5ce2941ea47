// matu: uncertainty scoring for repeated multi-agent LLM runs.
//
// Subcommands cover the full pipeline: ingest (validate logs), embed (fill
// the vector cache), score (per-task uncertainty reports), baseline
// (spectral agreement scores), eval (AUROC/AUARC tables), route
// (min-uncertainty backbone selection), synth (seeded demo dataset), and
// interpret (factor-loading reports).
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
// Library errors print one JSON object per line on stderr:
//   {"error": "<kind>", "detail": "<message>"}

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "matu/errors.hpp"
#include "matu/pipeline.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

void print_error(const std::string& kind, const std::string& detail) {
  ordered_json line;
  line["error"] = kind;
  line["detail"] = detail;
  std::cerr << line.dump() << '\n';
}

int exit_code_for(const matu::Error& e) {
  return e.category() == matu::Error::Category::numerical ? 3 : 2;
}

ordered_json diagnostics_json(
    const std::vector<std::pair<std::string, matu::Diagnostic>>& diags) {
  ordered_json arr = ordered_json::array();
  for (const auto& [task_id, diag] : diags) {
    ordered_json d;
    d["task_id"] = task_id;
    d["code"] = diag.code;
    d["detail"] = diag.detail;
    arr.push_back(std::move(d));
  }
  return arr;
}

// Options shared by every subcommand that reads or fills the vector cache.
struct EmbedCliOptions {
  std::string config_path;
  CLI::Option* url = nullptr;
  CLI::Option* model = nullptr;
  CLI::Option* batch = nullptr;
  CLI::Option* d_target = nullptr;

  void add_to(CLI::App& sub, matu::PipelineConfig& cfg, bool with_d_target) {
    sub.add_option("--config", config_path,
                   "Key=value config file (embed.url, embed.model, "
                   "embed.batch_size, embed.d_target); flags win");
    url = sub.add_option("--embed-url", cfg.embed.url,
                         "Embedding service URL (empty = offline, cache only)");
    model = sub.add_option("--embed-model", cfg.embed.model_id,
                           "Embedding model identifier");
    batch = sub.add_option("--embed-batch-size", cfg.embed.batch_size,
                           "Texts per service request")
                ->check(CLI::PositiveNumber);
    sub.add_option("--embed-attempts", cfg.embed.max_attempts,
                   "Service attempts before giving up")
        ->check(CLI::PositiveNumber);
    sub.add_option("--embed-backoff-ms", cfg.embed.backoff_initial_ms,
                   "Initial retry backoff, doubles per attempt")
        ->check(CLI::NonNegativeNumber);
    if (with_d_target)
      d_target = sub.add_option("--d-target", cfg.d_target,
                                "Kept embedding dimensions before scoring")
                     ->check(CLI::PositiveNumber);
  }

  // Applies config-file values for options the user did not pass on the
  // command line.
  void apply_config(matu::PipelineConfig& cfg) const {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in)
      throw CLI::ValidationError("--config",
                                 "cannot open config file " + config_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto strip = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      if (strip(line).empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw CLI::ValidationError(
            "--config", config_path + ":" + std::to_string(line_no) +
                            ": expected key = value");
      const std::string key = strip(line.substr(0, eq));
      const std::string value = strip(line.substr(eq + 1));
      const auto parse_int = [&](const std::string& v) {
        try {
          std::size_t used = 0;
          const int n = std::stoi(v, &used);
          if (used != v.size() || n <= 0) throw std::invalid_argument(v);
          return n;
        } catch (const std::exception&) {
          throw CLI::ValidationError(
              "--config", config_path + ":" + std::to_string(line_no) + ": " +
                              key + " needs a positive integer, got \"" + v +
                              "\"");
        }
      };
      if (key == "embed.url") {
        if (!url || url->count() == 0) cfg.embed.url = value;
      } else if (key == "embed.model") {
        if (!model || model->count() == 0) cfg.embed.model_id = value;
      } else if (key == "embed.batch_size") {
        if (!batch || batch->count() == 0) cfg.embed.batch_size = parse_int(value);
      } else if (key == "embed.d_target") {
        if (!d_target || d_target->count() == 0) cfg.d_target = parse_int(value);
      } else {
        throw CLI::ValidationError(
            "--config", config_path + ":" + std::to_string(line_no) +
                            ": unknown key \"" + key + "\"");
      }
    }
  }
};

// Solver options shared by score and interpret.
void add_fit_options(CLI::App& sub, matu::PipelineConfig& cfg,
                     std::string& init_name) {
  sub.add_option("--max-iters", cfg.fit.max_iters,
                 "Iteration cap per solver start")
      ->check(CLI::PositiveNumber);
  sub.add_option("--restarts", cfg.fit.restarts, "Solver starts per rank")
      ->check(CLI::PositiveNumber);
  sub.add_option("--tol", cfg.fit.rel_tol,
                 "Relative loss-change convergence threshold")
      ->check(CLI::NonNegativeNumber);
  sub.add_option("--init", init_name, "First-start initialization")
      ->check(CLI::IsMember({"svd", "random"}));
}

void add_step_filter_option(CLI::App& sub, std::vector<std::string>& names) {
  sub.add_option("--steps", names,
                 "Step kinds kept in slices (message, tool_call, "
                 "tool_result, final_answer)")
      ->delimiter(',');
}

void apply_step_filter(const std::vector<std::string>& names,
                       matu::PipelineConfig& cfg) {
  if (names.empty()) return;
  std::set<matu::StepKind> filter;
  for (const std::string& name : names) {
    const auto kind = matu::step_kind_from_string(name);
    if (!kind)
      throw CLI::ValidationError("--steps", "unknown step kind \"" + name +
                                                "\"");
    filter.insert(*kind);
  }
  cfg.step_filter = std::move(filter);
}

matu::InitKind parse_init(const std::string& name) {
  return name == "random" ? matu::InitKind::random : matu::InitKind::svd;
}

matu::LossMode parse_loss(const std::string& name) {
  return name == "absolute" ? matu::LossMode::absolute
                            : matu::LossMode::relative;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty scoring for repeated multi-agent LLM runs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "matu 0.1.0");

  // ingest ------------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "Parse and validate a JSONL "
                                              "trajectory log");
  matu::PipelineConfig ingest_cfg;
  ingest->add_option("--log", ingest_cfg.log_path, "Trajectory log (JSONL)")
      ->required();
  ingest->callback([&] {
    const matu::IngestSummary s = matu::run_ingest(ingest_cfg);
    ordered_json out;
    out["tasks"] = s.n_tasks;
    out["runs"] = s.n_runs;
    out["steps"] = s.n_steps;
    out["diagnostics"] = diagnostics_json(s.diagnostics);
    std::cout << out.dump() << '\n';
  });

  // embed -------------------------------------------------------------------
  auto* embed = app.add_subcommand("embed", "Fetch vectors for every retained "
                                            "step text into the cache");
  matu::PipelineConfig embed_cfg;
  EmbedCliOptions embed_opts;
  embed->add_option("--log", embed_cfg.log_path, "Trajectory log (JSONL)")
      ->required();
  embed->add_option("--cache", embed_cfg.cache_path,
                    "Binary vector cache (created if absent)")
      ->required();
  embed_opts.add_to(*embed, embed_cfg, /*with_d_target=*/false);
  embed->callback([&] {
    embed_opts.apply_config(embed_cfg);
    const matu::EmbedSummary s = matu::run_embed(embed_cfg);
    ordered_json out;
    out["texts"] = s.n_texts;
    out["fetched"] = s.n_fetched;
    out["cache_size"] = s.cache_size;
    std::cout << out.dump() << '\n';
  });

  // score -------------------------------------------------------------------
  auto* score = app.add_subcommand("score", "Write per-task uncertainty "
                                            "reports and a CSV summary");
  matu::PipelineConfig score_cfg;
  EmbedCliOptions score_opts;
  std::string score_init = "svd";
  std::string score_loss = "relative";
  std::vector<std::string> score_steps;
  score->add_option("--log", score_cfg.log_path, "Trajectory log (JSONL)")
      ->required();
  score->add_option("--cache", score_cfg.cache_path, "Binary vector cache")
      ->required();
  score->add_option("--out", score_cfg.output_dir, "Output directory");
  score->add_option("--seed", score_cfg.fit.seed, "Root RNG seed")->required();
  score->add_option("--rmax", score_cfg.r_max, "Highest rank in the sweep")
      ->check(CLI::PositiveNumber);
  score->add_option("--loss", score_loss, "Per-rank loss summed into U")
      ->check(CLI::IsMember({"relative", "absolute"}));
  score->add_option("--jobs", score_cfg.jobs, "Concurrent task workers")
      ->check(CLI::PositiveNumber);
  score->add_flag("--metrics,!--no-metrics", score_cfg.write_metrics,
                  "Write the timing sidecar (metrics.json)");
  add_fit_options(*score, score_cfg, score_init);
  add_step_filter_option(*score, score_steps);
  score_opts.add_to(*score, score_cfg, /*with_d_target=*/true);
  score->callback([&] {
    score_opts.apply_config(score_cfg);
    apply_step_filter(score_steps, score_cfg);
    score_cfg.fit.init = parse_init(score_init);
    score_cfg.loss_mode = parse_loss(score_loss);
    const matu::ScoreSummary s = matu::run_score(score_cfg);
    ordered_json out;
    out["tasks"] = s.n_tasks;
    out["reports"] = s.reports_path;
    out["summary"] = s.summary_path;
    std::cout << out.dump() << '\n';
  });

  // baseline ----------------------------------------------------------------
  auto* baseline = app.add_subcommand(
      "baseline", "Spectral agreement scores from final answers or an "
                  "external agreement matrix");
  matu::PipelineConfig baseline_cfg;
  EmbedCliOptions baseline_opts;
  std::vector<std::string> baseline_steps;
  std::string agreement_file;
  baseline->add_option("--log", baseline_cfg.log_path,
                       "Trajectory log (JSONL)");
  baseline->add_option("--cache", baseline_cfg.cache_path,
                       "Binary vector cache");
  baseline->add_option("--agreement", agreement_file,
                       "External agreement matrix CSV (skips embeddings)");
  baseline->add_option("--out", baseline_cfg.output_dir, "Output directory");
  add_step_filter_option(*baseline, baseline_steps);
  baseline_opts.add_to(*baseline, baseline_cfg, /*with_d_target=*/true);
  baseline->callback([&] {
    baseline_opts.apply_config(baseline_cfg);
    apply_step_filter(baseline_steps, baseline_cfg);
    if (agreement_file.empty() && baseline_cfg.log_path.empty())
      throw CLI::ValidationError("--log",
                                 "required unless --agreement is given");
    const matu::BaselineSummary s =
        matu::run_baseline(baseline_cfg, agreement_file);
    ordered_json out;
    out["tasks"] = s.n_tasks;
    out["scores"] = s.scores_path;
    out["diagnostics"] = diagnostics_json(s.diagnostics);
    std::cout << out.dump() << '\n';
  });

  // eval --------------------------------------------------------------------
  auto* eval = app.add_subcommand(
      "eval", "AUROC/AUARC per method from score CSVs and task labels");
  matu::PipelineConfig eval_cfg;
  std::vector<std::string> method_specs;
  eval->add_option("--labels", eval_cfg.labels_path,
                   "Labels CSV (task_id,correct)")
      ->required();
  eval->add_option("--scores", method_specs,
                   "method=path pairs of score CSVs (task_id,U,...)")
      ->required()
      ->expected(-1);
  eval->add_option("--out", eval_cfg.output_dir, "Output directory");
  eval->callback([&] {
    std::vector<std::pair<std::string, std::string>> methods;
    for (const std::string& spec : method_specs) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
        throw CLI::ValidationError("--scores",
                                   "expected method=path, got \"" + spec +
                                       "\"");
      methods.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
    }
    const matu::EvalSummary s = matu::run_eval(eval_cfg, methods);
    ordered_json out;
    ordered_json rows = ordered_json::array();
    for (const matu::EvalReport& r : s.reports) {
      ordered_json row;
      row["method"] = r.method_id;
      row["n"] = r.n;
      row["auroc"] = r.auroc;
      row["auarc"] = r.auarc;
      rows.push_back(std::move(row));
    }
    out["methods"] = std::move(rows);
    out["eval"] = s.eval_path;
    std::cout << out.dump() << '\n';
  });

  // route -------------------------------------------------------------------
  auto* route = app.add_subcommand(
      "route", "Pick the min-uncertainty backbone per task and compare "
               "against random selection");
  matu::PipelineConfig route_cfg;
  std::string candidates_path;
  route->add_option("--candidates", candidates_path,
                    "Candidates CSV (task_id,backbone,U,correct)")
      ->required();
  route->add_option("--out", route_cfg.output_dir, "Output directory");
  route->callback([&] {
    const matu::RouteSummary s = matu::run_route(route_cfg, candidates_path);
    ordered_json out;
    out["tasks"] = s.result.n_tasks;
    out["min_u_accuracy"] = s.result.accuracy;
    out["random_expectation"] = s.result.random_expectation;
    out["routing"] = s.out_path;
    std::cout << out.dump() << '\n';
  });

  // synth -------------------------------------------------------------------
  auto* synth = app.add_subcommand(
      "synth", "Write a seeded synthetic demo dataset (log, cache, labels)");
  matu::PipelineConfig synth_cfg;
  matu::SyntheticDatasetConfig synth_ds;
  synth->add_option("--log", synth_cfg.log_path, "Output trajectory log")
      ->required();
  synth->add_option("--cache", synth_cfg.cache_path, "Output vector cache")
      ->required();
  synth->add_option("--labels", synth_cfg.labels_path, "Output labels CSV")
      ->required();
  synth->add_option("--seed", synth_ds.base.seed, "Root RNG seed")->required();
  synth->add_option("--tasks", synth_ds.n_tasks, "Number of tasks")
      ->check(CLI::PositiveNumber);
  synth->add_option("--incorrect-fraction", synth_ds.incorrect_fraction,
                    "Fraction of tasks labeled incorrect")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--divergence", synth_ds.divergence_when_incorrect,
                    "Run-divergence fraction applied to incorrect tasks")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--runs", synth_ds.base.n_runs, "Runs per task")
      ->check(CLI::PositiveNumber);
  synth->add_option("--agents", synth_ds.base.n_agents, "Agents per run")
      ->check(CLI::PositiveNumber);
  synth->add_option("--steps-min", synth_ds.base.step_range.first,
                    "Fewest steps per slice")
      ->check(CLI::PositiveNumber);
  synth->add_option("--steps-max", synth_ds.base.step_range.second,
                    "Most steps per slice")
      ->check(CLI::PositiveNumber);
  synth->add_option("--dim", synth_ds.base.d, "Embedding dimension")
      ->check(CLI::PositiveNumber);
  synth->add_option("--true-rank", synth_ds.base.true_rank,
                    "Latent components per task")
      ->check(CLI::PositiveNumber);
  synth->add_option("--noise", synth_ds.base.noise_sigma,
                    "Gaussian noise scale added to every slice")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--model", synth_cfg.embed.model_id,
                    "Model id recorded in the cache");
  synth->callback([&] {
    const matu::SynthSummary s = matu::run_synth(synth_cfg, synth_ds);
    ordered_json out;
    out["tasks"] = s.n_tasks;
    out["cache_entries"] = s.cache_entries;
    out["log"] = synth_cfg.log_path;
    out["cache"] = synth_cfg.cache_path;
    out["labels"] = synth_cfg.labels_path;
    std::cout << out.dump() << '\n';
  });

  // interpret ---------------------------------------------------------------
  auto* interpret = app.add_subcommand(
      "interpret", "Factor-loading reports localizing high-loading runs and "
                   "agents");
  matu::PipelineConfig interpret_cfg;
  EmbedCliOptions interpret_opts;
  std::string interpret_init = "svd";
  std::vector<std::string> interpret_steps;
  int interpret_rank = 0;
  int interpret_component = -1;
  std::string interpret_task;
  interpret->add_option("--log", interpret_cfg.log_path,
                        "Trajectory log (JSONL)")
      ->required();
  interpret->add_option("--cache", interpret_cfg.cache_path,
                        "Binary vector cache")
      ->required();
  interpret->add_option("--out", interpret_cfg.output_dir, "Output directory");
  interpret->add_option("--rank", interpret_rank, "Fit rank")
      ->required()
      ->check(CLI::PositiveNumber);
  interpret->add_option("--component", interpret_component,
                        "Component index to report (default: all)");
  interpret->add_option("--task", interpret_task,
                        "Restrict the report to one task id");
  interpret->add_option("--seed", interpret_cfg.fit.seed, "Root RNG seed");
  add_fit_options(*interpret, interpret_cfg, interpret_init);
  add_step_filter_option(*interpret, interpret_steps);
  interpret_opts.add_to(*interpret, interpret_cfg, /*with_d_target=*/true);
  interpret->callback([&] {
    interpret_opts.apply_config(interpret_cfg);
    apply_step_filter(interpret_steps, interpret_cfg);
    interpret_cfg.fit.init = parse_init(interpret_init);
    const matu::InterpretSummary s = matu::run_interpret(
        interpret_cfg, interpret_rank, interpret_component, interpret_task);
    ordered_json out;
    out["reports"] = s.n_reports;
    out["loadings"] = s.path;
    std::cout << out.dump() << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const matu::Error& e) {
    print_error(e.kind(), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return 3;
  }
  return 0;
}
