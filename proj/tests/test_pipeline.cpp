#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "matu/errors.hpp"
#include "matu/pipeline.hpp"
#include "test_helpers.hpp"

using namespace matu;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (const char c : text)
    if (c == '\n') ++n;
  return n;
}

struct DemoWorkspace {
  testutil::TempDir dir;
  PipelineConfig cfg;
  SyntheticDatasetConfig synth;

  explicit DemoWorkspace(const std::string& tag) : dir(tag) {
    cfg.log_path = dir.file("log.jsonl");
    cfg.cache_path = dir.file("cache.bin");
    cfg.labels_path = dir.file("labels.csv");
    cfg.output_dir = dir.file("out");
    cfg.fit.max_iters = 60;
    cfg.fit.restarts = 2;
    cfg.fit.rel_tol = 1e-6;
    cfg.fit.seed = 7;
    cfg.r_max = 4;

    synth.n_tasks = 8;
    synth.incorrect_fraction = 0.5;
    synth.divergence_when_incorrect = 0.8;
    synth.base.n_runs = 5;
    synth.base.n_agents = 2;
    synth.base.step_range = {3, 6};
    synth.base.d = 12;
    synth.base.true_rank = 2;
    synth.base.seed = 909;
  }

  SynthSummary write_dataset() { return run_synth(cfg, synth); }
};

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("synth materializes the three dataset files") {
  DemoWorkspace ws("synth");
  const SynthSummary s = ws.write_dataset();
  CHECK(s.n_tasks == 8);
  CHECK(s.cache_entries > 0);
  CHECK(std::filesystem::exists(ws.cfg.log_path));
  CHECK(std::filesystem::exists(ws.cfg.cache_path));
  CHECK(std::filesystem::exists(ws.cfg.labels_path));
}

TEST_CASE("ingest counts tasks, runs, and steps") {
  DemoWorkspace ws("ingest");
  ws.write_dataset();
  const IngestSummary s = run_ingest(ws.cfg);
  CHECK(s.n_tasks == 8);
  CHECK(s.n_runs == 8 * 5);
  CHECK(s.n_steps >= 8 * 5 * 2 * 3);
  CHECK(s.n_steps <= 8 * 5 * 2 * 6);
  CHECK(s.diagnostics.empty());
}

TEST_CASE("ingest surfaces structural problems per task") {
  testutil::TempDir dir("ingestbad");
  const std::string log = dir.file("log.jsonl");
  {
    std::ofstream out(log);
    out << R"({"task_id":"solo","input_text":"x","run_index":0,"traces":)"
        << R"([{"agent_id":"a","role":"r","steps":)"
        << R"([{"step_index":0,"kind":"message","content":"hello"}]}]})"
        << '\n';
  }
  PipelineConfig cfg;
  cfg.log_path = log;
  const IngestSummary s = run_ingest(cfg);
  CHECK(s.n_tasks == 1);
  bool insufficient = false;
  for (const auto& [task, diag] : s.diagnostics)
    if (task == "solo" && diag.code == "InsufficientRuns") insufficient = true;
  CHECK(insufficient);
}

TEST_CASE("offline embedding succeeds when the cache covers everything") {
  DemoWorkspace ws("embed");
  ws.write_dataset();
  const EmbedSummary s = run_embed(ws.cfg);
  CHECK(s.n_texts > 0);
  CHECK(s.n_fetched == 0);  // synth pre-seeded every vector
  CHECK(s.cache_size >= s.n_texts);
}

TEST_CASE("offline scoring with a missing cache names the problem") {
  DemoWorkspace ws("nocache");
  ws.write_dataset();
  ws.cfg.cache_path = ws.dir.file("absent.bin");
  CHECK_THROWS_AS(run_score(ws.cfg), ServiceUnavailable);
}

TEST_CASE("scoring writes reproducible reports and a normalized summary") {
  DemoWorkspace ws("score");
  ws.write_dataset();
  const ScoreSummary first = run_score(ws.cfg);
  CHECK(first.n_tasks == 8);
  const std::string reports_a = slurp(first.reports_path);
  const std::string summary_a = slurp(first.summary_path);
  CHECK(count_lines(reports_a) == 8);
  CHECK(count_lines(summary_a) == 9);  // header + one row per task

  // no wall-clock contamination in the report bodies
  CHECK(reports_a.find("time") == std::string::npos);
  CHECK(reports_a.find("wall") == std::string::npos);

  // normalization spans [0, 1] over the dataset
  CHECK(summary_a.find(",0\n") != std::string::npos);
  CHECK(summary_a.find(",1\n") != std::string::npos);

  // the metrics sidecar is the only place timing lives
  const std::string metrics = slurp(ws.dir.file("out/metrics.json"));
  CHECK(metrics.find("\"stage\": \"score\"") != std::string::npos);
  CHECK(metrics.find("wall_ms") != std::string::npos);

  ws.cfg.output_dir = ws.dir.file("out2");
  const ScoreSummary second = run_score(ws.cfg);
  CHECK(slurp(second.reports_path) == reports_a);
  CHECK(slurp(second.summary_path) == summary_a);
}

TEST_CASE("parallel scoring produces the same bytes as sequential") {
  DemoWorkspace ws("jobs");
  ws.write_dataset();
  const ScoreSummary seq = run_score(ws.cfg);
  const std::string reports_seq = slurp(seq.reports_path);
  ws.cfg.jobs = 3;
  ws.cfg.output_dir = ws.dir.file("out_par");
  const ScoreSummary par = run_score(ws.cfg);
  CHECK(slurp(par.reports_path) == reports_seq);
}

TEST_CASE("the agreement baseline scores every task from final answers") {
  DemoWorkspace ws("baseline");
  ws.write_dataset();
  const BaselineSummary s = run_baseline(ws.cfg);
  CHECK(s.n_tasks == 8);
  const std::string text = slurp(s.scores_path);
  CHECK(text.rfind("task_id,U\n", 0) == 0);
  CHECK(count_lines(text) == 9);

  std::istringstream in(text);
  const auto scores = load_scores_csv(in);
  REQUIRE(scores.size() == 8);
  for (const auto& [task, u] : scores) {
    CHECK(u >= 1.0 - 1e-9);
    CHECK(u <= 5.0 + 1e-9);  // bounded by the run count
  }
}

TEST_CASE("an external agreement matrix is scored as one row") {
  DemoWorkspace ws("external");
  const std::string agr = ws.dir.file("agreement.csv");
  {
    std::ofstream out(agr);
    out << "# agreement m=3\n1,1,0.5\n1,1,0.5\n0.5,0.5,1\n";
  }
  const BaselineSummary s = run_baseline(ws.cfg, agr);
  CHECK(s.n_tasks == 1);
  const std::string text = slurp(s.scores_path);
  CHECK(text.rfind("task_id,U\nexternal,", 0) == 0);
}

TEST_CASE("evaluation joins methods against the labels file") {
  DemoWorkspace ws("eval");
  ws.write_dataset();
  const ScoreSummary score = run_score(ws.cfg);
  const BaselineSummary base = run_baseline(ws.cfg);
  const EvalSummary s = run_eval(
      ws.cfg, {{"matu", score.summary_path}, {"eigv", base.scores_path}});
  REQUIRE(s.reports.size() == 2);
  CHECK(s.reports[0].method_id == "eigv");
  CHECK(s.reports[1].method_id == "matu");
  for (const EvalReport& r : s.reports) {
    CHECK(r.n == 8);
    CHECK(r.auroc >= 0.0);
    CHECK(r.auroc <= 1.0);
  }
  // divergence-driven structure is easy to rank on this demo set
  CHECK(s.reports[1].auroc >= 0.75);
  const std::string text = slurp(s.eval_path);
  CHECK(text.rfind("method,n,auroc,auarc\n", 0) == 0);
  CHECK(count_lines(text) == 3);
}

TEST_CASE("routing reads candidates and reports the selection quality") {
  DemoWorkspace ws("route");
  const std::string candidates = ws.dir.file("candidates.csv");
  {
    std::ofstream out(candidates);
    out << "task_id,backbone,U,correct\n"
        << "t1,b1,0.5,0\n"
        << "t1,b2,0.1,1\n"
        << "t2,b1,0.2,1\n"
        << "t2,b2,0.9,0\n"
        << "t3,b1,0.4,0\n"  // tie: first listed wins
        << "t3,b2,0.4,1\n";
  }
  const RouteSummary s = run_route(ws.cfg, candidates);
  CHECK(s.result.n_tasks == 3);
  CHECK(s.result.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(s.result.random_expectation == doctest::Approx(0.5));
  const std::string text = slurp(s.out_path);
  CHECK(text.rfind("n_tasks,min_u_accuracy,random_expectation\n", 0) == 0);
  CHECK(text.find("\n3,") != std::string::npos);
}

TEST_CASE("malformed routing rows are rejected") {
  DemoWorkspace ws("routebad");
  const std::string candidates = ws.dir.file("candidates.csv");
  {
    std::ofstream out(candidates);
    out << "task_id,backbone,U,correct\nt1,b1,notanumber,1\n";
  }
  CHECK_THROWS_AS(run_route(ws.cfg, candidates), MalformedLine);
  {
    std::ofstream out(candidates, std::ios::trunc);
    out << "t1,b1,0.5,2\n";
  }
  CHECK_THROWS_AS(run_route(ws.cfg, candidates), MalformedLine);
}

TEST_CASE("interpretation writes one loading report per component") {
  DemoWorkspace ws("interpret");
  ws.write_dataset();
  const InterpretSummary all = run_interpret(ws.cfg, 2);
  CHECK(all.n_reports == 8 * 2);
  const std::string text = slurp(all.path);
  CHECK(count_lines(text) == 16);
  CHECK(text.find("\"component\":0") != std::string::npos);
  CHECK(text.find("\"component\":1") != std::string::npos);
  CHECK(text.find("separation_ratio") != std::string::npos);

  const InterpretSummary one =
      run_interpret(ws.cfg, 2, 1, "task000");
  CHECK(one.n_reports == 1);
  const std::string single = slurp(one.path);
  CHECK(count_lines(single) == 1);
  CHECK(single.find("\"task_id\":\"task000\"") != std::string::npos);

  CHECK_THROWS_AS(run_interpret(ws.cfg, 2, -1, "missing-task"), DataError);
}

}  // TEST_SUITE
