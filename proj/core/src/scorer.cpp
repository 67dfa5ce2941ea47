#include "matu/scorer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "matu/errors.hpp"
#include "json.hpp"

namespace matu {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::vector<FitResult> sweep_ranks(const RaggedTensor& t, int r_max,
                                   const FitConfig& base_cfg) {
  std::vector<FitResult> results;
  results.reserve(static_cast<std::size_t>(r_max));
  for (int r = 1; r <= r_max; ++r) {
    FitConfig cfg = base_cfg;
    cfg.rank = r;
    const Parafac2Factors* warm =
        results.empty() ? nullptr : &results.back().factors;
    results.push_back(fit(t, cfg, warm));
  }
  return results;
}

UncertaintyReport score_task(const std::string& task_id,
                             const RaggedTensor& tensor, int r_max,
                             const FitConfig& cfg, LossMode mode) {
  UncertaintyReport report;
  report.task_id = task_id;

  const int feasible =
      static_cast<int>(std::min<Eigen::Index>(tensor.d, tensor.max_rows()));
  int r_eff = std::min(r_max, feasible);
  if (r_eff < 1) r_eff = 1;
  if (r_eff != r_max) {
    report.diagnostics.push_back(
        {"RankClipped", "R_max " + std::to_string(r_max) + " clipped to " +
                            std::to_string(r_eff) +
                            " by the tensor's feasible range"});
  }
  report.R_max = r_eff;

  const std::vector<FitResult> fits = sweep_ranks(tensor, r_eff, cfg);
  std::size_t thin = 0;
  double u = 0.0;
  for (const FitResult& fr : fits) {
    RankLoss rl;
    rl.rank = fr.factors.rank();
    rl.loss_rel = fr.loss_rel;
    rl.loss_abs = fr.loss_abs;
    report.per_rank_losses.push_back(rl);
    u += mode == LossMode::relative ? fr.loss_rel : fr.loss_abs;
    for (const Diagnostic& d : fr.diagnostics)
      if (d.code == "ThinSlice") ++thin;
  }
  if (thin > 0) {
    report.diagnostics.push_back(
        {"ThinSlice", std::to_string(thin) +
                          " slice/rank combination(s) used partial-isometry "
                          "bases (slice shorter than rank)"});
  }
  report.U = u;
  return report;
}

std::vector<std::pair<std::string, double>> normalize_scores(
    const std::vector<std::pair<std::string, double>>& scores) {
  if (scores.empty()) return {};
  double lo = scores.front().second, hi = scores.front().second;
  for (const auto& [id, u] : scores) {
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  std::vector<std::pair<std::string, double>> out;
  out.reserve(scores.size());
  const double span = hi - lo;
  for (const auto& [id, u] : scores)
    out.emplace_back(id, span > 0 ? (u - lo) / span : 0.0);
  return out;
}

LoadingReport factor_loading_report(const FitResult& fit_result,
                                    const RaggedTensor& tensor, int component,
                                    const TaskRecord* rec) {
  const int r = fit_result.factors.rank();
  if (component < 0 || component >= r) {
    throw MissingComponent("component " + std::to_string(component) +
                           " not present in a rank-" + std::to_string(r) +
                           " factor set");
  }
  if (fit_result.factors.S.rows() !=
      static_cast<Eigen::Index>(tensor.slices.size()))
    throw ShapeMismatch("factor set does not match the tensor's slice count");

  LoadingReport report;
  report.component = component;

  std::map<int, std::pair<double, int>> run_acc;
  std::map<std::string, std::pair<double, int>> agent_acc;
  for (std::size_t i = 0; i < tensor.slices.size(); ++i) {
    const auto& s = tensor.slices[i];
    const double loading =
        std::abs(fit_result.factors.S(static_cast<Eigen::Index>(i), component));
    report.slice_loadings.push_back({{s.run_index, s.agent_id}, loading});
    auto& ra = run_acc[s.run_index];
    ra.first += loading;
    ra.second += 1;
    auto& aa = agent_acc[s.agent_id];
    aa.first += loading;
    aa.second += 1;
  }
  for (const auto& [run, acc] : run_acc)
    report.run_loadings[run] = acc.first / acc.second;
  for (const auto& [agent, acc] : agent_acc)
    report.agent_loadings[agent] = acc.first / acc.second;

  if (rec) {
    double sum_c = 0, sum_i = 0;
    int n_c = 0, n_i = 0;
    for (const RunTrajectory& run : rec->runs) {
      auto it = report.run_loadings.find(run.run_index);
      if (it == report.run_loadings.end() || !run.correct.has_value())
        continue;
      if (*run.correct) {
        sum_c += it->second;
        ++n_c;
      } else {
        sum_i += it->second;
        ++n_i;
      }
    }
    if (n_c > 0) report.mean_correct = sum_c / n_c;
    if (n_i > 0) report.mean_incorrect = sum_i / n_i;
    if (n_c > 0 && n_i > 0 && sum_c > 0)
      report.separation_ratio = (sum_i / n_i) / (sum_c / n_c);
  }
  return report;
}

namespace {

ordered_json report_to_json(const UncertaintyReport& r) {
  ordered_json j;
  j["task_id"] = r.task_id;
  j["R_max"] = r.R_max;
  j["U"] = r.U;
  if (r.normalized_U) j["normalized_U"] = *r.normalized_U;
  ordered_json losses = ordered_json::array();
  for (const RankLoss& rl : r.per_rank_losses) {
    ordered_json l;
    l["rank"] = rl.rank;
    l["loss_rel"] = rl.loss_rel;
    l["loss_abs"] = rl.loss_abs;
    losses.push_back(std::move(l));
  }
  j["per_rank_losses"] = std::move(losses);
  ordered_json diags = ordered_json::array();
  for (const Diagnostic& d : r.diagnostics) {
    ordered_json dj;
    dj["code"] = d.code;
    dj["detail"] = d.detail;
    diags.push_back(std::move(dj));
  }
  j["diagnostics"] = std::move(diags);
  return j;
}

}  // namespace

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

void write_reports_jsonl(std::ostream& out,
                         const std::vector<UncertaintyReport>& reports) {
  for (const UncertaintyReport& r : reports)
    out << report_to_json(r).dump() << '\n';
}

void write_summary_csv(std::ostream& out,
                       const std::vector<UncertaintyReport>& reports) {
  out << "task_id,U,normalized_U\n";
  for (const UncertaintyReport& r : reports) {
    out << csv_field(r.task_id) << ',' << format_double(r.U) << ',';
    if (r.normalized_U) out << format_double(*r.normalized_U);
    out << '\n';
  }
}

std::string loading_report_json(const LoadingReport& r,
                                const std::string& task_id) {
  ordered_json j;
  j["task_id"] = task_id;
  j["component"] = r.component;
  ordered_json slices = ordered_json::array();
  for (const auto& [key, loading] : r.slice_loadings) {
    ordered_json s;
    s["run"] = key.first;
    s["agent"] = key.second;
    s["loading"] = loading;
    slices.push_back(std::move(s));
  }
  j["slice_loadings"] = std::move(slices);
  ordered_json runs = ordered_json::array();
  for (const auto& [run, loading] : r.run_loadings) {
    ordered_json e;
    e["run"] = run;
    e["loading"] = loading;
    runs.push_back(std::move(e));
  }
  j["run_loadings"] = std::move(runs);
  ordered_json agents = ordered_json::array();
  for (const auto& [agent, loading] : r.agent_loadings) {
    ordered_json e;
    e["agent"] = agent;
    e["loading"] = loading;
    agents.push_back(std::move(e));
  }
  j["agent_loadings"] = std::move(agents);
  if (r.mean_correct) j["mean_correct"] = *r.mean_correct;
  if (r.mean_incorrect) j["mean_incorrect"] = *r.mean_incorrect;
  if (r.separation_ratio) j["separation_ratio"] = *r.separation_ratio;
  return j.dump();
}

}  // namespace matu
