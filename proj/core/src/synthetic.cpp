#include "matu/synthetic.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <fstream>

#include "matu/errors.hpp"
#include "matu/evaluation.hpp"
#include "matu/rng.hpp"

namespace matu {
namespace {

void validate_spec(const SyntheticSpec& spec) {
  const auto [lo, hi] = spec.step_range;
  if (spec.n_runs < 1 || spec.n_agents < 1 || spec.d < 1 || lo < 1 ||
      hi < lo || spec.true_rank < 1 || spec.noise_sigma < 0 ||
      spec.divergence < 0 || spec.divergence > 1) {
    throw InfeasibleSpec("invalid synthetic spec parameters");
  }
  if (spec.true_rank > std::min(spec.d, lo)) {
    throw InfeasibleSpec("true_rank " + std::to_string(spec.true_rank) +
                         " exceeds min(d, step_range.min) = " +
                         std::to_string(std::min(spec.d, lo)));
  }
}

Eigen::MatrixXd orthonormal_columns(Eigen::Index rows, Eigen::Index cols,
                                    SeededRng& rng) {
  const Eigen::MatrixXd g = rng.normal_matrix(rows, cols);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

}  // namespace

SyntheticTensor generate_synthetic_tensor(const SyntheticSpec& spec) {
  validate_spec(spec);
  const int R = spec.true_rank;
  const int n_slices = spec.n_runs * spec.n_agents;

  SeededRng structure(derive_seed(spec.seed, "structure"));
  SeededRng diverge(derive_seed(spec.seed, "divergence"));
  SeededRng noise(derive_seed(spec.seed, "noise"));

  SyntheticTensor out;
  // An orthonormal mixing matrix keeps the planted problem well conditioned;
  // a raw normal draw can be near-singular, which pushes alternating solvers
  // into degenerate plateaus where two components blow up and cancel.
  out.truth.H = orthonormal_columns(R, R, structure);
  out.truth.V = structure.normal_matrix(spec.d, R);

  // Consistent runs share one dominant latent component per task, with a
  // small per-agent wobble; divergent runs instead resample dense weight
  // vectors. The contrast in weight spread is what scoring should detect.
  const auto axis = static_cast<Eigen::Index>(structure.below(R));
  Eigen::MatrixXd base_weights(spec.n_agents, R);
  for (int k = 0; k < spec.n_agents; ++k) {
    const double scale = 1.0 + 0.25 * structure.normal();
    base_weights.row(k) = 0.15 * structure.normal_vector(R).transpose();
    base_weights(k, axis) += scale;
  }

  const int n_div = static_cast<int>(
      std::llround(spec.divergence * static_cast<double>(spec.n_runs)));
  for (int j = spec.n_runs - n_div; j < spec.n_runs; ++j)
    out.divergent_runs.push_back(j);

  out.truth.S.resize(n_slices, R);
  out.tensor.d = spec.d;
  const auto [lo, hi] = spec.step_range;
  for (int j = 0; j < spec.n_runs; ++j) {
    const bool divergent = j >= spec.n_runs - n_div;
    for (int k = 0; k < spec.n_agents; ++k) {
      const int idx = j * spec.n_agents + k;
      const auto rows =
          static_cast<Eigen::Index>(lo + structure.below(hi - lo + 1));
      out.truth.Q.push_back(orthonormal_columns(rows, R, structure));
      if (divergent)
        out.truth.S.row(idx) = diverge.normal_vector(R).transpose();
      else
        out.truth.S.row(idx) = base_weights.row(k);

      EmbeddingMatrix slice;
      slice.run_index = j;
      slice.agent_id = "agent" + std::to_string(k);
      slice.rows = slice_reconstruction(out.truth, static_cast<std::size_t>(idx));
      if (spec.noise_sigma > 0)
        slice.rows += spec.noise_sigma * noise.normal_matrix(rows, spec.d);
      out.tensor.slice_index[{j, slice.agent_id}] = out.tensor.slices.size();
      out.tensor.slices.push_back(std::move(slice));
    }
  }
  return out;
}

SyntheticDataset generate_synthetic_dataset(const SyntheticDatasetConfig& cfg) {
  if (cfg.n_tasks < 1 || cfg.incorrect_fraction < 0 ||
      cfg.incorrect_fraction > 1 || cfg.divergence_when_incorrect < 0 ||
      cfg.divergence_when_incorrect > 1) {
    throw InfeasibleSpec("invalid dataset configuration");
  }
  validate_spec(cfg.base);

  const int n_incorrect = static_cast<int>(std::llround(
      cfg.incorrect_fraction * static_cast<double>(cfg.n_tasks)));
  int width = 1;
  for (int v = cfg.n_tasks - 1; v >= 10; v /= 10) ++width;
  width = std::max(width, 3);

  SyntheticDataset ds;
  ds.cache = std::make_shared<EmbeddingCache>();
  for (int i = 0; i < cfg.n_tasks; ++i) {
    std::string num = std::to_string(i);
    num.insert(0, static_cast<std::size_t>(width) - num.size(), '0');
    const std::string task_id = "task" + num;

    const bool incorrect = i < n_incorrect;
    SyntheticSpec spec = cfg.base;
    spec.seed = derive_seed(cfg.base.seed, static_cast<std::uint64_t>(i));
    spec.divergence = incorrect ? cfg.divergence_when_incorrect : 0.0;
    SyntheticTensor gen = generate_synthetic_tensor(spec);
    SeededRng final_rng(derive_seed(spec.seed, "final"));

    TaskRecord rec;
    rec.task_id = task_id;
    rec.input_text = "synthetic probe " + num;
    rec.correct = !incorrect;
    rec.topology = "other";
    for (int j = 0; j < spec.n_runs; ++j) {
      const bool divergent_run =
          std::find(gen.divergent_runs.begin(), gen.divergent_runs.end(), j) !=
          gen.divergent_runs.end();
      RunTrajectory run;
      run.run_index = j;
      run.correct = !divergent_run;

      Eigen::VectorXd mean_weights = Eigen::VectorXd::Zero(spec.true_rank);
      for (int k = 0; k < spec.n_agents; ++k) {
        const std::size_t idx =
            static_cast<std::size_t>(j * spec.n_agents + k);
        const Eigen::MatrixXd& slice = gen.tensor.slices[idx].rows;
        mean_weights +=
            gen.truth.S.row(static_cast<Eigen::Index>(idx)).transpose();

        AgentTrace trace;
        trace.agent_id = "agent" + std::to_string(k);
        trace.role = "worker";
        for (Eigen::Index t = 0; t < slice.rows(); ++t) {
          StepRecord step;
          step.step_index = static_cast<int>(t);
          step.kind = StepKind::message;
          step.content = task_id + "/r" + std::to_string(j) + "/agent" +
                         std::to_string(k) + "/s" + std::to_string(t);
          std::vector<float> raw(static_cast<std::size_t>(spec.d));
          for (Eigen::Index c = 0; c < spec.d; ++c)
            raw[static_cast<std::size_t>(c)] = static_cast<float>(slice(t, c));
          ds.cache->put(cache_key(cfg.model_id, step.content), cfg.model_id,
                        std::move(raw));
          trace.steps.push_back(std::move(step));
        }
        run.traces.push_back(std::move(trace));
      }
      mean_weights /= spec.n_agents;

      // Final answers live near the run's consensus direction, so final-answer
      // cosine agreement degrades for divergent runs: that is the signal the
      // spectral baseline reads.
      const std::string final_text =
          task_id + "/r" + std::to_string(j) + "/final";
      Eigen::VectorXd final_vec =
          gen.truth.V * mean_weights + 0.05 * final_rng.normal_vector(spec.d);
      std::vector<float> raw(static_cast<std::size_t>(spec.d));
      for (Eigen::Index c = 0; c < spec.d; ++c)
        raw[static_cast<std::size_t>(c)] = static_cast<float>(final_vec(c));
      ds.cache->put(cache_key(cfg.model_id, final_text), cfg.model_id,
                    std::move(raw));
      run.final_answer = final_text;
      rec.runs.push_back(std::move(run));
    }
    ds.labels[task_id] = incorrect ? 0 : 1;
    ds.tasks.push_back(std::move(rec));
  }
  return ds;
}

void write_synthetic_dataset(const SyntheticDataset& ds,
                             const std::string& log_path,
                             const std::string& cache_path,
                             const std::string& labels_path) {
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError("IoError", "cannot write log file " + log_path);
  for (const TaskRecord& rec : ds.tasks)
    for (const std::string& line : serialize_task_record(rec))
      log << line << '\n';
  if (!log) throw DataError("IoError", "short write to log file " + log_path);

  ds.cache->save_file(cache_path);

  std::ofstream labels(labels_path, std::ios::trunc);
  if (!labels)
    throw DataError("IoError", "cannot write labels file " + labels_path);
  save_labels_csv(labels, ds.labels);
  if (!labels)
    throw DataError("IoError", "short write to labels file " + labels_path);
}

}  // namespace matu
