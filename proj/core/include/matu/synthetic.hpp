#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "matu/embedding.hpp"
#include "matu/parafac2.hpp"
#include "matu/tensor.hpp"
#include "matu/trajectory.hpp"

namespace matu {

struct SyntheticSpec {
  int n_runs = 10;
  int n_agents = 3;
  std::pair<int, int> step_range{3, 8};  // rows per slice, inclusive
  int d = 32;
  int true_rank = 2;
  double noise_sigma = 0.0;
  double divergence = 0.0;  // fraction of runs whose weights are resampled
  std::uint64_t seed = 0;
};

struct SyntheticTensor {
  RaggedTensor tensor;
  Parafac2Factors truth;           // reconstructs the tensor exactly at σ = 0
  std::vector<int> divergent_runs;  // run indices with resampled weights
};

// Seeded low-rank ragged tensor: slices Q_i·H·diag(s_i)·Vᵀ + σ·G_i, with
// per-agent weight rows shared across runs except in divergent runs, which
// resample theirs. Structure, divergence, and noise use separate derived
// streams, so the σ = 0 / divergence = 0 variants of one seed share their
// base exactly.
SyntheticTensor generate_synthetic_tensor(const SyntheticSpec& spec);

struct SyntheticDatasetConfig {
  int n_tasks = 100;
  double incorrect_fraction = 0.5;
  double divergence_when_incorrect = 0.8;
  SyntheticSpec base;  // per-task seeds derive from base.seed
  std::string model_id = "qwen3-embedding-0.6b";
};

struct SyntheticDataset {
  std::vector<TaskRecord> tasks;
  std::shared_ptr<EmbeddingCache> cache;  // raw step + final-answer vectors
  std::map<std::string, int> labels;      // task_id → correct
};

// Labeled demo dataset exercising the full offline pipeline: trajectory
// records with placeholder step texts, an embedding cache covering every
// text, and task labels. Tasks labeled incorrect are generated with
// divergence_when_incorrect; correct tasks with divergence 0.
SyntheticDataset generate_synthetic_dataset(const SyntheticDatasetConfig& cfg);

// Writes the JSONL log, binary embedding cache, and labels CSV.
void write_synthetic_dataset(const SyntheticDataset& ds,
                             const std::string& log_path,
                             const std::string& cache_path,
                             const std::string& labels_path);

}  // namespace matu
