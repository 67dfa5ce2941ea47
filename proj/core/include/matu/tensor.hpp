#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "matu/embedding.hpp"
#include "matu/trajectory.hpp"

namespace matu {

// One (run, agent) slice: row t is the embedding of that agent's step t.
struct EmbeddingMatrix {
  int run_index = 0;
  std::string agent_id;
  Eigen::MatrixXd rows;  // T × d
};

// Ragged third-order collection: slices share the feature dimension d while
// row counts vary per slice.
struct RaggedTensor {
  std::vector<EmbeddingMatrix> slices;
  int d = 0;
  std::map<std::pair<int, std::string>, std::size_t> slice_index;

  std::size_t n_slices() const { return slices.size(); }
  Eigen::Index max_rows() const;
  std::size_t total_entries() const;
};

// Steps retained by default: prose, tool outputs, and final answers.
// Tool-call argument echoes are dropped.
std::set<StepKind> default_step_filter();

using StepEmbeddingFn = std::function<EmbeddingVector(const std::string& text)>;

// Builds one slice per (run, agent) pair with at least one retained step.
// Slice order is deterministic: runs ascending, agents in first-run trace
// order (agents absent from the first run are appended by first appearance).
// Empty traces produce a warning instead of a slice.
RaggedTensor build_ragged_tensor(const TaskRecord& rec,
                                 const StepEmbeddingFn& embed,
                                 const std::set<StepKind>& step_filter,
                                 std::vector<Diagnostic>* warnings = nullptr);

// sqrt of the sum of squared entries over all slices.
double frobenius_norm(const RaggedTensor& t);

// Binary dump of one tensor (little-endian, CRC-framed entries).
void save_tensor_file(const RaggedTensor& t, const std::string& path);
RaggedTensor load_tensor_file(const std::string& path);

}  // namespace matu
