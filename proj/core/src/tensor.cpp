#include "matu/tensor.hpp"

#include <algorithm>
#include <fstream>

#include "binio.hpp"
#include "matu/errors.hpp"

namespace matu {

Eigen::Index RaggedTensor::max_rows() const {
  Eigen::Index m = 0;
  for (const auto& s : slices) m = std::max(m, s.rows.rows());
  return m;
}

std::size_t RaggedTensor::total_entries() const {
  std::size_t n = 0;
  for (const auto& s : slices)
    n += static_cast<std::size_t>(s.rows.rows()) *
         static_cast<std::size_t>(s.rows.cols());
  return n;
}

std::set<StepKind> default_step_filter() {
  return {StepKind::message, StepKind::tool_result, StepKind::final_answer};
}

RaggedTensor build_ragged_tensor(const TaskRecord& rec,
                                 const StepEmbeddingFn& embed,
                                 const std::set<StepKind>& step_filter,
                                 std::vector<Diagnostic>* warnings) {
  // Canonical agent order: first-run trace order, then first appearance.
  std::vector<std::string> agent_order;
  auto note_agent = [&](const std::string& id) {
    if (std::find(agent_order.begin(), agent_order.end(), id) ==
        agent_order.end())
      agent_order.push_back(id);
  };
  std::vector<const RunTrajectory*> runs;
  runs.reserve(rec.runs.size());
  for (const auto& run : rec.runs) runs.push_back(&run);
  std::sort(runs.begin(), runs.end(),
            [](const RunTrajectory* a, const RunTrajectory* b) {
              return a->run_index < b->run_index;
            });
  for (const RunTrajectory* run : runs)
    for (const auto& trace : run->traces) note_agent(trace.agent_id);

  RaggedTensor out;
  for (const RunTrajectory* run : runs) {
    for (const std::string& agent : agent_order) {
      auto it = std::find_if(
          run->traces.begin(), run->traces.end(),
          [&](const AgentTrace& tr) { return tr.agent_id == agent; });
      if (it == run->traces.end()) continue;

      std::vector<const StepRecord*> kept;
      for (const auto& step : it->steps)
        if (step_filter.count(step.kind)) kept.push_back(&step);
      if (kept.empty()) {
        if (warnings)
          warnings->push_back({"EmptySlice",
                               "task " + rec.task_id + " run " +
                                   std::to_string(run->run_index) + " agent " +
                                   agent + " has no retained steps"});
        continue;
      }

      EmbeddingMatrix slice;
      slice.run_index = run->run_index;
      slice.agent_id = agent;
      for (std::size_t t = 0; t < kept.size(); ++t) {
        EmbeddingVector v = embed(kept[t]->content);
        if (out.d == 0) out.d = static_cast<int>(v.values.size());
        if (static_cast<int>(v.values.size()) != out.d) {
          throw DimensionMismatch(
              "embedding dimension " + std::to_string(v.values.size()) +
              " differs from tensor dimension " + std::to_string(out.d) +
              " at task " + rec.task_id + " run " +
              std::to_string(run->run_index) + " agent " + agent);
        }
        if (slice.rows.rows() == 0)
          slice.rows.resize(static_cast<Eigen::Index>(kept.size()), out.d);
        slice.rows.row(static_cast<Eigen::Index>(t)) = v.values.transpose();
      }
      out.slice_index[{slice.run_index, slice.agent_id}] = out.slices.size();
      out.slices.push_back(std::move(slice));
    }
  }

  if (out.slices.empty()) {
    throw EmptyTensor("task " + rec.task_id +
                      " produced no slices after step filtering");
  }
  return out;
}

double frobenius_norm(const RaggedTensor& t) {
  double sq = 0.0;
  for (const auto& s : t.slices) sq += s.rows.squaredNorm();
  return std::sqrt(sq);
}

namespace {
constexpr char kTensorMagic[8] = {'M', 'A', 'T', 'U', 'T', 'E', 'N', 'S'};
constexpr std::uint32_t kTensorVersion = 1;
}  // namespace

void save_tensor_file(const RaggedTensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("IoError", "cannot write tensor file " + path);
  binio::write_header(out, kTensorMagic, kTensorVersion, t.slices.size());
  for (const auto& s : t.slices) {
    binio::EntryWriter entry;
    entry.u32(static_cast<std::uint32_t>(s.run_index));
    entry.str(s.agent_id);
    entry.u32(static_cast<std::uint32_t>(s.rows.rows()));
    entry.u32(static_cast<std::uint32_t>(s.rows.cols()));
    for (Eigen::Index r = 0; r < s.rows.rows(); ++r)
      for (Eigen::Index c = 0; c < s.rows.cols(); ++c) entry.f64(s.rows(r, c));
    entry.finish(out);
  }
  if (!out) throw DataError("IoError", "short write to tensor file " + path);
}

RaggedTensor load_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCacheFile(0, "cannot open tensor file " + path);
  const std::uint64_t count =
      binio::read_header(in, kTensorMagic, kTensorVersion);
  RaggedTensor t;
  for (std::uint64_t i = 0; i < count; ++i) {
    binio::EntryReader entry(in);
    EmbeddingMatrix s;
    s.run_index = static_cast<int>(entry.u32());
    s.agent_id = entry.str();
    const std::uint32_t rows = entry.u32();
    const std::uint32_t cols = entry.u32();
    if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24))
      throw CorruptCacheFile(entry.offset(), "implausible slice shape");
    if (t.d == 0) t.d = static_cast<int>(cols);
    if (static_cast<int>(cols) != t.d)
      throw CorruptCacheFile(entry.offset(), "inconsistent slice dimension");
    s.rows.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) s.rows(r, c) = entry.f64();
    entry.verify_crc();
    t.slice_index[{s.run_index, s.agent_id}] = t.slices.size();
    t.slices.push_back(std::move(s));
  }
  if (t.slices.empty()) throw EmptyTensor("tensor file " + path + " is empty");
  return t;
}

}  // namespace matu
