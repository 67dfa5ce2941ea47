#pragma once

#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace matu {

enum class StepKind { message, tool_call, tool_result, final_answer };

std::string to_string(StepKind kind);
std::optional<StepKind> step_kind_from_string(const std::string& s);

// One output step of one agent. Tool calls and tool results are stored as
// their raw string serialization, never structurally interpreted.
struct StepRecord {
  int step_index = 0;
  std::string content;
  StepKind kind = StepKind::message;
  std::optional<std::string> timestamp;

  bool operator==(const StepRecord&) const = default;
};

struct AgentTrace {
  std::string agent_id;
  std::string role;
  std::vector<StepRecord> steps;  // ordered by step_index, contiguous from 0

  bool operator==(const AgentTrace&) const = default;
};

struct RunTrajectory {
  int run_index = 0;
  std::vector<AgentTrace> traces;
  std::optional<std::string> final_answer;
  std::optional<bool> correct;  // per-run label, when the log carries one

  bool operator==(const RunTrajectory&) const = default;
};

// One task with its repeated runs. Scoring needs at least two runs; the
// variability across them is the signal.
struct TaskRecord {
  std::string task_id;
  std::string input_text;
  std::vector<RunTrajectory> runs;  // sorted by run_index
  std::optional<bool> correct;      // task-level label (unanimous run labels)
  std::optional<std::string> topology;

  int n_runs() const { return static_cast<int>(runs.size()); }

  bool operator==(const TaskRecord&) const = default;
};

struct Diagnostic {
  std::string code;    // e.g. "AgentSetMismatch", "InsufficientRuns"
  std::string detail;

  bool operator==(const Diagnostic&) const = default;
};

// Parses a JSONL trajectory log (one object per run) into TaskRecords grouped
// by task_id, runs sorted by run_index, tasks sorted by task_id. The result
// is independent of the interleaving of lines from different tasks.
//
// Throws MalformedLine, SchemaViolation, DuplicateRun.
std::vector<TaskRecord> parse_trajectory_log(std::istream& stream);

// Non-throwing structural checks: agent-set mismatch across runs, fewer than
// two runs, gaps in run indices. Returns one diagnostic per violation.
std::vector<Diagnostic> validate_task_record(const TaskRecord& rec);

// Inverse of parse_trajectory_log for one record: one JSONL line per run,
// with a fixed key order so output bytes are reproducible.
std::vector<std::string> serialize_task_record(const TaskRecord& rec);

}  // namespace matu
