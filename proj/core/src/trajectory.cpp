#include "matu/trajectory.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "matu/errors.hpp"
#include "json.hpp"

namespace matu {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string to_string(StepKind kind) {
  switch (kind) {
    case StepKind::message: return "message";
    case StepKind::tool_call: return "tool_call";
    case StepKind::tool_result: return "tool_result";
    case StepKind::final_answer: return "final_answer";
  }
  return "message";
}

std::optional<StepKind> step_kind_from_string(const std::string& s) {
  if (s == "message") return StepKind::message;
  if (s == "tool_call") return StepKind::tool_call;
  if (s == "tool_result") return StepKind::tool_result;
  if (s == "final_answer") return StepKind::final_answer;
  return std::nullopt;
}

namespace {

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

const json& require_field(const json& obj, const char* field,
                          std::size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw SchemaViolation(field, "line " + std::to_string(line_no) +
                                     ": missing required field");
  }
  return *it;
}

std::string require_string(const json& obj, const char* field,
                           std::size_t line_no) {
  const json& v = require_field(obj, field, line_no);
  if (!v.is_string()) {
    throw SchemaViolation(field, "line " + std::to_string(line_no) +
                                     ": expected a string");
  }
  return v.get<std::string>();
}

int require_int(const json& obj, const char* field, std::size_t line_no) {
  const json& v = require_field(obj, field, line_no);
  if (!v.is_number_integer()) {
    throw SchemaViolation(field, "line " + std::to_string(line_no) +
                                     ": expected an integer");
  }
  return v.get<int>();
}

StepRecord parse_step(const json& js, std::size_t line_no) {
  StepRecord step;
  step.step_index = require_int(js, "step_index", line_no);
  step.content = require_string(js, "content", line_no);
  if (step.content.empty() || is_blank(step.content)) {
    throw SchemaViolation("content", "line " + std::to_string(line_no) +
                                         ": step content is empty");
  }
  const std::string kind = require_string(js, "kind", line_no);
  auto parsed = step_kind_from_string(kind);
  if (!parsed) {
    throw SchemaViolation("kind", "line " + std::to_string(line_no) +
                                      ": unknown step kind '" + kind + "'");
  }
  step.kind = *parsed;
  if (auto it = js.find("timestamp"); it != js.end() && !it->is_null()) {
    if (!it->is_string()) {
      throw SchemaViolation("timestamp", "line " + std::to_string(line_no) +
                                             ": expected a string");
    }
    step.timestamp = it->get<std::string>();
  }
  return step;
}

AgentTrace parse_trace(const json& js, std::size_t line_no) {
  AgentTrace trace;
  trace.agent_id = require_string(js, "agent_id", line_no);
  trace.role = require_string(js, "role", line_no);
  const json& steps = require_field(js, "steps", line_no);
  if (!steps.is_array()) {
    throw SchemaViolation("steps", "line " + std::to_string(line_no) +
                                       ": expected an array");
  }
  for (const json& s : steps) trace.steps.push_back(parse_step(s, line_no));
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    if (trace.steps[i].step_index != static_cast<int>(i)) {
      throw SchemaViolation("step_index",
                            "line " + std::to_string(line_no) + ": agent '" +
                                trace.agent_id +
                                "' steps are not contiguous from 0");
    }
  }
  return trace;
}

}  // namespace

std::vector<TaskRecord> parse_trajectory_log(std::istream& stream) {
  std::map<std::string, TaskRecord> tasks;
  std::map<std::string, std::set<int>> seen_runs;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty() || is_blank(line)) continue;

    json js;
    try {
      js = json::parse(line);
    } catch (const json::exception& e) {
      throw MalformedLine(line_no, e.what());
    }
    if (!js.is_object()) throw MalformedLine(line_no, "not a JSON object");

    const std::string task_id = require_string(js, "task_id", line_no);
    const std::string input_text = require_string(js, "input_text", line_no);
    const int run_index = require_int(js, "run_index", line_no);

    RunTrajectory run;
    run.run_index = run_index;
    if (auto it = js.find("final_answer"); it != js.end() && !it->is_null())
      run.final_answer = it->get<std::string>();
    if (auto it = js.find("correct"); it != js.end() && !it->is_null()) {
      if (!it->is_boolean()) {
        throw SchemaViolation("correct", "line " + std::to_string(line_no) +
                                             ": expected a boolean");
      }
      run.correct = it->get<bool>();
    }
    const json& traces = require_field(js, "traces", line_no);
    if (!traces.is_array()) {
      throw SchemaViolation("traces", "line " + std::to_string(line_no) +
                                          ": expected an array");
    }
    std::set<std::string> agent_ids;
    for (const json& t : traces) {
      AgentTrace trace = parse_trace(t, line_no);
      if (!agent_ids.insert(trace.agent_id).second) {
        throw SchemaViolation("agent_id",
                              "line " + std::to_string(line_no) +
                                  ": duplicate agent_id '" + trace.agent_id +
                                  "' within one run");
      }
      run.traces.push_back(std::move(trace));
    }

    auto [it, inserted] = tasks.try_emplace(task_id);
    TaskRecord& rec = it->second;
    if (inserted) {
      rec.task_id = task_id;
      rec.input_text = input_text;
      if (auto t = js.find("topology"); t != js.end() && !t->is_null())
        rec.topology = t->get<std::string>();
    }
    if (!seen_runs[task_id].insert(run_index).second)
      throw DuplicateRun(task_id, run_index);
    rec.runs.push_back(std::move(run));
  }

  std::vector<TaskRecord> out;
  out.reserve(tasks.size());
  for (auto& [id, rec] : tasks) {
    std::sort(rec.runs.begin(), rec.runs.end(),
              [](const RunTrajectory& a, const RunTrajectory& b) {
                return a.run_index < b.run_index;
              });
    // Task-level label: unanimous per-run labels, else unset.
    std::optional<bool> task_label;
    bool unanimous = true;
    for (const RunTrajectory& run : rec.runs) {
      if (!run.correct) continue;
      if (!task_label) {
        task_label = run.correct;
      } else if (*task_label != *run.correct) {
        unanimous = false;
      }
    }
    if (unanimous) rec.correct = task_label;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<Diagnostic> validate_task_record(const TaskRecord& rec) {
  std::vector<Diagnostic> out;
  if (rec.n_runs() < 2) {
    out.push_back({"InsufficientRuns",
                   "task " + rec.task_id + " has " +
                       std::to_string(rec.n_runs()) +
                       " run(s); scoring needs at least 2"});
  }
  if (!rec.runs.empty()) {
    std::set<std::string> reference;
    for (const AgentTrace& t : rec.runs.front().traces)
      reference.insert(t.agent_id);
    for (const RunTrajectory& run : rec.runs) {
      std::set<std::string> agents;
      for (const AgentTrace& t : run.traces) agents.insert(t.agent_id);
      if (agents != reference) {
        out.push_back({"AgentSetMismatch",
                       "task " + rec.task_id + " run " +
                           std::to_string(run.run_index) +
                           " has a different agent set than run " +
                           std::to_string(rec.runs.front().run_index)});
      }
    }
    for (int i = 0; i < rec.n_runs(); ++i) {
      if (rec.runs[i].run_index != i) {
        out.push_back({"RunIndexGap",
                       "task " + rec.task_id + " run indices are not 0.." +
                           std::to_string(rec.n_runs() - 1) + " without gaps"});
        break;
      }
    }
  }
  return out;
}

std::vector<std::string> serialize_task_record(const TaskRecord& rec) {
  std::vector<std::string> lines;
  lines.reserve(rec.runs.size());
  for (const RunTrajectory& run : rec.runs) {
    ordered_json js;
    js["task_id"] = rec.task_id;
    js["input_text"] = rec.input_text;
    js["run_index"] = run.run_index;
    if (rec.topology) js["topology"] = *rec.topology;
    if (run.final_answer) js["final_answer"] = *run.final_answer;
    if (run.correct) js["correct"] = *run.correct;
    ordered_json traces = ordered_json::array();
    for (const AgentTrace& trace : run.traces) {
      ordered_json tj;
      tj["agent_id"] = trace.agent_id;
      tj["role"] = trace.role;
      ordered_json steps = ordered_json::array();
      for (const StepRecord& step : trace.steps) {
        ordered_json sj;
        sj["step_index"] = step.step_index;
        sj["kind"] = to_string(step.kind);
        sj["content"] = step.content;
        if (step.timestamp) sj["timestamp"] = *step.timestamp;
        steps.push_back(std::move(sj));
      }
      tj["steps"] = std::move(steps);
      traces.push_back(std::move(tj));
    }
    js["traces"] = std::move(traces);
    lines.push_back(js.dump());
  }
  return lines;
}

}  // namespace matu
