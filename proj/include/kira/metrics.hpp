// Copyright 2026 The Kira Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace kira {

enum class Locality { Process, Node, Rack, Any };

constexpr std::string_view to_string(Locality l) noexcept {
  switch (l) {
    case Locality::Process: return "PROCESS";
    case Locality::Node: return "NODE";
    case Locality::Rack: return "RACK";
    case Locality::Any: return "ANY";
  }
  return "ANY";
}

constexpr bool is_local(Locality l) noexcept {
  return l == Locality::Process || l == Locality::Node;
}

enum class TaskStatus { Success, Failed, Lost };

constexpr std::string_view to_string(TaskStatus s) noexcept {
  switch (s) {
    case TaskStatus::Success: return "SUCCESS";
    case TaskStatus::Failed: return "FAILED";
    case TaskStatus::Lost: return "LOST";
  }
  return "FAILED";
}

/// One record per task attempt.
struct TaskRecord {
  std::size_t task_id = 0;
  int stage = 0;
  std::size_t partition = 0;
  int node = 0;
  int slot = 0;
  Locality level = Locality::Any;
  double start_ms = 0;
  double end_ms = 0;
  int attempt = 0;
  TaskStatus status = TaskStatus::Success;
};

/// Records of one job (a real action or a simulated run). Derived numbers
/// count successful attempts only, so a retried task is counted once.
struct RunMetrics {
  std::vector<TaskRecord> records;
  int nodes = 1;

  std::size_t tasks() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) {
      return r.status == TaskStatus::Success;
    }));
  }

  double hit_ratio() const {
    std::size_t total = 0, local = 0;
    for (const auto& r : records) {
      if (r.status != TaskStatus::Success) continue;
      ++total;
      if (is_local(r.level)) ++local;
    }
    return total ? static_cast<double>(local) / static_cast<double>(total) : 0.0;
  }

  double makespan_ms() const {
    if (records.empty()) return 0;
    double lo = records.front().start_ms, hi = records.front().end_ms;
    for (const auto& r : records) {
      lo = std::min(lo, r.start_ms);
      hi = std::max(hi, r.end_ms);
    }
    return hi - lo;
  }

  std::vector<std::size_t> per_node() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(nodes, 1)), 0);
    for (const auto& r : records) {
      if (r.status != TaskStatus::Success) continue;
      const auto n = static_cast<std::size_t>(r.node);
      if (n >= counts.size()) counts.resize(n + 1, 0);
      ++counts[n];
    }
    return counts;
  }

  /// Every launch of a (stage, partition) after its first, in record order:
  /// retries as well as recomputations of lost shuffle outputs.
  std::vector<std::pair<int, std::size_t>> reexecuted() const {
    std::vector<std::pair<int, std::size_t>> out;
    std::set<std::pair<int, std::size_t>> seen;
    for (const auto& r : records)
      if (!seen.emplace(r.stage, r.partition).second) out.emplace_back(r.stage, r.partition);
    return out;
  }

  /// Line-delimited JSON, one object per attempt.
  std::string to_jsonl() const {
    std::string out;
    for (const auto& r : records) {
      nlohmann::ordered_json j;
      j["task_id"] = r.task_id;
      j["stage"] = r.stage;
      j["partition"] = r.partition;
      j["node"] = r.node;
      j["slot"] = r.slot;
      j["locality_level"] = to_string(r.level);
      j["start_ms"] = r.start_ms;
      j["end_ms"] = r.end_ms;
      j["attempt"] = r.attempt;
      j["status"] = to_string(r.status);
      out += j.dump();
      out += '\n';
    }
    return out;
  }

  static RunMetrics from_jsonl(std::string_view text, int nodes = 1) {
    RunMetrics m;
    m.nodes = nodes;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      const auto line = text.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      TaskRecord r;
      r.task_id = j.at("task_id").get<std::size_t>();
      r.stage = j.at("stage").get<int>();
      r.partition = j.at("partition").get<std::size_t>();
      r.node = j.at("node").get<int>();
      r.slot = j.value("slot", 0);
      const auto level = j.at("locality_level").get<std::string>();
      r.level = level == "PROCESS" ? Locality::Process
                : level == "NODE"  ? Locality::Node
                : level == "RACK"  ? Locality::Rack
                                   : Locality::Any;
      r.start_ms = j.at("start_ms").get<double>();
      r.end_ms = j.at("end_ms").get<double>();
      r.attempt = j.value("attempt", 0);
      const auto status = j.value("status", std::string("SUCCESS"));
      r.status = status == "SUCCESS" ? TaskStatus::Success
                 : status == "LOST"  ? TaskStatus::Lost
                                     : TaskStatus::Failed;
      m.records.push_back(r);
    }
    return m;
  }
};

}  // namespace kira
