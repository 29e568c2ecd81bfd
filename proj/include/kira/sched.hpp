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
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "kira/blockmap.hpp"
#include "kira/error.hpp"
#include "kira/metrics.hpp"

namespace kira {

enum class PolicyKind { Delay, StaticPartition };

constexpr std::string_view to_string(PolicyKind k) noexcept {
  return k == PolicyKind::Delay ? "DELAY" : "STATIC-PARTITION";
}

struct SchedPolicy {
  PolicyKind kind = PolicyKind::Delay;
  double wait_process_ms = 0;
  double wait_node_ms = 0;
  double wait_rack_ms = 0;

  static SchedPolicy delay(double wait_node_ms = 0) {
    SchedPolicy p;
    p.wait_node_ms = wait_node_ms;
    return p;
  }
  static SchedPolicy static_partition() {
    SchedPolicy p;
    p.kind = PolicyKind::StaticPartition;
    return p;
  }

  void validate() const {
    if (!(wait_process_ms >= 0 && wait_node_ms >= 0 && wait_rack_ms >= 0))
      throw Error(Errc::InvalidArgument, "locality waits must be >= 0");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = to_string(kind);
    j["wait_process_ms"] = wait_process_ms;
    j["wait_node_ms"] = wait_node_ms;
    j["wait_rack_ms"] = wait_rack_ms;
    return j;
  }
};

struct Slot {
  int node = 0;
  int slot = 0;
};

struct QueuedTask {
  std::size_t id = 0;
  std::vector<int> preferred;
  double enqueue_ms = 0;
  int owner = -1;  // static partitioning: node that owns the task; -1 = any node
};

struct Assignment {
  std::size_t id = 0;
  Locality level = Locality::Any;
};

/// Pending tasks of one stage, with the delay-scheduling decision rule.
///
/// DELAY: a free slot first takes the oldest task preferring its node (NODE),
/// then the oldest task with no preference at all, then (with more than one
/// rack) the oldest rack-local task once it has waited wait_node_ms, then the
/// oldest pending task once it has waited wait_node_ms (+ wait_rack_ms with
/// racks). Otherwise the slot waits. Age is measured from enqueue time.
///
/// STATIC-PARTITION: a slot only ever takes tasks owned by its node.
class TaskQueue {
 public:
  TaskQueue(const ClusterModel& cluster, SchedPolicy policy)
      : cluster_(cluster), policy_(policy), multi_rack_(cluster.rack_count() > 1) {
    cluster_.validate();
    policy_.validate();
    by_node_.resize(static_cast<std::size_t>(cluster_.nodes));
    if (multi_rack_) by_rack_.resize(static_cast<std::size_t>(cluster_.rack_count()));
  }

  void push(QueuedTask t) {
    const auto idx = tasks_.size();
    tasks_.push_back(std::move(t));
    taken_.push_back(false);
    ++pending_;
    const auto& task = tasks_.back();
    all_.push_back(idx);
    if (policy_.kind == PolicyKind::StaticPartition) {
      if (task.owner >= 0 && task.owner < cluster_.nodes)
        by_node_[static_cast<std::size_t>(task.owner)].push_back(idx);
      else
        no_pref_.push_back(idx);
      return;
    }
    if (task.preferred.empty()) {
      no_pref_.push_back(idx);
      return;
    }
    std::vector<int> racks;
    for (int n : task.preferred) {
      if (n < 0 || n >= cluster_.nodes) continue;
      by_node_[static_cast<std::size_t>(n)].push_back(idx);
      if (multi_rack_) {
        const int r = cluster_.rack_of(n);
        if (std::find(racks.begin(), racks.end(), r) == racks.end()) {
          racks.push_back(r);
          by_rack_[static_cast<std::size_t>(r)].push_back(idx);
        }
      }
    }
  }

  /// Picks a task for `slot` at time `now`, or nullopt to make the slot wait.
  std::optional<Assignment> assign_next(Slot slot, double now) {
    if (pending_ == 0) return std::nullopt;
    const auto node = static_cast<std::size_t>(slot.node);
    if (policy_.kind == PolicyKind::StaticPartition) {
      if (auto i = head(by_node_[node])) return take(*i, slot);
      if (auto i = head(no_pref_)) return take(*i, slot);
      return std::nullopt;
    }
    if (auto i = head(by_node_[node])) return take(*i, slot);
    if (auto i = head(no_pref_)) return take(*i, slot);
    if (multi_rack_) {
      auto& rack_q = by_rack_[static_cast<std::size_t>(cluster_.rack_of(slot.node))];
      if (auto i = head(rack_q); i && now - tasks_[*i].enqueue_ms >= policy_.wait_node_ms)
        return take(*i, slot);
    }
    if (auto i = head(all_); i && now - tasks_[*i].enqueue_ms >= any_wait()) return take(*i, slot);
    return std::nullopt;
  }

  /// Earliest time at which a waiting slot could be served by the age rule.
  double next_eligible_ms() {
    auto i = head(all_);
    if (!i || policy_.kind == PolicyKind::StaticPartition)
      return std::numeric_limits<double>::infinity();
    double t = tasks_[*i].enqueue_ms + any_wait();
    if (multi_rack_) t = std::min(t, tasks_[*i].enqueue_ms + policy_.wait_node_ms);
    return t;
  }

  /// Lets any node take the pending tasks owned by or preferring `node`;
  /// used when the node has no live slot left.
  void release_node(int node) {
    if (node < 0 || node >= cluster_.nodes) return;
    auto& q = by_node_[static_cast<std::size_t>(node)];
    if (policy_.kind == PolicyKind::StaticPartition) {
      for (auto i : q)
        if (!taken_[i]) no_pref_.push_back(i);
    }
    q.clear();
  }

  bool empty() const { return pending_ == 0; }
  std::size_t size() const { return pending_; }
  const QueuedTask& task(std::size_t idx) const { return tasks_[idx]; }
  const SchedPolicy& policy() const { return policy_; }

 private:
  double any_wait() const { return policy_.wait_node_ms + (multi_rack_ ? policy_.wait_rack_ms : 0.0); }

  std::optional<std::size_t> head(std::deque<std::size_t>& q) {
    while (!q.empty() && taken_[q.front()]) q.pop_front();
    if (q.empty()) return std::nullopt;
    return q.front();
  }

  Assignment take(std::size_t idx, Slot slot) {
    taken_[idx] = true;
    --pending_;
    const auto& pref = tasks_[idx].preferred;
    Locality level = Locality::Any;
    if (std::find(pref.begin(), pref.end(), slot.node) != pref.end()) {
      level = Locality::Node;
    } else if (multi_rack_) {
      for (int n : pref)
        if (n >= 0 && n < cluster_.nodes && cluster_.rack_of(n) == cluster_.rack_of(slot.node))
          level = Locality::Rack;
    }
    return {tasks_[idx].id, level};
  }

  ClusterModel cluster_;
  SchedPolicy policy_;
  bool multi_rack_;
  std::vector<QueuedTask> tasks_;
  std::vector<bool> taken_;
  std::size_t pending_ = 0;
  std::deque<std::size_t> all_, no_pref_;
  std::vector<std::deque<std::size_t>> by_node_, by_rack_;
};

/// Owner node of each of `n` items split into `nodes` contiguous chunks; the
/// first n mod nodes chunks carry one extra item.
inline std::vector<int> static_owners(std::size_t n, int nodes) {
  if (nodes < 1) throw Error(Errc::InvalidArgument, "need at least one node");
  const auto k = static_cast<std::size_t>(nodes);
  const std::size_t base = n / k, extra = n % k;
  std::vector<int> owner;
  owner.reserve(n);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    owner.insert(owner.end(), len, static_cast<int>(c));
  }
  return owner;
}

/// Node -> its contiguous chunk of the (path-sorted) file list.
inline std::vector<std::vector<std::string>> static_partition(std::vector<std::string> files,
                                                              int nodes) {
  std::sort(files.begin(), files.end());
  const auto owner = static_owners(files.size(), nodes);
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(nodes));
  for (std::size_t i = 0; i < files.size(); ++i)
    out[static_cast<std::size_t>(owner[i])].push_back(std::move(files[i]));
  return out;
}

/// Service times for the simulator. Local cost is lognormal with the given
/// mean; a remote read multiplies it by remote_penalty.
struct TaskModel {
  double local_mean_ms = 1000;
  double sigma = 0.3;
  double remote_penalty = 1.15;

  void validate() const {
    if (!(local_mean_ms > 0) || !(sigma >= 0) || !(remote_penalty >= 1))
      throw Error(Errc::InvalidArgument, "task model needs mean > 0, sigma >= 0, penalty >= 1");
  }
};

/// Discrete-event run of one single-stage job: one task per file of `map`,
/// scheduled on every slot of `cluster`. Deterministic for a fixed seed.
inline RunMetrics simulate(const ClusterModel& cluster, const BlockMap& map,
                           const SchedPolicy& policy, const TaskModel& model, std::uint64_t seed) {
  cluster.validate();
  policy.validate();
  model.validate();
  const auto paths = map.paths();
  std::mt19937_64 rng(seed);
  const double mu = std::log(model.local_mean_ms) - 0.5 * model.sigma * model.sigma;
  std::lognormal_distribution<double> cost(mu, model.sigma);
  std::vector<double> local_cost(paths.size());
  for (auto& c : local_cost) c = cost(rng);

  TaskQueue queue(cluster, policy);
  const auto owners = static_owners(paths.size(), cluster.nodes);
  for (std::size_t i = 0; i < paths.size(); ++i)
    queue.push({i, map.locate(paths[i]), 0.0, owners[i]});

  // (time, sequence, slot index); slot index = slot * nodes + node so that
  // at t = 0 every node gets its first slot before any node gets its second.
  using Event = std::tuple<double, std::uint64_t, int>;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  std::uint64_t seq = 0;
  const int slots = cluster.total_slots();
  for (int s = 0; s < slots; ++s) events.emplace(0.0, seq++, s);

  RunMetrics metrics;
  metrics.nodes = cluster.nodes;
  metrics.records.reserve(paths.size());
  while (!events.empty() && !queue.empty()) {
    const auto [now, _, s] = events.top();
    events.pop();
    const Slot slot{s % cluster.nodes, s / cluster.nodes};
    if (auto a = queue.assign_next(slot, now)) {
      const double c = local_cost[a->id] * (is_local(a->level) ? 1.0 : model.remote_penalty);
      TaskRecord r;
      r.task_id = metrics.records.size();
      r.partition = a->id;
      r.node = slot.node;
      r.slot = slot.slot;
      r.level = a->level;
      r.start_ms = now;
      r.end_ms = now + c;
      metrics.records.push_back(r);
      events.emplace(r.end_ms, seq++, s);
    } else {
      const double wake = queue.next_eligible_ms();
      if (std::isfinite(wake)) {
        events.emplace(wake > now ? wake : std::nextafter(now, std::numeric_limits<double>::infinity()),
                       seq++, s);
      }
    }
  }
  return metrics;
}

/// Metrics summary: {hit_ratio, makespan_ms, tasks, per_node, policy}.
inline nlohmann::ordered_json summary_json(const RunMetrics& m, const SchedPolicy& policy) {
  nlohmann::ordered_json j;
  j["hit_ratio"] = m.hit_ratio();
  j["makespan_ms"] = m.makespan_ms();
  j["tasks"] = m.tasks();
  j["per_node"] = m.per_node();
  j["policy"] = policy.to_json();
  return j;
}

}  // namespace kira
