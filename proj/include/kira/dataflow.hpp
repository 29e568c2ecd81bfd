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
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kira/blockmap.hpp"
#include "kira/error.hpp"
#include "kira/hash.hpp"
#include "kira/metrics.hpp"
#include "kira/sched.hpp"

namespace kira {

enum class OpKind { Parallelize, BinaryFiles, Map, ReduceByKey, Repartition };

/// Where the current task runs. Null on the driver thread.
struct TaskContext {
  int node = 0;
  int slot = 0;
  int stage = 0;
  std::size_t partition = 0;
  int attempt = 0;
};

namespace detail {
inline thread_local const TaskContext* current_task = nullptr;
}  // namespace detail

inline const TaskContext* current_task() { return detail::current_task; }

struct FileBlob {
  std::string path;
  std::vector<std::uint8_t> bytes;
};

/// Failures to inject into the next job. Stage ids count from 0 in
/// execution order within the job.
struct FaultPlan {
  struct FailTask {
    int stage = 0;
    std::size_t partition = 0;
    int attempt = 0;
  };
  /// The slot dies while running its (after_tasks + 1)-th task of the job.
  struct KillSlot {
    int node = 0;
    int slot = 0;
    std::size_t after_tasks = 0;
  };
  /// Drops one map task's shuffle output right after its stage completes.
  struct LoseOutput {
    int stage = 0;
    std::size_t map_partition = 0;
  };

  std::vector<FailTask> fail_tasks;
  std::vector<KillSlot> kill_slots;
  std::vector<LoseOutput> lose_outputs;

  bool empty() const { return fail_tasks.empty() && kill_slots.empty() && lose_outputs.empty(); }
};

inline constexpr int kMaxAttempts = 4;  // first run plus a retry budget of 3

namespace detail {

inline std::size_t next_node_id() {
  static std::atomic<std::size_t> counter{0};
  return counter.fetch_add(1);
}

/// Map outputs keyed by (shuffle, map partition, reduce partition). Lives in
/// the driver process, so it survives the loss of the slot that wrote it.
class ShuffleStore {
 public:
  void put(std::size_t shuffle, std::size_t map_part,
           std::vector<std::shared_ptr<const void>> buckets) {
    std::lock_guard lock(mu_);
    for (std::size_t r = 0; r < buckets.size(); ++r)
      data_[{shuffle, map_part, r}] = std::move(buckets[r]);
    complete_.insert({shuffle, map_part});
  }

  std::shared_ptr<const void> get(std::size_t shuffle, std::size_t map_part, std::size_t reduce_part) const {
    std::lock_guard lock(mu_);
    auto it = data_.find({shuffle, map_part, reduce_part});
    if (it == data_.end() || !complete_.count({shuffle, map_part}))
      throw Error(Errc::JobFailed, "missing shuffle output " + std::to_string(shuffle) + "/" +
                                       std::to_string(map_part));
    return it->second;
  }

  bool has(std::size_t shuffle, std::size_t map_part) const {
    std::lock_guard lock(mu_);
    return complete_.count({shuffle, map_part}) > 0;
  }

  void drop(std::size_t shuffle, std::size_t map_part) {
    std::lock_guard lock(mu_);
    complete_.erase({shuffle, map_part});
    for (auto it = data_.begin(); it != data_.end();) {
      const auto& [s, m, r] = it->first;
      it = (s == shuffle && m == map_part) ? data_.erase(it) : std::next(it);
    }
  }

 private:
  mutable std::mutex mu_;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::shared_ptr<const void>> data_;
  std::set<std::pair<std::size_t, std::size_t>> complete_;
};

class NodeBase;

/// Map side of a shuffle: runs one map task and stores its buckets.
class ShuffleDep {
 public:
  virtual ~ShuffleDep() = default;
  virtual std::size_t shuffle_id() const = 0;
  virtual const NodeBase& map_side() const = 0;
  virtual void run_map(std::size_t map_part, const TaskContext& ctx) const = 0;
};

class NodeBase {
 public:
  NodeBase(OpKind op, std::size_t partitions, std::shared_ptr<const NodeBase> parent)
      : id_(next_node_id()), op_(op), partitions_(partitions), parent_(std::move(parent)) {}
  virtual ~NodeBase() = default;

  std::size_t id() const { return id_; }
  OpKind op() const { return op_; }
  std::size_t num_partitions() const { return partitions_; }
  const NodeBase* parent() const { return parent_.get(); }

  /// Narrow nodes inherit their parent's preferences; shuffles have none.
  virtual std::vector<int> preferred(std::size_t p) const {
    if (parent_ && !shuffle()) return parent_->preferred(p);
    return {};
  }
  virtual const ShuffleDep* shuffle() const { return nullptr; }

 private:
  std::size_t id_;
  OpKind op_;
  std::size_t partitions_;
  std::shared_ptr<const NodeBase> parent_;
};

template <typename T>
class Node : public NodeBase {
 public:
  using NodeBase::NodeBase;
  virtual std::vector<T> compute(std::size_t p, const TaskContext& ctx) const = 0;
};

template <typename T>
class ParallelizeNode final : public Node<T> {
 public:
  ParallelizeNode(std::vector<T> items, std::size_t partitions)
      : Node<T>(OpKind::Parallelize, partitions, nullptr),
        items_(std::make_shared<const std::vector<T>>(std::move(items))) {}

  std::vector<T> compute(std::size_t p, const TaskContext&) const override {
    const std::size_t n = items_->size(), parts = this->num_partitions();
    const std::size_t chunk = (n + parts - 1) / parts;
    const std::size_t lo = std::min(n, p * chunk), hi = std::min(n, lo + chunk);
    return {items_->begin() + static_cast<std::ptrdiff_t>(lo),
            items_->begin() + static_cast<std::ptrdiff_t>(hi)};
  }

 private:
  std::shared_ptr<const std::vector<T>> items_;
};

class BinaryFilesNode final : public Node<FileBlob> {
 public:
  explicit BinaryFilesNode(std::shared_ptr<const BlockMap> store)
      : Node<FileBlob>(OpKind::BinaryFiles, std::max<std::size_t>(store->size(), 1), nullptr),
        store_(std::move(store)),
        paths_(store_->paths()) {}

  std::vector<FileBlob> compute(std::size_t p, const TaskContext& ctx) const override {
    if (p >= paths_.size()) return {};
    return {FileBlob{paths_[p], store_->read_file(paths_[p], ctx.node)}};
  }

  std::vector<int> preferred(std::size_t p) const override {
    if (p >= paths_.size()) return {};
    return store_->locate(paths_[p]);
  }

  const BlockMap& store() const { return *store_; }

 private:
  std::shared_ptr<const BlockMap> store_;
  std::vector<std::string> paths_;
};

template <typename In, typename Out, typename F>
class MapNode final : public Node<Out> {
 public:
  MapNode(std::shared_ptr<const Node<In>> parent, F f)
      : Node<Out>(OpKind::Map, parent->num_partitions(), parent), parent_(std::move(parent)),
        f_(std::move(f)) {}

  // Recursing into the parent fuses a chain of maps into one task.
  std::vector<Out> compute(std::size_t p, const TaskContext& ctx) const override {
    auto in = parent_->compute(p, ctx);
    std::vector<Out> out;
    out.reserve(in.size());
    for (auto& v : in) out.push_back(std::invoke(f_, std::as_const(v)));
    return out;
  }

 private:
  std::shared_ptr<const Node<In>> parent_;
  F f_;
};

template <typename T>
class ShuffleNodeBase : public Node<T>, public ShuffleDep {
 public:
  ShuffleNodeBase(OpKind op, std::shared_ptr<const NodeBase> parent, std::size_t partitions,
                  std::shared_ptr<ShuffleStore> store)
      : Node<T>(op, partitions, parent), map_side_(std::move(parent)), store_(std::move(store)) {}

  const ShuffleDep* shuffle() const override { return this; }
  std::size_t shuffle_id() const override { return this->id(); }
  const NodeBase& map_side() const override { return *map_side_; }

 protected:
  template <typename E>
  void put(std::size_t map_part, std::vector<std::vector<E>> buckets) const {
    std::vector<std::shared_ptr<const void>> erased;
    erased.reserve(buckets.size());
    for (auto& b : buckets) erased.push_back(std::make_shared<const std::vector<E>>(std::move(b)));
    store_->put(shuffle_id(), map_part, std::move(erased));
  }

  template <typename E>
  const std::vector<E>& bucket(std::size_t map_part, std::size_t reduce_part,
                               std::shared_ptr<const void>& hold) const {
    hold = store_->get(shuffle_id(), map_part, reduce_part);
    return *static_cast<const std::vector<E>*>(hold.get());
  }

  std::shared_ptr<const NodeBase> map_side_;
  std::shared_ptr<ShuffleStore> store_;
};

template <typename K>
struct StableHasher {
  std::size_t operator()(const K& k) const noexcept { return static_cast<std::size_t>(stable_hash(k)); }
};

template <typename K, typename V, typename Op>
class ReduceByKeyNode final : public ShuffleNodeBase<std::pair<K, V>> {
 public:
  using Elem = std::pair<K, V>;

  ReduceByKeyNode(std::shared_ptr<const Node<Elem>> parent, Op op, std::size_t partitions,
                  std::shared_ptr<ShuffleStore> store)
      : ShuffleNodeBase<Elem>(OpKind::ReduceByKey, parent, partitions, std::move(store)),
        parent_(std::move(parent)),
        op_(std::move(op)) {}

  void run_map(std::size_t map_part, const TaskContext& ctx) const override {
    auto combined = combine(parent_->compute(map_part, ctx));
    std::vector<std::vector<Elem>> buckets(this->num_partitions());
    for (auto& kv : combined) buckets[stable_hash(kv.first) % this->num_partitions()].push_back(std::move(kv));
    this->put(map_part, std::move(buckets));
  }

  std::vector<Elem> compute(std::size_t p, const TaskContext&) const override {
    std::vector<Elem> all;
    for (std::size_t m = 0; m < this->map_side().num_partitions(); ++m) {
      std::shared_ptr<const void> hold;
      const auto& b = this->template bucket<Elem>(m, p, hold);
      all.insert(all.end(), b.begin(), b.end());
    }
    return combine(std::move(all));
  }

 private:
  // Folds values per key; output keeps first-appearance order, so results
  // do not depend on which slot ran what.
  std::vector<Elem> combine(std::vector<Elem> in) const {
    std::vector<Elem> out;
    std::unordered_map<K, std::size_t, StableHasher<K>> index;
    for (auto& kv : in) {
      auto [it, fresh] = index.try_emplace(kv.first, out.size());
      if (fresh)
        out.push_back(std::move(kv));
      else
        out[it->second].second = std::invoke(op_, std::as_const(out[it->second].second), std::as_const(kv.second));
    }
    return out;
  }

  std::shared_ptr<const Node<Elem>> parent_;
  Op op_;
};

template <typename T>
class RepartitionNode final : public ShuffleNodeBase<T> {
 public:
  RepartitionNode(std::shared_ptr<const Node<T>> parent, std::size_t partitions,
                  std::shared_ptr<ShuffleStore> store)
      : ShuffleNodeBase<T>(OpKind::Repartition, parent, partitions, std::move(store)),
        parent_(std::move(parent)) {}

  // Element i of map partition m goes to reduce partition (m + i) mod p.
  void run_map(std::size_t map_part, const TaskContext& ctx) const override {
    auto items = parent_->compute(map_part, ctx);
    const std::size_t p = this->num_partitions();
    std::vector<std::vector<T>> buckets(p);
    for (std::size_t i = 0; i < items.size(); ++i) buckets[(map_part + i) % p].push_back(std::move(items[i]));
    this->put(map_part, std::move(buckets));
  }

  std::vector<T> compute(std::size_t p, const TaskContext&) const override {
    std::vector<T> out;
    for (std::size_t m = 0; m < this->map_side().num_partitions(); ++m) {
      std::shared_ptr<const void> hold;
      const auto& b = this->template bucket<T>(m, p, hold);
      out.insert(out.end(), b.begin(), b.end());
    }
    return out;
  }

 private:
  std::shared_ptr<const Node<T>> parent_;
};

/// One thread per worker slot, each with a single-job mailbox.
class WorkerPool {
 public:
  explicit WorkerPool(const ClusterModel& cluster) {
    for (int s = 0; s < cluster.cores_per_node; ++s)
      for (int n = 0; n < cluster.nodes; ++n) workers_.push_back(std::make_unique<Worker>(Slot{n, s}));
  }
  ~WorkerPool() {
    for (auto& w : workers_) {
      {
        std::lock_guard lock(w->mu);
        w->stop = true;
      }
      w->cv.notify_one();
    }
    for (auto& w : workers_) w->thread.join();
  }

  std::size_t size() const { return workers_.size(); }
  Slot slot(std::size_t w) const { return workers_[w]->slot; }

  void submit(std::size_t w, std::function<void()> job) {
    auto& worker = *workers_[w];
    {
      std::lock_guard lock(worker.mu);
      worker.job = std::move(job);
    }
    worker.cv.notify_one();
  }

 private:
  struct Worker {
    explicit Worker(Slot s) : slot(s), thread([this] { loop(); }) {}
    void loop() {
      for (;;) {
        std::function<void()> next;
        {
          std::unique_lock lock(mu);
          cv.wait(lock, [this] { return stop || job; });
          if (!job) return;
          next = std::move(job);
          job = nullptr;
        }
        next();
      }
    }
    Slot slot;
    std::mutex mu;
    std::condition_variable cv;
    std::function<void()> job;
    bool stop = false;
    std::thread thread;  // last: starts after the other members exist
  };
  std::vector<std::unique_ptr<Worker>> workers_;
};

}  // namespace detail

class Context;

/// Read-only value replicated to every node; tasks read their node's copy.
template <typename T>
class Broadcast {
 public:
  Broadcast() = default;
  Broadcast(std::size_t id, std::shared_ptr<const std::vector<std::shared_ptr<const T>>> replicas)
      : id_(id), replicas_(std::move(replicas)) {}

  const T& value() const {
    const auto* t = current_task();
    return replica(t ? t->node : 0);
  }
  const T& replica(int node) const { return *replicas_->at(static_cast<std::size_t>(node)); }
  std::size_t id() const { return id_; }
  std::size_t replicas() const { return replicas_->size(); }

 private:
  std::size_t id_ = 0;
  std::shared_ptr<const std::vector<std::shared_ptr<const T>>> replicas_;
};

template <typename T>
struct is_pair : std::false_type {};
template <typename A, typename B>
struct is_pair<std::pair<A, B>> : std::true_type {};

/// Lazy, immutable, partitioned collection. Transformations only build the
/// lineage graph; actions (collect, reduce, count) run it on the owning
/// Context, which must outlive the dataset.
template <typename T>
class Dataset {
 public:
  using value_type = T;

  Dataset(Context* ctx, std::shared_ptr<const detail::Node<T>> node)
      : ctx_(ctx), node_(std::move(node)) {}

  template <typename F>
  auto map(F f) const {
    using Out = std::decay_t<std::invoke_result_t<F&, const T&>>;
    return Dataset<Out>(ctx_, std::make_shared<const detail::MapNode<T, Out, F>>(node_, std::move(f)));
  }

  Dataset repartition(std::size_t partitions) const;

  template <typename Op>
    requires is_pair<T>::value
  Dataset reduce_by_key(Op op, std::size_t partitions) const;

  std::vector<T> collect() const;

  template <typename Op>
  T reduce(Op op) const;

  std::size_t count() const;

  std::size_t num_partitions() const { return node_->num_partitions(); }
  std::size_t id() const { return node_->id(); }
  OpKind op() const { return node_->op(); }
  std::vector<int> preferred_locations(std::size_t p) const { return node_->preferred(p); }
  const std::shared_ptr<const detail::Node<T>>& node() const { return node_; }

 private:
  Context* ctx_;
  std::shared_ptr<const detail::Node<T>> node_;
};

/// Driver: owns the worker slots, the shuffle store and the scheduler.
class Context {
 public:
  using ResultFn = std::function<void(std::size_t partition, const TaskContext&)>;

  explicit Context(ClusterModel cluster = {}, SchedPolicy policy = {})
      : cluster_(std::move(cluster)), policy_(policy), store_(std::make_shared<detail::ShuffleStore>()) {
    cluster_.validate();
    policy_.validate();
  }
  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;

  const ClusterModel& cluster() const { return cluster_; }
  const SchedPolicy& policy() const { return policy_; }
  void set_policy(SchedPolicy p) {
    p.validate();
    policy_ = p;
  }

  /// Arms failures for the next action only.
  void set_fault_plan(FaultPlan plan) { plan_ = std::move(plan); }

  template <typename T>
  Dataset<T> parallelize(std::vector<T> items, std::size_t partitions) {
    if (partitions == 0) throw Error(Errc::ZeroPartitions, "parallelize");
    return Dataset<T>(this, std::make_shared<const detail::ParallelizeNode<T>>(std::move(items), partitions));
  }

  /// One partition per file, in path order, preferring the replica nodes.
  Dataset<FileBlob> binary_files(std::shared_ptr<const BlockMap> store) {
    std::error_code ec;
    if (!store || !std::filesystem::is_directory(store->root(), ec))
      throw Error(Errc::NoSuchDirectory, store ? store->root().string() : "<null>");
    return Dataset<FileBlob>(this, std::make_shared<const detail::BinaryFilesNode>(std::move(store)));
  }

  /// Plain local mode: every file is local to node 0.
  Dataset<FileBlob> binary_files(const std::filesystem::path& dir) {
    BlockMap::Options opts;
    opts.replication = 1;
    opts.mode = StoreMode::Local;
    return binary_files(std::make_shared<const BlockMap>(BlockMap::ingest(dir, ClusterModel{1, 1, {}}, opts)));
  }

  template <typename T>
  Broadcast<T> broadcast(T value) {
    auto replicas = std::make_shared<std::vector<std::shared_ptr<const T>>>();
    for (int n = 0; n < cluster_.nodes; ++n) replicas->push_back(std::make_shared<const T>(value));
    return Broadcast<T>(next_broadcast_++, std::move(replicas));
  }

  template <typename T>
  Broadcast<std::vector<T>> allgather(const Dataset<T>& ds) {
    return broadcast(ds.collect());
  }

  /// Metrics of the most recent action.
  const RunMetrics& last_metrics() const { return metrics_; }
  /// Task attempts launched over the context's lifetime.
  std::size_t tasks_launched() const { return launched_; }
  std::size_t jobs_run() const { return jobs_; }

  std::shared_ptr<detail::ShuffleStore> shuffle_store() const { return store_; }

  /// Runs every stage needed to materialize `final` and calls `fn` once per
  /// partition of it, on worker slots.
  void run_job(const detail::NodeBase& final, const ResultFn& fn) {
    if (!pool_) pool_ = std::make_unique<detail::WorkerPool>(cluster_);
    Job job;
    job.plan = std::move(plan_);
    plan_ = FaultPlan{};
    job.lost_done.assign(job.plan.lose_outputs.size(), false);
    job.kill_done.assign(job.plan.kill_slots.size(), false);
    job.started.assign(pool_->size(), 0);
    job.dead.assign(pool_->size(), false);
    job.t0 = std::chrono::steady_clock::now();
    job.metrics.nodes = cluster_.nodes;
    ++jobs_;

    // Single-parent lineage: the stages form a chain, upstream first.
    std::vector<const detail::ShuffleDep*> deps;
    for (const detail::NodeBase* n = &final; n; n = n->parent()) {
      if (const auto* dep = n->shuffle()) deps.push_back(dep);
    }
    std::reverse(deps.begin(), deps.end());
    job.deps = deps;

    struct Reset {
      Context* self;
      Job* job;
      ~Reset() { self->metrics_ = std::move(job->metrics); }
    } reset{this, &job};

    for (std::size_t s = 0; s < deps.size(); ++s) ensure_shuffle(job, static_cast<int>(s));
    if (!deps.empty()) ensure_shuffle(job, static_cast<int>(deps.size()) - 1);
    std::vector<std::size_t> parts(final.num_partitions());
    for (std::size_t p = 0; p < parts.size(); ++p) parts[p] = p;
    run_tasks(job, static_cast<int>(deps.size()), final, parts, fn);
  }

 private:
  struct Job {
    FaultPlan plan;
    std::vector<bool> lost_done, kill_done, dead;
    std::vector<std::size_t> started;
    std::vector<const detail::ShuffleDep*> deps;
    std::chrono::steady_clock::time_point t0;
    RunMetrics metrics;
  };

  struct Completion {
    std::size_t worker = 0;
    std::size_t index = 0;
    double start = 0, end = 0;
    bool ok = false;
    std::string error;
  };

  static double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }

  // Makes every map output of stage `s` available, recomputing only the
  // missing ones (and, first, whatever they depend on).
  void ensure_shuffle(Job& job, int s) {
    if (s > 0) ensure_shuffle(job, s - 1);
    const auto* dep = job.deps[static_cast<std::size_t>(s)];
    const auto& side = dep->map_side();
    std::vector<std::size_t> missing;
    for (std::size_t m = 0; m < side.num_partitions(); ++m)
      if (!store_->has(dep->shuffle_id(), m)) missing.push_back(m);
    if (!missing.empty()) {
      run_tasks(job, s, side, missing,
                [dep](std::size_t m, const TaskContext& ctx) { dep->run_map(m, ctx); });
    }
    for (std::size_t i = 0; i < job.plan.lose_outputs.size(); ++i) {
      const auto& lose = job.plan.lose_outputs[i];
      if (job.lost_done[i] || lose.stage != s) continue;
      job.lost_done[i] = true;
      store_->drop(dep->shuffle_id(), lose.map_partition);
    }
  }

  bool node_alive(const Job& job, int node) const {
    for (std::size_t w = 0; w < pool_->size(); ++w)
      if (!job.dead[w] && pool_->slot(w).node == node) return true;
    return false;
  }

  void run_tasks(Job& job, int stage, const detail::NodeBase& tip,
                 const std::vector<std::size_t>& parts, const ResultFn& fn) {
    TaskQueue queue(cluster_, policy_);
    const auto owners = static_owners(parts.size(), cluster_.nodes);
    std::vector<int> attempts(parts.size(), 0);
    auto enqueue = [&](std::size_t i) {
      int owner = owners[i];
      if (!node_alive(job, owner)) owner = -1;
      queue.push({i, tip.preferred(parts[i]), ms_since(job.t0), owner});
    };
    for (std::size_t i = 0; i < parts.size(); ++i) enqueue(i);

    std::mutex mu;
    std::condition_variable cv;
    std::deque<Completion> done_q;
    std::vector<bool> busy(pool_->size(), false);
    std::vector<Locality> level(parts.size(), Locality::Any);
    std::size_t done = 0, running = 0;
    std::optional<std::string> fatal;

    auto record = [&](std::size_t w, std::size_t i, double start, double end, TaskStatus status) {
      TaskRecord r;
      r.task_id = job.metrics.records.size();
      r.stage = stage;
      r.partition = parts[i];
      r.node = pool_->slot(w).node;
      r.slot = pool_->slot(w).slot;
      r.level = level[i];
      r.start_ms = start;
      r.end_ms = end;
      r.attempt = attempts[i];
      r.status = status;
      job.metrics.records.push_back(r);
    };
    auto failed = [&](std::size_t i, const std::string& why) {
      if (++attempts[i] >= kMaxAttempts) {
        if (!fatal)
          fatal = "stage " + std::to_string(stage) + " partition " + std::to_string(parts[i]) +
                  " failed " + std::to_string(kMaxAttempts) + " times: " + why;
        return;
      }
      enqueue(i);
    };
    auto launch = [&](std::size_t w, const Assignment& a) {
      const std::size_t i = a.id;
      const Slot slot = pool_->slot(w);
      level[i] = a.level;
      ++launched_;
      const std::size_t nth = job.started[w]++;
      for (std::size_t k = 0; k < job.plan.kill_slots.size(); ++k) {
        const auto& kill = job.plan.kill_slots[k];
        if (job.kill_done[k] || kill.node != slot.node || kill.slot != slot.slot || kill.after_tasks != nth)
          continue;
        job.kill_done[k] = true;
        job.dead[w] = true;
        const double now = ms_since(job.t0);
        record(w, i, now, now, TaskStatus::Lost);
        // Pending work owned by a node with no slot left goes to any node.
        if (!node_alive(job, slot.node)) queue.release_node(slot.node);
        failed(i, "worker slot lost");
        return;
      }
      bool inject = false;
      for (const auto& f : job.plan.fail_tasks)
        if (f.stage == stage && f.partition == parts[i] && f.attempt == attempts[i]) inject = true;
      busy[w] = true;
      ++running;
      const TaskContext tctx{slot.node, slot.slot, stage, parts[i], attempts[i]};
      const auto t0 = job.t0;
      const std::size_t part = parts[i];
      pool_->submit(w, [&, w, i, tctx, inject, t0, part] {
        Completion c{w, i, ms_since(t0), 0, false, {}};
        detail::current_task = &tctx;
        try {
          if (inject) throw Error(Errc::JobFailed, "injected failure");
          fn(part, tctx);
          c.ok = true;
        } catch (const std::exception& e) {
          c.error = e.what();
        } catch (...) {
          c.error = "unknown exception";
        }
        detail::current_task = nullptr;
        c.end = ms_since(t0);
        // Notify under the lock: once it is released the driver may return
        // and destroy `cv`.
        std::lock_guard lock(mu);
        done_q.push_back(std::move(c));
        cv.notify_one();
      });
    };

    while (done < parts.size()) {
      bool idle = false;
      if (!fatal) {
        for (std::size_t w = 0; w < pool_->size(); ++w) {
          if (job.dead[w] || busy[w]) continue;
          if (auto a = queue.assign_next(pool_->slot(w), ms_since(job.t0)))
            launch(w, *a);
          else
            idle = true;
          if (fatal) break;
        }
      }
      if (running == 0) {
        if (fatal || done == parts.size()) break;
        if (std::all_of(job.dead.begin(), job.dead.end(), [](bool d) { return d; })) {
          fatal = "no live worker slots";
          break;
        }
        if (queue.empty()) {
          fatal = "scheduler lost track of pending tasks";
          break;
        }
        const double wake = queue.next_eligible_ms();
        if (!std::isfinite(wake)) {
          fatal = "pending tasks have no eligible worker slot";
          break;
        }
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(
            std::max(0.0, wake - ms_since(job.t0))));
        continue;
      }
      std::deque<Completion> batch;
      {
        std::unique_lock lock(mu);
        const double wake = idle && !queue.empty() ? queue.next_eligible_ms()
                                                   : std::numeric_limits<double>::infinity();
        if (std::isfinite(wake)) {
          cv.wait_until(lock,
                        job.t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                     std::chrono::duration<double, std::milli>(wake)),
                        [&] { return !done_q.empty(); });
        } else {
          cv.wait(lock, [&] { return !done_q.empty(); });
        }
        batch.swap(done_q);
      }
      for (auto& c : batch) {
        busy[c.worker] = false;
        --running;
        record(c.worker, c.index, c.start, c.end, c.ok ? TaskStatus::Success : TaskStatus::Failed);
        if (c.ok)
          ++done;
        else
          failed(c.index, c.error);
      }
    }
    if (fatal) throw Error(Errc::JobFailed, *fatal);
  }

  ClusterModel cluster_;
  SchedPolicy policy_;
  std::shared_ptr<detail::ShuffleStore> store_;
  std::unique_ptr<detail::WorkerPool> pool_;
  FaultPlan plan_;
  RunMetrics metrics_;
  std::size_t launched_ = 0;
  std::size_t jobs_ = 0;
  std::size_t next_broadcast_ = 0;
};

template <typename T>
Dataset<T> Dataset<T>::repartition(std::size_t partitions) const {
  if (partitions == 0) throw Error(Errc::ZeroPartitions, "repartition");
  return Dataset<T>(ctx_, std::make_shared<const detail::RepartitionNode<T>>(node_, partitions,
                                                                              ctx_->shuffle_store()));
}

template <typename T>
template <typename Op>
  requires is_pair<T>::value
Dataset<T> Dataset<T>::reduce_by_key(Op op, std::size_t partitions) const {
  if (partitions == 0) throw Error(Errc::ZeroPartitions, "reduce_by_key");
  using K = typename T::first_type;
  using V = typename T::second_type;
  return Dataset<T>(ctx_, std::make_shared<const detail::ReduceByKeyNode<K, V, Op>>(
                              node_, std::move(op), partitions, ctx_->shuffle_store()));
}

template <typename T>
std::vector<T> Dataset<T>::collect() const {
  std::vector<std::vector<T>> parts(node_->num_partitions());
  const auto* node = node_.get();
  ctx_->run_job(*node_, [&parts, node](std::size_t p, const TaskContext& tc) {
    parts[p] = node->compute(p, tc);
  });
  std::vector<T> out;
  for (auto& p : parts) std::move(p.begin(), p.end(), std::back_inserter(out));
  return out;
}

template <typename T>
template <typename Op>
T Dataset<T>::reduce(Op op) const {
  std::vector<std::optional<T>> parts(node_->num_partitions());
  const auto* node = node_.get();
  ctx_->run_job(*node_, [&parts, node, &op](std::size_t p, const TaskContext& tc) {
    std::optional<T> acc;
    for (auto& v : node->compute(p, tc)) acc = acc ? std::invoke(op, std::move(*acc), v) : std::move(v);
    parts[p] = std::move(acc);
  });
  std::optional<T> acc;
  for (auto& p : parts) {
    if (!p) continue;
    acc = acc ? std::invoke(op, std::move(*acc), std::move(*p)) : std::move(*p);
  }
  if (!acc) throw Error(Errc::EmptyCollection, "reduce of an empty collection");
  return std::move(*acc);
}

template <typename T>
std::size_t Dataset<T>::count() const {
  std::vector<std::size_t> parts(node_->num_partitions(), 0);
  const auto* node = node_.get();
  ctx_->run_job(*node_, [&parts, node](std::size_t p, const TaskContext& tc) {
    parts[p] = node->compute(p, tc).size();
  });
  std::size_t n = 0;
  for (auto c : parts) n += c;
  return n;
}

}  // namespace kira
