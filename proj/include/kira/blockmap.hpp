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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kira/error.hpp"

namespace kira {

/// Simulated cluster: nodes are numbered 0..nodes-1. `racks` maps node to
/// rack id; left empty, every node sits in rack 0.
struct ClusterModel {
  int nodes = 1;
  int cores_per_node = 8;
  std::vector<int> racks;

  void validate() const {
    if (nodes < 1) throw Error(Errc::InvalidArgument, "cluster needs at least one node");
    if (cores_per_node < 1) throw Error(Errc::InvalidArgument, "cores per node must be >= 1");
    if (!racks.empty() && racks.size() != static_cast<std::size_t>(nodes))
      throw Error(Errc::InvalidArgument, "rack map must cover every node");
  }
  int total_slots() const { return nodes * cores_per_node; }
  int rack_of(int node) const { return racks.empty() ? 0 : racks[static_cast<std::size_t>(node)]; }
  int rack_count() const {
    if (racks.empty()) return 1;
    return *std::max_element(racks.begin(), racks.end()) + 1;
  }
};

enum class StoreMode { Local, SimDfs, SharedFs };

constexpr std::string_view to_string(StoreMode m) noexcept {
  switch (m) {
    case StoreMode::Local: return "local";
    case StoreMode::SimDfs: return "simdfs";
    case StoreMode::SharedFs: return "sharedfs";
  }
  return "unknown";
}

struct AccessRecord {
  bool local = false;
};

/// Metadata-only replicated file store. File bytes stay on the host
/// filesystem under `root()`; the map records which simulated nodes hold a
/// replica of each file. One file is one block.
class BlockMap {
 public:
  struct Options {
    int replication = 2;
    std::uint64_t seed = 0;
    double skew = 0;
    StoreMode mode = StoreMode::SimDfs;
  };

  /// Places every regular file directly under `dir`.
  static BlockMap ingest(const std::filesystem::path& dir, const ClusterModel& cluster,
                         const Options& opts) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
      throw Error(Errc::NoSuchDirectory, dir.string());
    std::vector<std::string> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file()) paths.push_back(entry.path().filename().generic_string());
    }
    auto map = place(std::move(paths), cluster, opts);
    map.root_ = dir;
    return map;
  }

  /// Places a list of (possibly virtual) paths; used directly by the simulator.
  static BlockMap place(std::vector<std::string> paths, const ClusterModel& cluster,
                        const Options& opts) {
    cluster.validate();
    if (opts.replication < 1) throw Error(Errc::InvalidArgument, "replication must be >= 1");
    if (!(opts.skew >= 0)) throw Error(Errc::InvalidArgument, "skew must be >= 0");
    BlockMap map;
    map.mode_ = opts.mode;
    map.nodes_ = opts.mode == StoreMode::Local ? 1 : cluster.nodes;
    map.requested_ = opts.replication;
    map.replication_ = std::min(opts.replication, map.nodes_);
    map.seed_ = opts.seed;
    std::sort(paths.begin(), paths.end());
    paths.erase(std::unique(paths.begin(), paths.end()), paths.end());

    std::mt19937_64 rng(opts.seed);
    std::vector<double> first_weights(static_cast<std::size_t>(map.nodes_), 1.0);
    first_weights[0] += opts.skew;
    std::discrete_distribution<int> first(first_weights.begin(), first_weights.end());
    std::vector<int> pool(static_cast<std::size_t>(map.nodes_));
    for (auto& path : paths) {
      std::vector<int> nodes;
      if (opts.mode != StoreMode::SharedFs) {
        std::iota(pool.begin(), pool.end(), 0);
        const int head = first(rng);
        std::swap(pool[0], pool[static_cast<std::size_t>(head)]);
        // Partial Fisher-Yates over the remaining nodes.
        for (int i = 1; i < map.replication_; ++i) {
          std::uniform_int_distribution<int> pick(i, map.nodes_ - 1);
          std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
        }
        nodes.assign(pool.begin(), pool.begin() + map.replication_);
      }
      map.entries_.emplace(std::move(path), std::move(nodes));
    }
    return map;
  }

  /// Parses a manifest written by `manifest()`.
  static BlockMap from_manifest(std::string_view text, std::filesystem::path root, int nodes,
                                StoreMode mode = StoreMode::SimDfs) {
    BlockMap map;
    map.mode_ = mode;
    map.nodes_ = nodes;
    map.root_ = std::move(root);
    std::istringstream in{std::string(text)};
    std::string line;
    int r = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw Error(Errc::InvalidArgument, "manifest line without tab");
      std::vector<int> ids;
      std::istringstream list(line.substr(tab + 1));
      for (std::string tok; std::getline(list, tok, ',');) {
        if (tok.empty()) continue;
        const int id = std::stoi(tok);
        if (id < 0 || id >= nodes) throw Error(Errc::InvalidArgument, "manifest node out of range");
        ids.push_back(id);
      }
      r = std::max(r, static_cast<int>(ids.size()));
      map.entries_.emplace(line.substr(0, tab), std::move(ids));
    }
    map.replication_ = map.requested_ = std::max(r, 1);
    return map;
  }

  /// Replica node ids; empty in shared-FS mode.
  const std::vector<int>& locate(const std::string& path) const {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw Error(Errc::UnknownPath, path);
    return it->second;
  }

  bool is_local(const std::string& path, int node) const {
    const auto& r = locate(path);
    return std::find(r.begin(), r.end(), node) != r.end();
  }

  /// Reads the file's bytes from the host filesystem on behalf of `from_node`.
  std::vector<std::uint8_t> read_file(const std::string& path, int from_node,
                                      AccessRecord* record = nullptr) const {
    const bool local = is_local(path, from_node);
    if (mode_ == StoreMode::SharedFs) metadata_ops_->fetch_add(1, std::memory_order_relaxed);
    (local ? counters_->local : counters_->remote).fetch_add(1, std::memory_order_relaxed);
    if (record) record->local = local;
    std::ifstream in(root_ / path, std::ios::binary);
    if (!in) throw Error(Errc::UnknownPath, (root_ / path).string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  /// Sorted paths.
  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [p, _] : entries_) out.push_back(p);
    return out;
  }

  /// `path<TAB>n1,n2` per line, path-sorted, LF endings.
  std::string manifest() const {
    std::string out;
    for (const auto& [path, nodes] : entries_) {
      out += path;
      out += '\t';
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(nodes[i]);
      }
      out += '\n';
    }
    return out;
  }

  /// Number of replicas held by each node.
  std::vector<std::size_t> replica_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(nodes_), 0);
    for (const auto& [_, nodes] : entries_)
      for (int n : nodes) ++counts[static_cast<std::size_t>(n)];
    return counts;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  StoreMode mode() const { return mode_; }
  int nodes() const { return nodes_; }
  int replication() const { return replication_; }
  int requested_replication() const { return requested_; }
  bool replication_clamped() const { return requested_ > replication_; }
  std::uint64_t seed() const { return seed_; }
  const std::filesystem::path& root() const { return root_; }
  std::uint64_t metadata_ops() const { return metadata_ops_->load(); }
  std::uint64_t local_reads() const { return counters_->local.load(); }
  std::uint64_t remote_reads() const { return counters_->remote.load(); }

 private:
  struct Counters {
    std::atomic<std::uint64_t> local{0};
    std::atomic<std::uint64_t> remote{0};
  };

  std::map<std::string, std::vector<int>> entries_;
  std::filesystem::path root_;
  StoreMode mode_ = StoreMode::SimDfs;
  int nodes_ = 1;
  int replication_ = 1;
  int requested_ = 1;
  std::uint64_t seed_ = 0;
  std::shared_ptr<std::atomic<std::uint64_t>> metadata_ops_ =
      std::make_shared<std::atomic<std::uint64_t>>(0);
  std::shared_ptr<Counters> counters_ = std::make_shared<Counters>();
};

}  // namespace kira
