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
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kira/blockmap.hpp"
#include "kira/catalog.hpp"
#include "kira/dataflow.hpp"
#include "kira/pipeline.hpp"
#include "kira/sched.hpp"

namespace kira::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitFailed = 2;

/// Everything the extract pipeline needs from the command line.
struct PipelineConfig {
  std::string input_dir;
  std::string output_path;
  std::string metrics_path;  // default: <output>.metrics.json
  std::string records_path;  // default: <output>.tasks.jsonl
  std::string mode = "simdfs";
  int nodes = 1;
  int cores_per_node = 8;
  int replication = 2;
  std::uint64_t seed = 0;
  double skew = 0;
  double thresh_sigma = 1.5;
  int min_area = 5;
  int cell_size = 64;
  int iterations = 1;
  double mask_scale = 3.0;
  double wait_node_ms = 0;
  std::string policy = "delay";
  int subpix = 5;
  std::vector<std::string> fail_tasks;  // stage:partition[:attempt]
  std::vector<std::string> kill_slots;  // node:slot:after_tasks
};

namespace detail {

inline StoreMode parse_mode(const std::string& s) {
  if (s == "local") return StoreMode::Local;
  if (s == "simdfs") return StoreMode::SimDfs;
  if (s == "sharedfs") return StoreMode::SharedFs;
  throw Error(Errc::InvalidArgument, "unknown mode " + s);
}

inline SchedPolicy parse_policy(const std::string& s, double wait_node_ms) {
  if (s == "delay") return SchedPolicy::delay(wait_node_ms);
  if (s == "static") return SchedPolicy::static_partition();
  throw Error(Errc::InvalidArgument, "unknown policy " + s);
}

inline ClusterModel cluster_for(StoreMode mode, int nodes, int cores) {
  ClusterModel c{mode == StoreMode::Local ? 1 : nodes, cores, {}};
  c.validate();
  return c;
}

inline std::vector<long long> split_ints(const std::string& s, char sep, std::size_t min_n, std::size_t max_n) {
  std::vector<long long> v;
  std::istringstream in(s);
  for (std::string tok; std::getline(in, tok, sep);) {
    std::size_t used = 0;
    long long x = 0;
    try {
      x = std::stoll(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || tok.empty() || x < 0) throw Error(Errc::InvalidArgument, "bad number in '" + s + "'");
    v.push_back(x);
  }
  if (v.size() < min_n || v.size() > max_n) throw Error(Errc::InvalidArgument, "bad field count in '" + s + "'");
  return v;
}

inline FaultPlan parse_faults(const PipelineConfig& cfg) {
  FaultPlan plan;
  for (const auto& f : cfg.fail_tasks) {
    auto v = split_ints(f, ':', 2, 3);
    plan.fail_tasks.push_back({static_cast<int>(v[0]), static_cast<std::size_t>(v[1]),
                               v.size() > 2 ? static_cast<int>(v[2]) : 0});
  }
  for (const auto& k : cfg.kill_slots) {
    auto v = split_ints(k, ':', 3, 3);
    plan.kill_slots.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<std::size_t>(v[2])});
  }
  return plan;
}

inline PipelineParams pipeline_params(const PipelineConfig& cfg) {
  if (cfg.subpix < 1 || cfg.subpix > 101) throw Error(Errc::InvalidArgument, "subpix must be in [1, 101]");
  if (cfg.min_area < 1) throw Error(Errc::InvalidArgument, "minarea must be >= 1");
  if (cfg.cell_size < 8) throw Error(Errc::InvalidArgument, "cellsize must be >= 8");
  PipelineParams p;
  p.extract.thresh_sigma = cfg.thresh_sigma;
  p.extract.min_area = static_cast<std::size_t>(cfg.min_area);
  p.background.cell_size = static_cast<std::size_t>(cfg.cell_size);
  p.iterations = cfg.iterations;
  p.mask_scale = cfg.mask_scale;
  p.validate();
  return p;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::InvalidArgument, "cannot write " + path);
  out << text;
  if (!out) throw Error(Errc::InvalidArgument, "write failed for " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::UnknownPath, path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline BlockMap ingest_checked(const std::string& dir, const ClusterModel& cluster, int replication,
                               std::uint64_t seed, double skew, StoreMode mode, std::ostream& err) {
  BlockMap::Options o;
  o.replication = replication;
  o.seed = seed;
  o.skew = skew;
  o.mode = mode;
  auto map = BlockMap::ingest(dir, cluster, o);
  if (map.replication_clamped() && mode == StoreMode::SimDfs) {
    err << "warning: replication " << map.requested_replication() << " exceeds " << map.nodes()
        << " nodes; clamped to " << map.replication() << "\n";
  }
  return map;
}

struct PipelineRun {
  std::vector<FileCatalog> files;
  RunMetrics metrics;
  SchedPolicy policy;
};

// Runs the extract DAG. Throws Error: input problems as their own codes,
// execution failures as JobFailed.
inline PipelineRun run_extract(const PipelineConfig& cfg, std::ostream& err) {
  const auto mode = parse_mode(cfg.mode);
  if (cfg.replication < 1) throw Error(Errc::InvalidArgument, "replication must be >= 1");
  const auto policy = parse_policy(cfg.policy, cfg.wait_node_ms);
  const auto params = pipeline_params(cfg);
  const auto cluster = cluster_for(mode, cfg.nodes, cfg.cores_per_node);
  auto store = std::make_shared<const BlockMap>(
      ingest_checked(cfg.input_dir, cluster, cfg.replication, cfg.seed, cfg.skew, mode, err));
  if (store->empty()) throw Error(Errc::NoSuchDirectory, "no input files in " + cfg.input_dir);
  Context ctx(cluster, policy);
  ctx.set_fault_plan(parse_faults(cfg));
  PipelineRun run;
  run.files = run_pipeline(ctx, store, params);
  run.metrics = ctx.last_metrics();
  run.policy = policy;
  return run;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == Errc::JobFailed ? kExitFailed : kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

inline int cmd_extract(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto run = run_extract(cfg, err);
    std::size_t bad = 0, objects = 0;
    for (const auto& f : run.files) {
      if (!f.ok()) {
        err << "error: " << f.path << ": " << f.error << "\n";
        ++bad;
      }
      objects += f.objects.size();
    }
    if (bad) {
      err << bad << " of " << run.files.size() << " input files could not be parsed\n";
      return kExitInput;
    }
    write_text(cfg.output_path, catalog_csv(run.files));
    const auto metrics_path = cfg.metrics_path.empty() ? cfg.output_path + ".metrics.json" : cfg.metrics_path;
    const auto records_path = cfg.records_path.empty() ? cfg.output_path + ".tasks.jsonl" : cfg.records_path;
    write_text(metrics_path, summary_json(run.metrics, run.policy).dump(2) + "\n");
    write_text(records_path, run.metrics.to_jsonl());
    out << run.files.size() << " files, " << objects << " objects, hit_ratio "
        << format_g6(run.metrics.hit_ratio()) << ", makespan_ms " << format_g6(run.metrics.makespan_ms())
        << "\n";
    return kExitOk;
  });
}

struct IngestConfig {
  std::string input_dir;
  std::string output_path;
  std::string mode = "simdfs";
  int nodes = 16;
  int replication = 2;
  std::uint64_t seed = 0;
  double skew = 0;
};

inline int cmd_ingest(const IngestConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto mode = parse_mode(cfg.mode);
    const auto cluster = cluster_for(mode, cfg.nodes, 1);
    const auto map = ingest_checked(cfg.input_dir, cluster, cfg.replication, cfg.seed, cfg.skew, mode, err);
    if (cfg.output_path.empty() || cfg.output_path == "-")
      out << map.manifest();
    else
      write_text(cfg.output_path, map.manifest());
    return kExitOk;
  });
}

struct SimConfig {
  std::size_t files = 11150;
  std::string manifest;
  std::vector<int> nodes{16};
  std::vector<int> cores{8};
  std::vector<int> replication{2};
  std::vector<std::string> policies{"delay"};
  std::vector<double> waits{0};
  std::uint64_t seed = 0;
  double skew = 0;
  TaskModel model;
  std::string output_path;
  std::string records_path;
};

inline std::vector<std::string> virtual_files(std::size_t n) {
  std::vector<std::string> v;
  v.reserve(n);
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "img%07zu.fits", i);
    v.emplace_back(buf);
  }
  return v;
}

inline BlockMap sim_map(const SimConfig& cfg, int nodes, int replication) {
  if (!cfg.manifest.empty()) return BlockMap::from_manifest(read_text(cfg.manifest), "", nodes);
  BlockMap::Options o;
  o.replication = replication;
  o.seed = cfg.seed;
  o.skew = cfg.skew;
  return BlockMap::place(virtual_files(cfg.files), ClusterModel{nodes, 1, {}}, o);
}

inline int cmd_simulate(const SimConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const int nodes = cfg.nodes.at(0), cores = cfg.cores.at(0);
    const ClusterModel cluster{nodes, cores, {}};
    const auto policy = parse_policy(cfg.policies.at(0), cfg.waits.at(0));
    const auto map = sim_map(cfg, nodes, cfg.replication.at(0));
    const auto m = simulate(cluster, map, policy, cfg.model, cfg.seed);
    const auto summary = summary_json(m, policy).dump(2) + "\n";
    if (cfg.output_path.empty() || cfg.output_path == "-")
      out << summary;
    else
      write_text(cfg.output_path, summary);
    if (!cfg.records_path.empty()) write_text(cfg.records_path, m.to_jsonl());
    return kExitOk;
  });
}

struct BenchConfig {
  PipelineConfig pipeline;  // input_dir set: real extraction runs
  SimConfig sim;
  std::string output_path;
};

inline constexpr std::string_view kBenchHeader =
    "kind,mode,nodes,cores,policy,wait_node_ms,replication,tasks,makespan_ms,hit_ratio,speedup";

// Real runs sweep cores per node (worker slots) against a single-slot
// baseline; simulated runs sweep nodes x cores x policy x wait x replication
// against the single-slot total service time.
inline int cmd_bench(const BenchConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::ostringstream table;
    table << kBenchHeader << "\n";
    auto row = [&](std::string_view kind, std::string_view mode, int nodes, int cores, const SchedPolicy& p,
                   int r, const RunMetrics& m, double base) {
      table << kind << ',' << mode << ',' << nodes << ',' << cores << ',' << to_string(p.kind) << ','
            << format_g6(p.wait_node_ms) << ',' << r << ',' << m.tasks() << ',' << format_g6(m.makespan_ms())
            << ',' << format_g6(m.hit_ratio()) << ',' << format_g6(base / m.makespan_ms()) << "\n";
    };
    if (!cfg.pipeline.input_dir.empty()) {
      PipelineConfig base_cfg = cfg.pipeline;
      base_cfg.mode = "local";
      base_cfg.cores_per_node = 1;
      base_cfg.fail_tasks.clear();
      base_cfg.kill_slots.clear();
      const auto baseline = run_extract(base_cfg, err);
      const double base = baseline.metrics.makespan_ms();
      row("extract", "local", 1, 1, baseline.policy, 1, baseline.metrics, base);
      for (int cores : cfg.sim.cores) {
        PipelineConfig c = cfg.pipeline;
        c.cores_per_node = cores;
        const auto run = run_extract(c, err);
        const bool local = c.mode == "local";
        row("extract", c.mode, local ? 1 : c.nodes, cores, run.policy, local ? 1 : c.replication, run.metrics, base);
      }
    } else {
      // Total work on one slot with every read local.
      SimConfig one = cfg.sim;
      const auto one_map = sim_map(one, 1, 1);
      const double base =
          simulate(ClusterModel{1, 1, {}}, one_map, SchedPolicy::delay(0), cfg.sim.model, cfg.sim.seed).makespan_ms();
      for (int nodes : cfg.sim.nodes)
        for (int cores : cfg.sim.cores)
          for (int r : cfg.sim.replication) {
            const auto map = sim_map(cfg.sim, nodes, r);
            for (const auto& pol : cfg.sim.policies)
              for (double w : cfg.sim.waits) {
                const auto policy = parse_policy(pol, w);
                if (policy.kind == PolicyKind::StaticPartition && w != cfg.sim.waits.front()) continue;
                const auto m = simulate(ClusterModel{nodes, cores, {}}, map, policy, cfg.sim.model, cfg.sim.seed);
                row("simulate", "simdfs", nodes, cores, policy, map.replication(), m, base);
              }
          }
    }
    if (cfg.output_path.empty() || cfg.output_path == "-")
      out << table.str();
    else
      write_text(cfg.output_path, table.str());
    return kExitOk;
  });
}

inline void add_cluster_flags(CLI::App* app, PipelineConfig& c) {
  app->add_option("--mode", c.mode, "Storage mode")->check(CLI::IsMember({"local", "simdfs", "sharedfs"}))
      ->capture_default_str();
  app->add_option("--nodes", c.nodes, "Simulated nodes")->check(CLI::Range(1, 4096))->capture_default_str();
  app->add_option("--replication", c.replication, "Replicas per file (default: min(2, nodes))")
      ->check(CLI::Range(1, 64));
  app->add_option("--seed", c.seed, "Placement seed")->capture_default_str();
  app->add_option("--skew", c.skew, "Extra first-replica weight of node 0")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--policy", c.policy, "Scheduling policy")->check(CLI::IsMember({"delay", "static"}))
      ->capture_default_str();
  app->add_option("--wait-node-ms", c.wait_node_ms, "Node locality wait")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

inline void add_extract_flags(CLI::App* app, PipelineConfig& c) {
  app->add_option("--cores", c.cores_per_node, "Worker slots per node")->check(CLI::Range(1, 1024))
      ->capture_default_str();
  app->add_option("--thresh", c.thresh_sigma, "Detection threshold in rms units")->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--minarea", c.min_area, "Minimum object area in pixels")->check(CLI::Range(1, 1 << 30))
      ->capture_default_str();
  app->add_option("--cellsize", c.cell_size, "Background cell size")->check(CLI::Range(8, 1 << 20))
      ->capture_default_str();
  app->add_option("--iterations", c.iterations, "Refinement passes")->check(CLI::Range(1, 1000))
      ->capture_default_str();
  app->add_option("--mask-scale", c.mask_scale, "Ellipse scale used to mask detections")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--subpix", c.subpix, "Aperture sub-sampling")->check(CLI::Range(1, 101))
      ->capture_default_str();
  app->add_option("--fail-task", c.fail_tasks, "Inject a task failure: stage:partition[:attempt]");
  app->add_option("--kill-slot", c.kill_slots, "Kill a worker slot: node:slot:after_tasks");
}

}  // namespace detail

/// Entry point shared by the binary and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Source extraction on a simulated many-task dataflow cluster", "kira"};
  app.require_subcommand(1);

  PipelineConfig ex;
  auto* extract = app.add_subcommand("extract", "Extract a catalog from a directory of FITS images");
  extract->add_option("--input", ex.input_dir, "Input directory")->required();
  extract->add_option("--output", ex.output_path, "Catalog CSV path")->required();
  extract->add_option("--metrics", ex.metrics_path, "Metrics JSON path");
  extract->add_option("--records", ex.records_path, "Per-task JSON lines path");
  detail::add_cluster_flags(extract, ex);
  detail::add_extract_flags(extract, ex);

  detail::IngestConfig ing;
  auto* ingest = app.add_subcommand("ingest", "Place a directory's files and write the manifest");
  ingest->add_option("--input", ing.input_dir, "Input directory")->required();
  ingest->add_option("--output", ing.output_path, "Manifest path (default stdout)");
  ingest->add_option("--mode", ing.mode, "Storage mode")->check(CLI::IsMember({"local", "simdfs", "sharedfs"}));
  ingest->add_option("--nodes", ing.nodes, "Simulated nodes")->check(CLI::Range(1, 4096))->capture_default_str();
  ingest->add_option("--replication", ing.replication, "Replicas per file")->check(CLI::Range(1, 64))
      ->capture_default_str();
  ingest->add_option("--seed", ing.seed, "Placement seed");
  ingest->add_option("--skew", ing.skew, "Extra first-replica weight of node 0")->check(CLI::NonNegativeNumber);

  detail::SimConfig sim;
  std::string sim_policy = "delay";
  auto* simulate_cmd = app.add_subcommand("simulate", "Discrete-event scheduling run without extraction");
  auto add_model = [](CLI::App* a, detail::SimConfig& s) {
    a->add_option("--files", s.files, "Number of virtual files")->capture_default_str();
    a->add_option("--manifest", s.manifest, "Use placements from an ingest manifest");
    a->add_option("--seed", s.seed, "Placement and service-time seed");
    a->add_option("--skew", s.skew, "Extra first-replica weight of node 0")->check(CLI::NonNegativeNumber);
    a->add_option("--task-mean-ms", s.model.local_mean_ms, "Mean local task time")->check(CLI::PositiveNumber)
        ->capture_default_str();
    a->add_option("--task-sigma", s.model.sigma, "Lognormal sigma of task time")->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    a->add_option("--remote-penalty", s.model.remote_penalty, "Remote/local cost ratio")
        ->check(CLI::Range(1.0, 1e6))->capture_default_str();
  };
  add_model(simulate_cmd, sim);
  int sim_nodes = 16, sim_cores = 8, sim_r = 2;
  double sim_wait = 0;
  simulate_cmd->add_option("--nodes", sim_nodes, "Simulated nodes")->check(CLI::Range(1, 4096))->capture_default_str();
  simulate_cmd->add_option("--cores", sim_cores, "Slots per node")->check(CLI::Range(1, 1024))->capture_default_str();
  simulate_cmd->add_option("--replication", sim_r, "Replicas per file")->check(CLI::Range(1, 64))
      ->capture_default_str();
  simulate_cmd->add_option("--policy", sim_policy, "Scheduling policy")->check(CLI::IsMember({"delay", "static"}))
      ->capture_default_str();
  simulate_cmd->add_option("--wait-node-ms", sim_wait, "Node locality wait")->check(CLI::NonNegativeNumber);
  simulate_cmd->add_option("--output", sim.output_path, "Summary JSON path (default stdout)");
  simulate_cmd->add_option("--records", sim.records_path, "Per-task JSON lines path");

  detail::BenchConfig bench;
  auto* bench_cmd = app.add_subcommand("bench", "Sweep configurations and report makespan and speedup");
  bench_cmd->add_option("--input", bench.pipeline.input_dir, "FITS directory (omit to use the simulator)");
  bench_cmd->add_option("--output", bench.output_path, "Table path (default stdout)");
  bench_cmd->add_option("--mode", bench.pipeline.mode, "Storage mode for extraction runs")
      ->check(CLI::IsMember({"local", "simdfs", "sharedfs"}));
  bench_cmd->add_option("--thresh", bench.pipeline.thresh_sigma, "Detection threshold")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--minarea", bench.pipeline.min_area, "Minimum object area")->check(CLI::Range(1, 1 << 30));
  bench_cmd->add_option("--cellsize", bench.pipeline.cell_size, "Background cell size")->check(CLI::Range(8, 1 << 20));
  bench_cmd->add_option("--iterations", bench.pipeline.iterations, "Refinement passes")->check(CLI::Range(1, 1000));
  bench_cmd->add_option("--mask-scale", bench.pipeline.mask_scale, "Mask ellipse scale")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--subpix", bench.pipeline.subpix, "Aperture sub-sampling")->check(CLI::Range(1, 101));
  add_model(bench_cmd, bench.sim);
  bench.sim.policies = {"delay", "static"};
  bench.sim.cores = {1, 2, 4, 8};
  bench_cmd->add_option("--nodes", bench.sim.nodes, "Node counts")->delimiter(',');
  auto* bench_cores = bench_cmd->add_option("--cores", bench.sim.cores, "Slots per node")->delimiter(',');
  bench_cmd->add_option("--replication", bench.sim.replication, "Replication factors")->delimiter(',');
  bench_cmd->add_option("--policy", bench.sim.policies, "Policies")->delimiter(',')
      ->check(CLI::IsMember({"delay", "static"}));
  bench_cmd->add_option("--wait-node-ms", bench.sim.waits, "Node locality waits")->delimiter(',')
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  if (*extract) {
    if (extract->count("--replication") == 0) ex.replication = std::min(ex.replication, ex.nodes);
    return detail::cmd_extract(ex, out, err);
  }
  if (*ingest) return detail::cmd_ingest(ing, out, err);
  if (*simulate_cmd) {
    sim.nodes = {sim_nodes};
    sim.cores = {sim_cores};
    sim.replication = {sim_r};
    sim.policies = {sim_policy};
    sim.waits = {sim_wait};
    return detail::cmd_simulate(sim, out, err);
  }
  // Extraction runs sweep slots 1,2,4,8 by default; the simulator uses 8 per node.
  if (bench.pipeline.input_dir.empty() && bench_cores->count() == 0) bench.sim.cores = {8};
  bench.pipeline.nodes = bench.sim.nodes.front();
  bench.pipeline.replication = bench.sim.replication.front();
  bench.pipeline.seed = bench.sim.seed;
  bench.pipeline.skew = bench.sim.skew;
  bench.pipeline.policy = bench.sim.policies.front();
  bench.pipeline.wait_node_ms = bench.sim.waits.front();
  return detail::cmd_bench(bench, out, err);
}

}  // namespace kira::cli
