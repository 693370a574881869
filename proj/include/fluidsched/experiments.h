/* Copyright 2026 The fluidsched Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fluidsched/fluid.h"
#include "fluidsched/io.h"
#include "fluidsched/model.h"
#include "fluidsched/planner.h"
#include "fluidsched/simulator.h"

namespace fluidsched {

enum class ExperimentKind {
  kConvergence,
  kBaselines,
  kFrontier,
  kHardwareSweep,
  kPricingGrid,
  kFluidTrace,
};

std::string_view experiment_name(ExperimentKind kind);
ExperimentKind parse_experiment(std::string_view name);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kConvergence;
  Instance instance;
  std::string instance_path;

  // Simulation experiments.
  std::vector<int> gpu_counts{500};
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<PolicyKind> policies{PolicyKind::kGateGreedy};
  // Scheme of the plan fed to planned policies. Defaults to the instance's.
  std::optional<ChargingScheme> plan_scheme;
  double horizon = 0.0;  // 0 picks one from the slowest decode rate
  double warmup_fraction = 0.3;

  // Frontier.
  SliAxis axis = SliAxis::kTpot;
  std::vector<double> grid;
  SliSpec base_sli;

  // Hardware sweep: one-dimensional grids keyed by B, alpha, beta, gamma.
  std::map<std::string, std::vector<double>> hardware_grids;
  // Optional pair of keys swept jointly for heatmaps.
  std::vector<std::string> heatmap;

  // Pricing grid.
  std::vector<double> price_totals{0.1, 0.3, 1.0};
  int ratio_points = 50;

  // Fluid trace.
  FluidPolicy fluid_policy = FluidPolicy::kGateGreedy;
  double fluid_horizon = 2000.0;
  double fluid_dt = 0.01;
  size_t fluid_record_every = 100;
};

// Parses an experiment JSON. Relative instance paths resolve against
// `base_dir`.
ExperimentSpec spec_from_json(const Json& j, const std::string& base_dir);
ExperimentSpec load_spec(const std::string& path);
Json to_json(const ExperimentSpec& spec);

// Parses "a:b:step" into an inclusive grid.
std::vector<double> parse_grid(std::string_view text);

// One long-format row. `seed` is empty for rows that do not depend on a
// replication.
struct ResultRow {
  std::string experiment;
  std::string config;
  std::string seed;
  std::string metric;
  double value = 0.0;
};

struct ResultTable {
  std::string experiment;
  std::string instance_hash;
  std::vector<ResultRow> rows;

  void add(std::string config, std::string seed, std::string metric,
           double value);
  // Throws kInvalidArgument when absent.
  double get(std::string_view config, std::string_view metric,
             std::string_view seed = "") const;
  std::vector<double> values(std::string_view config,
                             std::string_view metric) const;
  std::string to_csv() const;
};

// First line of every CSV the tool writes.
std::string provenance_line(const std::string& instance_hash);

// Worker count from FLUIDSCHED_THREADS, else the hardware concurrency.
int thread_count();

// Runs task(0..count-1) on `threads` workers. The first exception thrown is
// rethrown after all workers stop.
void parallel_for(size_t count, int threads,
                  const std::function<void(size_t)>& task);

// Horizon whose measurement window covers 50 mean mixed decode times of the
// slowest class.
double auto_horizon(const Instance& instance, double warmup_fraction);

double mean(const std::vector<double>& v);
// Sample standard deviation; 0 for fewer than two values.
double stddev(const std::vector<double>& v);

std::string convergence_config(PolicyKind policy, int n);
std::string baseline_config(PolicyKind policy);

ResultTable run_convergence(const ExperimentSpec& spec);
ResultTable run_baselines(const ExperimentSpec& spec);
ResultTable run_frontier(const ExperimentSpec& spec);
ResultTable run_hardware_sweep(const ExperimentSpec& spec);
ResultTable run_pricing_grid(const ExperimentSpec& spec);

struct FluidTraceResult {
  ResultTable summary;
  FluidModel model;
  FluidTrajectory trajectory;
};
FluidTraceResult run_fluid_trace(const ExperimentSpec& spec);

// CSV with columns t,class,q_p,q_d,x,y_m,y_s,W_d.
std::string trajectory_csv(const FluidModel& model,
                           const FluidTrajectory& trajectory,
                           const std::string& instance_hash);

// CSV with columns eta,objective,feasible,shadow_price.
std::string frontier_csv(const std::vector<FrontierPoint>& points,
                         const std::string& instance_hash);

// CSV with columns
// policy,n,seed,rev_per_gpu,class,x_occ,ym_occ,ys_occ,qp_scaled,qd_scaled,
// tpot_avg.
std::string metrics_csv(const std::vector<SimMetrics>& runs,
                        const std::string& instance_hash);

// Runs the experiment and writes results.csv (plus trajectory.csv or
// frontier.csv where relevant) and manifest.json into `out_dir`.
// Returns the written file names.
std::vector<std::string> run_experiment(const ExperimentSpec& spec,
                                        const std::string& out_dir);

}  // namespace fluidsched
