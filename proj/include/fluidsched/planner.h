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

#include <string>
#include <string_view>
#include <vector>

#include "fluidsched/model.h"
#include "fluidsched/simplex.h"

namespace fluidsched {

enum class SliMode { kOff, kHard, kPenalty };

// Hard mode enforces the bound `eta`. Penalty mode subtracts
// weight * max(0, violation above eta) from the objective.
struct SliConstraint {
  SliMode mode = SliMode::kOff;
  double eta = 0.0;
  double weight = 0.0;

  bool active() const { return mode != SliMode::kOff; }
};

struct SliSpec {
  SliConstraint prefill_fairness;  // |x_i - x_j|
  SliConstraint decode_fairness;   // |y_s,i - y_s,j|
  SliConstraint tpot;              // seconds per output token
  bool force_zero_decode_buffer = false;

  bool any_active() const {
    return prefill_fairness.active() || decode_fairness.active() ||
           tpot.active();
  }
};

enum class SliAxis { kPrefillFairness, kDecodeFairness, kTpot };

std::string_view axis_name(SliAxis axis);
SliAxis parse_axis(std::string_view name);
std::string_view sli_mode_name(SliMode mode);
SliMode parse_sli_mode(std::string_view name);

// Per-GPU fluid quantities for one class.
struct ClassPlan {
  double x = 0.0;    // prefill occupancy
  double y_m = 0.0;  // decodes on mixed GPUs
  double y_s = 0.0;  // decodes on solo GPUs
  double q_p = 0.0;  // prefill queue
  double q_d = 0.0;  // decode buffer
};

struct PlanDuals {
  double prefill_capacity = 0.0;
  double mixed_capacity = 0.0;
  double solo_capacity = 0.0;
  std::vector<double> prefill_flow;
  std::vector<double> decode_flow;
  // d objective / d eta for each active SLI, zero when off.
  double prefill_fairness = 0.0;
  double decode_fairness = 0.0;
  double tpot = 0.0;
};

struct FluidPlan {
  ChargingScheme scheme = ChargingScheme::kBundled;
  std::vector<ClassPlan> classes;
  double objective = 0.0;  // LP objective, penalties included
  PlanDuals duals;
  SliSpec sli;

  double mixed_fraction() const;
  double total_q_d() const;
};

// Index map from plan quantities to LP columns and rows. -1 when absent.
struct LpLayout {
  std::vector<int> x, y_m, y_s, q_p, q_d;
  int prefill_fair_slack = -1;
  int decode_fair_slack = -1;
  int tpot_slack = -1;

  int prefill_capacity_row = -1;
  int mixed_capacity_row = -1;
  int solo_capacity_row = -1;
  std::vector<int> prefill_flow_rows, decode_flow_rows;
  std::vector<int> prefill_fair_rows, decode_fair_rows, tpot_rows;
};

struct PlanningLp {
  LpProblem problem;
  LpLayout layout;
};

constexpr int kTpotTangentCuts = 64;

PlanningLp build_lp(const Instance& instance, const SliSpec& sli,
                    ChargingScheme scheme);

// Throws kInfeasible or kUnbounded.
FluidPlan solve_plan(const Instance& instance, const SliSpec& sli,
                     ChargingScheme scheme);

inline FluidPlan solve_plan(const Instance& instance) {
  return solve_plan(instance, SliSpec{}, instance.pricing.scheme);
}

// Revenue rate per GPU of a plan under `scheme`, from its raw fields.
double plan_revenue(const Instance& instance, const FluidPlan& plan,
                    ChargingScheme scheme);
// Revenue minus SLI penalties, matching the LP objective.
double plan_objective(const Instance& instance, const FluidPlan& plan);

// Largest violation of the plan's capacity and flow-balance constraints.
double plan_residual(const Instance& instance, const FluidPlan& plan);

// Rebuilds an optimal bundled plan with an empty decode buffer and the same
// bundled revenue. Throws kConditionViolated when the solo GPU is too slow,
// kZeroPatience when mass would move to a queue that never abandons, and
// kUnsupported for separate-scheme or SLI-constrained plans.
FluidPlan eliminate_decode_buffer(const FluidPlan& plan,
                                  const Instance& instance);

struct PolicyParams {
  int num_gpus = 0;
  int mixed_gpus = 0;                       // M
  std::vector<double> prefill_target;       // n x*
  std::vector<double> prefill_queue_target; // Q_p dagger, rounded n q_p*
  std::vector<double> solo_prob;            // p_s
  std::vector<double> mixed_weight;         // share of mixed completions
  std::vector<double> solo_weight;          // share of solo completions
  std::vector<double> decode_queue_mixed;   // (1 - p_s) q_d*
  std::vector<double> decode_queue_solo;    // p_s q_d*
  std::vector<double> priority;             // D / P
};

PolicyParams derive_policy_params(const FluidPlan& plan,
                                  const Instance& instance, int num_gpus);

struct FrontierPoint {
  double eta = 0.0;
  double objective = 0.0;
  bool feasible = false;
  double shadow_price = 0.0;
  FluidPlan plan;
};

// Solves the planning LP at each grid value with the axis constraint hard.
// Infeasible points are recorded, not thrown.
std::vector<FrontierPoint> sweep_frontier(const Instance& instance,
                                          SliAxis axis,
                                          const std::vector<double>& grid,
                                          ChargingScheme scheme,
                                          const SliSpec& base);

}  // namespace fluidsched
