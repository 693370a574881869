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

#include <cstddef>
#include <string_view>
#include <vector>

#include "fluidsched/model.h"
#include "fluidsched/planner.h"

namespace fluidsched {

enum class FluidPolicy {
  kGateGreedy,
  kPrioritizeRoute,
  kSliAware,
  kSliAwareGeneral,
};

std::string_view fluid_policy_name(FluidPolicy policy);
FluidPolicy parse_fluid_policy(std::string_view name);

// Per-class fluid state. Decodes are tracked by the GPU group hosting them:
// `hosted_mixed` sit on mixed-group GPUs and run at mixed speed only while
// that GPU has a prefill, `hosted_solo` sit on solo-group GPUs. The greedy
// router uses a single buffer stored in `buffer_mixed`.
struct FluidClassState {
  double q_p = 0.0;
  double x = 0.0;
  double buffer_mixed = 0.0;
  double buffer_solo = 0.0;
  double hosted_mixed = 0.0;
  double hosted_solo = 0.0;
};

struct FluidState {
  std::vector<FluidClassState> classes;
};

// Observable quantities of one class.
struct FluidOccupancy {
  double q_p = 0.0;
  double x = 0.0;
  double q_d = 0.0;
  double y_m = 0.0;
  double y_s = 0.0;
};

// Flow rates of one class at a state.
struct FluidFlows {
  double arrival = 0.0;
  double prefill_abandon = 0.0;
  double admission = 0.0;
  double prefill_completion = 0.0;
  double decode_abandon = 0.0;
  double decode_completion = 0.0;
};

struct FluidModel {
  FluidPolicy policy = FluidPolicy::kGateGreedy;
  std::vector<WorkloadClass> classes;
  ServiceRates rates;
  int batch_size = 0;
  std::vector<double> target_x;    // x*
  double mixed_fraction = 0.0;     // sum of x*
  double mixed_capacity = 0.0;     // (B - 1) * mixed_fraction
  double solo_capacity = 0.0;      // B * (1 - mixed_fraction)
  PolicyParams params;             // solo_prob, weights, priority
  double epsilon = 0.05;           // boundary relaxation time, seconds
};

FluidModel make_fluid_model(const Instance& instance, const FluidPlan& plan,
                            FluidPolicy policy, double epsilon = 0.05);

FluidState empty_state(size_t num_classes);
// State sitting on the plan: pools hold y*, buffers hold q_d* in the pool
// split given by p_s (greedy keeps it in one buffer).
FluidState plan_state(const FluidModel& model, const FluidPlan& plan);

std::vector<FluidOccupancy> occupancies(const FluidModel& model,
                                        const FluidState& state);

// Time derivative. `flows`, when given, receives per-class rates.
FluidState fluid_rhs(const FluidModel& model, const FluidState& state,
                     std::vector<FluidFlows>* flows = nullptr);

// W_d = sum_i (q_d,i + y_m,i + y_s,i) / mu_m,i.
double weighted_decode_work(const FluidModel& model,
                            const FluidState& state);

// Right side of the closed-form W_d drift.
double decode_work_drift(const FluidModel& model, const FluidState& state);

struct FluidConfig {
  double dt = 0.01;
  double horizon = 100.0;
  size_t record_every = 1;
  double projection_tol = 1e-6;
  double drift_tol = 1e-6;
};

struct FluidDiagnostics {
  double max_projection = 0.0;
  double max_drift_identity_error = 0.0;
  size_t drift_checks = 0;
  size_t drift_violations = 0;
  double max_drift_excess = 0.0;
  size_t steps = 0;
};

struct FluidTrajectory {
  std::vector<double> times;
  std::vector<FluidState> states;
  FluidDiagnostics diagnostics;
};

// Classical RK4 with a policy sweep and projection after every step.
// Throws kStepTooLarge when a projection moves more than projection_tol.
FluidTrajectory integrate(const FluidModel& model, const FluidState& initial,
                          const FluidConfig& config);

// One RK4 step for y' = f(y) on a flat vector.
template <typename F>
std::vector<double> rk4_step(const F& f, const std::vector<double>& y,
                             double h) {
  const size_t n = y.size();
  std::vector<double> tmp(n);
  const std::vector<double> k1 = f(y);
  for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  const std::vector<double> k2 = f(tmp);
  for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  const std::vector<double> k3 = f(tmp);
  for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
  const std::vector<double> k4 = f(tmp);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

}  // namespace fluidsched
