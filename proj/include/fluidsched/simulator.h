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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fluidsched/model.h"
#include "fluidsched/planner.h"

namespace fluidsched {

enum class PolicyKind {
  kGateGreedy,         // static mixed/solo split, gate + greedy router
  kFcfsGreedy,         // static split, FCFS admission + greedy router
  kPrioritizeRoute,    // static split, D/P priority + greedy router
  kSliAware,           // static split, gate + pool-split router
  kSliAwareGeneral,    // pool split with per-class decode buffers
  kFcfsImmediate,      // dynamic GPUs, FCFS, decode stays in place
  kGateImmediate,      // dynamic GPUs, gate, decode stays in place
  kGateFree,           // dynamic GPUs, gate, decode routed anywhere
};

std::string_view policy_name(PolicyKind kind);
PolicyKind parse_policy(std::string_view name);
const std::vector<PolicyKind>& all_policies();
// Policies that read the fluid plan.
bool policy_needs_plan(PolicyKind kind);

struct SimConfig {
  PolicyKind policy = PolicyKind::kGateGreedy;
  int num_gpus = 1;
  double horizon = 1000.0;         // seconds
  double warmup_fraction = 0.3;    // discarded prefix of the horizon
  uint64_t seed = 1;
  // Recheck conservation laws and capacities after every event.
  bool audit = false;
  // Jobs leave after prefill; each GPU then serves one prefill at a time.
  bool prefill_only = false;
  // Record per-class admission order for FCFS checks.
  bool record_admissions = false;
};

struct ClassMetrics {
  // Time averages over the measurement window, divided by n.
  double x_occ = 0.0;
  double ym_occ = 0.0;
  double ys_occ = 0.0;
  double qp_scaled = 0.0;
  double qd_scaled = 0.0;
  // Average seconds per output token of decodes finished in the window.
  double tpot = 0.0;
  double revenue_per_gpu = 0.0;

  uint64_t arrivals = 0;
  uint64_t prefill_abandons = 0;
  uint64_t decode_abandons = 0;
  uint64_t prefill_completions = 0;
  uint64_t decode_completions = 0;
};

struct SimMetrics {
  PolicyKind policy = PolicyKind::kGateGreedy;
  int num_gpus = 0;
  uint64_t seed = 0;
  double window = 0.0;
  double revenue_per_gpu = 0.0;
  double tpot = 0.0;
  std::vector<ClassMetrics> classes;
  uint64_t events = 0;
  uint64_t audit_failures = 0;
  // Per-class job arrival ordinals in admission order.
  std::vector<std::vector<uint64_t>> admission_order;
};

// Runs one replication. `plan` is required for planned policies and is
// otherwise ignored. Throws kPlanMissing.
SimMetrics simulate(const Instance& instance, const SimConfig& config,
                    const FluidPlan* plan);

// Runs twice and throws kNondeterminism unless the results match bit for
// bit.
SimMetrics simulate_checked(const Instance& instance, const SimConfig& config,
                            const FluidPlan* plan);

// Gate choice among waiting classes: argmin (X_i - n x_i*) / x_i* over
// classes with x_i* > 0, ties to the largest Q_i - Q_i dagger, then the
// lowest index. Returns nullopt to leave the slot idle. With `cap_at_target`
// only classes below their target are eligible.
std::optional<int> gate_decision(const std::vector<int>& prefill_counts,
                                 const std::vector<int>& queue_lengths,
                                 const PolicyParams& params,
                                 bool cap_at_target = false);

// Draws a class among `eligible` ones with probability proportional to
// `weights`, using `u` uniform on [0, 1). Returns -1 when no eligible class
// has positive weight.
int weighted_pick(double u, const std::vector<double>& weights,
                  const std::vector<bool>& eligible);

// Token counter of one GPU. Every resident decode gains one token per
// iteration, so the clock runs at 1/tau in mixed mode and gamma in solo
// mode, and a decode with an Exp(1) * D token budget leaves when the clock
// reaches it.
struct TokenClock {
  double value = 0.0;
  double time = 0.0;

  void advance(double now, double speed) {
    value += (now - time) * speed;
    time = now;
  }
  // Seconds until the clock reaches `target` at constant `speed`.
  double wait(double target, double speed) const {
    return target > value ? (target - value) / speed : 0.0;
  }
};

enum class RouteTarget { kSolo, kMixed, kBuffer };

// Greedy router: a free solo slot, else a free mixed slot, else the buffer.
RouteTarget greedy_route(bool solo_slot_free, bool mixed_slot_free);

struct PoolChoice {
  bool solo = false;      // pool drawn for the job
  bool buffered = false;  // pool full, job waits in the pool's buffer
};

// Pool-split router: `u` uniform on [0, 1) picks the solo pool when
// u < p_s.
PoolChoice pool_route(double u, double solo_prob, bool solo_slot_free,
                      bool mixed_slot_free);

}  // namespace fluidsched
