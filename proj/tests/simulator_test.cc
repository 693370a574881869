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


#include <cmath>

#include <gtest/gtest.h>

#include "fluidsched/error.h"
#include "fluidsched/io.h"
#include "fluidsched/random.h"
#include "fluidsched/simulator.h"
#include "oracles.h"

namespace fluidsched {
namespace {

const std::string kData = FLUIDSCHED_DATA_DIR;

Instance reference() { return load_instance(kData + "/reference_instance.json"); }

SimConfig small_config(PolicyKind policy) {
  SimConfig cfg;
  cfg.policy = policy;
  cfg.num_gpus = 20;
  cfg.horizon = 300;
  cfg.seed = 4;
  return cfg;
}

TEST(Simulate, NoArrivalsNoRevenue) {
  Instance inst = reference();
  for (auto& c : inst.classes) c.arrival_rate = 0.0;
  const FluidPlan plan = solve_plan(inst);
  for (PolicyKind p : all_policies()) {
    const SimMetrics m = simulate(inst, small_config(p), &plan);
    EXPECT_EQ(m.revenue_per_gpu, 0.0) << policy_name(p);
    for (const auto& c : m.classes) EXPECT_EQ(c.arrivals, 0u);
  }
}

TEST(Simulate, AuditPassesForEveryPolicy) {
  const Instance inst = reference();
  const FluidPlan plan = solve_plan(inst);
  for (PolicyKind p : all_policies()) {
    SimConfig cfg = small_config(p);
    cfg.audit = true;
    const SimMetrics m = simulate(inst, cfg, &plan);
    EXPECT_EQ(m.audit_failures, 0u) << policy_name(p);
    EXPECT_GT(m.events, 1000u);
    EXPECT_GT(m.revenue_per_gpu, 0.0);
  }
}

TEST(Simulate, SameSeedSameResult) {
  const Instance inst = reference();
  const FluidPlan plan = solve_plan(inst);
  const SimConfig cfg = small_config(PolicyKind::kGateGreedy);
  const SimMetrics a = simulate(inst, cfg, &plan);
  const SimMetrics b = simulate(inst, cfg, &plan);
  EXPECT_EQ(a.revenue_per_gpu, b.revenue_per_gpu);
  EXPECT_EQ(a.events, b.events);
  EXPECT_NO_THROW(simulate_checked(inst, cfg, &plan));
  SimConfig other = cfg;
  other.seed = 5;
  EXPECT_NE(simulate(inst, other, &plan).revenue_per_gpu, a.revenue_per_gpu);
}

TEST(Simulate, PlannedPolicyNeedsPlan) {
  const Instance inst = reference();
  try {
    simulate(inst, small_config(PolicyKind::kGateGreedy), nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPlanMissing);
  }
  EXPECT_NO_THROW(simulate(inst, small_config(PolicyKind::kFcfsImmediate), nullptr));
}

TEST(Simulate, FcfsAdmitsInArrivalOrder) {
  const Instance inst = reference();
  const FluidPlan plan = solve_plan(inst);
  for (PolicyKind p : {PolicyKind::kFcfsImmediate, PolicyKind::kFcfsGreedy}) {
    SimConfig cfg = small_config(p);
    cfg.record_admissions = true;
    const SimMetrics m = simulate(inst, cfg, &plan);
    ASSERT_EQ(m.admission_order.size(), inst.num_classes());
    for (const auto& order : m.admission_order) {
      ASSERT_GT(order.size(), 10u);
      for (size_t k = 1; k < order.size(); ++k) EXPECT_LT(order[k - 1], order[k]);
    }
  }
}

// Single-class prefill-only system is an Erlang-A queue.
TEST(Simulate, PrefillOnlyMatchesErlangA) {
  Instance inst = reference();
  inst.classes = {{256, 100, 30.0, 5.0}};
  const double mu = 1.0 / inst.hardware.tau();
  const int n = 100;
  const auto want = oracle::erlang_a(30.0 * n, mu, 5.0, n);
  SimConfig cfg;
  cfg.policy = PolicyKind::kFcfsImmediate;
  cfg.num_gpus = n;
  cfg.horizon = 400;
  cfg.prefill_only = true;
  cfg.seed = 2;
  const SimMetrics m = simulate(inst, cfg, nullptr);
  EXPECT_NEAR(m.classes[0].x_occ / (want.mean_busy / n), 1.0, 0.02);
  EXPECT_NEAR(m.classes[0].qp_scaled / (want.mean_queue / n), 1.0, 0.05);
}

TEST(GateDecision, PicksMostUnderTarget) {
  PolicyParams p;
  p.num_gpus = 10;
  p.prefill_target = {4.0, 2.0, 0.0};
  p.prefill_queue_target = {0.0, 0.0, 0.0};
  // Normalized deficits: (1 - 4) / 0.4 = -7.5 and (1 - 2) / 0.2 = -5.
  EXPECT_EQ(gate_decision({1, 1, 0}, {3, 3, 3}, p), 0);
  // Empty queue is skipped.
  EXPECT_EQ(gate_decision({1, 1, 0}, {0, 3, 3}, p), 1);
  // Zero-target classes never get a slot.
  EXPECT_EQ(gate_decision({0, 0, 0}, {0, 0, 5}, p), std::nullopt);
  // Over target: eligible unless capped.
  EXPECT_EQ(gate_decision({5, 3, 0}, {1, 1, 0}, p), 0);
  EXPECT_EQ(gate_decision({5, 3, 0}, {1, 1, 0}, p, true), std::nullopt);
}

TEST(GateDecision, TiesGoToLongestExcessQueue) {
  PolicyParams p;
  p.num_gpus = 10;
  p.prefill_target = {2.0, 2.0};
  p.prefill_queue_target = {5.0, 1.0};
  EXPECT_EQ(gate_decision({1, 1}, {6, 3}, p), 1);
  EXPECT_EQ(gate_decision({1, 1}, {7, 3}, p), 0);  // equal excess, lower index
}

TEST(Routing, GreedyAndPool) {
  EXPECT_EQ(greedy_route(true, true), RouteTarget::kSolo);
  EXPECT_EQ(greedy_route(false, true), RouteTarget::kMixed);
  EXPECT_EQ(greedy_route(false, false), RouteTarget::kBuffer);
  EXPECT_TRUE(pool_route(0.2, 0.3, true, false).solo);
  EXPECT_FALSE(pool_route(0.2, 0.3, true, false).buffered);
  EXPECT_FALSE(pool_route(0.4, 0.3, true, false).solo);
  EXPECT_TRUE(pool_route(0.4, 0.3, true, false).buffered);
}

TEST(WeightedPick, FrequenciesAndEligibility) {
  Philox rng(1, 9);
  const std::vector<double> w{0.7, 0.3};
  const std::vector<bool> both{true, true};
  int zeros = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) zeros += weighted_pick(rng.uniform(), w, both) == 0;
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.7, 0.01);
  EXPECT_EQ(weighted_pick(0.0, w, {false, true}), 1);
  EXPECT_EQ(weighted_pick(0.99, w, {true, false}), 0);
  EXPECT_EQ(weighted_pick(0.5, w, {false, false}), -1);
  EXPECT_EQ(weighted_pick(0.5, {0.0, 0.0}, both), -1);
}

TEST(TokenClock, AdvanceAndWait) {
  TokenClock c;
  c.advance(2.0, 10.0);
  EXPECT_DOUBLE_EQ(c.value, 20.0);
  EXPECT_DOUBLE_EQ(c.wait(50.0, 5.0), 6.0);
  EXPECT_DOUBLE_EQ(c.wait(10.0, 5.0), 0.0);
}

// With Exp(1) * D budgets the hazard in each mode is speed / D, so the
// share of completions in a mode equals its share of tokens.
TEST(TokenClock, CompletionsSplitByTokenShare) {
  const double fast = 30.0, slow = 45.0, period = 0.5, d = 100.0;
  Philox rng(5, 5);
  int in_fast = 0;
  const int n = 100000;
  TokenClock clock;
  for (int k = 0; k < n; ++k) {
    const double target = clock.value + d * rng.exponential(1.0);
    // Walk the alternating schedule until the budget is met.
    while (true) {
      const double phase = std::fmod(clock.time, 2.0 * period);
      const bool is_fast = phase < period;
      const double speed = is_fast ? fast : slow;
      const double end = clock.time + (is_fast ? period - phase : 2.0 * period - phase);
      const double t = clock.time + clock.wait(target, speed);
      if (t < end) {
        clock.advance(t, speed);
        in_fast += is_fast;
        break;
      }
      clock.advance(end, speed);
    }
  }
  EXPECT_NEAR(static_cast<double>(in_fast) / n, fast / (fast + slow), 0.02);
}

TEST(PolicyNames, RoundTrip) {
  for (PolicyKind p : all_policies()) EXPECT_EQ(parse_policy(policy_name(p)), p);
  EXPECT_EQ(parse_policy("prioritize"), PolicyKind::kPrioritizeRoute);
  EXPECT_EQ(parse_policy("sli"), PolicyKind::kSliAware);
  EXPECT_EQ(parse_policy("sli-general"), PolicyKind::kSliAwareGeneral);
  EXPECT_THROW(parse_policy("round-robin"), Error);
}

}  // namespace
}  // namespace fluidsched
