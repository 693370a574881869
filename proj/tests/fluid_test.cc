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
#include "fluidsched/fluid.h"
#include "fluidsched/io.h"

namespace fluidsched {
namespace {

const std::string kData = FLUIDSCHED_DATA_DIR;

Instance bundled_reference() {
  Instance inst = load_instance(kData + "/reference_instance.json");
  inst.pricing.scheme = ChargingScheme::kBundled;
  return inst;
}

FluidPlan eliminated_plan(const Instance& inst) {
  return eliminate_decode_buffer(solve_plan(inst), inst);
}

double max_abs_rhs(const FluidState& d) {
  double m = 0.0;
  for (const auto& c : d.classes) {
    for (double v : {c.q_p, c.x, c.buffer_mixed, c.buffer_solo, c.hosted_mixed,
                     c.hosted_solo}) {
      m = std::max(m, std::abs(v));
    }
  }
  return m;
}

double class_mass(const FluidClassState& c) {
  return c.q_p + c.x + c.buffer_mixed + c.buffer_solo + c.hosted_mixed +
         c.hosted_solo;
}

TEST(FluidRhs, PlanIsFixedPointOfPoolSplitPolicies) {
  const Instance inst = bundled_reference();
  SliSpec sli;
  sli.tpot = {SliMode::kHard, 0.028, 0.0};
  const FluidPlan plan = solve_plan(inst, sli, ChargingScheme::kBundled);
  for (FluidPolicy p : {FluidPolicy::kSliAware, FluidPolicy::kSliAwareGeneral}) {
    const FluidModel model = make_fluid_model(inst, plan, p);
    EXPECT_LT(max_abs_rhs(fluid_rhs(model, plan_state(model, plan))), 1e-9)
        << fluid_policy_name(p);
  }
}

TEST(FluidRhs, EmptySystemReceivesArrivals) {
  const Instance inst = bundled_reference();
  const FluidModel model =
      make_fluid_model(inst, eliminated_plan(inst), FluidPolicy::kGateGreedy);
  std::vector<FluidFlows> flows;
  const FluidState d = fluid_rhs(model, empty_state(2), &flows);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(flows[i].arrival, inst.classes[i].arrival_rate);
    EXPECT_NEAR(class_mass(d.classes[i]), inst.classes[i].arrival_rate, 1e-12);
  }
}

TEST(FluidRhs, MassBalanceAlongTrajectory) {
  const Instance inst = bundled_reference();
  for (FluidPolicy p : {FluidPolicy::kGateGreedy, FluidPolicy::kPrioritizeRoute}) {
    const FluidModel model = make_fluid_model(inst, eliminated_plan(inst), p);
    FluidConfig cfg;
    cfg.horizon = 200;
    cfg.record_every = 500;
    const FluidTrajectory tr = integrate(model, empty_state(2), cfg);
    ASSERT_GT(tr.states.size(), 5u);
    for (const auto& s : tr.states) {
      std::vector<FluidFlows> f;
      const FluidState d = fluid_rhs(model, s, &f);
      for (size_t i = 0; i < 2; ++i) {
        const double net = f[i].arrival - f[i].prefill_abandon -
                           f[i].decode_abandon - f[i].decode_completion;
        EXPECT_NEAR(class_mass(d.classes[i]), net, 1e-8);
      }
    }
  }
}

TEST(FluidRhs, UnservedQueueDecaysAtPatienceRate) {
  Instance inst = bundled_reference();
  inst.classes[1].arrival_rate = 0.0;
  FluidPlan plan = eliminated_plan(inst);
  const FluidModel model = make_fluid_model(inst, plan, FluidPolicy::kGateGreedy);
  ASSERT_NEAR(model.target_x[1], 0.0, 1e-12);
  FluidState s = plan_state(model, plan);
  s.classes[1].q_p = 1.0;
  FluidConfig cfg;
  cfg.horizon = 10;
  cfg.record_every = 1000;
  const FluidTrajectory tr = integrate(model, s, cfg);
  const double rate =
      -std::log(tr.states.back().classes[1].q_p) / tr.times.back();
  EXPECT_NEAR(rate / inst.classes[1].patience_rate, 1.0, 0.02);
}

TEST(DecodeWork, WeightsByMixedService) {
  const Instance inst = bundled_reference();
  const FluidModel model =
      make_fluid_model(inst, eliminated_plan(inst), FluidPolicy::kGateGreedy);
  FluidState s = empty_state(2);
  s.classes[0].buffer_mixed = 1.0;
  EXPECT_NEAR(weighted_decode_work(model, s), 1.0 / model.rates.mixed[0], 1e-12);
  EXPECT_NEAR(1.0 / model.rates.mixed[0], 33.272, 1e-9);
  s.classes[1].hosted_solo = 2.0;
  EXPECT_NEAR(weighted_decode_work(model, s),
              1.0 / model.rates.mixed[0] + 2.0 / model.rates.mixed[1], 1e-12);
}

TEST(DecodeWork, DriftBoundFromLoadedStart) {
  const Instance inst = bundled_reference();
  const FluidPlan plan = eliminated_plan(inst);
  const FluidModel model = make_fluid_model(inst, plan, FluidPolicy::kGateGreedy);
  FluidState s = plan_state(model, plan);
  for (auto& c : s.classes) c.buffer_mixed = 1.0;
  FluidConfig cfg;
  cfg.horizon = 300;
  cfg.record_every = 100000;
  const FluidTrajectory tr = integrate(model, s, cfg);
  EXPECT_GT(tr.diagnostics.drift_checks, 100u);
  EXPECT_EQ(tr.diagnostics.drift_violations, 0u);
  EXPECT_LT(tr.diagnostics.max_drift_identity_error, 1e-9);
  double qd = 0.0;
  for (const auto& o : occupancies(model, tr.states.back())) qd += o.q_d;
  EXPECT_LT(qd, 1e-6);
}

TEST(Integrate, GateGreedyConvergesToPlan) {
  const Instance inst = bundled_reference();
  const FluidPlan plan = eliminated_plan(inst);
  const FluidModel model = make_fluid_model(inst, plan, FluidPolicy::kGateGreedy);
  FluidConfig cfg;
  cfg.horizon = 1000;
  cfg.record_every = 100000;
  const FluidTrajectory tr = integrate(model, empty_state(2), cfg);
  const auto occ = occupancies(model, tr.states.back());
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(occ[i].x, plan.classes[i].x, 1e-6);
    EXPECT_NEAR(occ[i].q_d, 0.0, 1e-6);
  }
  // The greedy router settles on its own mixed/solo class mix, so only the
  // completion rates are pinned.
  std::vector<FluidFlows> f;
  EXPECT_LT(max_abs_rhs(fluid_rhs(model, tr.states.back(), &f)), 1e-6);
  double revenue = 0.0;
  for (size_t i = 0; i < 2; ++i) {
    revenue += inst.pricing.weight(inst.classes[i]) * f[i].decode_completion;
  }
  EXPECT_NEAR(revenue, plan.objective, 1e-4);
  EXPECT_LT(tr.diagnostics.max_projection, 1e-6);
}

TEST(Integrate, GeneralPoolPolicyReachesPlannedBuffers) {
  const Instance inst = bundled_reference();
  SliSpec sli;
  sli.tpot = {SliMode::kHard, 0.028, 0.0};
  const FluidPlan plan = solve_plan(inst, sli, ChargingScheme::kBundled);
  const FluidModel model =
      make_fluid_model(inst, plan, FluidPolicy::kSliAwareGeneral);
  FluidConfig cfg;
  cfg.horizon = 1500;
  cfg.record_every = 100000;
  const FluidTrajectory tr = integrate(model, empty_state(2), cfg);
  const auto occ = occupancies(model, tr.states.back());
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(occ[i].q_d, plan.classes[i].q_d, 1e-3);
    EXPECT_NEAR(occ[i].x, plan.classes[i].x, 1e-6);
  }
}

TEST(Integrate, CoarseStepIsRejected) {
  const Instance inst = bundled_reference();
  const FluidModel model =
      make_fluid_model(inst, eliminated_plan(inst), FluidPolicy::kGateGreedy);
  FluidConfig cfg;
  cfg.dt = 5.0;
  cfg.horizon = 100;
  try {
    integrate(model, empty_state(2), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStepTooLarge);
  }
}

TEST(Integrate, NegativeStateRejected) {
  const Instance inst = bundled_reference();
  const FluidModel model =
      make_fluid_model(inst, eliminated_plan(inst), FluidPolicy::kGateGreedy);
  FluidState s = empty_state(2);
  s.classes[0].q_p = -1.0;
  try {
    fluid_rhs(model, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasibleState);
  }
}

TEST(Rk4, ExponentialDecayIsFourthOrder) {
  const auto f = [](const std::vector<double>& y) {
    return std::vector<double>{-y[0]};
  };
  double err_coarse = 0.0, err_fine = 0.0;
  for (double h : {0.1, 0.05}) {
    std::vector<double> y{1.0};
    for (int k = 0; k < static_cast<int>(std::lround(1.0 / h)); ++k) {
      y = rk4_step(f, y, h);
    }
    (h == 0.1 ? err_coarse : err_fine) = std::abs(y[0] - std::exp(-1.0));
  }
  EXPECT_NEAR(std::log2(err_coarse / err_fine), 4.0, 0.1);
}

TEST(FluidPolicyNames, RoundTripAndUnsupported) {
  for (FluidPolicy p : {FluidPolicy::kGateGreedy, FluidPolicy::kPrioritizeRoute,
                        FluidPolicy::kSliAware, FluidPolicy::kSliAwareGeneral}) {
    EXPECT_EQ(parse_fluid_policy(fluid_policy_name(p)), p);
  }
  try {
    parse_fluid_policy("fi-wsp");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupported);
  }
}

}  // namespace
}  // namespace fluidsched
