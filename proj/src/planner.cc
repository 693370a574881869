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

#include "fluidsched/planner.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fluidsched/error.h"

namespace fluidsched {

std::string_view axis_name(SliAxis axis) {
  switch (axis) {
    case SliAxis::kPrefillFairness: return "prefill-fairness";
    case SliAxis::kDecodeFairness: return "decode-fairness";
    case SliAxis::kTpot: return "tpot";
  }
  return "unknown";
}

SliAxis parse_axis(std::string_view name) {
  if (name == "prefill-fairness" || name == "prefill_fairness" ||
      name == "eta1") {
    return SliAxis::kPrefillFairness;
  }
  if (name == "decode-fairness" || name == "decode_fairness" ||
      name == "eta2") {
    return SliAxis::kDecodeFairness;
  }
  if (name == "tpot" || name == "eta3") return SliAxis::kTpot;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown SLI axis '" + std::string(name) + "'");
}

std::string_view sli_mode_name(SliMode mode) {
  switch (mode) {
    case SliMode::kOff: return "off";
    case SliMode::kHard: return "hard";
    case SliMode::kPenalty: return "penalty";
  }
  return "unknown";
}

SliMode parse_sli_mode(std::string_view name) {
  if (name == "off") return SliMode::kOff;
  if (name == "hard") return SliMode::kHard;
  if (name == "penalty") return SliMode::kPenalty;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown SLI mode '" + std::string(name) + "'");
}

double FluidPlan::mixed_fraction() const {
  double s = 0.0;
  for (const auto& c : classes) s += c.x;
  return s;
}

double FluidPlan::total_q_d() const {
  double s = 0.0;
  for (const auto& c : classes) s += c.q_d;
  return s;
}

namespace {

std::string indexed(const char* base, size_t i) {
  return std::string(base) + "_" + std::to_string(i);
}

// Slot-weighted TPOT f(s) = (a + b s) / (B - s) and its derivative.
struct TpotCurve {
  double a = 0.0;
  double b = 0.0;
  double slots = 0.0;

  explicit TpotCurve(const HardwareProfile& hw) {
    slots = hw.batch_size;
    a = slots / hw.solo_speed;
    b = hw.tau() * (slots - 1.0) - slots / hw.solo_speed;
  }
  double value(double s) const { return (a + b * s) / (slots - s); }
  double slope(double s) const {
    return (b * slots + a) / ((slots - s) * (slots - s));
  }
  double cut_point(int k) const {
    return static_cast<double>(k) / (kTpotTangentCuts - 1);
  }
};

void add_pairwise(LpProblem& lp, const std::vector<int>& vars, int slack,
                  double eta, const char* name, std::vector<int>* rows) {
  for (size_t i = 0; i < vars.size(); ++i) {
    for (size_t j = 0; j < vars.size(); ++j) {
      if (i == j) continue;
      LpRow& row = lp.add_row(std::string(name) + "_" + std::to_string(i) +
                                  "_" + std::to_string(j),
                              RowSense::kLessEqual, eta);
      row.coeffs[vars[i]] = 1.0;
      row.coeffs[vars[j]] = -1.0;
      if (slack >= 0) row.coeffs[slack] = -1.0;
      rows->push_back(static_cast<int>(lp.rows.size()) - 1);
    }
  }
}

double max_gap(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo;
}

double tpot_cut_envelope(const TpotCurve& curve, double s) {
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < kTpotTangentCuts; ++k) {
    const double sk = curve.cut_point(k);
    best = std::max(best, curve.value(sk) + curve.slope(sk) * (s - sk));
  }
  return best;
}

}  // namespace

PlanningLp build_lp(const Instance& instance, const SliSpec& sli,
                    ChargingScheme scheme) {
  validate(instance);
  const auto& hw = instance.hardware;
  const ServiceRates rates = derive_rates(instance.classes, hw);
  const size_t n = instance.num_classes();
  const double slots = hw.batch_size;
  const auto& pr = instance.pricing;

  PlanningLp out;
  LpProblem& lp = out.problem;
  LpLayout& lay = out.layout;

  for (size_t i = 0; i < n; ++i) {
    const auto& cls = instance.classes[i];
    const double w = pr.weight(cls);
    const bool bundled = scheme == ChargingScheme::kBundled;
    const double x_cost =
        bundled ? 0.0 : pr.prefill_price * cls.prompt_len * rates.prefill[i];
    const double ym_cost = bundled
                               ? w * rates.mixed[i]
                               : pr.decode_price * cls.decode_len * rates.mixed[i];
    const double ys_cost = bundled
                               ? w * rates.solo[i]
                               : pr.decode_price * cls.decode_len * rates.solo[i];
    lay.x.push_back(lp.add_var(indexed("x", i), x_cost));
    lay.y_m.push_back(lp.add_var(indexed("y_m", i), ym_cost));
    lay.y_s.push_back(lp.add_var(indexed("y_s", i), ys_cost));
    lay.q_p.push_back(lp.add_var(indexed("q_p", i), 0.0));
    lay.q_d.push_back(sli.force_zero_decode_buffer
                          ? -1
                          : lp.add_var(indexed("q_d", i), 0.0));
  }

  if (sli.prefill_fairness.mode == SliMode::kPenalty) {
    lay.prefill_fair_slack =
        lp.add_var("prefill_fair_excess", -sli.prefill_fairness.weight);
  }
  if (sli.decode_fairness.mode == SliMode::kPenalty) {
    lay.decode_fair_slack =
        lp.add_var("decode_fair_excess", -sli.decode_fairness.weight);
  }
  if (sli.tpot.mode == SliMode::kPenalty) {
    lay.tpot_slack = lp.add_var("tpot_excess", -sli.tpot.weight);
  }

  {
    LpRow& row = lp.add_row("prefill_capacity", RowSense::kLessEqual, 1.0);
    for (size_t i = 0; i < n; ++i) row.coeffs[lay.x[i]] = 1.0;
    lay.prefill_capacity_row = static_cast<int>(lp.rows.size()) - 1;
  }
  {
    LpRow& row = lp.add_row("mixed_capacity", RowSense::kLessEqual, 0.0);
    for (size_t i = 0; i < n; ++i) {
      row.coeffs[lay.y_m[i]] = 1.0;
      row.coeffs[lay.x[i]] = -(slots - 1.0);
    }
    lay.mixed_capacity_row = static_cast<int>(lp.rows.size()) - 1;
  }
  {
    LpRow& row = lp.add_row("solo_capacity", RowSense::kLessEqual, slots);
    for (size_t i = 0; i < n; ++i) {
      row.coeffs[lay.y_s[i]] = 1.0;
      row.coeffs[lay.x[i]] = slots;
    }
    lay.solo_capacity_row = static_cast<int>(lp.rows.size()) - 1;
  }
  for (size_t i = 0; i < n; ++i) {
    const auto& cls = instance.classes[i];
    LpRow& row = lp.add_row(indexed("prefill_flow", i), RowSense::kEqual,
                            cls.arrival_rate);
    row.coeffs[lay.x[i]] = rates.prefill[i];
    row.coeffs[lay.q_p[i]] = cls.patience_rate;
    lay.prefill_flow_rows.push_back(static_cast<int>(lp.rows.size()) - 1);
  }
  for (size_t i = 0; i < n; ++i) {
    const auto& cls = instance.classes[i];
    LpRow& row = lp.add_row(indexed("decode_flow", i), RowSense::kEqual, 0.0);
    row.coeffs[lay.x[i]] = rates.prefill[i];
    row.coeffs[lay.y_m[i]] = -rates.mixed[i];
    row.coeffs[lay.y_s[i]] = -rates.solo[i];
    if (lay.q_d[i] >= 0) row.coeffs[lay.q_d[i]] = -cls.patience_rate;
    lay.decode_flow_rows.push_back(static_cast<int>(lp.rows.size()) - 1);
  }

  if (sli.prefill_fairness.active()) {
    add_pairwise(lp, lay.x, lay.prefill_fair_slack, sli.prefill_fairness.eta,
                 "prefill_fair", &lay.prefill_fair_rows);
  }
  if (sli.decode_fairness.active()) {
    add_pairwise(lp, lay.y_s, lay.decode_fair_slack, sli.decode_fairness.eta,
                 "decode_fair", &lay.decode_fair_rows);
  }
  if (sli.tpot.active()) {
    const TpotCurve curve(hw);
    const double eta = sli.tpot.eta;
    if (sli.tpot.mode == SliMode::kHard) {
      LpRow& row = lp.add_row("tpot", RowSense::kLessEqual,
                              eta * slots - slots / hw.solo_speed);
      for (size_t i = 0; i < n; ++i) row.coeffs[lay.x[i]] = curve.b + eta;
      lay.tpot_rows.push_back(static_cast<int>(lp.rows.size()) - 1);
    } else {
      if (hw.tau() < hw.tau_solo()) {
        throw Error(ErrorCode::kUnsupported,
                    "TPOT penalty needs tau >= 1/gamma for a convex curve");
      }
      for (int k = 0; k < kTpotTangentCuts; ++k) {
        const double sk = curve.cut_point(k);
        const double g = curve.slope(sk);
        LpRow& row = lp.add_row("tpot_cut_" + std::to_string(k),
                                RowSense::kLessEqual,
                                eta - curve.value(sk) + g * sk);
        for (size_t i = 0; i < n; ++i) row.coeffs[lay.x[i]] = g;
        row.coeffs[lay.tpot_slack] = -1.0;
        lay.tpot_rows.push_back(static_cast<int>(lp.rows.size()) - 1);
      }
    }
  }
  return out;
}

FluidPlan solve_plan(const Instance& instance, const SliSpec& sli,
                     ChargingScheme scheme) {
  const PlanningLp planning = build_lp(instance, sli, scheme);
  const LpSolution sol = solve_lp(planning.problem);
  if (sol.status == LpStatus::kInfeasible) {
    throw Error(ErrorCode::kInfeasible, "planning LP is infeasible");
  }
  if (sol.status == LpStatus::kUnbounded) {
    throw Error(ErrorCode::kUnbounded, "planning LP is unbounded");
  }

  const auto& lay = planning.layout;
  FluidPlan plan;
  plan.scheme = scheme;
  plan.sli = sli;
  plan.objective = sol.objective;
  for (size_t i = 0; i < instance.num_classes(); ++i) {
    ClassPlan c;
    c.x = sol.values[lay.x[i]];
    c.y_m = sol.values[lay.y_m[i]];
    c.y_s = sol.values[lay.y_s[i]];
    c.q_p = sol.values[lay.q_p[i]];
    c.q_d = lay.q_d[i] >= 0 ? sol.values[lay.q_d[i]] : 0.0;
    plan.classes.push_back(c);
  }

  PlanDuals& d = plan.duals;
  d.prefill_capacity = sol.duals[lay.prefill_capacity_row];
  d.mixed_capacity = sol.duals[lay.mixed_capacity_row];
  d.solo_capacity = sol.duals[lay.solo_capacity_row];
  for (int r : lay.prefill_flow_rows) d.prefill_flow.push_back(sol.duals[r]);
  for (int r : lay.decode_flow_rows) d.decode_flow.push_back(sol.duals[r]);
  for (int r : lay.prefill_fair_rows) d.prefill_fairness += sol.duals[r];
  for (int r : lay.decode_fair_rows) d.decode_fairness += sol.duals[r];
  if (sli.tpot.mode == SliMode::kHard) {
    const double s = plan.mixed_fraction();
    d.tpot = sol.duals[lay.tpot_rows.front()] *
             (instance.hardware.batch_size - s);
  } else {
    for (int r : lay.tpot_rows) d.tpot += sol.duals[r];
  }
  return plan;
}

double plan_revenue(const Instance& instance, const FluidPlan& plan,
                    ChargingScheme scheme) {
  const ServiceRates rates =
      derive_rates(instance.classes, instance.hardware);
  const auto& pr = instance.pricing;
  double total = 0.0;
  for (size_t i = 0; i < plan.classes.size(); ++i) {
    const auto& cls = instance.classes[i];
    const auto& c = plan.classes[i];
    const double decodes = rates.mixed[i] * c.y_m + rates.solo[i] * c.y_s;
    if (scheme == ChargingScheme::kBundled) {
      total += pr.weight(cls) * decodes;
    } else {
      total += pr.prefill_price * cls.prompt_len * rates.prefill[i] * c.x +
               pr.decode_price * cls.decode_len * decodes;
    }
  }
  return total;
}

double plan_objective(const Instance& instance, const FluidPlan& plan) {
  double value = plan_revenue(instance, plan, plan.scheme);
  std::vector<double> xs, ys;
  for (const auto& c : plan.classes) {
    xs.push_back(c.x);
    ys.push_back(c.y_s);
  }
  const auto& sli = plan.sli;
  if (sli.prefill_fairness.mode == SliMode::kPenalty) {
    value -= sli.prefill_fairness.weight *
             std::max(0.0, max_gap(xs) - sli.prefill_fairness.eta);
  }
  if (sli.decode_fairness.mode == SliMode::kPenalty) {
    value -= sli.decode_fairness.weight *
             std::max(0.0, max_gap(ys) - sli.decode_fairness.eta);
  }
  if (sli.tpot.mode == SliMode::kPenalty) {
    const TpotCurve curve(instance.hardware);
    value -= sli.tpot.weight *
             std::max(0.0, tpot_cut_envelope(curve, plan.mixed_fraction()) -
                               sli.tpot.eta);
  }
  return value;
}

double plan_residual(const Instance& instance, const FluidPlan& plan) {
  const ServiceRates rates =
      derive_rates(instance.classes, instance.hardware);
  const double slots = instance.hardware.batch_size;
  double sx = 0.0, sym = 0.0, sys = 0.0;
  double worst = 0.0;
  for (size_t i = 0; i < plan.classes.size(); ++i) {
    const auto& c = plan.classes[i];
    const auto& cls = instance.classes[i];
    sx += c.x;
    sym += c.y_m;
    sys += c.y_s;
    worst = std::max({worst, -c.x, -c.y_m, -c.y_s, -c.q_p, -c.q_d});
    worst = std::max(worst, std::abs(cls.arrival_rate -
                                     cls.patience_rate * c.q_p -
                                     rates.prefill[i] * c.x));
    worst = std::max(worst, std::abs(rates.prefill[i] * c.x -
                                     cls.patience_rate * c.q_d -
                                     rates.mixed[i] * c.y_m -
                                     rates.solo[i] * c.y_s));
  }
  worst = std::max(worst, sx - 1.0);
  worst = std::max(worst, sym - (slots - 1.0) * sx);
  worst = std::max(worst, sys - slots * (1.0 - sx));
  return worst;
}

FluidPlan eliminate_decode_buffer(const FluidPlan& plan,
                                  const Instance& instance) {
  if (plan.scheme != ChargingScheme::kBundled) {
    throw Error(ErrorCode::kUnsupported,
                "decode buffer elimination applies to bundled plans");
  }
  if (plan.sli.any_active()) {
    throw Error(ErrorCode::kUnsupported,
                "SLI plans keep q_d = 0 through force_zero_decode_buffer");
  }
  if (!decode_buffer_elimination_holds(instance.hardware)) {
    throw Error(ErrorCode::kConditionViolated,
                "gamma * tau < (B - 1) / B");
  }
  const ServiceRates rates =
      derive_rates(instance.classes, instance.hardware);
  const double slots = instance.hardware.batch_size;

  FluidPlan out = plan;
  for (size_t i = 0; i < out.classes.size(); ++i) {
    auto& c = out.classes[i];
    const auto& cls = instance.classes[i];
    double delta = (rates.prefill[i] * c.x - rates.mixed[i] * c.y_m -
                    rates.solo[i] * c.y_s) /
                   rates.prefill[i];
    if (std::abs(delta) < 1e-12) delta = 0.0;
    if (delta > 0.0 && cls.patience_rate == 0.0) {
      throw Error(ErrorCode::kZeroPatience,
                  "class " + std::to_string(i) +
                      " has decode backlog but no abandonment");
    }
    delta = std::min(std::max(delta, 0.0), c.x);
    c.x -= delta;
    if (delta > 0.0) {
      c.q_p += rates.prefill[i] * delta / cls.patience_rate;
    }
    c.q_d = 0.0;
  }

  double sx = 0.0, sym = 0.0;
  for (const auto& c : out.classes) {
    sx += c.x;
    sym += c.y_m;
  }
  // Rounding-level excess is left alone so a second pass is a no-op.
  const double excess = sym - (slots - 1.0) * sx;
  if (excess > 1e-12 * std::max(1.0, sym) && sym > 0.0) {
    for (size_t i = 0; i < out.classes.size(); ++i) {
      auto& c = out.classes[i];
      const double shift = excess * c.y_m / sym;
      c.y_m -= shift;
      c.y_s += shift * rates.mixed[i] / rates.solo[i];
    }
  }
  out.objective = plan_objective(instance, out);
  return out;
}

PolicyParams derive_policy_params(const FluidPlan& plan,
                                  const Instance& instance, int num_gpus) {
  if (num_gpus < 1) {
    throw Error(ErrorCode::kInvalidArgument, "need at least one GPU");
  }
  if (plan.classes.size() != instance.num_classes()) {
    throw Error(ErrorCode::kInvalidArgument, "plan/instance class mismatch");
  }
  const ServiceRates rates =
      derive_rates(instance.classes, instance.hardware);
  const double n = num_gpus;

  PolicyParams p;
  p.num_gpus = num_gpus;
  const double mixed = std::ceil(n * plan.mixed_fraction() - 1e-9);
  p.mixed_gpus = static_cast<int>(std::clamp(mixed, 0.0, n));

  double mixed_flow = 0.0, solo_flow = 0.0;
  for (size_t i = 0; i < plan.classes.size(); ++i) {
    mixed_flow += rates.mixed[i] * plan.classes[i].y_m;
    solo_flow += rates.solo[i] * plan.classes[i].y_s;
  }
  for (size_t i = 0; i < plan.classes.size(); ++i) {
    const auto& c = plan.classes[i];
    const auto& cls = instance.classes[i];
    p.prefill_target.push_back(n * c.x);
    p.prefill_queue_target.push_back(std::round(n * c.q_p));
    const double fm = rates.mixed[i] * c.y_m;
    const double fs = rates.solo[i] * c.y_s;
    const double ps = fm + fs > 0.0 ? fs / (fm + fs) : 1.0;
    p.solo_prob.push_back(ps);
    p.mixed_weight.push_back(mixed_flow > 0.0 ? fm / mixed_flow : 0.0);
    p.solo_weight.push_back(solo_flow > 0.0 ? fs / solo_flow : 0.0);
    p.decode_queue_solo.push_back(ps * c.q_d);
    p.decode_queue_mixed.push_back((1.0 - ps) * c.q_d);
    p.priority.push_back(cls.decode_len / cls.prompt_len);
  }
  return p;
}

std::vector<FrontierPoint> sweep_frontier(const Instance& instance,
                                          SliAxis axis,
                                          const std::vector<double>& grid,
                                          ChargingScheme scheme,
                                          const SliSpec& base) {
  std::vector<FrontierPoint> out;
  out.reserve(grid.size());
  for (double eta : grid) {
    SliSpec sli = base;
    SliConstraint* target = nullptr;
    switch (axis) {
      case SliAxis::kPrefillFairness: target = &sli.prefill_fairness; break;
      case SliAxis::kDecodeFairness: target = &sli.decode_fairness; break;
      case SliAxis::kTpot: target = &sli.tpot; break;
    }
    target->mode = SliMode::kHard;
    target->eta = eta;

    FrontierPoint point;
    point.eta = eta;
    try {
      point.plan = solve_plan(instance, sli, scheme);
      point.feasible = true;
      point.objective = point.plan.objective;
      switch (axis) {
        case SliAxis::kPrefillFairness:
          point.shadow_price = point.plan.duals.prefill_fairness;
          break;
        case SliAxis::kDecodeFairness:
          point.shadow_price = point.plan.duals.decode_fairness;
          break;
        case SliAxis::kTpot:
          point.shadow_price = point.plan.duals.tpot;
          break;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInfeasible) throw;
      point.feasible = false;
      point.objective = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(std::move(point));
  }
  return out;
}

}  // namespace fluidsched
