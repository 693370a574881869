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


// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../instance_gen.h"
#include "../oracles.h"
#include "fluidsched/calibration.h"
#include "fluidsched/error.h"
#include "fluidsched/experiments.h"
#include "fluidsched/io.h"
#include "fluidsched/planner.h"
#include "fluidsched/simulator.h"

namespace fluidsched {
namespace {

const std::string kRoot = FLUIDSCHED_SOURCE_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;

  // Records a check; the first failing one leads the detail.
  void check(bool ok, const std::string& what) {
    if (!ok && pass) detail = "FAILED: " + what + (detail.empty() ? "" : "; " + detail);
    else detail += (detail.empty() ? "" : "; ") + what;
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), f, a, b);
  return buf;
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

Instance reference() { return load_instance(kRoot + "/data/reference_instance.json"); }

Instance reference_bundled() {
  Instance inst = reference();
  inst.pricing.scheme = ChargingScheme::kBundled;
  return inst;
}

ExperimentSpec spec(const std::string& name) {
  return load_spec(kRoot + "/experiments/" + name + ".json");
}

Outcome calibration_round_trip() {
  Outcome o;
  const double alpha = 0.0174, beta = 6.2e-5;
  std::vector<IterationSample> clean;
  for (double c : {32.0, 64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0}) {
    clean.push_back({c, alpha + beta * c});
  }
  const MixedFit f = fit_mixed(clean);
  o.check(rel(f.alpha, alpha) < 1e-12 && rel(f.beta, beta) < 1e-12,
          fmt("noiseless alpha/beta rel err %.1e/%.1e", rel(f.alpha, alpha),
              rel(f.beta, beta)));

  std::mt19937_64 gen(20260101);
  std::uniform_real_distribution<double> chunk(32.0, 2048.0);
  std::normal_distribution<double> noise(0.0, 1e-4);
  std::vector<IterationSample> noisy;
  for (int k = 0; k < 1000; ++k) {
    const double c = chunk(gen);
    noisy.push_back({c, alpha + beta * c + noise(gen)});
  }
  const MixedFit g = fit_mixed(noisy);
  o.check(rel(g.alpha, alpha) < 0.01 && rel(g.beta, beta) < 0.01,
          fmt("noisy alpha/beta rel err %.2e/%.2e", rel(g.alpha, alpha),
              rel(g.beta, beta)));
  o.check(g.r_squared > 0.99, fmt("R^2 %.5f", g.r_squared));
  return o;
}

Outcome rate_arithmetic() {
  Outcome o;
  const Instance inst = reference();
  const ServiceRates r = derive_rates(inst.classes, inst.hardware);
  const auto& hw = inst.hardware;
  const oracle::Hardware ohw{hw.batch_size, hw.chunk_size, hw.alpha(), hw.beta(),
                             hw.solo_speed};
  double worst = 0.0;
  for (size_t i = 0; i < inst.num_classes(); ++i) {
    const auto& c = inst.classes[i];
    const oracle::Rates want = oracle::rates(
        {c.prompt_len, c.decode_len, c.arrival_rate, c.patience_rate}, ohw);
    worst = std::max({worst, rel(r.prefill[i], want.mu_p), rel(r.mixed[i], want.mu_m),
                      rel(r.solo[i], want.mu_s)});
  }
  o.check(worst <= 1e-9, fmt("max rel err vs oracle %.1e", worst));
  o.check(std::abs(r.prefill[0] - 25.647) < 5e-4 &&
              std::abs(r.mixed[0] - 0.030055) < 5e-7 &&
              rel(r.solo[0], 0.04545) <= 1e-12,
          fmt("class 0 mu_p %.4f mu_m %.6f", r.prefill[0], r.mixed[0]));
  return o;
}

Outcome lp_correctness() {
  Outcome o;
  const Instance inst = reference();
  const auto& hw = inst.hardware;
  std::vector<oracle::ClassData> classes;
  for (const auto& c : inst.classes) {
    classes.push_back({c.prompt_len, c.decode_len, c.arrival_rate, c.patience_rate});
  }
  for (ChargingScheme s : {ChargingScheme::kBundled, ChargingScheme::kSeparate}) {
    const FluidPlan plan = solve_plan(inst, SliSpec{}, s);
    const auto want = oracle::enumerate_bases(oracle::planning_lp(
        classes, {hw.batch_size, hw.chunk_size, hw.alpha(), hw.beta(), hw.solo_speed},
        inst.pricing.prefill_price, inst.pricing.decode_price,
        s == ChargingScheme::kBundled));
    const double residual = plan_residual(inst, plan);
    o.check(want.feasible && rel(plan.objective, want.objective) <= 1e-6 &&
                residual <= 1e-7,
            std::string(scheme_name(s)) +
                fmt(" R* %.6f oracle %.6f", plan.objective, want.objective) +
                fmt(" residual %.1e", residual));
  }
  return o;
}

Outcome decode_buffer_elimination() {
  Outcome o;
  std::mt19937_64 gen(4);
  int buffered = 0, bad_feasible = 0, bad_qd = 0, bad_obj = 0, bad_idem = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Instance inst = random_bundled(gen);
    FluidPlan plan = solve_plan(inst);
    if (trial % 2 == 0) {
      // Boundary instances admit optima that keep a decode buffer.
      auto& hw = inst.hardware;
      hw.solo_speed = (hw.batch_size - 1.0) / hw.batch_size / hw.tau();
      plan = with_decode_buffer(solve_plan(inst), inst);
    }
    buffered += plan.total_q_d() > 1e-9;
    const double before = plan_revenue(inst, plan, ChargingScheme::kBundled);
    const FluidPlan out = eliminate_decode_buffer(plan, inst);
    bad_feasible += plan_residual(inst, out) > 1e-7;
    bad_qd += out.total_q_d() != 0.0;
    const double change = std::abs(out.objective - before);
    worst = std::max(worst, change);
    bad_obj += change > 1e-9;
    const FluidPlan again = eliminate_decode_buffer(out, inst);
    for (size_t i = 0; i < out.classes.size(); ++i) {
      const auto& a = again.classes[i];
      const auto& b = out.classes[i];
      if (a.x != b.x || a.y_m != b.y_m || a.y_s != b.y_s || a.q_p != b.q_p ||
          a.q_d != b.q_d) {
        ++bad_idem;
        break;
      }
    }
  }
  o.check(bad_feasible == 0, fmt("infeasible outputs %g", bad_feasible));
  o.check(bad_qd == 0, fmt("nonzero q_d %g", bad_qd));
  o.check(bad_obj == 0, fmt("max objective change %.1e", worst));
  o.check(bad_idem == 0, fmt("non-idempotent %g", bad_idem));
  o.detail += fmt("; %g of 100 inputs carried a buffer", buffered);
  return o;
}

Outcome fluid_convergence() {
  Outcome o;
  const ExperimentSpec s = spec("fluid_trace");
  const FluidTraceResult r = run_fluid_trace(s);
  const auto& t = r.summary;
  const std::string cfg = t.rows.front().config;
  const double x_err = t.get(cfg, "x_error_inf");
  const double q_d = t.get(cfg, "q_d_final");
  const double violations = t.get(cfg, "drift_violations");
  o.check(x_err < 1e-4, fmt("|x(T)-x*|inf %.1e", x_err));
  o.check(q_d < 1e-4, fmt("q_d(T) %.1e", q_d));
  o.check(violations == 0,
          fmt("drift violations %g of %g checks", violations,
              t.get(cfg, "drift_checks")));
  o.check(t.get(cfg, "drift_identity_error") <= 1e-6,
          fmt("W_d identity err %.1e", t.get(cfg, "drift_identity_error")));

  // From empty the greedy router never builds a decode buffer, so the
  // inequality is also exercised from a start with one unit in each buffer.
  const Instance inst = reference_bundled();
  const FluidPlan plan = eliminate_decode_buffer(solve_plan(inst), inst);
  FluidState start = plan_state(r.model, plan);
  for (auto& c : start.classes) c.buffer_mixed += 1.0;
  FluidConfig fc;
  fc.horizon = 500;
  fc.record_every = 1000000;
  const FluidDiagnostics d = integrate(r.model, start, fc).diagnostics;
  o.check(d.drift_checks > 0 && d.drift_violations == 0 && d.max_drift_excess <= 1e-6,
          fmt("loaded start: %g violations of %g checks",
              static_cast<double>(d.drift_violations),
              static_cast<double>(d.drift_checks)) +
              fmt(" max excess %.1e", d.max_drift_excess));
  return o;
}

Outcome stochastic_convergence() {
  Outcome o;
  const ExperimentSpec s = spec("convergence");
  const ResultTable t = run_convergence(s);
  const PolicyKind p = s.policies.front();
  const double optimum = t.get("fluid", "objective");
  const std::string top = convergence_config(p, 500);
  const double rev = t.get(top, "rev_mean");
  o.check(rel(rev, optimum) <= 0.03,
          fmt("(a) rev %.3f vs R* %.3f", rev, optimum));

  std::string seq = "(b) std";
  bool decreasing = true;
  double prev = INFINITY;
  for (int n : s.gpu_counts) {
    const double sd = t.get(convergence_config(p, n), "rev_std");
    decreasing = decreasing && sd < prev;
    prev = sd;
    seq += fmt(" %.3f", sd);
  }
  o.check(decreasing, seq);

  double worst = 0.0;
  for (size_t i = 0; i < s.instance.num_classes(); ++i) {
    const std::string k = std::to_string(i);
    worst = std::max(worst, rel(t.get(top, "x_occ_mean." + k), t.get("fluid", "x_star." + k)));
  }
  o.check(worst <= 0.03, fmt("(c) max x rel err %.4f", worst));
  return o;
}

Outcome sli_occupancy() {
  Outcome o;
  ExperimentSpec s = spec("convergence");
  s.gpu_counts = {500};
  s.policies = {PolicyKind::kSliAware};
  const ResultTable t = run_convergence(s);
  const std::string cfg = convergence_config(PolicyKind::kSliAware, 500);
  for (size_t i = 0; i < s.instance.num_classes(); ++i) {
    const std::string k = std::to_string(i);
    for (const char* m : {"ym", "ys"}) {
      const double got = t.get(cfg, std::string(m) + "_occ_mean." + k);
      const double want = t.get("fluid", std::string(m) + "_star." + k);
      o.check(std::abs(got - want) <= 0.05 * want + 1e-12,
              std::string(m) + k + fmt(" %.4f vs %.4f", got, want));
    }
  }
  return o;
}

Outcome baseline_ordering() {
  Outcome o;
  const ExperimentSpec s = spec("baselines");
  const ResultTable t = run_baselines(s);
  PolicyKind best = s.policies.front();
  std::string ranks;
  for (PolicyKind p : s.policies) {
    const double v = t.get(baseline_config(p), "normalized_revenue");
    if (v > t.get(baseline_config(best), "normalized_revenue")) best = p;
    ranks += std::string(ranks.empty() ? "" : " ") + std::string(policy_name(p)) +
             fmt("=%.4f", v);
  }
  o.check(best == PolicyKind::kGateGreedy,
          "top policy " + std::string(policy_name(best)));
  const double gi = t.get(baseline_config(PolicyKind::kGateImmediate), "normalized_revenue");
  const double fi = t.get(baseline_config(PolicyKind::kFcfsImmediate), "normalized_revenue");
  o.check(gi > fi, fmt("gi-wsp %.4f vs fi-wsp %.4f", gi, fi));
  o.detail += "; " + ranks;
  return o;
}

Outcome congestion_shift() {
  Outcome o;
  ExperimentSpec s = spec("convergence");
  s.gpu_counts = {500};
  s.seeds = {1, 2, 3};
  double qd[2] = {0, 0}, qp[2] = {0, 0};
  const struct {
    PolicyKind policy;
    ChargingScheme scheme;
  } arms[2] = {{PolicyKind::kPrioritizeRoute, ChargingScheme::kSeparate},
               {PolicyKind::kGateGreedy, ChargingScheme::kBundled}};
  for (int a = 0; a < 2; ++a) {
    s.policies = {arms[a].policy};
    s.plan_scheme = arms[a].scheme;
    const ResultTable t = run_convergence(s);
    const std::string cfg = convergence_config(arms[a].policy, 500);
    for (size_t i = 0; i < s.instance.num_classes(); ++i) {
      qd[a] += t.get(cfg, "qd_scaled_mean." + std::to_string(i));
      qp[a] += t.get(cfg, "qp_scaled_mean." + std::to_string(i));
    }
  }
  o.check(qd[0] > qd[1], fmt("Q_d prioritize/separate %.4f vs gg-sp/bundled %.4f", qd[0], qd[1]));
  o.check(qp[0] < qp[1], fmt("Q_p %.4f vs %.4f", qp[0], qp[1]));
  return o;
}

Outcome frontier_facts() {
  Outcome o;
  const double gamma = reference().hardware.solo_speed;
  double slopes[2] = {0, 0};
  const char* names[3] = {"frontier_tpot", "frontier_prefill_fairness",
                          "frontier_decode_fairness"};
  for (int a = 0; a < 3; ++a) {
    const ExperimentSpec s = spec(names[a]);
    const auto pts = sweep_frontier(s.instance, s.axis, s.grid,
                                    s.plan_scheme.value_or(s.instance.pricing.scheme),
                                    s.base_sli);
    // Looser bounds (larger eta) never lose revenue; once feasible, always.
    bool monotone = true, seen_feasible = false;
    double prev = -INFINITY, first_feasible = NAN;
    for (const auto& p : pts) {
      if (!p.feasible) {
        monotone = monotone && !seen_feasible;
        continue;
      }
      if (!seen_feasible) first_feasible = p.eta;
      seen_feasible = true;
      monotone = monotone && p.objective >= prev - 1e-9;
      prev = p.objective;
    }
    o.check(monotone, std::string(names[a] + 9) + " monotone");
    if (a == 0) {
      bool below = true;
      for (const auto& p : pts) {
        if (p.eta < 0.022) below = below && !p.feasible;
      }
      o.check(below && first_feasible >= 1.0 / gamma,
              fmt("tpot infeasible below 0.022, first feasible %.3f", first_feasible));
    } else {
      const ResultTable t = run_frontier(s);
      slopes[a - 1] = t.get("summary", "max_abs_slope");
    }
  }
  o.check(slopes[0] > slopes[1],
          fmt("max slope prefill %.3f vs decode %.3f", slopes[0], slopes[1]));
  return o;
}

Outcome hardware_pricing_facts() {
  Outcome o;
  ExperimentSpec hw = spec("hardware");
  hw.hardware_grids = {{"B", {2, 4, 8, 16, 32}}};
  hw.heatmap.clear();
  const ResultTable t = run_hardware_sweep(hw);
  // Knee: first B whose doubling gains under 5% of R*.
  int knee = -1;
  std::string seq = "R*(B)";
  for (int b : {2, 4, 8, 16}) {
    const double r = t.get("B=" + std::to_string(b), "objective");
    const double next = t.get("B=" + std::to_string(2 * b), "objective");
    seq += fmt(" %.2f", r);
    if (knee < 0 && (next - r) / r < 0.05) knee = b;
  }
  seq += fmt(" %.2f", t.get("B=32", "objective"));
  o.check(knee == 16, seq + fmt(", knee %g", knee));

  ExperimentSpec pr = spec("pricing");
  pr.price_totals = {0.1, 0.3, 1.0};
  pr.ratio_points = 50;
  const ResultTable p = run_pricing_grid(pr);
  std::vector<double> cells;
  std::string list = "argmax share";
  for (const auto& row : p.rows) {
    if (row.metric == "argmax_cell") cells.push_back(row.value);
    if (row.metric == "argmax_share") list += fmt(" %.4f", row.value);
  }
  bool constant = cells.size() == 3;
  for (double c : cells) constant = constant && c == cells.front();
  o.check(constant, list);
  return o;
}

Outcome engine_oracle() {
  Outcome o;
  Instance inst = reference();
  inst.classes = {{256, 100, 30.0, 5.0}};
  const int n = 100;
  const double mu = 1.0 / inst.hardware.tau();
  const auto want = oracle::erlang_a(30.0 * n, mu, 5.0, n);
  std::vector<double> busy(10);
  parallel_for(busy.size(), thread_count(), [&](size_t k) {
    SimConfig cfg;
    cfg.policy = PolicyKind::kFcfsImmediate;
    cfg.num_gpus = n;
    cfg.horizon = 400;
    cfg.prefill_only = true;
    cfg.seed = k + 1;
    busy[k] = simulate(inst, cfg, nullptr).classes[0].x_occ * n;
  });
  const double got = mean(busy);
  o.check(rel(got, want.mean_busy) <= 0.02,
          fmt("mean busy %.3f vs Erlang-A %.3f", got, want.mean_busy));
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace fluidsched

int main(int argc, char** argv) {
  using namespace fluidsched;
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--criterion", only, "Run only these criteria (1-12)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all = {
      {1, "calibration round-trip", calibration_round_trip},
      {2, "rate arithmetic", rate_arithmetic},
      {3, "LP correctness", lp_correctness},
      {4, "decode-buffer elimination", decode_buffer_elimination},
      {5, "fluid convergence", fluid_convergence},
      {6, "stochastic convergence", stochastic_convergence},
      {7, "SLI-aware occupancy tracking", sli_occupancy},
      {8, "baseline ordering", baseline_ordering},
      {9, "congestion shift", congestion_shift},
      {10, "frontier facts", frontier_facts},
      {11, "hardware and pricing facts", hardware_pricing_facts},
      {12, "engine vs Erlang-A", engine_oracle},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) {
      continue;
    }
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    failed += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
