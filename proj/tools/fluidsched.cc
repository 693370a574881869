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

// Command-line front end: calibrate, plan, frontier, fluid, simulate and
// experiment sweeps.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fluidsched/calibration.h"
#include "fluidsched/error.h"
#include "fluidsched/experiments.h"
#include "fluidsched/fluid.h"
#include "fluidsched/io.h"
#include "fluidsched/planner.h"
#include "fluidsched/simulator.h"

namespace fs = fluidsched;

namespace {

fs::Json with_provenance(fs::Json body, const std::string& hash) {
  body["provenance"] = {{"tool", fs::kToolName},
                        {"version", fs::kToolVersion},
                        {"instance_hash", hash}};
  return body;
}

void print_plan(const fs::FluidPlan& plan) {
  std::printf("objective %s (%s)\n", fs::format_double(plan.objective).c_str(),
              std::string(fs::scheme_name(plan.scheme)).c_str());
  for (size_t i = 0; i < plan.classes.size(); ++i) {
    const auto& c = plan.classes[i];
    std::printf("class %zu: x=%.6g y_m=%.6g y_s=%.6g q_p=%.6g q_d=%.6g\n", i,
                c.x, c.y_m, c.y_s, c.q_p, c.q_d);
  }
}

fs::SliSpec load_sli(const std::string& path) {
  return path.empty() ? fs::SliSpec{} : fs::sli_from_json(
                                            fs::read_json_file(path));
}

fs::ChargingScheme scheme_or(const std::string& text,
                             const fs::Instance& inst) {
  return text.empty() ? inst.pricing.scheme : fs::parse_scheme(text);
}

struct CalibrateArgs {
  std::string mixed, solo, out;
  double b0 = 0.0;
  double chunk = 256.0;
  int batch = 16;
};

int run_calibrate(const CalibrateArgs& a) {
  const auto mixed = fs::read_mixed_csv(a.mixed);
  const auto solo = fs::read_solo_csv(a.solo);
  const fs::CalibrationResult r =
      fs::calibrate(mixed, solo, a.batch, a.chunk, a.b0);
  if (r.mixed.beta <= 0.0) {
    std::fprintf(stderr, "warning: fitted beta %g is not positive\n",
                 r.mixed.beta);
  }
  fs::Json j = fs::to_json(r.hardware);
  j["fit"] = fs::to_json(r)["fit"];
  j["provenance"] = {{"tool", fs::kToolName}, {"version", fs::kToolVersion}};
  fs::write_text_file(a.out, j.dump(2) + "\n");
  std::printf("alpha %s beta %s r2 %s gamma %s\n",
              fs::format_double(r.mixed.alpha).c_str(),
              fs::format_double(r.mixed.beta).c_str(),
              fs::format_double(r.mixed.r_squared).c_str(),
              fs::format_double(r.hardware.solo_speed).c_str());
  return 0;
}

struct PlanArgs {
  std::string config, sli, scheme, out;
  bool eliminate = false;
};

int run_plan(const PlanArgs& a) {
  const fs::Instance inst = fs::load_instance(a.config);
  fs::FluidPlan plan =
      fs::solve_plan(inst, load_sli(a.sli), scheme_or(a.scheme, inst));
  if (a.eliminate) plan = fs::eliminate_decode_buffer(plan, inst);
  fs::write_text_file(
      a.out,
      with_provenance(fs::to_json(plan), fs::instance_hash(inst)).dump(2) +
          "\n");
  print_plan(plan);
  return 0;
}

struct FrontierArgs {
  std::string config, sli, scheme, axis, grid, out, spec;
};

int run_frontier_cmd(const FrontierArgs& a) {
  if (!a.spec.empty()) {
    fs::ExperimentSpec spec = fs::load_spec(a.spec);
    spec.kind = fs::ExperimentKind::kFrontier;
    for (const auto& f : fs::run_experiment(spec, a.out)) {
      std::printf("wrote %s/%s\n", a.out.c_str(), f.c_str());
    }
    return 0;
  }
  if (a.config.empty() || a.axis.empty() || a.grid.empty()) {
    throw fs::Error(fs::ErrorCode::kInvalidArgument,
                    "frontier needs --config, --axis and --grid (or --spec)");
  }
  const fs::Instance inst = fs::load_instance(a.config);
  const auto points = fs::sweep_frontier(
      inst, fs::parse_axis(a.axis), fs::parse_grid(a.grid),
      scheme_or(a.scheme, inst), load_sli(a.sli));
  fs::write_text_file(a.out,
                      fs::frontier_csv(points, fs::instance_hash(inst)));
  size_t feasible = 0;
  for (const auto& p : points) feasible += p.feasible ? 1 : 0;
  std::printf("%zu points, %zu feasible\n", points.size(), feasible);
  return 0;
}

struct FluidArgs {
  std::string config, plan, policy = "gg-sp", out;
  double horizon = 2000.0;
  double dt = 0.01;
  size_t record_every = 100;
};

int run_fluid(const FluidArgs& a) {
  const fs::Instance inst = fs::load_instance(a.config);
  const fs::FluidPlan plan = fs::plan_from_json(fs::read_json_file(a.plan));
  const fs::FluidModel model =
      fs::make_fluid_model(inst, plan, fs::parse_fluid_policy(a.policy));
  fs::FluidConfig cfg;
  cfg.horizon = a.horizon;
  cfg.dt = a.dt;
  cfg.record_every = a.record_every;
  const fs::FluidTrajectory traj =
      fs::integrate(model, fs::empty_state(inst.num_classes()), cfg);
  fs::write_text_file(a.out, fs::trajectory_csv(model, traj,
                                                fs::instance_hash(inst)));
  const auto& d = traj.diagnostics;
  std::printf("%zu steps, max projection %g, W_d drift violations %zu/%zu\n",
              d.steps, d.max_projection, d.drift_violations, d.drift_checks);
  return 0;
}

struct SimulateArgs {
  std::string config, plan, policy = "gg-sp", out;
  int gpus = 500;
  double horizon = 0.0;
  double warmup = 0.3;
  int seeds = 5;
  uint64_t first_seed = 1;
  bool audit = false;
  bool check = false;
};

int run_simulate(const SimulateArgs& a) {
  const fs::Instance inst = fs::load_instance(a.config);
  const fs::PolicyKind policy = fs::parse_policy(a.policy);
  std::optional<fs::FluidPlan> plan;
  if (!a.plan.empty()) {
    plan = fs::plan_from_json(fs::read_json_file(a.plan));
  }
  const double horizon =
      a.horizon > 0.0 ? a.horizon : fs::auto_horizon(inst, a.warmup);
  std::vector<fs::SimMetrics> runs(static_cast<size_t>(a.seeds));
  fs::parallel_for(runs.size(), fs::thread_count(), [&](size_t k) {
    fs::SimConfig cfg;
    cfg.policy = policy;
    cfg.num_gpus = a.gpus;
    cfg.horizon = horizon;
    cfg.warmup_fraction = a.warmup;
    cfg.seed = a.first_seed + k;
    cfg.audit = a.audit;
    const fs::FluidPlan* p = plan ? &*plan : nullptr;
    runs[k] = a.check ? fs::simulate_checked(inst, cfg, p)
                      : fs::simulate(inst, cfg, p);
  });
  fs::write_text_file(a.out, fs::metrics_csv(runs, fs::instance_hash(inst)));
  for (const auto& m : runs) {
    std::printf("seed %llu rev/gpu %.4f tpot %.5f audit failures %llu\n",
                static_cast<unsigned long long>(m.seed), m.revenue_per_gpu,
                m.tpot, static_cast<unsigned long long>(m.audit_failures));
  }
  return 0;
}

struct SweepArgs {
  std::string spec, out;
  std::optional<fs::ExperimentKind> kind;
};

int run_sweep(const SweepArgs& a) {
  fs::ExperimentSpec spec = fs::load_spec(a.spec);
  if (a.kind) spec.kind = *a.kind;
  for (const auto& f : fs::run_experiment(spec, a.out)) {
    std::printf("wrote %s/%s\n", a.out.c_str(), f.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fluid planning and simulation for LLM inference clusters"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fs::kToolVersion));

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand(
      "calibrate", "Fit the iteration-time law and solo decode speed");
  calibrate->add_option("--mixed", cal.mixed, "CSV with chunk_size,iter_time_s")
      ->required()
      ->check(CLI::ExistingFile);
  calibrate->add_option("--solo", cal.solo, "CSV with tokens_per_s")
      ->required()
      ->check(CLI::ExistingFile);
  calibrate->add_option("--b0", cal.b0, "knee in tokens")
      ->capture_default_str();
  calibrate->add_option("--B", cal.batch, "slots per GPU")
      ->capture_default_str();
  calibrate->add_option("--C", cal.chunk, "chunk size in tokens")
      ->capture_default_str();
  calibrate->add_option("--out", cal.out, "profile JSON")->required();

  PlanArgs pl;
  auto* plan = app.add_subcommand("plan", "Solve the steady-state fluid LP");
  plan->add_option("--config", pl.config, "instance JSON")
      ->required()
      ->check(CLI::ExistingFile);
  plan->add_option("--sli", pl.sli, "SLI JSON")->check(CLI::ExistingFile);
  plan->add_option("--scheme", pl.scheme, "bundled or separate")
      ->check(CLI::IsMember({"bundled", "separate"}));
  plan->add_flag("--eliminate-buffer", pl.eliminate,
                 "rewrite the optimum with an empty decode buffer");
  plan->add_option("--out", pl.out, "plan JSON")->required();

  FrontierArgs fr;
  auto* frontier =
      app.add_subcommand("frontier", "Sweep one SLI bound through the LP");
  frontier->add_option("--config", fr.config, "instance JSON")
      ->check(CLI::ExistingFile);
  frontier->add_option("--axis", fr.axis,
                       "tpot, prefill-fairness or decode-fairness");
  frontier->add_option("--grid", fr.grid, "a:b:step");
  frontier->add_option("--scheme", fr.scheme, "bundled or separate")
      ->check(CLI::IsMember({"bundled", "separate"}));
  frontier->add_option("--sli", fr.sli, "base SLI JSON")
      ->check(CLI::ExistingFile);
  frontier->add_option("--spec", fr.spec, "experiment JSON instead of flags")
      ->check(CLI::ExistingFile);
  frontier->add_option("--out", fr.out, "CSV file, or directory with --spec")
      ->required();

  FluidArgs fl;
  auto* fluid =
      app.add_subcommand("fluid", "Integrate the fluid model from empty");
  fluid->add_option("--config", fl.config, "instance JSON")
      ->required()
      ->check(CLI::ExistingFile);
  fluid->add_option("--plan", fl.plan, "plan JSON")
      ->required()
      ->check(CLI::ExistingFile);
  fluid->add_option("--policy", fl.policy,
                    "gg-sp, prioritize, sli or sli-general")
      ->capture_default_str();
  fluid->add_option("-T,--horizon", fl.horizon, "seconds")
      ->capture_default_str();
  fluid->add_option("--dt", fl.dt, "RK4 step in seconds")
      ->capture_default_str();
  fluid->add_option("--record-every", fl.record_every, "steps per sample")
      ->capture_default_str();
  fluid->add_option("--out", fl.out, "trajectory CSV")->required();

  SimulateArgs sim;
  auto* simulate =
      app.add_subcommand("simulate", "Run the discrete-event simulator");
  simulate->add_option("--config", sim.config, "instance JSON")
      ->required()
      ->check(CLI::ExistingFile);
  simulate->add_option("--plan", sim.plan, "plan JSON")
      ->check(CLI::ExistingFile);
  simulate
      ->add_option("--policy", sim.policy,
                   "gg-sp, fi-wsp, gi-wsp, gf-wsp, fg-sp, prioritize, sli or "
                   "sli-general")
      ->capture_default_str();
  simulate->add_option("-n,--gpus", sim.gpus, "GPU count")
      ->capture_default_str();
  simulate->add_option("-T,--horizon", sim.horizon,
                       "seconds; 0 sizes it from the slowest decode");
  simulate->add_option("--warmup", sim.warmup, "discarded horizon fraction")
      ->capture_default_str();
  simulate->add_option("--seeds", sim.seeds, "replications")
      ->capture_default_str();
  simulate->add_option("--first-seed", sim.first_seed, "first root seed")
      ->capture_default_str();
  simulate->add_flag("--audit", sim.audit, "check conservation every event");
  simulate->add_flag("--check-determinism", sim.check,
                     "run each seed twice and compare");
  simulate->add_option("--out", sim.out, "metrics CSV")->required();

  SweepArgs sw;
  std::vector<std::pair<CLI::App*, std::optional<fs::ExperimentKind>>> sweeps;
  auto add_sweep = [&](const std::string& name, const std::string& help,
                       std::optional<fs::ExperimentKind> kind) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--spec", sw.spec, "experiment JSON")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", sw.out, "output directory")->required();
    sweeps.emplace_back(sub, kind);
  };
  add_sweep("sweep", "Run the experiment described by a spec", std::nullopt);
  add_sweep("convergence", "Convergence experiment",
            fs::ExperimentKind::kConvergence);
  add_sweep("baselines", "Baseline comparison",
            fs::ExperimentKind::kBaselines);
  add_sweep("hardware", "Hardware sensitivity sweep",
            fs::ExperimentKind::kHardwareSweep);
  add_sweep("pricing", "Pricing grid", fs::ExperimentKind::kPricingGrid);
  add_sweep("fluid-trace", "Fluid trajectory experiment",
            fs::ExperimentKind::kFluidTrace);

  CLI11_PARSE(app, argc, argv);

  try {
    if (calibrate->parsed()) return run_calibrate(cal);
    if (plan->parsed()) return run_plan(pl);
    if (frontier->parsed()) return run_frontier_cmd(fr);
    if (fluid->parsed()) return run_fluid(fl);
    if (simulate->parsed()) return run_simulate(sim);
    for (const auto& [sub, kind] : sweeps) {
      if (sub->parsed()) {
        sw.kind = kind;
        return run_sweep(sw);
      }
    }
  } catch (const fs::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
