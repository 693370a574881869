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

#include "fluidsched/experiments.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "fluidsched/error.h"

namespace fluidsched {

namespace {

constexpr ExperimentKind kAllKinds[] = {
    ExperimentKind::kConvergence,   ExperimentKind::kBaselines,
    ExperimentKind::kFrontier,      ExperimentKind::kHardwareSweep,
    ExperimentKind::kPricingGrid,   ExperimentKind::kFluidTrace,
};

std::string class_metric(std::string_view name, size_t i) {
  return std::string(name) + "." + std::to_string(i);
}

ChargingScheme plan_scheme_of(const ExperimentSpec& spec) {
  return spec.plan_scheme.value_or(spec.instance.pricing.scheme);
}

// Plan handed to policies. Bundled plans without SLIs get their decode
// buffer removed when possible so the gate targets a q_d = 0 point.
FluidPlan policy_plan(const Instance& instance, const SliSpec& sli,
                      ChargingScheme scheme) {
  FluidPlan plan = solve_plan(instance, sli, scheme);
  if (scheme == ChargingScheme::kBundled && !sli.any_active() &&
      plan.total_q_d() > 0.0 &&
      decode_buffer_elimination_holds(instance.hardware)) {
    plan = eliminate_decode_buffer(plan, instance);
  }
  return plan;
}

std::vector<SimMetrics> run_grid(const ExperimentSpec& spec,
                                 const FluidPlan& plan,
                                 const std::vector<PolicyKind>& policies,
                                 const std::vector<int>& gpu_counts) {
  struct Job {
    PolicyKind policy;
    int n;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  for (PolicyKind p : policies) {
    for (int n : gpu_counts) {
      for (uint64_t s : spec.seeds) jobs.push_back({p, n, s});
    }
  }
  const double horizon = spec.horizon > 0.0
                             ? spec.horizon
                             : auto_horizon(spec.instance,
                                            spec.warmup_fraction);
  std::vector<SimMetrics> out(jobs.size());
  parallel_for(jobs.size(), thread_count(), [&](size_t k) {
    SimConfig cfg;
    cfg.policy = jobs[k].policy;
    cfg.num_gpus = jobs[k].n;
    cfg.seed = jobs[k].seed;
    cfg.horizon = horizon;
    cfg.warmup_fraction = spec.warmup_fraction;
    out[k] = simulate(spec.instance, cfg, &plan);
  });
  return out;
}

void add_run_rows(ResultTable& t, const std::string& config,
                  const SimMetrics& m) {
  const std::string seed = std::to_string(m.seed);
  t.add(config, seed, "rev_per_gpu", m.revenue_per_gpu);
  t.add(config, seed, "tpot", m.tpot);
  for (size_t i = 0; i < m.classes.size(); ++i) {
    const auto& c = m.classes[i];
    t.add(config, seed, class_metric("x_occ", i), c.x_occ);
    t.add(config, seed, class_metric("ym_occ", i), c.ym_occ);
    t.add(config, seed, class_metric("ys_occ", i), c.ys_occ);
    t.add(config, seed, class_metric("qp_scaled", i), c.qp_scaled);
    t.add(config, seed, class_metric("qd_scaled", i), c.qd_scaled);
  }
}

// Seed means of every per-run metric plus the revenue spread.
void add_run_summary(ResultTable& t, const std::string& config,
                     const std::vector<const SimMetrics*>& runs) {
  if (runs.empty()) return;
  std::vector<double> rev;
  for (const auto* m : runs) rev.push_back(m->revenue_per_gpu);
  t.add(config, "", "rev_mean", mean(rev));
  t.add(config, "", "rev_std", stddev(rev));
  auto avg = [&](auto field) {
    std::vector<double> v;
    for (const auto* m : runs) v.push_back(field(*m));
    return mean(v);
  };
  t.add(config, "", "tpot_mean",
        avg([](const SimMetrics& m) { return m.tpot; }));
  const size_t classes = runs.front()->classes.size();
  for (size_t i = 0; i < classes; ++i) {
    t.add(config, "", class_metric("x_occ_mean", i),
          avg([i](const SimMetrics& m) { return m.classes[i].x_occ; }));
    t.add(config, "", class_metric("ym_occ_mean", i),
          avg([i](const SimMetrics& m) { return m.classes[i].ym_occ; }));
    t.add(config, "", class_metric("ys_occ_mean", i),
          avg([i](const SimMetrics& m) { return m.classes[i].ys_occ; }));
    t.add(config, "", class_metric("qp_scaled_mean", i),
          avg([i](const SimMetrics& m) { return m.classes[i].qp_scaled; }));
    t.add(config, "", class_metric("qd_scaled_mean", i),
          avg([i](const SimMetrics& m) { return m.classes[i].qd_scaled; }));
  }
}

void add_plan_rows(ResultTable& t, const FluidPlan& plan) {
  t.add("fluid", "", "objective", plan.objective);
  for (size_t i = 0; i < plan.classes.size(); ++i) {
    const auto& c = plan.classes[i];
    t.add("fluid", "", class_metric("x_star", i), c.x);
    t.add("fluid", "", class_metric("ym_star", i), c.y_m);
    t.add("fluid", "", class_metric("ys_star", i), c.y_s);
    t.add("fluid", "", class_metric("qp_star", i), c.q_p);
    t.add("fluid", "", class_metric("qd_star", i), c.q_d);
  }
}

std::vector<double> json_doubles(const Json& j) {
  if (j.is_string()) return parse_grid(j.get<std::string>());
  return j.get<std::vector<double>>();
}

// Applies one hardware-grid coordinate.
void set_hardware(HardwareProfile& hw, const std::string& key, double v) {
  if (key == "B") {
    hw.batch_size = static_cast<int>(std::lround(v));
  } else if (key == "alpha") {
    hw.base_time = v + hw.slope * hw.knee;
  } else if (key == "beta") {
    const double alpha = hw.alpha();
    hw.slope = v;
    hw.base_time = alpha + v * hw.knee;
  } else if (key == "gamma") {
    hw.solo_speed = v;
  } else {
    throw Error(ErrorCode::kInvalidArgument,
                "unknown hardware grid key '" + key + "'");
  }
}

void add_hardware_point(ResultTable& t, const std::string& config,
                        const Instance& instance, ChargingScheme scheme,
                        const SliSpec& sli) {
  try {
    validate(instance.hardware);
    const FluidPlan plan = solve_plan(instance, sli, scheme);
    t.add(config, "", "feasible", 1.0);
    t.add(config, "", "objective", plan.objective);
    t.add(config, "", "mixed_fraction", plan.mixed_fraction());
    t.add(config, "", "tpot",
          plan_tpot(instance.hardware, plan.mixed_fraction()));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInfeasible &&
        e.code() != ErrorCode::kInvalidArgument) {
      throw;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    t.add(config, "", "feasible", 0.0);
    t.add(config, "", "objective", nan);
    t.add(config, "", "mixed_fraction", nan);
    t.add(config, "", "tpot", nan);
  }
}

std::string key_value(const std::string& key, double v) {
  return key + "=" + format_double(v);
}

}  // namespace

std::string_view experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kConvergence: return "convergence";
    case ExperimentKind::kBaselines: return "baselines";
    case ExperimentKind::kFrontier: return "frontier";
    case ExperimentKind::kHardwareSweep: return "hardware";
    case ExperimentKind::kPricingGrid: return "pricing";
    case ExperimentKind::kFluidTrace: return "fluid-trace";
  }
  return "?";
}

ExperimentKind parse_experiment(std::string_view name) {
  for (ExperimentKind k : kAllKinds) {
    if (name == experiment_name(k)) return k;
  }
  throw Error(ErrorCode::kParse,
              "unknown experiment kind '" + std::string(name) + "'");
}

std::vector<double> parse_grid(std::string_view text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : text) {
    if (ch == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  if (parts.size() != 3) {
    throw Error(ErrorCode::kParse, "grid must be a:b:step");
  }
  const double a = parse_double(parts[0]);
  const double b = parse_double(parts[1]);
  const double step = parse_double(parts[2]);
  if (!(step > 0.0) || b < a) {
    throw Error(ErrorCode::kParse, "grid needs step > 0 and a <= b");
  }
  std::vector<double> grid;
  const long count = static_cast<long>(std::floor((b - a) / step + 1e-9));
  for (long k = 0; k <= count; ++k) {
    // Trim accumulated binary error so grid labels stay readable.
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", a + k * step);
    grid.push_back(std::strtod(buf, nullptr));
  }
  return grid;
}

ExperimentSpec spec_from_json(const Json& j, const std::string& base_dir) {
  ExperimentSpec s;
  try {
    s.kind = parse_experiment(j.at("kind").get<std::string>());
    std::filesystem::path inst = j.at("instance").get<std::string>();
    if (inst.is_relative() && !base_dir.empty()) inst = base_dir / inst;
    s.instance_path = inst.string();
    s.instance = load_instance(s.instance_path);
    if (j.contains("n")) s.gpu_counts = j["n"].get<std::vector<int>>();
    if (j.contains("seeds")) {
      s.seeds = j["seeds"].get<std::vector<uint64_t>>();
    } else if (j.contains("root_seed")) {
      const uint64_t root = j["root_seed"].get<uint64_t>();
      const int count = j.value("num_seeds", 5);
      s.seeds.clear();
      for (int k = 0; k < count; ++k) s.seeds.push_back(root + k);
    }
    if (j.contains("policies")) {
      s.policies.clear();
      for (const auto& p : j["policies"]) {
        s.policies.push_back(parse_policy(p.get<std::string>()));
      }
    } else if (j.contains("policy") &&
               s.kind != ExperimentKind::kFluidTrace) {
      s.policies = {parse_policy(j["policy"].get<std::string>())};
    }
    if (j.contains("scheme")) {
      s.plan_scheme = parse_scheme(j["scheme"].get<std::string>());
    }
    s.horizon = j.value("horizon", 0.0);
    s.warmup_fraction = j.value("warmup", 0.3);
    if (j.contains("axis")) s.axis = parse_axis(j["axis"].get<std::string>());
    if (j.contains("grid")) s.grid = json_doubles(j["grid"]);
    if (j.contains("sli")) s.base_sli = sli_from_json(j["sli"]);
    if (j.contains("hardware_grids")) {
      for (const auto& [key, val] : j["hardware_grids"].items()) {
        s.hardware_grids[key] = json_doubles(val);
      }
    }
    if (j.contains("heatmap")) {
      s.heatmap = j["heatmap"].get<std::vector<std::string>>();
    }
    if (j.contains("k")) s.price_totals = j["k"].get<std::vector<double>>();
    s.ratio_points = j.value("ratio_points", 50);
    if (s.kind == ExperimentKind::kFluidTrace && j.contains("policy")) {
      s.fluid_policy = parse_fluid_policy(j["policy"].get<std::string>());
    }
    s.fluid_horizon = j.value("T", 2000.0);
    s.fluid_dt = j.value("dt", 0.01);
    s.fluid_record_every = j.value("record_every", size_t{100});
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("experiment spec: ") + e.what());
  }
  if (s.gpu_counts.empty() || s.seeds.empty() || s.policies.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "experiment grids must be nonempty");
  }
  std::vector<uint64_t> sorted = s.seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::kInvalidArgument, "seeds must be distinct");
  }
  return s;
}

ExperimentSpec load_spec(const std::string& path) {
  const std::filesystem::path p(path);
  return spec_from_json(read_json_file(path), p.parent_path().string());
}

Json to_json(const ExperimentSpec& s) {
  Json j;
  j["kind"] = experiment_name(s.kind);
  j["instance"] = s.instance_path;
  j["n"] = s.gpu_counts;
  j["seeds"] = s.seeds;
  Json pols = Json::array();
  for (PolicyKind p : s.policies) pols.push_back(policy_name(p));
  j["policies"] = pols;
  j["scheme"] = scheme_name(plan_scheme_of(s));
  j["horizon"] = s.horizon;
  j["warmup"] = s.warmup_fraction;
  j["axis"] = axis_name(s.axis);
  j["grid"] = s.grid;
  j["sli"] = to_json(s.base_sli);
  Json grids = Json::object();
  for (const auto& [key, val] : s.hardware_grids) grids[key] = val;
  j["hardware_grids"] = grids;
  j["heatmap"] = s.heatmap;
  j["k"] = s.price_totals;
  j["ratio_points"] = s.ratio_points;
  j["policy"] = fluid_policy_name(s.fluid_policy);
  j["T"] = s.fluid_horizon;
  j["dt"] = s.fluid_dt;
  j["record_every"] = s.fluid_record_every;
  return j;
}

void ResultTable::add(std::string config, std::string seed, std::string metric,
                      double value) {
  rows.push_back({experiment, std::move(config), std::move(seed),
                  std::move(metric), value});
}

double ResultTable::get(std::string_view config, std::string_view metric,
                        std::string_view seed) const {
  for (const auto& r : rows) {
    if (r.config == config && r.metric == metric && r.seed == seed) {
      return r.value;
    }
  }
  throw Error(ErrorCode::kInvalidArgument,
              "no row " + std::string(config) + "/" + std::string(metric));
}

std::vector<double> ResultTable::values(std::string_view config,
                                        std::string_view metric) const {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.config == config && r.metric == metric && !r.seed.empty()) {
      out.push_back(r.value);
    }
  }
  return out;
}

std::string provenance_line(const std::string& instance_hash) {
  return "# " + std::string(kToolName) + " " + std::string(kToolVersion) +
         " instance_hash=" + instance_hash + "\n";
}

std::string ResultTable::to_csv() const {
  std::string out = provenance_line(instance_hash);
  out += "experiment,config,seed,metric,value\n";
  for (const auto& r : rows) {
    out += r.experiment + ',' + r.config + ',' + r.seed + ',' + r.metric +
           ',' + format_double(r.value) + '\n';
  }
  return out;
}

int thread_count() {
  if (const char* env = std::getenv("FLUIDSCHED_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(size_t count, int threads,
                  const std::function<void(size_t)>& task) {
  const size_t workers =
      std::min(count, static_cast<size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (size_t k = 0; k < count; ++k) task(k);
    return;
  }
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t k = next++; k < count && !failed; k = next++) {
        try {
          task(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double auto_horizon(const Instance& instance, double warmup_fraction) {
  const ServiceRates r = derive_rates(instance.classes, instance.hardware);
  const double slowest = *std::min_element(r.mixed.begin(), r.mixed.end());
  return std::ceil(50.0 / slowest / (1.0 - warmup_fraction));
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string convergence_config(PolicyKind policy, int n) {
  return "policy=" + std::string(policy_name(policy)) +
         ";n=" + std::to_string(n);
}

std::string baseline_config(PolicyKind policy) {
  return "policy=" + std::string(policy_name(policy));
}

ResultTable run_convergence(const ExperimentSpec& spec) {
  ResultTable t;
  t.experiment = "convergence";
  t.instance_hash = instance_hash(spec.instance);
  const FluidPlan plan =
      policy_plan(spec.instance, spec.base_sli, plan_scheme_of(spec));
  const std::vector<SimMetrics> runs =
      run_grid(spec, plan, spec.policies, spec.gpu_counts);
  size_t k = 0;
  for (PolicyKind p : spec.policies) {
    for (int n : spec.gpu_counts) {
      const std::string config = convergence_config(p, n);
      std::vector<const SimMetrics*> group;
      for (size_t s = 0; s < spec.seeds.size(); ++s, ++k) {
        add_run_rows(t, config, runs[k]);
        group.push_back(&runs[k]);
      }
      add_run_summary(t, config, group);
    }
  }
  add_plan_rows(t, plan);
  return t;
}

ResultTable run_baselines(const ExperimentSpec& spec) {
  ResultTable t;
  t.experiment = "baselines";
  t.instance_hash = instance_hash(spec.instance);
  const FluidPlan plan =
      policy_plan(spec.instance, spec.base_sli, plan_scheme_of(spec));
  const int n = spec.gpu_counts.front();
  const std::vector<SimMetrics> runs =
      run_grid(spec, plan, spec.policies, {n});
  std::vector<double> means;
  size_t k = 0;
  for (PolicyKind p : spec.policies) {
    const std::string config = baseline_config(p);
    std::vector<const SimMetrics*> group;
    for (size_t s = 0; s < spec.seeds.size(); ++s, ++k) {
      add_run_rows(t, config, runs[k]);
      group.push_back(&runs[k]);
    }
    add_run_summary(t, config, group);
    means.push_back(t.get(config, "rev_mean"));
  }
  const double best = *std::max_element(means.begin(), means.end());
  for (size_t i = 0; i < spec.policies.size(); ++i) {
    t.add(baseline_config(spec.policies[i]), "", "normalized_revenue",
          best > 0.0 ? means[i] / best : 0.0);
  }
  add_plan_rows(t, plan);
  return t;
}

ResultTable run_frontier(const ExperimentSpec& spec) {
  if (spec.grid.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "frontier grid is empty");
  }
  ResultTable t;
  t.experiment = "frontier";
  t.instance_hash = instance_hash(spec.instance);
  const std::vector<FrontierPoint> points =
      sweep_frontier(spec.instance, spec.axis, spec.grid, plan_scheme_of(spec),
                     spec.base_sli);
  double slope = 0.0;
  const FrontierPoint* prev = nullptr;
  for (const auto& p : points) {
    const std::string config = key_value("eta", p.eta);
    t.add(config, "", "objective", p.objective);
    t.add(config, "", "feasible", p.feasible ? 1.0 : 0.0);
    t.add(config, "", "shadow_price", p.shadow_price + 0.0);
    if (p.feasible && prev != nullptr && prev->feasible &&
        p.eta != prev->eta) {
      slope = std::max(slope, std::abs((p.objective - prev->objective) /
                                       (p.eta - prev->eta)));
    }
    prev = &p;
  }
  t.add("summary", "", "max_abs_slope", slope);
  return t;
}

ResultTable run_hardware_sweep(const ExperimentSpec& spec) {
  ResultTable t;
  t.experiment = "hardware";
  t.instance_hash = instance_hash(spec.instance);
  const ChargingScheme scheme = plan_scheme_of(spec);
  for (const auto& [key, grid] : spec.hardware_grids) {
    for (double v : grid) {
      Instance inst = spec.instance;
      set_hardware(inst.hardware, key, v);
      add_hardware_point(t, key_value(key, v), inst, scheme, spec.base_sli);
    }
  }
  if (spec.heatmap.size() == 2) {
    const std::string& ka = spec.heatmap[0];
    const std::string& kb = spec.heatmap[1];
    const auto ga = spec.hardware_grids.find(ka);
    const auto gb = spec.hardware_grids.find(kb);
    if (ga == spec.hardware_grids.end() || gb == spec.hardware_grids.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "heatmap keys need hardware grids");
    }
    for (double a : ga->second) {
      for (double b : gb->second) {
        Instance inst = spec.instance;
        set_hardware(inst.hardware, ka, a);
        set_hardware(inst.hardware, kb, b);
        add_hardware_point(t, key_value(ka, a) + ";" + key_value(kb, b), inst,
                           scheme, spec.base_sli);
      }
    }
  }
  return t;
}

ResultTable run_pricing_grid(const ExperimentSpec& spec) {
  if (spec.ratio_points < 1) {
    throw Error(ErrorCode::kInvalidArgument, "ratio grid is empty");
  }
  ResultTable t;
  t.experiment = "pricing";
  t.instance_hash = instance_hash(spec.instance);
  const ChargingScheme scheme = plan_scheme_of(spec);
  const int points = spec.ratio_points;
  for (double k : spec.price_totals) {
    int best = -1;
    double best_obj = -std::numeric_limits<double>::infinity();
    double best_share = 0.0;
    for (int j = 0; j < points; ++j) {
      const double share = points == 1 ? 0.5 : double(j) / (points - 1);
      Instance inst = spec.instance;
      inst.pricing.prefill_price = k * share;
      inst.pricing.decode_price = k * (1.0 - share);
      inst.pricing.scheme = scheme;
      const FluidPlan plan = solve_plan(inst, spec.base_sli, scheme);
      t.add(key_value("k", k) + ";" + key_value("share", share), "",
            "objective", plan.objective);
      // Strict improvement keeps the first cell among exact ties.
      if (plan.objective > best_obj * (1.0 + 1e-12) || best < 0) {
        best = j;
        best_obj = plan.objective;
        best_share = share;
      }
    }
    const std::string config = key_value("k", k);
    t.add(config, "", "argmax_cell", best);
    t.add(config, "", "argmax_share", best_share);
    t.add(config, "", "argmax_ratio",
          best_share >= 1.0 ? std::numeric_limits<double>::infinity()
                            : best_share / (1.0 - best_share));
    t.add(config, "", "max_objective", best_obj);
  }
  return t;
}

FluidTraceResult run_fluid_trace(const ExperimentSpec& spec) {
  const FluidPlan plan =
      policy_plan(spec.instance, spec.base_sli, plan_scheme_of(spec));
  FluidTraceResult r;
  r.model = make_fluid_model(spec.instance, plan, spec.fluid_policy);
  FluidConfig cfg;
  cfg.dt = spec.fluid_dt;
  cfg.horizon = spec.fluid_horizon;
  cfg.record_every = spec.fluid_record_every;
  r.trajectory = integrate(r.model, empty_state(spec.instance.num_classes()),
                           cfg);
  auto& t = r.summary;
  t.experiment = "fluid-trace";
  t.instance_hash = instance_hash(spec.instance);
  const std::string config =
      "policy=" + std::string(fluid_policy_name(spec.fluid_policy));
  const auto occ = occupancies(r.model, r.trajectory.states.back());
  double x_err = 0.0, q_d = 0.0;
  for (size_t i = 0; i < occ.size(); ++i) {
    x_err = std::max(x_err, std::abs(occ[i].x - plan.classes[i].x));
    q_d += occ[i].q_d;
  }
  const auto& d = r.trajectory.diagnostics;
  t.add(config, "", "x_error_inf", x_err);
  t.add(config, "", "q_d_final", q_d);
  t.add(config, "", "W_d_final",
        weighted_decode_work(r.model, r.trajectory.states.back()));
  t.add(config, "", "drift_checks", static_cast<double>(d.drift_checks));
  t.add(config, "", "drift_violations",
        static_cast<double>(d.drift_violations));
  t.add(config, "", "max_drift_excess", d.max_drift_excess);
  t.add(config, "", "drift_identity_error", d.max_drift_identity_error);
  t.add(config, "", "max_projection", d.max_projection);
  add_plan_rows(t, plan);
  return r;
}

std::string trajectory_csv(const FluidModel& model,
                           const FluidTrajectory& trajectory,
                           const std::string& instance_hash) {
  std::ostringstream out;
  out << provenance_line(instance_hash);
  out << "t,class,q_p,q_d,x,y_m,y_s,W_d\n";
  for (size_t k = 0; k < trajectory.times.size(); ++k) {
    const auto& s = trajectory.states[k];
    const std::string t = format_double(trajectory.times[k]);
    const std::string w = format_double(weighted_decode_work(model, s));
    const auto occ = occupancies(model, s);
    for (size_t i = 0; i < occ.size(); ++i) {
      out << t << ',' << i << ',' << format_double(occ[i].q_p) << ','
          << format_double(occ[i].q_d) << ',' << format_double(occ[i].x)
          << ',' << format_double(occ[i].y_m) << ','
          << format_double(occ[i].y_s) << ',' << w << '\n';
    }
  }
  return out.str();
}

std::string frontier_csv(const std::vector<FrontierPoint>& points,
                         const std::string& instance_hash) {
  std::string out = provenance_line(instance_hash);
  out += "eta,objective,feasible,shadow_price\n";
  for (const auto& p : points) {
    out += format_double(p.eta) + ',' + format_double(p.objective) + ',' +
           (p.feasible ? "true" : "false") + ',' +
           format_double(p.shadow_price + 0.0) + '\n';
  }
  return out;
}

std::string metrics_csv(const std::vector<SimMetrics>& runs,
                        const std::string& instance_hash) {
  std::string out = provenance_line(instance_hash);
  out +=
      "policy,n,seed,rev_per_gpu,class,x_occ,ym_occ,ys_occ,qp_scaled,"
      "qd_scaled,tpot_avg\n";
  for (const auto& m : runs) {
    const std::string head = std::string(policy_name(m.policy)) + ',' +
                             std::to_string(m.num_gpus) + ',' +
                             std::to_string(m.seed) + ',' +
                             format_double(m.revenue_per_gpu) + ',';
    for (size_t i = 0; i < m.classes.size(); ++i) {
      const auto& c = m.classes[i];
      out += head + std::to_string(i) + ',' + format_double(c.x_occ) + ',' +
             format_double(c.ym_occ) + ',' + format_double(c.ys_occ) + ',' +
             format_double(c.qp_scaled) + ',' + format_double(c.qd_scaled) +
             ',' + format_double(c.tpot) + '\n';
    }
  }
  return out;
}

std::vector<std::string> run_experiment(const ExperimentSpec& spec,
                                        const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  const std::string hash = instance_hash(spec.instance);
  std::vector<std::string> files;
  ResultTable table;
  switch (spec.kind) {
    case ExperimentKind::kConvergence: table = run_convergence(spec); break;
    case ExperimentKind::kBaselines: table = run_baselines(spec); break;
    case ExperimentKind::kFrontier: {
      table = run_frontier(spec);
      const auto points =
          sweep_frontier(spec.instance, spec.axis, spec.grid,
                         plan_scheme_of(spec), spec.base_sli);
      write_text_file((dir / "frontier.csv").string(),
                      frontier_csv(points, hash));
      files.push_back("frontier.csv");
      break;
    }
    case ExperimentKind::kHardwareSweep:
      table = run_hardware_sweep(spec);
      break;
    case ExperimentKind::kPricingGrid: table = run_pricing_grid(spec); break;
    case ExperimentKind::kFluidTrace: {
      FluidTraceResult r = run_fluid_trace(spec);
      write_text_file((dir / "trajectory.csv").string(),
                      trajectory_csv(r.model, r.trajectory, hash));
      files.push_back("trajectory.csv");
      table = std::move(r.summary);
      break;
    }
  }
  write_text_file((dir / "results.csv").string(), table.to_csv());
  files.insert(files.begin(), "results.csv");

  Json manifest;
  manifest["tool"] = kToolName;
  manifest["version"] = kToolVersion;
  manifest["experiment"] = experiment_name(spec.kind);
  manifest["instance_hash"] = hash;
  manifest["instance"] = to_json(spec.instance);
  manifest["root_seed"] = spec.seeds.front();
  manifest["outputs"] = files;
  manifest["spec"] = to_json(spec);
  write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  files.push_back("manifest.json");
  return files;
}

}  // namespace fluidsched
