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

#include "fluidsched/fluid.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fluidsched/error.h"

namespace fluidsched {

namespace {

constexpr size_t kFields = 6;
constexpr double kStateTol = 1e-9;

std::vector<double> flatten(const FluidState& s) {
  std::vector<double> v;
  v.reserve(s.classes.size() * kFields);
  for (const auto& c : s.classes) {
    v.insert(v.end(), {c.q_p, c.x, c.buffer_mixed, c.buffer_solo,
                       c.hosted_mixed, c.hosted_solo});
  }
  return v;
}

FluidState unflatten(const std::vector<double>& v) {
  FluidState s;
  s.classes.resize(v.size() / kFields);
  for (size_t i = 0; i < s.classes.size(); ++i) {
    const double* p = v.data() + i * kFields;
    s.classes[i] = {p[0], p[1], p[2], p[3], p[4], p[5]};
  }
  return s;
}

double sum(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

bool pool_split(FluidPolicy p) {
  return p == FluidPolicy::kSliAware || p == FluidPolicy::kSliAwareGeneral;
}

// Splits `amount` over classes in proportion to `weight`, each capped at
// `cap`. Mass left after every weighted class is capped goes to the rest in
// proportion to their cap.
std::vector<double> water_fill(double amount, const std::vector<double>& cap,
                               const std::vector<double>& weight) {
  const size_t n = cap.size();
  std::vector<double> out(n, 0.0);
  std::vector<bool> open(n);
  for (size_t i = 0; i < n; ++i) open[i] = cap[i] > 0.0 && weight[i] > 0.0;
  double left = amount;
  while (left > 0.0) {
    double wsum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (open[i]) wsum += weight[i];
    }
    if (wsum <= 0.0) break;
    bool capped = false;
    for (size_t i = 0; i < n; ++i) {
      if (open[i] && out[i] + left * weight[i] / wsum >= cap[i]) {
        capped = true;
      }
    }
    if (!capped) {
      for (size_t i = 0; i < n; ++i) {
        if (open[i]) out[i] += left * weight[i] / wsum;
      }
      left = 0.0;
      break;
    }
    for (size_t i = 0; i < n; ++i) {
      if (open[i] && out[i] + left * weight[i] / wsum >= cap[i]) {
        left -= cap[i] - out[i];
        out[i] = cap[i];
        open[i] = false;
      }
    }
  }
  if (left > 0.0) {
    double rest = 0.0;
    for (size_t i = 0; i < n; ++i) rest += cap[i] - out[i];
    if (rest > 0.0) {
      const double frac = std::min(1.0, left / rest);
      for (size_t i = 0; i < n; ++i) out[i] += frac * (cap[i] - out[i]);
    }
  }
  return out;
}

struct PoolTake {
  std::vector<double> from_buffer;
  std::vector<double> from_fresh;
};

// A pool accepting `rate` from its buffer supply first, then from fresh
// supply. `weight` selects among buffered classes; empty means in
// proportion to supply.
PoolTake take(double rate, const std::vector<double>& buffer,
              const std::vector<double>& fresh,
              const std::vector<double>* weight) {
  const size_t n = buffer.size();
  PoolTake t{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  const double sb = sum(buffer), sf = sum(fresh);
  const double total = std::clamp(rate, 0.0, sb + sf);
  if (weight != nullptr) {
    // Fresh jobs of a class with an empty buffer pass straight through, so
    // each class competes with its whole supply.
    std::vector<double> supply(n);
    for (size_t i = 0; i < n; ++i) supply[i] = buffer[i] + fresh[i];
    const std::vector<double> got = water_fill(total, supply, *weight);
    for (size_t i = 0; i < n; ++i) {
      t.from_buffer[i] = std::min(got[i], buffer[i]);
      t.from_fresh[i] = got[i] - t.from_buffer[i];
    }
    return t;
  }
  const double tb = std::min(total, sb);
  if (tb > 0.0) {
    for (size_t i = 0; i < n; ++i) t.from_buffer[i] = tb * buffer[i] / sb;
  }
  const double tf = total - tb;
  if (tf > 0.0 && sf > 0.0) {
    for (size_t i = 0; i < n; ++i) t.from_fresh[i] = tf * fresh[i] / sf;
  }
  return t;
}

// Fraction of mixed-group GPUs running a prefill.
double busy_fraction(const FluidModel& m, const FluidState& s) {
  if (m.mixed_fraction <= 0.0) return 0.0;
  double x = 0.0;
  for (const auto& c : s.classes) x += c.x;
  return std::clamp(x / m.mixed_fraction, 0.0, 1.0);
}

void check_state(const FluidModel& m, const FluidState& s) {
  if (s.classes.size() != m.classes.size()) {
    throw Error(ErrorCode::kInvalidArgument, "fluid state class mismatch");
  }
  double hm = 0.0, hs = 0.0;
  for (const auto& c : s.classes) {
    for (double v : {c.q_p, c.x, c.buffer_mixed, c.buffer_solo,
                     c.hosted_mixed, c.hosted_solo}) {
      if (!(v >= -kStateTol)) {
        throw Error(ErrorCode::kInfeasibleState, "negative fluid mass");
      }
    }
    hm += c.hosted_mixed;
    hs += c.hosted_solo;
  }
  if (hm > m.mixed_capacity + kStateTol || hs > m.solo_capacity + kStateTol) {
    throw Error(ErrorCode::kInfeasibleState, "decode pool over capacity");
  }
}

// Admission rates into prefill service.
std::vector<double> admissions(const FluidModel& m, const FluidState& s) {
  const size_t n = m.classes.size();
  const double inv_eps = 1.0 / m.epsilon;
  std::vector<double> u(n, 0.0);
  if (m.policy == FluidPolicy::kPrioritizeRoute) {
    double busy = 0.0, done = 0.0;
    for (size_t i = 0; i < n; ++i) {
      busy += s.classes[i].x;
      done += m.rates.prefill[i] * s.classes[i].x;
    }
    double budget = std::max(0.0, done + (m.mixed_fraction - busy) * inv_eps);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return m.params.priority[a] > m.params.priority[b];
    });
    for (size_t i : order) {
      const double want = m.classes[i].arrival_rate + s.classes[i].q_p * inv_eps;
      u[i] = std::min(budget, want);
      budget -= u[i];
    }
    return u;
  }
  for (size_t i = 0; i < n; ++i) {
    if (m.target_x[i] <= 0.0) continue;
    const auto& c = s.classes[i];
    const double want = m.classes[i].arrival_rate + c.q_p * inv_eps;
    const double room = m.rates.prefill[i] * c.x +
                        (m.target_x[i] - c.x) * inv_eps;
    u[i] = std::min(want, std::max(0.0, room));
  }
  return u;
}

}  // namespace

std::string_view fluid_policy_name(FluidPolicy policy) {
  switch (policy) {
    case FluidPolicy::kGateGreedy: return "gg-sp";
    case FluidPolicy::kPrioritizeRoute: return "prioritize";
    case FluidPolicy::kSliAware: return "sli";
    case FluidPolicy::kSliAwareGeneral: return "sli-general";
  }
  return "?";
}

FluidPolicy parse_fluid_policy(std::string_view name) {
  for (FluidPolicy p :
       {FluidPolicy::kGateGreedy, FluidPolicy::kPrioritizeRoute,
        FluidPolicy::kSliAware, FluidPolicy::kSliAwareGeneral}) {
    if (name == fluid_policy_name(p)) return p;
  }
  if (name == "prioritize-route") return FluidPolicy::kPrioritizeRoute;
  if (name == "sli-aware") return FluidPolicy::kSliAware;
  if (name == "sli-aware-general") return FluidPolicy::kSliAwareGeneral;
  throw Error(ErrorCode::kUnsupported,
              "no fluid dynamics for policy '" + std::string(name) + "'");
}

FluidModel make_fluid_model(const Instance& instance, const FluidPlan& plan,
                            FluidPolicy policy, double epsilon) {
  validate(instance);
  if (plan.classes.size() != instance.num_classes()) {
    throw Error(ErrorCode::kInvalidArgument, "plan/instance class mismatch");
  }
  if (!(epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "relaxation time must be > 0");
  }
  FluidModel m;
  m.policy = policy;
  m.classes = instance.classes;
  m.rates = derive_rates(instance.classes, instance.hardware);
  m.batch_size = instance.hardware.batch_size;
  for (const auto& c : plan.classes) m.target_x.push_back(c.x);
  m.mixed_fraction = std::min(1.0, plan.mixed_fraction());
  m.mixed_capacity = (m.batch_size - 1) * m.mixed_fraction;
  m.solo_capacity = m.batch_size * (1.0 - m.mixed_fraction);
  m.params = derive_policy_params(plan, instance, 1);
  m.epsilon = epsilon;
  return m;
}

FluidState empty_state(size_t num_classes) {
  FluidState s;
  s.classes.resize(num_classes);
  return s;
}

FluidState plan_state(const FluidModel& model, const FluidPlan& plan) {
  FluidState s = empty_state(plan.classes.size());
  for (size_t i = 0; i < plan.classes.size(); ++i) {
    const auto& p = plan.classes[i];
    auto& c = s.classes[i];
    c.q_p = p.q_p;
    c.x = p.x;
    c.hosted_mixed = p.y_m;
    c.hosted_solo = p.y_s;
    if (pool_split(model.policy)) {
      c.buffer_solo = model.params.solo_prob[i] * p.q_d;
      c.buffer_mixed = p.q_d - c.buffer_solo;
    } else {
      c.buffer_mixed = p.q_d;
    }
  }
  return s;
}

std::vector<FluidOccupancy> occupancies(const FluidModel& model,
                                        const FluidState& state) {
  const double phi = busy_fraction(model, state);
  std::vector<FluidOccupancy> out;
  out.reserve(state.classes.size());
  for (const auto& c : state.classes) {
    FluidOccupancy o;
    o.q_p = c.q_p;
    o.x = c.x;
    o.q_d = c.buffer_mixed + c.buffer_solo;
    o.y_m = phi * c.hosted_mixed;
    o.y_s = c.hosted_solo + (1.0 - phi) * c.hosted_mixed;
    out.push_back(o);
  }
  return out;
}

FluidState fluid_rhs(const FluidModel& model, const FluidState& state,
                     std::vector<FluidFlows>* flows) {
  check_state(model, state);
  const size_t n = model.classes.size();
  const double inv_eps = 1.0 / model.epsilon;
  const auto& r = model.rates;
  const double phi = busy_fraction(model, state);

  const std::vector<double> u = admissions(model, state);
  std::vector<double> done(n), mixed_rate(n), mixed_out(n), solo_out(n);
  double occ_m = 0.0, occ_s = 0.0, cap_m_done = 0.0, cap_s_done = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const auto& c = state.classes[i];
    done[i] = r.prefill[i] * c.x;
    mixed_rate[i] = phi * r.mixed[i] + (1.0 - phi) * r.solo[i];
    mixed_out[i] = mixed_rate[i] * c.hosted_mixed;
    solo_out[i] = r.solo[i] * c.hosted_solo;
    occ_m += c.hosted_mixed;
    occ_s += c.hosted_solo;
    cap_m_done += mixed_out[i];
    cap_s_done += solo_out[i];
  }
  const double accept_m =
      cap_m_done + (model.mixed_capacity - occ_m) * inv_eps;
  const double accept_s = cap_s_done + (model.solo_capacity - occ_s) * inv_eps;

  std::vector<double> in_m(n, 0.0), in_s(n, 0.0);
  std::vector<double> dq_m(n, 0.0), dq_s(n, 0.0);
  if (pool_split(model.policy)) {
    std::vector<double> bm(n), bs(n), fm(n), fs(n);
    for (size_t i = 0; i < n; ++i) {
      const double ps = model.params.solo_prob[i];
      bm[i] = state.classes[i].buffer_mixed * inv_eps;
      bs[i] = state.classes[i].buffer_solo * inv_eps;
      fs[i] = ps * done[i];
      fm[i] = done[i] - fs[i];
    }
    const bool general = model.policy == FluidPolicy::kSliAwareGeneral;
    const PoolTake tm =
        take(accept_m, bm, fm, general ? &model.params.mixed_weight : nullptr);
    const PoolTake ts =
        take(accept_s, bs, fs, general ? &model.params.solo_weight : nullptr);
    for (size_t i = 0; i < n; ++i) {
      in_m[i] = tm.from_buffer[i] + tm.from_fresh[i];
      in_s[i] = ts.from_buffer[i] + ts.from_fresh[i];
      dq_m[i] = fm[i] - tm.from_fresh[i] - tm.from_buffer[i];
      dq_s[i] = fs[i] - ts.from_fresh[i] - ts.from_buffer[i];
    }
  } else {
    // Greedy: solo slots first, then mixed, then one shared buffer.
    std::vector<double> b(n);
    for (size_t i = 0; i < n; ++i) {
      b[i] = state.classes[i].buffer_mixed * inv_eps;
    }
    const PoolTake ts = take(accept_s, b, done, nullptr);
    std::vector<double> b2(n), f2(n);
    for (size_t i = 0; i < n; ++i) {
      b2[i] = b[i] - ts.from_buffer[i];
      f2[i] = done[i] - ts.from_fresh[i];
    }
    const PoolTake tm = take(accept_m, b2, f2, nullptr);
    for (size_t i = 0; i < n; ++i) {
      in_s[i] = ts.from_buffer[i] + ts.from_fresh[i];
      in_m[i] = tm.from_buffer[i] + tm.from_fresh[i];
      dq_m[i] = f2[i] - tm.from_fresh[i] - ts.from_buffer[i] -
                tm.from_buffer[i];
    }
  }

  FluidState d = empty_state(n);
  if (flows != nullptr) flows->assign(n, FluidFlows{});
  for (size_t i = 0; i < n; ++i) {
    const auto& c = state.classes[i];
    const double theta = model.classes[i].patience_rate;
    auto& di = d.classes[i];
    di.q_p = model.classes[i].arrival_rate - theta * c.q_p - u[i];
    di.x = u[i] - done[i];
    di.buffer_mixed = dq_m[i] - theta * c.buffer_mixed;
    di.buffer_solo = dq_s[i] - theta * c.buffer_solo;
    di.hosted_mixed = in_m[i] - mixed_out[i];
    di.hosted_solo = in_s[i] - solo_out[i];
    if (flows != nullptr) {
      auto& f = (*flows)[i];
      f.arrival = model.classes[i].arrival_rate;
      f.prefill_abandon = theta * c.q_p;
      f.admission = u[i];
      f.prefill_completion = done[i];
      f.decode_abandon = theta * (c.buffer_mixed + c.buffer_solo);
      f.decode_completion = mixed_out[i] + solo_out[i];
    }
  }
  return d;
}

double weighted_decode_work(const FluidModel& model,
                            const FluidState& state) {
  double w = 0.0;
  for (size_t i = 0; i < state.classes.size(); ++i) {
    const auto& c = state.classes[i];
    w += (c.buffer_mixed + c.buffer_solo + c.hosted_mixed + c.hosted_solo) /
         model.rates.mixed[i];
  }
  return w;
}

double decode_work_drift(const FluidModel& model, const FluidState& state) {
  const auto occ = occupancies(model, state);
  const auto& r = model.rates;
  double d = 0.0;
  for (size_t i = 0; i < occ.size(); ++i) {
    d += r.prefill[i] / r.mixed[i] * occ[i].x;
    d -= occ[i].y_m + r.kappa * occ[i].y_s;
    d -= model.classes[i].patience_rate / r.mixed[i] * occ[i].q_d;
  }
  return d;
}

namespace {

// Clips the step back onto the state space. Returns the largest single
// correction.
double project(const FluidModel& m, FluidState& s) {
  double worst = 0.0;
  for (auto& c : s.classes) {
    for (double* v : {&c.q_p, &c.x, &c.buffer_mixed, &c.buffer_solo,
                      &c.hosted_mixed, &c.hosted_solo}) {
      if (*v < 0.0) {
        worst = std::max(worst, -*v);
        *v = 0.0;
      }
    }
  }
  const bool split = pool_split(m.policy);
  auto shrink = [&](double FluidClassState::*hosted,
                    double FluidClassState::*buffer, double cap) {
    double occ = 0.0;
    for (const auto& c : s.classes) occ += c.*hosted;
    if (occ <= cap || occ <= 0.0) return;
    worst = std::max(worst, occ - cap);
    const double keep = cap / occ;
    for (auto& c : s.classes) {
      c.*buffer += (1.0 - keep) * (c.*hosted);
      c.*hosted *= keep;
    }
  };
  shrink(&FluidClassState::hosted_mixed, &FluidClassState::buffer_mixed,
         m.mixed_capacity);
  shrink(&FluidClassState::hosted_solo,
         split ? &FluidClassState::buffer_solo : &FluidClassState::buffer_mixed,
         m.solo_capacity);
  double busy = 0.0;
  for (const auto& c : s.classes) busy += c.x;
  if (busy > m.mixed_fraction && busy > 0.0) {
    worst = std::max(worst, busy - m.mixed_fraction);
    const double keep = m.mixed_fraction / busy;
    for (auto& c : s.classes) {
      c.q_p += (1.0 - keep) * c.x;
      c.x *= keep;
    }
  }
  return worst;
}

// Moves buffer mass into free pool slots.
void fill_pool(std::vector<double*> buffer, std::vector<double*> hosted,
               double cap, const std::vector<double>* weight) {
  double occ = 0.0, queued = 0.0;
  std::vector<double> q(buffer.size());
  for (size_t i = 0; i < buffer.size(); ++i) {
    occ += *hosted[i];
    q[i] = *buffer[i];
    queued += q[i];
  }
  const double move = std::min(cap - occ, queued);
  if (move <= 0.0) return;
  std::vector<double> part(q.size());
  if (weight != nullptr) {
    part = water_fill(move, q, *weight);
  } else {
    for (size_t i = 0; i < q.size(); ++i) part[i] = move * q[i] / queued;
  }
  for (size_t i = 0; i < q.size(); ++i) {
    *buffer[i] -= part[i];
    *hosted[i] += part[i];
  }
}

// Work conservation: the gate admits up to target and free decode slots
// pull from the buffers.
void sweep(const FluidModel& m, FluidState& s) {
  const size_t n = s.classes.size();
  if (m.policy == FluidPolicy::kPrioritizeRoute) {
    double busy = 0.0;
    for (const auto& c : s.classes) busy += c.x;
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return m.params.priority[a] > m.params.priority[b];
    });
    for (size_t i : order) {
      auto& c = s.classes[i];
      const double move =
          std::min(c.q_p, std::max(0.0, m.mixed_fraction - busy));
      c.q_p -= move;
      c.x += move;
      busy += move;
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      auto& c = s.classes[i];
      const double move = std::min(c.q_p, std::max(0.0, m.target_x[i] - c.x));
      c.q_p -= move;
      c.x += move;
    }
  }

  std::vector<double*> bm, bs, hm, hs;
  for (auto& c : s.classes) {
    bm.push_back(&c.buffer_mixed);
    bs.push_back(&c.buffer_solo);
    hm.push_back(&c.hosted_mixed);
    hs.push_back(&c.hosted_solo);
  }
  if (pool_split(m.policy)) {
    const bool general = m.policy == FluidPolicy::kSliAwareGeneral;
    fill_pool(bm, hm, m.mixed_capacity,
              general ? &m.params.mixed_weight : nullptr);
    fill_pool(bs, hs, m.solo_capacity,
              general ? &m.params.solo_weight : nullptr);
  } else {
    fill_pool(bm, hs, m.solo_capacity, nullptr);
    fill_pool(bm, hm, m.mixed_capacity, nullptr);
  }
}

}  // namespace

FluidTrajectory integrate(const FluidModel& model, const FluidState& initial,
                          const FluidConfig& config) {
  if (!(config.dt > 0.0) || !(config.horizon >= config.dt)) {
    throw Error(ErrorCode::kInvalidArgument, "need dt > 0 and T >= dt");
  }
  check_state(model, initial);
  const size_t record_every = std::max<size_t>(1, config.record_every);
  const size_t steps =
      static_cast<size_t>(std::llround(config.horizon / config.dt));

  FluidTrajectory traj;
  auto& diag = traj.diagnostics;
  auto inspect = [&](double t, const FluidState& s, bool record) {
    const FluidState d = fluid_rhs(model, s);
    double dw = 0.0, q = 0.0, sink = 0.0;
    bool at_target = true;
    for (size_t i = 0; i < s.classes.size(); ++i) {
      const auto& c = s.classes[i];
      const auto& di = d.classes[i];
      dw += (di.buffer_mixed + di.buffer_solo + di.hosted_mixed +
             di.hosted_solo) /
            model.rates.mixed[i];
      const double qd = c.buffer_mixed + c.buffer_solo;
      q += qd;
      sink += model.classes[i].patience_rate / model.rates.mixed[i] * qd;
      if (c.x > model.target_x[i] + kStateTol) at_target = false;
    }
    diag.max_drift_identity_error =
        std::max(diag.max_drift_identity_error,
                 std::abs(dw - decode_work_drift(model, s)));
    if (q > kStateTol && at_target) {
      ++diag.drift_checks;
      const double excess = dw + sink;
      diag.max_drift_excess = std::max(diag.max_drift_excess, excess);
      if (excess > config.drift_tol) ++diag.drift_violations;
    }
    if (record) {
      traj.times.push_back(t);
      traj.states.push_back(s);
    }
  };

  FluidState s = initial;
  sweep(model, s);
  inspect(0.0, s, true);
  auto f = [&](const std::vector<double>& y) {
    FluidState st = unflatten(y);
    // Intermediate stages may dip below zero by rounding.
    for (auto& c : st.classes) {
      for (double* v : {&c.q_p, &c.x, &c.buffer_mixed, &c.buffer_solo,
                        &c.hosted_mixed, &c.hosted_solo}) {
        *v = std::max(0.0, *v);
      }
    }
    project(model, st);
    return flatten(fluid_rhs(model, st));
  };
  for (size_t k = 1; k <= steps; ++k) {
    s = unflatten(rk4_step(f, flatten(s), config.dt));
    const double moved = project(model, s);
    diag.max_projection = std::max(diag.max_projection, moved);
    if (moved > config.projection_tol) {
      throw Error(ErrorCode::kStepTooLarge,
                  "projection moved " + std::to_string(moved) +
                      " at t=" + std::to_string(k * config.dt) +
                      "; reduce dt");
    }
    sweep(model, s);
    ++diag.steps;
    inspect(k * config.dt, s, k % record_every == 0 || k == steps);
  }
  return traj;
}

}  // namespace fluidsched
