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

#include "fluidsched/simulator.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <string>

#include "fluidsched/error.h"
#include "fluidsched/random.h"

namespace fluidsched {

std::string_view policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kGateGreedy: return "gg-sp";
    case PolicyKind::kFcfsGreedy: return "fg-sp";
    case PolicyKind::kPrioritizeRoute: return "prioritize-route";
    case PolicyKind::kSliAware: return "sli-aware";
    case PolicyKind::kSliAwareGeneral: return "sli-aware-general";
    case PolicyKind::kFcfsImmediate: return "fi-wsp";
    case PolicyKind::kGateImmediate: return "gi-wsp";
    case PolicyKind::kGateFree: return "gf-wsp";
  }
  return "unknown";
}

const std::vector<PolicyKind>& all_policies() {
  static const std::vector<PolicyKind> kAll = {
      PolicyKind::kGateGreedy,     PolicyKind::kFcfsGreedy,
      PolicyKind::kPrioritizeRoute, PolicyKind::kSliAware,
      PolicyKind::kSliAwareGeneral, PolicyKind::kFcfsImmediate,
      PolicyKind::kGateImmediate,  PolicyKind::kGateFree};
  return kAll;
}

PolicyKind parse_policy(std::string_view name) {
  for (PolicyKind k : all_policies()) {
    if (policy_name(k) == name) return k;
  }
  if (name == "prioritize") return PolicyKind::kPrioritizeRoute;
  if (name == "sli") return PolicyKind::kSliAware;
  if (name == "sli-general") return PolicyKind::kSliAwareGeneral;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown policy '" + std::string(name) + "'");
}

bool policy_needs_plan(PolicyKind kind) {
  return kind != PolicyKind::kFcfsImmediate;
}

std::optional<int> gate_decision(const std::vector<int>& prefill_counts,
                                 const std::vector<int>& queue_lengths,
                                 const PolicyParams& params,
                                 bool cap_at_target) {
  const double n = params.num_gpus;
  int best = -1;
  double best_xi = 0.0;
  double best_delta = 0.0;
  for (size_t i = 0; i < queue_lengths.size(); ++i) {
    if (queue_lengths[i] <= 0) continue;
    const double target = params.prefill_target[i];
    if (!(target > 0.0)) continue;
    const double share = target / n;
    const double xi = (prefill_counts[i] - target) / share;
    if (cap_at_target && xi >= 0.0) continue;
    const double delta = queue_lengths[i] - params.prefill_queue_target[i];
    if (best < 0 || xi < best_xi || (xi == best_xi && delta > best_delta)) {
      best = static_cast<int>(i);
      best_xi = xi;
      best_delta = delta;
    }
  }
  if (best < 0) return std::nullopt;
  return best;
}

int weighted_pick(double u, const std::vector<double>& weights,
                  const std::vector<bool>& eligible) {
  double total = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (eligible[i] && weights[i] > 0.0) total += weights[i];
  }
  if (!(total > 0.0)) return -1;
  double left = u * total;
  int last = -1;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (!eligible[i] || !(weights[i] > 0.0)) continue;
    last = static_cast<int>(i);
    if (left < weights[i]) return last;
    left -= weights[i];
  }
  return last;
}

RouteTarget greedy_route(bool solo_slot_free, bool mixed_slot_free) {
  if (solo_slot_free) return RouteTarget::kSolo;
  if (mixed_slot_free) return RouteTarget::kMixed;
  return RouteTarget::kBuffer;
}

PoolChoice pool_route(double u, double solo_prob, bool solo_slot_free,
                      bool mixed_slot_free) {
  PoolChoice c;
  c.solo = u < solo_prob;
  c.buffered = c.solo ? !solo_slot_free : !mixed_slot_free;
  return c;
}

namespace {

enum class EventKind : uint8_t {
  kArrival,
  kPrefillDone,
  kDecodeDone,
  kAbandon,
};

struct Event {
  double time;
  uint64_t seq;
  uint32_t id;   // job, class for arrivals, GPU for decode completions
  uint32_t gen;
  EventKind kind;
};

struct EventLater {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

enum class Phase : uint8_t {
  kFree,
  kPrefillQueue,
  kPrefill,
  kDecodeQueue,
  kDecode,
};

struct Job {
  uint32_t gen = 0;
  Phase phase = Phase::kFree;
  bool mixed = false;  // decode mode the job is counted under
  int cls = 0;
  int gpu = -1;
  int slot = -1;
  int pool = 0;
  uint64_t ordinal = 0;
  double decode_start = 0.0;
  double token_start = 0.0;   // GPU token clock at placement
  double token_target = 0.0;  // GPU token clock at completion
};

enum class Group : uint8_t { kMixed, kSolo, kDynamic };

struct Gpu {
  Group group = Group::kSolo;
  int prefill = -1;
  bool dirty = false;
  uint32_t gen = 0;
  TokenClock clock;
  std::vector<int> decodes;
};

struct QueueEntry {
  uint32_t job;
  uint32_t gen;
  uint64_t seq;
};

class IndexSet {
 public:
  void resize(int n) {
    pos_.assign(n, -1);
    items_.clear();
  }
  void set(int v, bool member) {
    if (member) {
      if (pos_[v] >= 0) return;
      pos_[v] = static_cast<int>(items_.size());
      items_.push_back(v);
    } else {
      const int p = pos_[v];
      if (p < 0) return;
      const int last = items_.back();
      items_[p] = last;
      pos_[last] = p;
      items_.pop_back();
      pos_[v] = -1;
    }
  }
  bool empty() const { return items_.empty(); }
  size_t size() const { return items_.size(); }
  int at(size_t i) const { return items_[i]; }

 private:
  std::vector<int> pos_;
  std::vector<int> items_;
};

// Pools index decode buffers and free-slot sets.
constexpr int kMixedPool = 0;
constexpr int kSoloPool = 1;
constexpr int kDynamicPool = 2;

class Engine {
 public:
  Engine(const Instance& inst, const SimConfig& cfg, const FluidPlan* plan)
      : inst_(inst),
        cfg_(cfg),
        rates_(derive_rates(inst.classes, inst.hardware)),
        arrivals_rng_(make_stream(cfg.seed, Stream::kArrivals)),
        service_rng_(make_stream(cfg.seed, Stream::kServices)),
        patience_rng_(make_stream(cfg.seed, Stream::kPatience)),
        routing_rng_(make_stream(cfg.seed, Stream::kRouting)) {
    validate(inst);
    if (cfg.num_gpus < 1) {
      throw Error(ErrorCode::kInvalidArgument, "need at least one GPU");
    }
    if (!(cfg.horizon > 0.0) || !(cfg.warmup_fraction >= 0.0) ||
        !(cfg.warmup_fraction < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "bad horizon or warmup");
    }
    if (policy_needs_plan(cfg.policy)) {
      if (plan == nullptr) {
        throw Error(ErrorCode::kPlanMissing,
                    std::string(policy_name(cfg.policy)) + " needs a plan");
      }
      params_ = derive_policy_params(*plan, inst, cfg.num_gpus);
    }
    num_classes_ = static_cast<int>(inst.num_classes());
    slots_ = inst.hardware.batch_size;
    horizon_ = cfg.horizon;
    warm_ = cfg.horizon * cfg.warmup_fraction;

    const int n = cfg.num_gpus;
    gpus_.resize(n);
    const bool dynamic = is_dynamic();
    const int mixed = dynamic ? 0 : params_.mixed_gpus;
    for (int g = 0; g < n; ++g) {
      gpus_[g].group =
          dynamic ? Group::kDynamic : (g < mixed ? Group::kMixed : Group::kSolo);
      gpus_[g].decodes.reserve(slots_);
    }
    for (auto& s : free_) s.resize(n);
    idle_prefill_.resize(n);
    for (int g = 0; g < n; ++g) refresh(g);

    const int k = num_classes_;
    prefill_queue_.resize(k);
    for (auto& pool : decode_queue_) pool.resize(k);
    for (auto& pool : decode_count_) pool.assign(k, 0);
    q_p_.assign(k, 0);
    x_.assign(k, 0);
    q_d_.assign(k, 0);
    y_m_.assign(k, 0);
    y_s_.assign(k, 0);
    acc_.assign(k, Accum{});
    ctr_.assign(k, Counters{});
    tpot_time_.assign(k, 0.0);
    tpot_tokens_.assign(k, 0.0);
    revenue_.assign(k, 0.0);
    ordinals_.assign(k, 0);
    admissions_.assign(k, {});
  }

  SimMetrics run() {
    for (int i = 0; i < num_classes_; ++i) schedule_arrival(i, 0.0);
    while (!events_.empty()) {
      const Event ev = events_.top();
      if (ev.time > horizon_) break;
      events_.pop();
      advance(ev.time);
      ++event_count_;
      dispatch(ev);
      try_admit_prefills();
      reschedule_dirty();
      if (cfg_.audit) audit();
    }
    advance(horizon_);
    return collect();
  }

 private:
  struct Accum {
    double x = 0, y_m = 0, y_s = 0, q_p = 0, q_d = 0;
  };
  // Cumulative counts for the conservation audit.
  struct Counters {
    uint64_t arrivals = 0, prefill_starts = 0, prefill_done = 0,
             prefill_abandons = 0, decode_starts_m = 0, decode_starts_s = 0,
             decode_done_m = 0, decode_done_s = 0, decode_abandons = 0,
             moves_to_m = 0, moves_to_s = 0;
    uint64_t window_arrivals = 0, window_prefill_abandons = 0,
             window_decode_abandons = 0, window_prefill_done = 0,
             window_decode_done = 0;
  };

  bool is_dynamic() const {
    return cfg_.policy == PolicyKind::kFcfsImmediate ||
           cfg_.policy == PolicyKind::kGateImmediate ||
           cfg_.policy == PolicyKind::kGateFree;
  }
  bool pool_split() const {
    return cfg_.policy == PolicyKind::kSliAware ||
           cfg_.policy == PolicyKind::kSliAwareGeneral;
  }
  bool in_window() const { return now_ >= warm_; }

  void push(double t, EventKind kind, uint32_t id, uint32_t gen) {
    events_.push(Event{t, seq_++, id, gen, kind});
  }

  void advance(double t) {
    const double from = std::max(last_, warm_);
    if (t > from) {
      const double dt = t - from;
      for (int i = 0; i < num_classes_; ++i) {
        acc_[i].x += x_[i] * dt;
        acc_[i].y_m += y_m_[i] * dt;
        acc_[i].y_s += y_s_[i] * dt;
        acc_[i].q_p += q_p_[i] * dt;
        acc_[i].q_d += q_d_[i] * dt;
      }
    }
    last_ = std::max(last_, t);
    now_ = t;
  }

  int alloc_job(int cls) {
    int j;
    if (!free_jobs_.empty()) {
      j = free_jobs_.back();
      free_jobs_.pop_back();
    } else {
      j = static_cast<int>(jobs_.size());
      jobs_.emplace_back();
    }
    Job& job = jobs_[j];
    const uint32_t gen = job.gen + 1;
    job = Job{};
    job.gen = gen;
    job.cls = cls;
    return j;
  }

  void release_job(int j) {
    Job& job = jobs_[j];
    ++job.gen;
    job.phase = Phase::kFree;
    free_jobs_.push_back(j);
  }

  bool valid(const QueueEntry& e) const { return jobs_[e.job].gen == e.gen; }

  // Drops stale entries and returns the live head, or nullptr.
  const QueueEntry* head(std::deque<QueueEntry>& q) {
    while (!q.empty() && !valid(q.front())) q.pop_front();
    return q.empty() ? nullptr : &q.front();
  }

  void refresh(int g) {
    Gpu& gpu = gpus_[g];
    const int used = static_cast<int>(gpu.decodes.size());
    switch (gpu.group) {
      case Group::kMixed:
        free_[kMixedPool].set(g, used < slots_ - 1);
        idle_prefill_.set(g, gpu.prefill < 0);
        break;
      case Group::kSolo:
        free_[kSoloPool].set(g, used < slots_);
        break;
      case Group::kDynamic: {
        const int total = used + (gpu.prefill >= 0 ? 1 : 0);
        free_[kDynamicPool].set(g, total < slots_);
        idle_prefill_.set(g, gpu.prefill < 0 && total < slots_);
        break;
      }
    }
  }

  void mark_dirty(int g) {
    if (!gpus_[g].dirty) {
      gpus_[g].dirty = true;
      dirty_.push_back(g);
    }
  }

  double clock_speed(const Gpu& gpu) const {
    return gpu.prefill >= 0 ? 1.0 / rates_.tau : inst_.hardware.solo_speed;
  }

  void sync_clock(Gpu& gpu) {
    gpu.clock.advance(now_, clock_speed(gpu));
  }

  // Switches resident decodes to the GPU's current mode.
  void settle_mode(int g) {
    Gpu& gpu = gpus_[g];
    const bool mixed = gpu.prefill >= 0;
    for (int j : gpu.decodes) {
      Job& job = jobs_[j];
      if (job.mixed == mixed) continue;
      const int cls = job.cls;
      if (mixed) {
        --y_s_[cls];
        ++y_m_[cls];
        ++ctr_[cls].moves_to_m;
      } else {
        --y_m_[cls];
        ++y_s_[cls];
        ++ctr_[cls].moves_to_s;
      }
      job.mixed = mixed;
    }
  }

  void set_prefill(int g, int j) {
    Gpu& gpu = gpus_[g];
    sync_clock(gpu);
    gpu.prefill = j;
    settle_mode(g);
    mark_dirty(g);
    refresh(g);
  }

  // ---- arrivals and prefill ----

  void schedule_arrival(int cls, double from) {
    const double rate = inst_.classes[cls].arrival_rate * cfg_.num_gpus;
    if (!(rate > 0.0)) return;
    push(from + arrivals_rng_.exponential(rate), EventKind::kArrival,
         static_cast<uint32_t>(cls), 0);
  }

  void on_arrival(int cls) {
    schedule_arrival(cls, now_);
    const int j = alloc_job(cls);
    Job& job = jobs_[j];
    job.phase = Phase::kPrefillQueue;
    job.ordinal = ordinals_[cls]++;
    ++q_p_[cls];
    ++ctr_[cls].arrivals;
    if (in_window()) ++ctr_[cls].window_arrivals;
    prefill_queue_[cls].push_back(QueueEntry{static_cast<uint32_t>(j),
                                             job.gen, seq_});
    push(now_ + patience_rng_.exponential(inst_.classes[cls].patience_rate),
         EventKind::kAbandon, static_cast<uint32_t>(j), job.gen);
  }

  int select_class(bool* any_waiting) {
    *any_waiting = false;
    for (int i = 0; i < num_classes_; ++i) {
      if (q_p_[i] > 0) *any_waiting = true;
    }
    if (!*any_waiting) return -1;
    switch (cfg_.policy) {
      case PolicyKind::kFcfsGreedy:
      case PolicyKind::kFcfsImmediate: {
        int best = -1;
        uint64_t best_seq = 0;
        for (int i = 0; i < num_classes_; ++i) {
          if (q_p_[i] == 0) continue;
          const QueueEntry* e = head(prefill_queue_[i]);
          if (e != nullptr && (best < 0 || e->seq < best_seq)) {
            best = i;
            best_seq = e->seq;
          }
        }
        return best;
      }
      case PolicyKind::kPrioritizeRoute: {
        int best = -1;
        for (int i = 0; i < num_classes_; ++i) {
          if (q_p_[i] == 0) continue;
          if (best < 0 || params_.priority[i] > params_.priority[best]) {
            best = i;
          }
        }
        return best;
      }
      case PolicyKind::kGateImmediate:
      case PolicyKind::kGateFree: {
        auto c = gate_decision(x_, q_p_, params_, true);
        return c ? *c : -1;
      }
      default: {
        auto c = gate_decision(x_, q_p_, params_, false);
        return c ? *c : -1;
      }
    }
  }

  void start_prefill(int cls, int g) {
    const QueueEntry* e = head(prefill_queue_[cls]);
    if (e == nullptr) {
      throw Error(ErrorCode::kInfeasibleState, "prefill queue count drift");
    }
    const int j = static_cast<int>(e->job);
    prefill_queue_[cls].pop_front();
    Job& job = jobs_[j];
    ++job.gen;
    job.phase = Phase::kPrefill;
    job.gpu = g;
    set_prefill(g, j);
    --q_p_[cls];
    ++x_[cls];
    ++ctr_[cls].prefill_starts;
    if (cfg_.record_admissions) admissions_[cls].push_back(job.ordinal);
    push(now_ + service_rng_.exponential(rates_.prefill[cls]),
         EventKind::kPrefillDone, static_cast<uint32_t>(j), job.gen);
  }

  void try_admit_prefills() {
    while (!idle_prefill_.empty()) {
      bool waiting = false;
      const int cls = select_class(&waiting);
      if (cls < 0) return;
      const int g = idle_prefill_.at(routing_rng_.below(idle_prefill_.size()));
      start_prefill(cls, g);
    }
  }

  bool try_admit_on(int g) {
    const Gpu& gpu = gpus_[g];
    if (gpu.prefill >= 0) return false;
    if (static_cast<int>(gpu.decodes.size()) + 1 > slots_) return false;
    bool waiting = false;
    const int cls = select_class(&waiting);
    if (cls < 0) return false;
    start_prefill(cls, g);
    return true;
  }

  void on_prefill_done(int j) {
    Job& job = jobs_[j];
    const int cls = job.cls;
    const int g = job.gpu;
    set_prefill(g, -1);
    --x_[cls];
    ++ctr_[cls].prefill_done;
    if (in_window()) {
      ++ctr_[cls].window_prefill_done;
      revenue_[cls] += inst_.pricing.prefill_revenue(inst_.classes[cls]);
    }
    if (cfg_.prefill_only) {
      release_job(j);
      return;
    }

    switch (cfg_.policy) {
      case PolicyKind::kFcfsImmediate:
      case PolicyKind::kGateImmediate:
        place_decode(j, g);
        break;
      case PolicyKind::kGateFree:
        try_admit_on(g);
        route_free(j);
        pull_decodes(g);
        break;
      case PolicyKind::kSliAware:
      case PolicyKind::kSliAwareGeneral:
        route_pools(j);
        break;
      default:
        route_greedy(j);
        break;
    }
  }

  // ---- decode routing ----

  int pick(const IndexSet& set) {
    return set.at(routing_rng_.below(set.size()));
  }

  void place_decode(int j, int g) {
    Job& job = jobs_[j];
    Gpu& gpu = gpus_[g];
    const int cls = job.cls;
    sync_clock(gpu);
    ++job.gen;
    job.phase = Phase::kDecode;
    job.gpu = g;
    job.slot = static_cast<int>(gpu.decodes.size());
    gpu.decodes.push_back(j);
    job.mixed = gpu.prefill >= 0;
    job.decode_start = now_;
    job.token_start = gpu.clock.value;
    job.token_target = gpu.clock.value + inst_.classes[cls].decode_len *
                                       service_rng_.exponential(1.0);
    if (job.mixed) {
      ++y_m_[cls];
      ++ctr_[cls].decode_starts_m;
    } else {
      ++y_s_[cls];
      ++ctr_[cls].decode_starts_s;
    }
    mark_dirty(g);
    refresh(g);
  }

  void enqueue_decode(int j, int pool) {
    Job& job = jobs_[j];
    const int cls = job.cls;
    ++job.gen;
    job.phase = Phase::kDecodeQueue;
    job.gpu = -1;
    job.pool = pool;
    ++q_d_[cls];
    ++decode_count_[pool][cls];
    decode_queue_[pool][cls].push_back(
        QueueEntry{static_cast<uint32_t>(j), job.gen, seq_++});
    push(now_ + patience_rng_.exponential(inst_.classes[cls].patience_rate),
         EventKind::kAbandon, static_cast<uint32_t>(j), job.gen);
  }

  void route_greedy(int j) {
    const RouteTarget t = greedy_route(!free_[kSoloPool].empty(),
                                       !free_[kMixedPool].empty());
    switch (t) {
      case RouteTarget::kSolo: place_decode(j, pick(free_[kSoloPool])); break;
      case RouteTarget::kMixed: place_decode(j, pick(free_[kMixedPool])); break;
      case RouteTarget::kBuffer: enqueue_decode(j, kMixedPool); break;
    }
  }

  void route_pools(int j) {
    const int cls = jobs_[j].cls;
    const PoolChoice c =
        pool_route(routing_rng_.uniform(), params_.solo_prob[cls],
                   !free_[kSoloPool].empty(), !free_[kMixedPool].empty());
    const int pool = c.solo ? kSoloPool : kMixedPool;
    if (c.buffered) {
      enqueue_decode(j, pool);
    } else {
      place_decode(j, pick(free_[pool]));
    }
  }

  void route_free(int j) {
    if (has_buffered(kMixedPool) || free_[kDynamicPool].empty()) {
      enqueue_decode(j, kMixedPool);
    } else {
      place_decode(j, pick(free_[kDynamicPool]));
    }
  }

  bool has_buffered(int pool) const {
    for (int i = 0; i < num_classes_; ++i) {
      if (decode_count_[pool][i] > 0) return true;
    }
    return false;
  }

  // Oldest buffered job across classes of a pool.
  int oldest_class(int pool) {
    int best = -1;
    uint64_t best_seq = 0;
    for (int i = 0; i < num_classes_; ++i) {
      if (decode_count_[pool][i] == 0) continue;
      const QueueEntry* e = head(decode_queue_[pool][i]);
      if (e != nullptr && (best < 0 || e->seq < best_seq)) {
        best = i;
        best_seq = e->seq;
      }
    }
    return best;
  }

  int weighted_class(int pool) {
    const auto& w =
        pool == kSoloPool ? params_.solo_weight : params_.mixed_weight;
    std::vector<bool> waiting(num_classes_);
    double total = 0.0;
    for (int i = 0; i < num_classes_; ++i) {
      waiting[i] = decode_count_[pool][i] > 0;
      if (waiting[i]) total += w[i];
    }
    if (!(total > 0.0)) return oldest_class(pool);
    return weighted_pick(routing_rng_.uniform(), w, waiting);
  }

  bool has_free_slot(int g) const {
    const Gpu& gpu = gpus_[g];
    const int used = static_cast<int>(gpu.decodes.size());
    switch (gpu.group) {
      case Group::kMixed: return used < slots_ - 1;
      case Group::kSolo: return used < slots_;
      case Group::kDynamic:
        return used + (gpu.prefill >= 0 ? 1 : 0) < slots_;
    }
    return false;
  }

  // Fills free decode slots on `g` from the buffer that feeds it.
  void pull_decodes(int g) {
    int pool = kMixedPool;
    if (pool_split()) {
      pool = gpus_[g].group == Group::kSolo ? kSoloPool : kMixedPool;
    }
    while (has_free_slot(g) && has_buffered(pool)) {
      const int cls = cfg_.policy == PolicyKind::kSliAwareGeneral
                          ? weighted_class(pool)
                          : oldest_class(pool);
      const QueueEntry* e = head(decode_queue_[pool][cls]);
      if (e == nullptr) {
        throw Error(ErrorCode::kInfeasibleState, "decode buffer count drift");
      }
      const int j = static_cast<int>(e->job);
      decode_queue_[pool][cls].pop_front();
      --q_d_[cls];
      --decode_count_[pool][cls];
      place_decode(j, g);
    }
  }

  void on_decode_done(int g) {
    Gpu& gpu = gpus_[g];
    sync_clock(gpu);
    int j = gpu.decodes.front();
    for (int k : gpu.decodes) {
      if (jobs_[k].token_target < jobs_[j].token_target) j = k;
    }
    Job& job = jobs_[j];
    const int cls = job.cls;
    if (job.mixed) {
      --y_m_[cls];
      ++ctr_[cls].decode_done_m;
    } else {
      --y_s_[cls];
      ++ctr_[cls].decode_done_s;
    }
    if (in_window()) {
      ++ctr_[cls].window_decode_done;
      revenue_[cls] += inst_.pricing.decode_revenue(inst_.classes[cls]);
      tpot_time_[cls] += now_ - job.decode_start;
      tpot_tokens_[cls] += job.token_target - job.token_start;
    }
    const int last = gpu.decodes.back();
    gpu.decodes[job.slot] = last;
    jobs_[last].slot = job.slot;
    gpu.decodes.pop_back();
    release_job(j);
    mark_dirty(g);
    refresh(g);

    switch (cfg_.policy) {
      case PolicyKind::kFcfsImmediate:
      case PolicyKind::kGateImmediate:
        break;
      case PolicyKind::kGateFree:
        if (!try_admit_on(g)) pull_decodes(g);
        break;
      default:
        pull_decodes(g);
        break;
    }
  }

  void on_abandon(int j) {
    Job& job = jobs_[j];
    const int cls = job.cls;
    if (job.phase == Phase::kPrefillQueue) {
      --q_p_[cls];
      ++ctr_[cls].prefill_abandons;
      if (in_window()) ++ctr_[cls].window_prefill_abandons;
    } else if (job.phase == Phase::kDecodeQueue) {
      --q_d_[cls];
      --decode_count_[job.pool][cls];
      ++ctr_[cls].decode_abandons;
      if (in_window()) ++ctr_[cls].window_decode_abandons;
    } else {
      throw Error(ErrorCode::kInfeasibleState, "abandon outside a queue");
    }
    release_job(j);
  }

  void dispatch(const Event& ev) {
    if (ev.kind == EventKind::kArrival) {
      on_arrival(static_cast<int>(ev.id));
      return;
    }
    if (ev.kind == EventKind::kDecodeDone) {
      if (gpus_[ev.id].gen == ev.gen) on_decode_done(static_cast<int>(ev.id));
      return;
    }
    if (jobs_[ev.id].gen != ev.gen) return;
    if (ev.kind == EventKind::kPrefillDone) {
      on_prefill_done(static_cast<int>(ev.id));
    } else {
      on_abandon(static_cast<int>(ev.id));
    }
  }

  // One pending completion per touched GPU: its earliest token budget.
  void reschedule_dirty() {
    for (int g : dirty_) {
      Gpu& gpu = gpus_[g];
      gpu.dirty = false;
      ++gpu.gen;
      if (gpu.decodes.empty()) continue;
      sync_clock(gpu);
      double target = jobs_[gpu.decodes.front()].token_target;
      for (int j : gpu.decodes) {
        target = std::min(target, jobs_[j].token_target);
      }
      push(now_ + gpu.clock.wait(target, clock_speed(gpu)), EventKind::kDecodeDone, static_cast<uint32_t>(g),
           gpu.gen);
    }
    dirty_.clear();
  }

  void audit() {
    bool ok = true;
    for (int i = 0; i < num_classes_; ++i) {
      const Counters& c = ctr_[i];
      const auto as_int = [](uint64_t v) { return static_cast<int64_t>(v); };
      ok &= q_p_[i] == as_int(c.arrivals) - as_int(c.prefill_starts) -
                           as_int(c.prefill_abandons);
      ok &= x_[i] == as_int(c.prefill_starts) - as_int(c.prefill_done);
      if (!cfg_.prefill_only) {
        ok &= q_d_[i] == as_int(c.prefill_done) - as_int(c.decode_starts_m) -
                             as_int(c.decode_starts_s) -
                             as_int(c.decode_abandons);
      }
      ok &= y_m_[i] == as_int(c.decode_starts_m) - as_int(c.decode_done_m) +
                           as_int(c.moves_to_m) - as_int(c.moves_to_s);
      ok &= y_s_[i] == as_int(c.decode_starts_s) - as_int(c.decode_done_s) +
                           as_int(c.moves_to_s) - as_int(c.moves_to_m);
      ok &= q_p_[i] >= 0 && x_[i] >= 0 && q_d_[i] >= 0 && y_m_[i] >= 0 &&
            y_s_[i] >= 0;
    }
    int prefilling = 0;
    int64_t total_m = 0, total_s = 0;
    for (const Gpu& gpu : gpus_) {
      const int used = static_cast<int>(gpu.decodes.size());
      if (gpu.prefill >= 0) ++prefilling;
      switch (gpu.group) {
        case Group::kMixed: ok &= used <= slots_ - 1; break;
        case Group::kSolo: ok &= used <= slots_ && gpu.prefill < 0; break;
        case Group::kDynamic:
          ok &= used + (gpu.prefill >= 0 ? 1 : 0) <= slots_;
          break;
      }
      for (int j : gpu.decodes) {
        ok &= jobs_[j].mixed == (gpu.prefill >= 0);
        (jobs_[j].mixed ? total_m : total_s) += 1;
      }
    }
    int64_t sum_x = 0, sum_m = 0, sum_s = 0;
    for (int i = 0; i < num_classes_; ++i) {
      sum_x += x_[i];
      sum_m += y_m_[i];
      sum_s += y_s_[i];
    }
    ok &= sum_x == prefilling;
    ok &= sum_m == total_m && sum_s == total_s;
    ok &= sum_m <= static_cast<int64_t>(slots_ - 1) * prefilling;
    ok &= sum_s <= static_cast<int64_t>(slots_) * (cfg_.num_gpus - prefilling);
    if (!ok) ++audit_failures_;
  }

  SimMetrics collect() {
    SimMetrics m;
    m.policy = cfg_.policy;
    m.num_gpus = cfg_.num_gpus;
    m.seed = cfg_.seed;
    m.window = horizon_ - warm_;
    m.events = event_count_;
    m.audit_failures = audit_failures_;
    const double scale = 1.0 / (m.window * cfg_.num_gpus);
    double time_sum = 0.0, token_sum = 0.0;
    for (int i = 0; i < num_classes_; ++i) {
      ClassMetrics c;
      c.x_occ = acc_[i].x * scale;
      c.ym_occ = acc_[i].y_m * scale;
      c.ys_occ = acc_[i].y_s * scale;
      c.qp_scaled = acc_[i].q_p * scale;
      c.qd_scaled = acc_[i].q_d * scale;
      c.tpot = tpot_tokens_[i] > 0.0 ? tpot_time_[i] / tpot_tokens_[i] : 0.0;
      c.revenue_per_gpu = revenue_[i] * scale;
      c.arrivals = ctr_[i].window_arrivals;
      c.prefill_abandons = ctr_[i].window_prefill_abandons;
      c.decode_abandons = ctr_[i].window_decode_abandons;
      c.prefill_completions = ctr_[i].window_prefill_done;
      c.decode_completions = ctr_[i].window_decode_done;
      m.revenue_per_gpu += c.revenue_per_gpu;
      time_sum += tpot_time_[i];
      token_sum += tpot_tokens_[i];
      m.classes.push_back(c);
    }
    m.tpot = token_sum > 0.0 ? time_sum / token_sum : 0.0;
    if (cfg_.record_admissions) m.admission_order = admissions_;
    return m;
  }

  const Instance& inst_;
  SimConfig cfg_;
  ServiceRates rates_;
  PolicyParams params_;
  Philox arrivals_rng_;
  Philox service_rng_;
  Philox patience_rng_;
  Philox routing_rng_;

  int num_classes_ = 0;
  int slots_ = 0;
  double horizon_ = 0.0;
  double warm_ = 0.0;
  double now_ = 0.0;
  double last_ = 0.0;
  uint64_t seq_ = 0;
  uint64_t event_count_ = 0;
  uint64_t audit_failures_ = 0;

  std::priority_queue<Event, std::vector<Event>, EventLater> events_;
  std::vector<Job> jobs_;
  std::vector<int> free_jobs_;
  std::vector<Gpu> gpus_;
  std::vector<int> dirty_;
  IndexSet free_[3];
  IndexSet idle_prefill_;

  std::vector<std::deque<QueueEntry>> prefill_queue_;
  std::vector<std::deque<QueueEntry>> decode_queue_[2];
  std::vector<int> decode_count_[2];

  std::vector<int> q_p_, x_, q_d_, y_m_, y_s_;
  std::vector<Accum> acc_;
  std::vector<Counters> ctr_;
  std::vector<double> tpot_time_, tpot_tokens_, revenue_;
  std::vector<uint64_t> ordinals_;
  std::vector<std::vector<uint64_t>> admissions_;
};

bool same(const SimMetrics& a, const SimMetrics& b) {
  if (a.revenue_per_gpu != b.revenue_per_gpu || a.tpot != b.tpot ||
      a.events != b.events || a.classes.size() != b.classes.size()) {
    return false;
  }
  for (size_t i = 0; i < a.classes.size(); ++i) {
    const auto& x = a.classes[i];
    const auto& y = b.classes[i];
    if (x.x_occ != y.x_occ || x.ym_occ != y.ym_occ || x.ys_occ != y.ys_occ ||
        x.qp_scaled != y.qp_scaled || x.qd_scaled != y.qd_scaled ||
        x.tpot != y.tpot || x.revenue_per_gpu != y.revenue_per_gpu ||
        x.arrivals != y.arrivals ||
        x.decode_completions != y.decode_completions) {
      return false;
    }
  }
  return true;
}

}  // namespace

SimMetrics simulate(const Instance& instance, const SimConfig& config,
                    const FluidPlan* plan) {
  Engine engine(instance, config, plan);
  return engine.run();
}

SimMetrics simulate_checked(const Instance& instance, const SimConfig& config,
                            const FluidPlan* plan) {
  SimMetrics first = simulate(instance, config, plan);
  SimMetrics second = simulate(instance, config, plan);
  if (!same(first, second)) {
    throw Error(ErrorCode::kNondeterminism,
                "repeated run with seed " + std::to_string(config.seed) +
                    " diverged");
  }
  return first;
}

}  // namespace fluidsched
