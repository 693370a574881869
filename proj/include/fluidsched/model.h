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
#include <string>
#include <string_view>
#include <vector>

namespace fluidsched {

// One request class. Lengths are in tokens, rates in 1/s.
struct WorkloadClass {
  double prompt_len = 0.0;    // P
  double decode_len = 0.0;    // D
  double arrival_rate = 0.0;  // lambda, per GPU
  double patience_rate = 0.0; // theta
};

// Piecewise-linear iteration time c + a * max(0, b - b0) for a mixed
// iteration carrying b prefill tokens, plus the solo decode speed.
struct HardwareProfile {
  int batch_size = 0;         // B, decode slots per GPU
  double chunk_size = 0.0;    // C, prefill tokens per mixed iteration
  double base_time = 0.0;     // c, seconds
  double slope = 0.0;         // a, seconds per token
  double knee = 0.0;          // b0, tokens
  double solo_speed = 0.0;    // gamma, tokens/s on a decode-only GPU

  double alpha() const { return base_time - slope * knee; }
  double beta() const { return slope; }
  // Mixed iteration time at full chunk.
  double tau() const { return alpha() + beta() * chunk_size; }
  double tau_solo() const { return 1.0 / solo_speed; }
};

enum class ChargingScheme { kBundled, kSeparate };

std::string_view scheme_name(ChargingScheme scheme);
ChargingScheme parse_scheme(std::string_view name);

struct Pricing {
  double prefill_price = 0.0;  // c_p per prompt token
  double decode_price = 0.0;   // c_d per output token
  ChargingScheme scheme = ChargingScheme::kBundled;

  // Revenue of one completed request of the given class.
  double weight(const WorkloadClass& cls) const {
    return prefill_price * cls.prompt_len + decode_price * cls.decode_len;
  }
  // Revenue booked when a prefill finishes.
  double prefill_revenue(const WorkloadClass& cls) const {
    return scheme == ChargingScheme::kSeparate
               ? prefill_price * cls.prompt_len
               : 0.0;
  }
  // Revenue booked when a decode finishes.
  double decode_revenue(const WorkloadClass& cls) const {
    return scheme == ChargingScheme::kBundled ? weight(cls)
                                              : decode_price * cls.decode_len;
  }
};

struct Instance {
  std::vector<WorkloadClass> classes;
  HardwareProfile hardware;
  Pricing pricing;

  size_t num_classes() const { return classes.size(); }
};

// Per-class service rates derived from the hardware profile.
struct ServiceRates {
  std::vector<double> prefill;  // mu_p = C / (P tau)
  std::vector<double> mixed;    // mu_m = 1 / (D tau)
  std::vector<double> solo;     // mu_s = gamma / D
  double tau = 0.0;
  double kappa = 0.0;           // gamma * tau, solo/mixed speed ratio
};

double iteration_time(const HardwareProfile& hw, double prefill_tokens);

ServiceRates derive_rates(const std::vector<WorkloadClass>& classes,
                          const HardwareProfile& hw);

// True when a solo GPU is fast enough that queueing decodes never pays:
// gamma * tau >= (B - 1) / B.
bool decode_buffer_elimination_holds(const HardwareProfile& hw);

// Slot-weighted time per output token when every decode slot is busy and a
// fraction `mixed_fraction` of GPUs runs mixed iterations.
double plan_tpot(const HardwareProfile& hw, double mixed_fraction);

void validate(const WorkloadClass& cls);
void validate(const HardwareProfile& hw);
void validate(const Pricing& pricing);
void validate(const Instance& instance);

}  // namespace fluidsched
