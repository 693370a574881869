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

#include "fluidsched/model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "fluidsched/error.h"

namespace fluidsched {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDegenerateDesign: return "DegenerateDesign";
    case ErrorCode::kEmptySamples: return "EmptySamples";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kUnbounded: return "Unbounded";
    case ErrorCode::kConditionViolated: return "ConditionViolated";
    case ErrorCode::kZeroPatience: return "ZeroPatience";
    case ErrorCode::kInfeasibleState: return "InfeasibleState";
    case ErrorCode::kStepTooLarge: return "StepTooLarge";
    case ErrorCode::kPlanMissing: return "PlanMissing";
    case ErrorCode::kNondeterminism: return "NondeterminismGuard";
    case ErrorCode::kUnsupported: return "Unsupported";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kParse: return "Parse";
  }
  return "Unknown";
}

std::string_view scheme_name(ChargingScheme scheme) {
  return scheme == ChargingScheme::kBundled ? "bundled" : "separate";
}

ChargingScheme parse_scheme(std::string_view name) {
  if (name == "bundled") return ChargingScheme::kBundled;
  if (name == "separate") return ChargingScheme::kSeparate;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown charging scheme '" + std::string(name) + "'");
}

double iteration_time(const HardwareProfile& hw, double prefill_tokens) {
  if (!(prefill_tokens >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "prefill token count must be nonnegative");
  }
  return hw.base_time + hw.slope * std::max(0.0, prefill_tokens - hw.knee);
}

ServiceRates derive_rates(const std::vector<WorkloadClass>& classes,
                          const HardwareProfile& hw) {
  validate(hw);
  ServiceRates rates;
  rates.tau = hw.tau();
  rates.kappa = hw.solo_speed * rates.tau;
  for (const auto& cls : classes) {
    validate(cls);
    rates.prefill.push_back(hw.chunk_size / (cls.prompt_len * rates.tau));
    rates.mixed.push_back(1.0 / (cls.decode_len * rates.tau));
    rates.solo.push_back(hw.solo_speed / cls.decode_len);
  }
  return rates;
}

bool decode_buffer_elimination_holds(const HardwareProfile& hw) {
  const double b = hw.batch_size;
  // Inclusive, with room for rounding at equality.
  return hw.solo_speed * hw.tau() >= (b - 1.0) / b * (1.0 - 1e-12);
}

double plan_tpot(const HardwareProfile& hw, double mixed_fraction) {
  const double b = hw.batch_size;
  const double s = mixed_fraction;
  const double mixed_slots = (b - 1.0) * s;
  const double solo_slots = b * (1.0 - s);
  const double slots = mixed_slots + solo_slots;
  if (slots <= 0.0) return hw.tau_solo();
  return (mixed_slots * hw.tau() + solo_slots * hw.tau_solo()) / slots;
}

void validate(const WorkloadClass& cls) {
  if (!(cls.prompt_len > 0.0) || !(cls.decode_len > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "prompt and decode lengths must be positive");
  }
  if (!(cls.arrival_rate >= 0.0) || !(cls.patience_rate >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "arrival and patience rates must be nonnegative");
  }
}

void validate(const HardwareProfile& hw) {
  if (hw.batch_size < 2) {
    throw Error(ErrorCode::kInvalidArgument, "batch size B must be >= 2");
  }
  if (!(hw.chunk_size > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "chunk size C must be positive");
  }
  if (!(hw.solo_speed > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma must be positive");
  }
  if (!(hw.slope >= 0.0) || !(hw.knee >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "slope a and knee b0 must be nonnegative");
  }
  if (!(hw.tau() > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "mixed iteration time must be positive");
  }
}

void validate(const Pricing& pricing) {
  if (!(pricing.prefill_price >= 0.0) || !(pricing.decode_price >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "prices must be nonnegative");
  }
}

void validate(const Instance& instance) {
  if (instance.classes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "instance has no classes");
  }
  for (const auto& cls : instance.classes) validate(cls);
  validate(instance.hardware);
  validate(instance.pricing);
}

}  // namespace fluidsched
