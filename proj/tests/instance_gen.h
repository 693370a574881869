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


// Random instances and plan perturbations shared by the test binaries.

#pragma once

#include <algorithm>
#include <random>

#include "fluidsched/model.h"
#include "fluidsched/planner.h"

namespace fluidsched {

// Random bundled instances that satisfy the solo-speed condition.
inline Instance random_bundled(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Instance inst;
  const int k = 1 + static_cast<int>(u(gen) * 3);
  for (int i = 0; i < k; ++i) {
    inst.classes.push_back({20 + 4000 * u(gen), 20 + 2000 * u(gen),
                            0.05 + 3.0 * u(gen), 0.01 + 0.5 * u(gen)});
  }
  auto& hw = inst.hardware;
  hw.batch_size = 2 + static_cast<int>(u(gen) * 31);
  hw.chunk_size = 64 + 1024 * u(gen);
  hw.base_time = 0.005 + 0.05 * u(gen);
  hw.slope = 1e-4 * u(gen);
  const double floor = (hw.batch_size - 1.0) / hw.batch_size / hw.tau();
  hw.solo_speed = floor * (1.0 + 2.0 * u(gen));
  inst.pricing = {0.01 + u(gen), 0.01 + u(gen), ChargingScheme::kBundled};
  return inst;
}

// On the boundary gamma * tau == (B - 1) / B, shifting prefill-queue
// abandonment into the decode buffer while trading solo slots for mixed
// ones leaves revenue unchanged, so the result is another optimum.
inline FluidPlan with_decode_buffer(const FluidPlan& plan,
                                    const Instance& inst) {
  const ServiceRates r = derive_rates(inst.classes, inst.hardware);
  const double b = inst.hardware.batch_size;
  double slack = 1.0;
  for (const auto& c : plan.classes) slack -= c.x;
  FluidPlan out = plan;
  for (size_t i = 0; i < out.classes.size(); ++i) {
    auto& c = out.classes[i];
    const double theta = inst.classes[i].patience_rate;
    const double delta =
        0.5 * std::min({slack / out.classes.size(), c.q_p * theta / r.prefill[i],
                        c.y_s / b});
    if (!(delta > 0.0)) continue;
    c.x += delta;
    c.q_p -= r.prefill[i] * delta / theta;
    c.q_d += r.prefill[i] * delta / theta;
    c.y_s -= b * delta;
    c.y_m += b * delta * r.solo[i] / r.mixed[i];
  }
  return out;
}

}  // namespace fluidsched
