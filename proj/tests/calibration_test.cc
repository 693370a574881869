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


#include <algorithm>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "fluidsched/calibration.h"
#include "fluidsched/error.h"
#include "fluidsched/random.h"

namespace fluidsched {
namespace {

const std::string kData = FLUIDSCHED_DATA_DIR;

std::vector<IterationSample> line(double alpha, double beta,
                                  const std::vector<double>& chunks) {
  std::vector<IterationSample> out;
  for (double c : chunks) out.push_back({c, alpha + beta * c});
  return out;
}

TEST(FitMixed, NoiselessRecovery) {
  const MixedFit f = fit_mixed(line(0.0174, 6.2e-5, {64, 128, 256, 512}));
  EXPECT_NEAR(f.alpha, 0.0174, 1e-15);
  EXPECT_NEAR(f.beta, 6.2e-5, 1e-18);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_EQ(f.num_samples, 4u);
}

TEST(FitMixed, NoisyRecoveryWithinOnePercent) {
  // Normal draws via Box-Muller on the library generator.
  Philox rng(2024, 9);
  std::vector<IterationSample> s;
  for (int k = 0; k < 1000; ++k) {
    const double c = 32.0 + 2016.0 * rng.uniform();
    const double z = std::sqrt(-2.0 * std::log(rng.uniform_pos())) *
                     std::cos(2.0 * M_PI * rng.uniform());
    s.push_back({c, 0.0174 + 6.2e-5 * c + 1e-4 * z});
  }
  const MixedFit f = fit_mixed(s);
  EXPECT_LT(std::abs(f.alpha / 0.0174 - 1.0), 0.01);
  EXPECT_LT(std::abs(f.beta / 6.2e-5 - 1.0), 0.01);
  EXPECT_GT(f.r_squared, 0.99);
}

TEST(FitMixed, OrderInvariant) {
  std::vector<IterationSample> s = line(0.02, 1e-4, {1, 5, 9, 30, 31});
  s[2].iter_time += 0.003;
  const MixedFit a = fit_mixed(s);
  std::mt19937 shuffle(7);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(s.begin(), s.end(), shuffle);
    const MixedFit b = fit_mixed(s);
    EXPECT_NEAR(a.alpha, b.alpha, 1e-15);
    EXPECT_NEAR(a.beta, b.beta, 1e-17);
    EXPECT_NEAR(a.r_squared, b.r_squared, 1e-13);
  }
}

TEST(FitMixed, DegenerateDesign) {
  try {
    fit_mixed(line(0.1, 0.1, {256, 256, 256}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateDesign);
  }
}

TEST(FitSolo, Means) {
  EXPECT_DOUBLE_EQ(fit_solo({45.45}), 45.45);
  EXPECT_DOUBLE_EQ(fit_solo({40, 50}), 45.0);
  try {
    fit_solo({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptySamples);
  }
}

TEST(BuildProfile, KneeShiftsBaseTime) {
  MixedFit f;
  f.alpha = 0.0174;
  f.beta = 6.2e-5;
  const HardwareProfile flat = build_profile(16, 256, f, 45.45);
  EXPECT_NEAR(flat.tau(), 0.033272, 1e-15);
  EXPECT_DOUBLE_EQ(flat.base_time, 0.0174);

  const HardwareProfile kneed = build_profile(16, 256, f, 45.45, 100);
  EXPECT_NEAR(kneed.base_time, 0.0236, 1e-15);
  EXPECT_NEAR(kneed.tau(), 0.033272, 1e-15);

  f.beta = 0.0;
  EXPECT_DOUBLE_EQ(build_profile(16, 256, f, 45.45, 100).base_time, 0.0174);
}

TEST(ReplicaMeasurements, LargerModel) {
  const auto r = calibrate(read_mixed_csv(kData + "/calibration/qwen8b_mixed.csv"),
                           read_solo_csv(kData + "/calibration/qwen8b_solo.csv"),
                           16, 256);
  EXPECT_NEAR(r.mixed.alpha, 0.0174, 5e-5);
  EXPECT_NEAR(r.mixed.beta, 6.2e-5, 5e-7);
  EXPECT_GT(r.mixed.r_squared, 0.99);
  EXPECT_NEAR(r.hardware.solo_speed, 45.45, 1e-3);
}

TEST(ReplicaMeasurements, SmallerModel) {
  const auto r = calibrate(read_mixed_csv(kData + "/calibration/qwen4b_mixed.csv"),
                           read_solo_csv(kData + "/calibration/qwen4b_solo.csv"),
                           16, 256);
  EXPECT_NEAR(r.mixed.alpha, 0.0152, 5e-5);
  EXPECT_NEAR(r.mixed.beta, 3.6e-5, 5e-7);
  EXPECT_GT(r.mixed.r_squared, 0.99);
  EXPECT_NEAR(r.hardware.solo_speed, 52.63, 1e-3);
}

}  // namespace
}  // namespace fluidsched
