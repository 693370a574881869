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

#include <string>
#include <vector>

#include "fluidsched/model.h"

namespace fluidsched {

struct IterationSample {
  double chunk_size = 0.0;  // prefill tokens in the iteration
  double iter_time = 0.0;   // seconds
};

struct MixedFit {
  double alpha = 0.0;
  double beta = 0.0;
  double r_squared = 0.0;
  size_t num_samples = 0;
};

struct CalibrationResult {
  HardwareProfile hardware;
  MixedFit mixed;
  size_t num_solo_samples = 0;
};

// Ordinary least squares of iteration time on chunk size.
// Throws kDegenerateDesign when fewer than two distinct chunk sizes exist.
MixedFit fit_mixed(const std::vector<IterationSample>& samples);

// Mean of solo throughput samples (tokens/s). Throws kEmptySamples.
double fit_solo(const std::vector<double>& tokens_per_s);

// Profile with a = beta and c = alpha + beta * knee, so the fitted line is
// reproduced above the knee.
HardwareProfile build_profile(int batch_size, double chunk_size,
                              const MixedFit& fit, double gamma,
                              double knee = 0.0);

CalibrationResult calibrate(const std::vector<IterationSample>& mixed,
                            const std::vector<double>& solo, int batch_size,
                            double chunk_size, double knee = 0.0);

// CSV with header chunk_size,iter_time_s.
std::vector<IterationSample> read_mixed_csv(const std::string& path);
// CSV with header tokens_per_s.
std::vector<double> read_solo_csv(const std::string& path);

}  // namespace fluidsched
