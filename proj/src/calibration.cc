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

#include "fluidsched/calibration.h"

#include <cmath>
#include <set>

#include "fluidsched/error.h"
#include "fluidsched/io.h"

namespace fluidsched {

MixedFit fit_mixed(const std::vector<IterationSample>& samples) {
  std::set<double> distinct;
  for (const auto& s : samples) {
    if (!std::isfinite(s.chunk_size) || !std::isfinite(s.iter_time)) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite sample");
    }
    distinct.insert(s.chunk_size);
  }
  if (distinct.size() < 2) {
    throw Error(ErrorCode::kDegenerateDesign,
                "need at least two distinct chunk sizes");
  }

  const double n = static_cast<double>(samples.size());
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (const auto& s : samples) {
    mean_x += s.chunk_size;
    mean_y += s.iter_time;
  }
  mean_x /= n;
  mean_y /= n;

  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (const auto& s : samples) {
    const double dx = s.chunk_size - mean_x;
    const double dy = s.iter_time - mean_y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }

  MixedFit fit;
  fit.beta = sxy / sxx;
  fit.alpha = mean_y - fit.beta * mean_x;
  fit.num_samples = samples.size();

  double ss_res = 0.0;
  for (const auto& s : samples) {
    const double r = s.iter_time - (fit.alpha + fit.beta * s.chunk_size);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

double fit_solo(const std::vector<double>& tokens_per_s) {
  if (tokens_per_s.empty()) {
    throw Error(ErrorCode::kEmptySamples, "no solo throughput samples");
  }
  double sum = 0.0;
  for (double v : tokens_per_s) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "solo throughput samples must be positive");
    }
    sum += v;
  }
  return sum / static_cast<double>(tokens_per_s.size());
}

HardwareProfile build_profile(int batch_size, double chunk_size,
                              const MixedFit& fit, double gamma,
                              double knee) {
  HardwareProfile hw;
  hw.batch_size = batch_size;
  hw.chunk_size = chunk_size;
  hw.base_time = fit.alpha + fit.beta * knee;
  hw.slope = fit.beta;
  hw.knee = knee;
  hw.solo_speed = gamma;
  validate(hw);
  return hw;
}

CalibrationResult calibrate(const std::vector<IterationSample>& mixed,
                            const std::vector<double>& solo, int batch_size,
                            double chunk_size, double knee) {
  CalibrationResult result;
  result.mixed = fit_mixed(mixed);
  const double gamma = fit_solo(solo);
  result.num_solo_samples = solo.size();
  result.hardware = build_profile(batch_size, chunk_size, result.mixed, gamma,
                                   knee);
  return result;
}

std::vector<IterationSample> read_mixed_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const size_t c = table.column("chunk_size");
  const size_t t = table.column("iter_time_s");
  std::vector<IterationSample> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    out.push_back({parse_double(row.at(c)), parse_double(row.at(t))});
  }
  return out;
}

std::vector<double> read_solo_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const size_t c = table.column("tokens_per_s");
  std::vector<double> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) out.push_back(parse_double(row.at(c)));
  return out;
}

}  // namespace fluidsched
