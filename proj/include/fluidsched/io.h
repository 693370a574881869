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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fluidsched/calibration.h"
#include "fluidsched/model.h"
#include "fluidsched/planner.h"

namespace fluidsched {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kToolName = "fluidsched";
inline constexpr std::string_view kToolVersion = "0.1.0";

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws kParse when the column is missing.
  size_t column(std::string_view name) const;
};

// Reads a comma-separated file. Lines starting with '#' are skipped.
CsvTable read_csv(const std::string& path);
double parse_double(const std::string& text);

// Shortest text that round-trips through strtod.
std::string format_double(double value);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

Json to_json(const Instance& instance);
Instance instance_from_json(const Json& j);
Instance load_instance(const std::string& path);

Json to_json(const HardwareProfile& hw);
HardwareProfile hardware_from_json(const Json& j);

Json to_json(const SliSpec& sli);
SliSpec sli_from_json(const Json& j);

Json to_json(const FluidPlan& plan);
FluidPlan plan_from_json(const Json& j);

Json to_json(const CalibrationResult& result);

// FNV-1a over the compact dump of the instance JSON, as 16 hex digits.
std::string instance_hash(const Instance& instance);

}  // namespace fluidsched
