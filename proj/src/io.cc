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

#include "fluidsched/io.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fluidsched/error.h"

namespace fluidsched {

size_t CsvTable::column(std::string_view name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorCode::kParse,
              "missing CSV column '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return out;
}

double number(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw Error(ErrorCode::kParse,
                std::string("expected numeric field '") + key + "'");
  }
  return j.at(key).get<double>();
}

double number_or(const Json& j, const char* key, double fallback) {
  return j.contains(key) ? number(j, key) : fallback;
}

Json sli_constraint_json(const SliConstraint& c) {
  Json j;
  j["mode"] = std::string(sli_mode_name(c.mode));
  j["eta"] = c.eta;
  j["weight"] = c.weight;
  return j;
}

SliConstraint sli_constraint_from_json(const Json& j) {
  SliConstraint c;
  c.mode = parse_sli_mode(j.value("mode", std::string("hard")));
  c.eta = number_or(j, "eta", 0.0);
  c.weight = number_or(j, "weight", 0.0);
  return c;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  CsvTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw Error(ErrorCode::kParse, path + ": ragged row '" + line + "'");
    }
    table.rows.push_back(std::move(cells));
  }
  if (table.header.empty()) throw Error(ErrorCode::kParse, path + ": empty");
  return table;
}

double parse_double(const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw Error(ErrorCode::kParse, "not a number: '" + text + "'");
  }
  return v;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << text;
}

Json to_json(const HardwareProfile& hw) {
  Json j;
  j["B"] = hw.batch_size;
  j["C"] = hw.chunk_size;
  j["c"] = hw.base_time;
  j["a"] = hw.slope;
  j["b0"] = hw.knee;
  j["gamma"] = hw.solo_speed;
  return j;
}

HardwareProfile hardware_from_json(const Json& j) {
  HardwareProfile hw;
  const double b = number(j, "B");
  if (b != std::floor(b)) {
    throw Error(ErrorCode::kParse, "B must be an integer");
  }
  hw.batch_size = static_cast<int>(b);
  hw.chunk_size = number(j, "C");
  hw.base_time = number(j, "c");
  hw.slope = number(j, "a");
  hw.knee = number_or(j, "b0", 0.0);
  hw.solo_speed = number(j, "gamma");
  return hw;
}

Json to_json(const Instance& instance) {
  Json j;
  Json classes = Json::array();
  for (const auto& c : instance.classes) {
    Json jc;
    jc["P"] = c.prompt_len;
    jc["D"] = c.decode_len;
    jc["lambda"] = c.arrival_rate;
    jc["theta"] = c.patience_rate;
    classes.push_back(jc);
  }
  j["classes"] = classes;
  j["hardware"] = to_json(instance.hardware);
  Json pricing;
  pricing["cp"] = instance.pricing.prefill_price;
  pricing["cd"] = instance.pricing.decode_price;
  pricing["scheme"] = std::string(scheme_name(instance.pricing.scheme));
  j["pricing"] = pricing;
  return j;
}

Instance instance_from_json(const Json& j) {
  Instance inst;
  try {
    for (const auto& jc : j.at("classes")) {
      WorkloadClass c;
      c.prompt_len = number(jc, "P");
      c.decode_len = number(jc, "D");
      c.arrival_rate = number(jc, "lambda");
      c.patience_rate = number(jc, "theta");
      inst.classes.push_back(c);
    }
    inst.hardware = hardware_from_json(j.at("hardware"));
    const Json& p = j.at("pricing");
    inst.pricing.prefill_price = number(p, "cp");
    inst.pricing.decode_price = number(p, "cd");
    inst.pricing.scheme =
        parse_scheme(p.value("scheme", std::string("bundled")));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
  validate(inst);
  return inst;
}

Instance load_instance(const std::string& path) {
  return instance_from_json(read_json_file(path));
}

Json to_json(const SliSpec& sli) {
  Json j;
  if (sli.prefill_fairness.active()) {
    j["prefill_fairness"] = sli_constraint_json(sli.prefill_fairness);
  }
  if (sli.decode_fairness.active()) {
    j["decode_fairness"] = sli_constraint_json(sli.decode_fairness);
  }
  if (sli.tpot.active()) j["tpot"] = sli_constraint_json(sli.tpot);
  j["force_zero_decode_buffer"] = sli.force_zero_decode_buffer;
  return j;
}

SliSpec sli_from_json(const Json& j) {
  SliSpec sli;
  if (j.contains("prefill_fairness")) {
    sli.prefill_fairness = sli_constraint_from_json(j.at("prefill_fairness"));
  }
  if (j.contains("decode_fairness")) {
    sli.decode_fairness = sli_constraint_from_json(j.at("decode_fairness"));
  }
  if (j.contains("tpot")) sli.tpot = sli_constraint_from_json(j.at("tpot"));
  sli.force_zero_decode_buffer = j.value("force_zero_decode_buffer", false);
  return sli;
}

Json to_json(const FluidPlan& plan) {
  Json j;
  j["scheme"] = std::string(scheme_name(plan.scheme));
  j["objective"] = plan.objective;
  Json classes = Json::array();
  for (const auto& c : plan.classes) {
    Json jc;
    jc["x"] = c.x;
    jc["y_m"] = c.y_m;
    jc["y_s"] = c.y_s;
    jc["q_p"] = c.q_p;
    jc["q_d"] = c.q_d;
    classes.push_back(jc);
  }
  j["classes"] = classes;
  Json d;
  d["prefill_capacity"] = plan.duals.prefill_capacity;
  d["mixed_capacity"] = plan.duals.mixed_capacity;
  d["solo_capacity"] = plan.duals.solo_capacity;
  d["prefill_flow"] = plan.duals.prefill_flow;
  d["decode_flow"] = plan.duals.decode_flow;
  d["prefill_fairness"] = plan.duals.prefill_fairness;
  d["decode_fairness"] = plan.duals.decode_fairness;
  d["tpot"] = plan.duals.tpot;
  j["duals"] = d;
  j["sli"] = to_json(plan.sli);
  return j;
}

FluidPlan plan_from_json(const Json& j) {
  FluidPlan plan;
  try {
    plan.scheme = parse_scheme(j.value("scheme", std::string("bundled")));
    plan.objective = number_or(j, "objective", 0.0);
    for (const auto& jc : j.at("classes")) {
      ClassPlan c;
      c.x = number(jc, "x");
      c.y_m = number(jc, "y_m");
      c.y_s = number(jc, "y_s");
      c.q_p = number(jc, "q_p");
      c.q_d = number(jc, "q_d");
      plan.classes.push_back(c);
    }
    if (j.contains("sli")) plan.sli = sli_from_json(j.at("sli"));
    if (j.contains("duals")) {
      const Json& d = j.at("duals");
      plan.duals.prefill_capacity = number_or(d, "prefill_capacity", 0.0);
      plan.duals.mixed_capacity = number_or(d, "mixed_capacity", 0.0);
      plan.duals.solo_capacity = number_or(d, "solo_capacity", 0.0);
      plan.duals.prefill_fairness = number_or(d, "prefill_fairness", 0.0);
      plan.duals.decode_fairness = number_or(d, "decode_fairness", 0.0);
      plan.duals.tpot = number_or(d, "tpot", 0.0);
      if (d.contains("prefill_flow")) {
        plan.duals.prefill_flow = d.at("prefill_flow").get<std::vector<double>>();
      }
      if (d.contains("decode_flow")) {
        plan.duals.decode_flow = d.at("decode_flow").get<std::vector<double>>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
  return plan;
}

Json to_json(const CalibrationResult& result) {
  Json j;
  j["hardware"] = to_json(result.hardware);
  Json fit;
  fit["alpha"] = result.mixed.alpha;
  fit["beta"] = result.mixed.beta;
  fit["r_squared"] = result.mixed.r_squared;
  fit["mixed_samples"] = result.mixed.num_samples;
  fit["solo_samples"] = result.num_solo_samples;
  j["fit"] = fit;
  return j;
}

std::string instance_hash(const Instance& instance) {
  const std::string text = to_json(instance).dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fluidsched
