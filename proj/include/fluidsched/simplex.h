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

namespace fluidsched {

enum class RowSense { kLessEqual, kGreaterEqual, kEqual };

struct LpRow {
  std::vector<double> coeffs;  // dense, one entry per variable
  RowSense sense = RowSense::kLessEqual;
  double rhs = 0.0;
  std::string name;
};

// maximize objective . v  subject to rows, v >= 0.
struct LpProblem {
  std::vector<std::string> var_names;
  std::vector<double> objective;
  std::vector<LpRow> rows;

  size_t num_vars() const { return objective.size(); }
  int add_var(const std::string& name, double cost);
  LpRow& add_row(const std::string& name, RowSense sense, double rhs);
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpSolution {
  LpStatus status = LpStatus::kInfeasible;
  double objective = 0.0;
  std::vector<double> values;
  // d objective / d rhs for each row.
  std::vector<double> duals;
  int iterations = 0;
};

struct SimplexOptions {
  double pivot_tol = 1e-9;
  double feas_tol = 1e-9;
  int max_iterations = 100000;
};

// Dense two-phase primal simplex with Bland's rule.
LpSolution solve_lp(const LpProblem& problem,
                    const SimplexOptions& options = {});

// Largest violation of any row or bound at `values`.
double max_violation(const LpProblem& problem,
                     const std::vector<double>& values);

}  // namespace fluidsched
