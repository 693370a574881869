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

#include "fluidsched/simplex.h"

#include <algorithm>
#include <cmath>

#include "fluidsched/error.h"

namespace fluidsched {

int LpProblem::add_var(const std::string& name, double cost) {
  var_names.push_back(name);
  objective.push_back(cost);
  for (auto& row : rows) row.coeffs.push_back(0.0);
  return static_cast<int>(objective.size()) - 1;
}

LpRow& LpProblem::add_row(const std::string& name, RowSense sense,
                          double rhs) {
  LpRow row;
  row.name = name;
  row.sense = sense;
  row.rhs = rhs;
  row.coeffs.assign(num_vars(), 0.0);
  rows.push_back(std::move(row));
  return rows.back();
}

namespace {

class Tableau {
 public:
  Tableau(const LpProblem& lp, const SimplexOptions& opt) : opt_(opt) {
    m_ = lp.rows.size();
    n_ = lp.num_vars();

    // Column layout: structural, then one or two per row.
    size_t cols = n_;
    row_sign_.assign(m_, 1.0);
    unit_col_.assign(m_, 0);
    std::vector<RowSense> sense(m_);
    for (size_t r = 0; r < m_; ++r) {
      sense[r] = lp.rows[r].sense;
      if (lp.rows[r].rhs < 0.0) {
        row_sign_[r] = -1.0;
        if (sense[r] == RowSense::kLessEqual) {
          sense[r] = RowSense::kGreaterEqual;
        } else if (sense[r] == RowSense::kGreaterEqual) {
          sense[r] = RowSense::kLessEqual;
        }
      }
      cols += sense[r] == RowSense::kGreaterEqual ? 2 : 1;
    }
    cols_ = cols;
    width_ = cols_ + 1;
    t_.assign(m_ * width_, 0.0);
    artificial_.assign(cols_, false);
    basis_.assign(m_, 0);

    size_t next = n_;
    for (size_t r = 0; r < m_; ++r) {
      const auto& row = lp.rows[r];
      if (row.coeffs.size() != n_) {
        throw Error(ErrorCode::kInvalidArgument,
                    "row '" + row.name + "' has wrong width");
      }
      for (size_t j = 0; j < n_; ++j) at(r, j) = row_sign_[r] * row.coeffs[j];
      at(r, cols_) = row_sign_[r] * row.rhs;
      if (sense[r] == RowSense::kGreaterEqual) {
        at(r, next++) = -1.0;
      }
      at(r, next) = 1.0;
      unit_col_[r] = next;
      artificial_[next] = sense[r] != RowSense::kLessEqual;
      basis_[r] = next;
      ++next;
    }
  }

  double& at(size_t r, size_t c) { return t_[r * width_ + c]; }
  double at(size_t r, size_t c) const { return t_[r * width_ + c]; }

  // Runs simplex for cost vector `cost` (length cols_). Returns false on
  // unboundedness.
  bool optimize(const std::vector<double>& cost, bool allow_artificial,
                int* iterations) {
    reduced_.assign(cols_, 0.0);
    for (size_t j = 0; j < cols_; ++j) {
      double z = 0.0;
      for (size_t r = 0; r < m_; ++r) z += cost[basis_[r]] * at(r, j);
      reduced_[j] = cost[j] - z;
    }
    double scale = 1.0;
    for (double c : cost) scale = std::max(scale, std::abs(c));
    const double opt_tol = opt_.feas_tol * scale;

    while (true) {
      if (*iterations >= opt_.max_iterations) {
        throw Error(ErrorCode::kUnsupported, "simplex iteration limit");
      }
      size_t enter = cols_;
      for (size_t j = 0; j < cols_; ++j) {
        if (!allow_artificial && artificial_[j]) continue;
        if (reduced_[j] > opt_tol) {
          enter = j;
          break;
        }
      }
      if (enter == cols_) return true;

      size_t leave = m_;
      double best = 0.0;
      for (size_t r = 0; r < m_; ++r) {
        const double a = at(r, enter);
        if (a <= opt_.pivot_tol) continue;
        const double ratio = at(r, cols_) / a;
        if (leave == m_ || ratio < best - 1e-12 ||
            (ratio <= best + 1e-12 && basis_[r] < basis_[leave])) {
          leave = r;
          best = ratio;
        }
      }
      if (leave == m_) return false;
      pivot(leave, enter);
      ++*iterations;
    }
  }

  void pivot(size_t pr, size_t pc) {
    const double p = at(pr, pc);
    for (size_t c = 0; c < width_; ++c) at(pr, c) /= p;
    at(pr, pc) = 1.0;
    for (size_t r = 0; r < m_; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (size_t c = 0; c < width_; ++c) at(r, c) -= f * at(pr, c);
      at(r, pc) = 0.0;
    }
    if (!reduced_.empty()) {
      const double f = reduced_[pc];
      for (size_t c = 0; c < cols_; ++c) reduced_[c] -= f * at(pr, c);
      reduced_[pc] = 0.0;
    }
    basis_[pr] = pc;
  }

  // Pivots zero-level artificials out of the basis where possible.
  void purge_artificials() {
    for (size_t r = 0; r < m_; ++r) {
      if (!artificial_[basis_[r]]) continue;
      for (size_t j = 0; j < cols_; ++j) {
        if (artificial_[j]) continue;
        if (std::abs(at(r, j)) > opt_.pivot_tol) {
          pivot(r, j);
          break;
        }
      }
    }
  }

  double artificial_mass() const {
    double s = 0.0;
    for (size_t r = 0; r < m_; ++r) {
      if (artificial_[basis_[r]]) s += std::max(0.0, at(r, cols_));
    }
    return s;
  }

  double max_rhs() const {
    double s = 0.0;
    for (size_t r = 0; r < m_; ++r) s = std::max(s, std::abs(at(r, cols_)));
    return s;
  }

  size_t m_ = 0;
  size_t n_ = 0;
  size_t cols_ = 0;
  size_t width_ = 0;
  std::vector<double> t_;
  std::vector<double> reduced_;
  std::vector<size_t> basis_;
  std::vector<size_t> unit_col_;
  std::vector<double> row_sign_;
  std::vector<bool> artificial_;
  SimplexOptions opt_;
};

}  // namespace

LpSolution solve_lp(const LpProblem& problem, const SimplexOptions& options) {
  LpSolution sol;
  Tableau tab(problem, options);

  std::vector<double> phase1(tab.cols_, 0.0);
  bool any_artificial = false;
  for (size_t j = 0; j < tab.cols_; ++j) {
    if (tab.artificial_[j]) {
      phase1[j] = -1.0;
      any_artificial = true;
    }
  }
  if (any_artificial) {
    tab.optimize(phase1, true, &sol.iterations);
    if (tab.artificial_mass() > options.feas_tol * (1.0 + tab.max_rhs())) {
      sol.status = LpStatus::kInfeasible;
      return sol;
    }
    tab.purge_artificials();
  }

  std::vector<double> cost(tab.cols_, 0.0);
  for (size_t j = 0; j < problem.num_vars(); ++j) {
    cost[j] = problem.objective[j];
  }
  if (!tab.optimize(cost, false, &sol.iterations)) {
    sol.status = LpStatus::kUnbounded;
    return sol;
  }

  sol.status = LpStatus::kOptimal;
  sol.values.assign(problem.num_vars(), 0.0);
  for (size_t r = 0; r < tab.m_; ++r) {
    const size_t b = tab.basis_[r];
    if (b < problem.num_vars()) sol.values[b] = std::max(0.0, tab.at(r, tab.cols_));
  }
  sol.objective = 0.0;
  for (size_t j = 0; j < problem.num_vars(); ++j) {
    sol.objective += problem.objective[j] * sol.values[j];
  }
  sol.duals.assign(tab.m_, 0.0);
  for (size_t r = 0; r < tab.m_; ++r) {
    sol.duals[r] = -tab.row_sign_[r] * tab.reduced_[tab.unit_col_[r]];
  }
  return sol;
}

double max_violation(const LpProblem& problem,
                     const std::vector<double>& values) {
  double worst = 0.0;
  for (double v : values) worst = std::max(worst, -v);
  for (const auto& row : problem.rows) {
    double lhs = 0.0;
    for (size_t j = 0; j < values.size(); ++j) lhs += row.coeffs[j] * values[j];
    double viol = 0.0;
    switch (row.sense) {
      case RowSense::kLessEqual: viol = lhs - row.rhs; break;
      case RowSense::kGreaterEqual: viol = row.rhs - lhs; break;
      case RowSense::kEqual: viol = std::abs(lhs - row.rhs); break;
    }
    worst = std::max(worst, viol);
  }
  return worst;
}

}  // namespace fluidsched
