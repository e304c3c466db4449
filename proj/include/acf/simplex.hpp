#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "acf/error.hpp"

namespace acf::lp {

enum class Relation { less_equal, greater_equal, equal };

struct Constraint {
  std::vector<double> coeffs;
  Relation relation = Relation::less_equal;
  double rhs = 0.0;
};

/// maximize objective . x  subject to rows, x >= lower (componentwise, finite).
struct LinearProgram {
  std::size_t n_vars = 0;
  std::vector<double> objective;
  std::vector<double> lower;  // empty means all zero
  std::vector<Constraint> rows;

  void add(std::vector<double> coeffs, Relation rel, double rhs) { rows.push_back({std::move(coeffs), rel, rhs}); }
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

struct Solution {
  Status status = Status::infeasible;
  double objective = 0.0;
  std::vector<double> x;
  std::size_t pivots = 0;
};

/// Dense two-phase tableau simplex with Bland's rule. Meant for small problems (tens of
/// variables and rows), where a full tableau is cheaper than any factorization.
class DenseSimplex {
 public:
  explicit DenseSimplex(double eps = 1e-11, std::size_t max_pivots = 100000) : eps_(eps), max_pivots_(max_pivots) {}

  Solution solve(const LinearProgram& lp) {
    const std::size_t n = lp.n_vars;
    require(lp.objective.size() == n, ErrorCode::contract, "LP objective has wrong length");
    require(lp.lower.empty() || lp.lower.size() == n, ErrorCode::contract, "LP lower bounds have wrong length");
    const std::size_t m = lp.rows.size();

    // Shift x = y + lower, then orient every row so its rhs is non-negative.
    std::vector<std::vector<double>> a(m);
    std::vector<double> b(m);
    std::vector<Relation> rel(m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto& row = lp.rows[i];
      require(row.coeffs.size() == n, ErrorCode::contract, "LP row has wrong length");
      double rhs = row.rhs;
      if (!lp.lower.empty())
        for (std::size_t j = 0; j < n; ++j) rhs -= row.coeffs[j] * lp.lower[j];
      a[i] = row.coeffs;
      rel[i] = row.relation;
      if (rhs < 0.0 || (rhs == 0.0 && rel[i] == Relation::greater_equal)) {
        for (double& v : a[i]) v = -v;
        rhs = -rhs + 0.0;
        if (rel[i] == Relation::less_equal)
          rel[i] = Relation::greater_equal;
        else if (rel[i] == Relation::greater_equal)
          rel[i] = Relation::less_equal;
      }
      b[i] = rhs;
    }

    std::size_t n_slack = 0, n_art = 0;
    for (auto r : rel) {
      if (r != Relation::equal) ++n_slack;
      if (r != Relation::less_equal) ++n_art;
    }
    const std::size_t art_begin = n + n_slack;
    cols_ = art_begin + n_art;
    rows_ = m;
    tab_.assign((m + 1) * (cols_ + 1), 0.0);
    basis_.assign(m, 0);
    std::size_t s = n, t = art_begin;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) at(i, j) = a[i][j];
      rhs(i) = b[i];
      if (rel[i] == Relation::less_equal) {
        at(i, s) = 1.0;
        basis_[i] = s++;
      } else if (rel[i] == Relation::greater_equal) {
        at(i, s++) = -1.0;
        at(i, t) = 1.0;
        basis_[i] = t++;
      } else {
        at(i, t) = 1.0;
        basis_[i] = t++;
      }
    }

    Solution sol;
    // Phase 1: maximize -sum(artificials).
    if (n_art > 0) {
      std::vector<double> c1(cols_, 0.0);
      for (std::size_t j = art_begin; j < cols_; ++j) c1[j] = -1.0;
      set_objective(c1);
      active_cols_ = cols_;
      Status st = iterate(sol.pivots);
      if (st == Status::iteration_limit) {
        sol.status = st;
        return sol;
      }
      if (-objective_value() > 1e-9) {
        sol.status = Status::infeasible;
        return sol;
      }
      // Pivot remaining artificials out of the basis; drop rows that are linearly dependent.
      for (std::size_t i = 0; i < rows_;) {
        if (basis_[i] < art_begin) {
          ++i;
          continue;
        }
        std::size_t enter = cols_;
        for (std::size_t j = 0; j < art_begin; ++j)
          if (std::abs(at(i, j)) > eps_) {
            enter = j;
            break;
          }
        if (enter == cols_) {
          remove_row(i);
          continue;
        }
        pivot(i, enter);
        ++sol.pivots;
        ++i;
      }
    }
    // Phase 2 over the structural and slack columns.
    active_cols_ = art_begin;
    std::vector<double> c2(cols_, 0.0);
    for (std::size_t j = 0; j < n; ++j) c2[j] = lp.objective[j];
    set_objective(c2);
    Status st = iterate(sol.pivots);
    sol.status = st;
    if (st != Status::optimal) return sol;
    sol.x.assign(n, 0.0);
    for (std::size_t i = 0; i < rows_; ++i)
      if (basis_[i] < n) sol.x[basis_[i]] = rhs(i);
    if (!lp.lower.empty())
      for (std::size_t j = 0; j < n; ++j) sol.x[j] += lp.lower[j];
    sol.objective = 0.0;
    for (std::size_t j = 0; j < n; ++j) sol.objective += lp.objective[j] * sol.x[j];
    return sol;
  }

 private:
  double& at(std::size_t i, std::size_t j) { return tab_[i * (cols_ + 1) + j]; }
  double& rhs(std::size_t i) { return tab_[i * (cols_ + 1) + cols_]; }
  double& cost(std::size_t j) { return tab_[rows_ * (cols_ + 1) + j]; }
  double objective_value() { return tab_[rows_ * (cols_ + 1) + cols_]; }

  // Reduced-cost row: cost(j) = c_B B^-1 A_j - c_j; the last entry holds the objective value.
  void set_objective(const std::vector<double>& c) {
    for (std::size_t j = 0; j <= cols_; ++j) tab_[rows_ * (cols_ + 1) + j] = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) cost(j) = -c[j];
    for (std::size_t i = 0; i < rows_; ++i) {
      const double cb = c[basis_[i]];
      if (cb == 0.0) continue;
      for (std::size_t j = 0; j <= cols_; ++j) tab_[rows_ * (cols_ + 1) + j] += cb * tab_[i * (cols_ + 1) + j];
    }
  }

  Status iterate(std::size_t& pivots) {
    while (true) {
      if (pivots >= max_pivots_) return Status::iteration_limit;
      std::size_t enter = active_cols_;
      for (std::size_t j = 0; j < active_cols_; ++j)
        if (cost(j) < -eps_) {
          enter = j;
          break;
        }
      if (enter == active_cols_) return Status::optimal;
      std::size_t leave = rows_;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < rows_; ++i) {
        const double aij = at(i, enter);
        if (aij <= eps_) continue;
        const double ratio = rhs(i) / aij;
        if (ratio < best - 1e-15 || (std::abs(ratio - best) <= 1e-15 && leave < rows_ && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave == rows_) return Status::unbounded;
      pivot(leave, enter);
      ++pivots;
    }
  }

  void pivot(std::size_t r, std::size_t c) {
    const std::size_t w = cols_ + 1;
    const double p = at(r, c);
    for (std::size_t j = 0; j < w; ++j) tab_[r * w + j] /= p;
    for (std::size_t i = 0; i <= rows_; ++i) {
      if (i == r) continue;
      const double f = tab_[i * w + c];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < w; ++j) tab_[i * w + j] -= f * tab_[r * w + j];
      tab_[i * w + c] = 0.0;
    }
    basis_[r] = c;
  }

  void remove_row(std::size_t r) {
    const std::size_t w = cols_ + 1;
    tab_.erase(tab_.begin() + static_cast<std::ptrdiff_t>(r * w), tab_.begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
    basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(r));
    --rows_;
  }

  double eps_;
  std::size_t max_pivots_;
  std::size_t rows_ = 0, cols_ = 0, active_cols_ = 0;
  std::vector<double> tab_;
  std::vector<std::size_t> basis_;
};

inline Solution solve(const LinearProgram& lp) { return DenseSimplex().solve(lp); }

}  // namespace acf::lp
