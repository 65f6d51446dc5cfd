#pragma once

// Brute-force LP oracle: enumerates every basic solution of a problem with
// x >= 0 and no upper bounds, keeps the feasible ones, and returns the best
// objective. Independent of the simplex code path.

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "cmdplab/lp.hpp"

namespace oracle {

inline std::optional<double> enumerate_vertices(const cmdplab::lp::LpProblem& p, double tol = 1e-9) {
  using cmdplab::lp::RowSense;
  const int n = static_cast<int>(p.num_variables());
  const int n_eq = static_cast<int>(p.equalities.size());
  const int n_in = static_cast<int>(p.inequalities.size());
  // Candidate tight constraints: inequality rows then nonnegativity bounds.
  const int n_cand = n_in + n;
  const int need = n - n_eq;
  if (need < 0) return std::nullopt;

  std::optional<double> best;
  std::vector<int> pick(static_cast<std::size_t>(need));
  auto evaluate = [&]() {
    Eigen::MatrixXd M(n, n);
    Eigen::VectorXd rhs(n);
    int r = 0;
    for (const auto& e : p.equalities) {
      for (int j = 0; j < n; ++j) M(r, j) = e.coeffs[static_cast<std::size_t>(j)];
      rhs(r++) = e.rhs;
    }
    for (int k : pick) {
      if (k < n_in) {
        const auto& q = p.inequalities[static_cast<std::size_t>(k)];
        for (int j = 0; j < n; ++j) M(r, j) = q.coeffs[static_cast<std::size_t>(j)];
        rhs(r++) = q.rhs;
      } else {
        M.row(r).setZero();
        M(r, k - n_in) = 1.0;
        rhs(r++) = 0.0;
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (lu.rank() < n) return;
    const Eigen::VectorXd x = lu.solve(rhs);
    for (int j = 0; j < n; ++j) {
      if (x(j) < -tol) return;
    }
    for (const auto& e : p.equalities) {
      double s = 0;
      for (int j = 0; j < n; ++j) s += e.coeffs[static_cast<std::size_t>(j)] * x(j);
      if (std::abs(s - e.rhs) > tol) return;
    }
    for (const auto& q : p.inequalities) {
      double s = 0;
      for (int j = 0; j < n; ++j) s += q.coeffs[static_cast<std::size_t>(j)] * x(j);
      if (q.sense == RowSense::LessEqual ? s > q.rhs + tol : s < q.rhs - tol) return;
    }
    double obj = 0;
    for (int j = 0; j < n; ++j) obj += p.objective[static_cast<std::size_t>(j)] * x(j);
    const bool maximize = p.sense == cmdplab::lp::Objective::Maximize;
    if (!best || (maximize ? obj > *best : obj < *best)) best = obj;
  };

  // Lexicographic enumeration of size-`need` subsets of the candidates.
  for (int i = 0; i < need; ++i) pick[static_cast<std::size_t>(i)] = i;
  if (need > n_cand) return std::nullopt;
  for (;;) {
    evaluate();
    int i = need - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == n_cand - need + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < need; ++k) pick[static_cast<std::size_t>(k)] = pick[static_cast<std::size_t>(k - 1)] + 1;
  }
  return best;
}

}  // namespace oracle
