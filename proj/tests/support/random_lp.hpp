#pragma once

#include <cmath>

#include "cmdplab/lp.hpp"
#include "cmdplab/rng.hpp"

namespace testgen {

// Bounded random LP over x >= 0: the first row caps the total mass so the
// feasible region is a polytope; remaining rows mix <=, >= and = senses.
inline cmdplab::lp::LpProblem random_lp(cmdplab::Rng& rng, std::size_t max_vars = 8,
                                        std::size_t max_rows = 6) {
  using namespace cmdplab::lp;
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1));
  };
  auto coeff = [&] { return std::round((rng.uniform() * 8.0 - 3.0) * 4.0) / 4.0; };

  LpProblem p;
  const std::size_t n = pick(2, max_vars);
  const std::size_t rows = pick(1, max_rows);
  p.sense = rng.uniform() < 0.7 ? Objective::Maximize : Objective::Minimize;
  for (std::size_t j = 0; j < n; ++j) p.objective.push_back(coeff());

  InequalityRow cap;
  cap.coeffs.assign(n, 1.0);
  cap.rhs = 1.0 + std::round(rng.uniform() * 10.0);
  p.inequalities.push_back(cap);
  for (std::size_t r = 1; r < rows; ++r) {
    std::vector<double> a(n);
    for (auto& v : a) v = coeff();
    const double u = rng.uniform();
    const double rhs = std::round((rng.uniform() * 6.0 - 1.0) * 4.0) / 4.0;
    if (u < 0.6) {
      p.inequalities.push_back({a, rhs, RowSense::LessEqual});
    } else if (u < 0.85) {
      p.inequalities.push_back({a, rhs, RowSense::GreaterEqual});
    } else {
      p.equalities.push_back({a, rhs});
    }
  }
  return p;
}

}  // namespace testgen
