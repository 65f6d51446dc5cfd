#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cmdplab::lp {

enum class Objective { Maximize, Minimize };
enum class RowSense { LessEqual, GreaterEqual };

struct EqualityRow {
  std::vector<double> coeffs;
  double rhs = 0.0;
};

struct InequalityRow {
  std::vector<double> coeffs;
  double rhs = 0.0;
  RowSense sense = RowSense::LessEqual;
};

/// Dense linear program. Bounds default to x >= 0 with no upper bound; a
/// lower bound of -infinity makes a variable free.
struct LpProblem {
  Objective sense = Objective::Maximize;
  std::vector<double> objective;
  std::vector<EqualityRow> equalities;
  std::vector<InequalityRow> inequalities;
  std::vector<double> lower_bounds;
  std::vector<std::optional<double>> upper_bounds;

  std::size_t num_variables() const { return objective.size(); }
  std::size_t num_rows() const { return equalities.size() + inequalities.size(); }
  double lower(std::size_t j) const { return lower_bounds.empty() ? 0.0 : lower_bounds[j]; }
  std::optional<double> upper(std::size_t j) const {
    return upper_bounds.empty() ? std::nullopt : upper_bounds[j];
  }

  /// Throws Error(MalformedProblem) on ragged rows, non-finite data or
  /// crossed bounds.
  void check_well_formed() const;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

const char* to_string(LpStatus status);

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> primal;
  double objective_value = 0.0;
  double max_constraint_residual = 0.0;
  /// One multiplier per row, equalities first then inequalities, signed so
  /// that at an optimum the objective coefficient minus y^T A_j is <= 0 for
  /// maximization (>= 0 for minimization) on every variable at its lower bound.
  std::vector<double> duals;
  std::size_t iterations = 0;
};

struct Tolerances {
  double feasibility = 1e-9;
  double optimality = 1e-8;
  double pivot = 1e-10;
};

/// Two-phase revised simplex with an explicit basis inverse. Pricing is
/// Dantzig's rule; a run of degenerate pivots switches to Bland's rule until
/// progress resumes, which guarantees termination.
LpSolution solve(const LpProblem& problem, const Tolerances& tol = {});

/// Largest violation over rows and bounds at `point` (0 when feasible).
double validate(const LpProblem& problem, std::span<const double> point);

/// Line-oriented text dump: an objective line, one line per constraint
/// (`<coeffs...> <sense> <rhs>`), then non-default bounds.
void dump(const LpProblem& problem, std::ostream& out);
LpProblem read_dump(std::istream& in);

}  // namespace cmdplab::lp
