#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "cmdplab/error.hpp"
#include "cmdplab/lp.hpp"

namespace cmdplab::lp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kReducedCostTol = 1e-9;
constexpr int kRefactorEvery = 100;
constexpr int kDegenerateRunForBland = 30;

// x_orig[orig] += sign * x_std[column]
struct StructuralColumn {
  std::size_t orig;
  double sign;
};

struct StandardForm {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<double> cost;              // minimization cost, artificials excluded (0)
  std::vector<double> row_flip;          // +-1 per row
  std::vector<long> row_origin;          // original row index, -1 for bound rows
  std::vector<StructuralColumn> structural;
  std::vector<double> offset;            // per original variable
  std::vector<int> initial_basis;
  std::size_t first_artificial = 0;
};

StandardForm standardize(const LpProblem& p) {
  StandardForm f;
  const std::size_t nv = p.num_variables();
  f.offset.assign(nv, 0.0);

  struct BoundRow {
    std::size_t column;
    double rhs;
  };
  std::vector<BoundRow> bound_rows;
  for (std::size_t j = 0; j < nv; ++j) {
    const double lo = p.lower(j);
    const auto up = p.upper(j);
    if (std::isfinite(lo)) {
      f.offset[j] = lo;
      f.structural.push_back({j, 1.0});
      if (up) bound_rows.push_back({f.structural.size() - 1, *up - lo});
    } else if (up) {
      f.offset[j] = *up;
      f.structural.push_back({j, -1.0});
    } else {
      f.structural.push_back({j, 1.0});
      f.structural.push_back({j, -1.0});
    }
  }

  const std::size_t n_struct = f.structural.size();
  const std::size_t n_eq = p.equalities.size();
  const std::size_t n_ineq = p.inequalities.size();
  const std::size_t m = n_eq + n_ineq + bound_rows.size();
  const std::size_t n_slack = n_ineq + bound_rows.size();
  const std::size_t n_real = n_struct + n_slack;

  // Artificial columns are appended only for rows lacking a +1 slack.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                            static_cast<Eigen::Index>(n_real + m));
  Eigen::VectorXd b(static_cast<Eigen::Index>(m));
  f.row_flip.assign(m, 1.0);
  f.row_origin.assign(m, -1);
  std::vector<long> slack_of_row(m, -1);

  auto fill_row = [&](std::size_t i, const std::vector<double>& coeffs, double rhs) {
    double shifted = rhs;
    for (std::size_t j = 0; j < nv; ++j) shifted -= coeffs[j] * f.offset[j];
    for (std::size_t k = 0; k < n_struct; ++k) {
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          coeffs[f.structural[k].orig] * f.structural[k].sign;
    }
    b(static_cast<Eigen::Index>(i)) = shifted;
  };

  std::size_t row = 0;
  for (std::size_t e = 0; e < n_eq; ++e, ++row) {
    fill_row(row, p.equalities[e].coeffs, p.equalities[e].rhs);
    f.row_origin[row] = static_cast<long>(e);
  }
  std::size_t slack = n_struct;
  for (std::size_t q = 0; q < n_ineq; ++q, ++row, ++slack) {
    fill_row(row, p.inequalities[q].coeffs, p.inequalities[q].rhs);
    f.row_origin[row] = static_cast<long>(n_eq + q);
    A(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(slack)) =
        p.inequalities[q].sense == RowSense::LessEqual ? 1.0 : -1.0;
    slack_of_row[row] = static_cast<long>(slack);
  }
  for (const auto& br : bound_rows) {
    A(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(br.column)) = 1.0;
    A(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(slack)) = 1.0;
    b(static_cast<Eigen::Index>(row)) = br.rhs;
    slack_of_row[row] = static_cast<long>(slack);
    ++row;
    ++slack;
  }

  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (b(ii) < 0.0) {
      A.row(ii) *= -1.0;
      b(ii) = -b(ii);
      f.row_flip[i] = -1.0;
    }
  }

  f.first_artificial = n_real;
  std::size_t n_art = 0;
  f.initial_basis.assign(m, -1);
  for (std::size_t i = 0; i < m; ++i) {
    const long s = slack_of_row[i];
    if (s >= 0 && A(static_cast<Eigen::Index>(i), s) > 0.0) {
      f.initial_basis[i] = static_cast<int>(s);
    } else {
      const std::size_t col = n_real + n_art++;
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = 1.0;
      f.initial_basis[i] = static_cast<int>(col);
    }
  }
  f.A = A.leftCols(static_cast<Eigen::Index>(n_real + n_art));
  f.b = b;

  const double dir = p.sense == Objective::Maximize ? -1.0 : 1.0;
  f.cost.assign(n_real + n_art, 0.0);
  for (std::size_t k = 0; k < n_struct; ++k) {
    f.cost[k] = dir * p.objective[f.structural[k].orig] * f.structural[k].sign;
  }
  return f;
}

class RevisedSimplex {
 public:
  enum class Outcome { Optimal, Unbounded };

  RevisedSimplex(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, std::vector<int> basis,
                 const Tolerances& tol)
      : A_(A), b_(b), basis_(std::move(basis)), tol_(tol) {
    const auto n = static_cast<std::size_t>(A_.cols());
    const auto m = static_cast<std::size_t>(A_.rows());
    nonzeros_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < m; ++i) {
        const double v = A_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (v != 0.0) nonzeros_[j].push_back({static_cast<Eigen::Index>(i), v});
      }
    }
    is_basic_.assign(n, 0);
    for (int c : basis_) is_basic_[static_cast<std::size_t>(c)] = 1;
    max_iterations_ = 50 * (m + n) + 1000;
    refactor();
  }

  Outcome run(const std::vector<double>& cost, const std::vector<char>& allowed) {
    const auto m = A_.rows();
    Eigen::VectorXd cb(m);
    Eigen::VectorXd y(m);
    Eigen::VectorXd u(m);
    bool bland = false;
    int degenerate_run = 0;

    for (;;) {
      if (iterations_ >= max_iterations_) {
        throw Error(ErrorCode::NumericalBreakdown, "simplex iteration limit reached");
      }
      if (since_refactor_ >= kRefactorEvery) refactor();

      for (Eigen::Index i = 0; i < m; ++i) cb(i) = cost[static_cast<std::size_t>(basis_[i])];
      y.noalias() = binv_.transpose() * cb;

      long entering = -1;
      double best = -kReducedCostTol;
      for (std::size_t j = 0; j < nonzeros_.size(); ++j) {
        if (is_basic_[j] || !allowed[j]) continue;
        double d = cost[j];
        for (const auto& [i, v] : nonzeros_[j]) d -= y(i) * v;
        if (d < best) {
          entering = static_cast<long>(j);
          if (bland) break;
          best = d;
        }
      }

      if (entering < 0) {
        if (since_refactor_ > 0) {
          refactor();
          continue;
        }
        return Outcome::Optimal;
      }

      direction(static_cast<std::size_t>(entering), u);
      const long leaving_row = ratio_test(u, bland);
      if (leaving_row < 0) return Outcome::Unbounded;

      const double theta = std::max(xb_(leaving_row), 0.0) / u(leaving_row);
      if (theta <= 1e-12) {
        if (++degenerate_run >= kDegenerateRunForBland) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }
      pivot(static_cast<std::size_t>(entering), leaving_row, u, theta);
    }
  }

  // Swap basic artificials out of the basis where some real column can take
  // their row; rows where none can are linearly dependent and keep the
  // artificial at zero.
  void expel_artificials(std::size_t first_artificial) {
    const auto m = A_.rows();
    Eigen::VectorXd u(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      if (static_cast<std::size_t>(basis_[r]) < first_artificial) continue;
      long pick = -1;
      double pick_mag = tol_.pivot * 1e3;
      for (std::size_t j = 0; j < first_artificial; ++j) {
        if (is_basic_[j]) continue;
        double alpha = 0.0;
        for (const auto& [i, v] : nonzeros_[j]) alpha += binv_(r, i) * v;
        if (std::abs(alpha) > pick_mag) {
          pick_mag = std::abs(alpha);
          pick = static_cast<long>(j);
        }
      }
      if (pick < 0) continue;
      direction(static_cast<std::size_t>(pick), u);
      pivot(static_cast<std::size_t>(pick), r, u, xb_(r) / u(r));
    }
    refactor();
  }

  std::vector<double> column_values() const {
    std::vector<double> x(nonzeros_.size(), 0.0);
    for (Eigen::Index i = 0; i < A_.rows(); ++i) {
      x[static_cast<std::size_t>(basis_[i])] = std::max(xb_(i), 0.0);
    }
    return x;
  }

  Eigen::VectorXd duals(const std::vector<double>& cost) const {
    Eigen::VectorXd cb(A_.rows());
    for (Eigen::Index i = 0; i < A_.rows(); ++i) cb(i) = cost[static_cast<std::size_t>(basis_[i])];
    return binv_.transpose() * cb;
  }

  const std::vector<int>& basis() const { return basis_; }
  std::size_t iterations() const { return iterations_; }

 private:
  void direction(std::size_t column, Eigen::VectorXd& u) const {
    u.setZero();
    for (const auto& [i, v] : nonzeros_[column]) u.noalias() += v * binv_.col(i);
  }

  long ratio_test(const Eigen::VectorXd& u, bool bland) const {
    long row = -1;
    double best_ratio = kInf;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      if (u(i) <= tol_.pivot) continue;
      const double ratio = std::max(xb_(i), 0.0) / u(i);
      if (row < 0 || ratio < best_ratio - 1e-12 * (1.0 + best_ratio)) {
        row = static_cast<long>(i);
        best_ratio = ratio;
      } else if (ratio <= best_ratio + 1e-12 * (1.0 + best_ratio)) {
        const bool take = bland ? basis_[i] < basis_[row] : u(i) > u(row);
        if (take) {
          row = static_cast<long>(i);
          best_ratio = std::min(best_ratio, ratio);
        }
      }
    }
    return row;
  }

  void pivot(std::size_t entering, Eigen::Index row, const Eigen::VectorXd& u, double theta) {
    xb_.noalias() -= theta * u;
    xb_(row) = theta;
    const Eigen::RowVectorXd pivot_row = binv_.row(row) / u(row);
    binv_.noalias() -= u * pivot_row;
    binv_.row(row) = pivot_row;

    is_basic_[static_cast<std::size_t>(basis_[row])] = 0;
    basis_[row] = static_cast<int>(entering);
    is_basic_[entering] = 1;
    ++iterations_;
    ++since_refactor_;
  }

  void refactor() {
    const auto m = A_.rows();
    Eigen::MatrixXd B(m, m);
    for (Eigen::Index i = 0; i < m; ++i) B.col(i) = A_.col(basis_[i]);
    if (m > 0) {
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
      if (!(lu.rcond() > 1e-14)) {
        throw Error(ErrorCode::NumericalBreakdown, "basis matrix is numerically singular");
      }
      binv_ = lu.inverse();
    } else {
      binv_.resize(0, 0);
    }
    xb_ = binv_ * b_;
    since_refactor_ = 0;
  }

  const Eigen::MatrixXd& A_;
  const Eigen::VectorXd& b_;
  std::vector<int> basis_;
  Tolerances tol_;
  std::vector<std::vector<std::pair<Eigen::Index, double>>> nonzeros_;
  std::vector<char> is_basic_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd xb_;
  std::size_t iterations_ = 0;
  std::size_t max_iterations_ = 0;
  int since_refactor_ = 0;
};

}  // namespace

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
  }
  return "unknown";
}

LpSolution solve(const LpProblem& problem, const Tolerances& tol) {
  problem.check_well_formed();
  const StandardForm f = standardize(problem);
  const std::size_t n_cols = static_cast<std::size_t>(f.A.cols());

  RevisedSimplex simplex(f.A, f.b, f.initial_basis, tol);
  LpSolution sol;

  const bool has_artificials = f.first_artificial < n_cols;
  if (has_artificials) {
    std::vector<double> phase1_cost(n_cols, 0.0);
    for (std::size_t j = f.first_artificial; j < n_cols; ++j) phase1_cost[j] = 1.0;
    const std::vector<char> all(n_cols, 1);
    simplex.run(phase1_cost, all);
    const auto x = simplex.column_values();
    double infeasibility = 0.0;
    for (std::size_t j = f.first_artificial; j < n_cols; ++j) infeasibility += x[j];
    if (infeasibility > tol.feasibility) {
      sol.status = LpStatus::Infeasible;
      sol.iterations = simplex.iterations();
      sol.primal.assign(problem.num_variables(), 0.0);
      sol.max_constraint_residual = infeasibility;
      return sol;
    }
    simplex.expel_artificials(f.first_artificial);
  }

  std::vector<char> allowed(n_cols, 1);
  for (std::size_t j = f.first_artificial; j < n_cols; ++j) allowed[j] = 0;
  const auto outcome = simplex.run(f.cost, allowed);

  const auto x_std = simplex.column_values();
  sol.primal = f.offset;
  for (std::size_t k = 0; k < f.structural.size(); ++k) {
    sol.primal[f.structural[k].orig] += f.structural[k].sign * x_std[k];
  }
  sol.objective_value = 0.0;
  for (std::size_t j = 0; j < problem.num_variables(); ++j) {
    sol.objective_value += problem.objective[j] * sol.primal[j];
  }
  sol.max_constraint_residual = validate(problem, sol.primal);
  sol.iterations = simplex.iterations();

  if (outcome == RevisedSimplex::Outcome::Unbounded) {
    sol.status = LpStatus::Unbounded;
    return sol;
  }
  sol.status = LpStatus::Optimal;
  if (sol.max_constraint_residual > tol.feasibility) {

    throw Error(ErrorCode::NumericalBreakdown,
                "optimal basis violates constraints by " + std::to_string(sol.max_constraint_residual));
  }

  const Eigen::VectorXd y = simplex.duals(f.cost);
  const double dir = problem.sense == Objective::Maximize ? -1.0 : 1.0;
  sol.duals.assign(problem.num_rows(), 0.0);
  for (std::size_t i = 0; i < f.row_origin.size(); ++i) {
    if (f.row_origin[i] < 0) continue;
    sol.duals[static_cast<std::size_t>(f.row_origin[i])] =
        dir * f.row_flip[i] * y(static_cast<Eigen::Index>(i));
  }
  return sol;
}

}  // namespace cmdplab::lp
