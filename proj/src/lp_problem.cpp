#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "cmdplab/error.hpp"
#include "cmdplab/format.hpp"
#include "cmdplab/lp.hpp"

namespace cmdplab::lp {
namespace {

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double parse_double(const std::string& token) {
  if (token == "inf") return std::numeric_limits<double>::infinity();
  if (token == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size()) throw Error(ErrorCode::MalformedProblem, "bad number '" + token + "'");
  return v;
}

}  // namespace

void LpProblem::check_well_formed() const {
  const std::size_t n = num_variables();
  if (!all_finite(objective)) throw Error(ErrorCode::MalformedProblem, "non-finite objective");
  auto check_row = [&](const std::vector<double>& coeffs, double rhs, std::size_t index) {
    if (coeffs.size() != n) {
      throw Error(ErrorCode::MalformedProblem, "row " + std::to_string(index) + " has width " +
                                                   std::to_string(coeffs.size()) + ", expected " +
                                                   std::to_string(n));
    }
    if (!all_finite(coeffs) || !std::isfinite(rhs)) {
      throw Error(ErrorCode::MalformedProblem, "row " + std::to_string(index) + " is not finite");
    }
  };
  std::size_t index = 0;
  for (const auto& r : equalities) check_row(r.coeffs, r.rhs, index++);
  for (const auto& r : inequalities) check_row(r.coeffs, r.rhs, index++);

  if (!lower_bounds.empty() && lower_bounds.size() != n) {
    throw Error(ErrorCode::MalformedProblem, "lower bound count mismatch");
  }
  if (!upper_bounds.empty() && upper_bounds.size() != n) {
    throw Error(ErrorCode::MalformedProblem, "upper bound count mismatch");
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double lo = lower(j);
    const auto up = upper(j);
    if (std::isnan(lo) || lo == std::numeric_limits<double>::infinity()) {
      throw Error(ErrorCode::MalformedProblem, "bad lower bound on variable " + std::to_string(j));
    }
    if (up && (!std::isfinite(*up) || *up < lo)) {
      throw Error(ErrorCode::MalformedProblem, "bad upper bound on variable " + std::to_string(j));
    }
  }
}

double validate(const LpProblem& problem, std::span<const double> point) {
  problem.check_well_formed();
  if (point.size() != problem.num_variables()) {
    throw Error(ErrorCode::MalformedProblem, "point width does not match problem");
  }
  auto activity = [&](const std::vector<double>& coeffs) {
    double s = 0.0;
    for (std::size_t j = 0; j < coeffs.size(); ++j) s += coeffs[j] * point[j];
    return s;
  };
  double worst = 0.0;
  for (const auto& r : problem.equalities) worst = std::max(worst, std::abs(activity(r.coeffs) - r.rhs));
  for (const auto& r : problem.inequalities) {
    const double lhs = activity(r.coeffs);
    const double excess = r.sense == RowSense::LessEqual ? lhs - r.rhs : r.rhs - lhs;
    worst = std::max(worst, excess);
  }
  for (std::size_t j = 0; j < point.size(); ++j) {
    worst = std::max(worst, problem.lower(j) - point[j]);
    if (const auto up = problem.upper(j)) worst = std::max(worst, point[j] - *up);
  }
  return worst;
}

void dump(const LpProblem& problem, std::ostream& out) {
  out << (problem.sense == Objective::Maximize ? "max" : "min");
  for (double c : problem.objective) out << ' ' << format_double(c);
  out << '\n';
  auto row = [&](const std::vector<double>& coeffs, const char* sense, double rhs) {
    for (double a : coeffs) out << format_double(a) << ' ';
    out << sense << ' ' << format_double(rhs) << '\n';
  };
  for (const auto& r : problem.equalities) row(r.coeffs, "=", r.rhs);
  for (const auto& r : problem.inequalities) {
    row(r.coeffs, r.sense == RowSense::LessEqual ? "<=" : ">=", r.rhs);
  }
  if (!problem.lower_bounds.empty() || !problem.upper_bounds.empty()) {
    out << "bounds";
    for (std::size_t j = 0; j < problem.num_variables(); ++j) {
      const auto up = problem.upper(j);
      out << ' ' << format_double(problem.lower(j)) << ' '
          << (up ? format_double(*up) : std::string("inf"));
    }
    out << '\n';
  }
}

LpProblem read_dump(std::istream& in) {
  LpProblem p;
  std::string line;
  bool have_objective = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;) tokens.push_back(t);
    if (tokens.empty()) continue;
    if (!have_objective) {
      if (tokens[0] != "max" && tokens[0] != "min") {
        throw Error(ErrorCode::MalformedProblem, "dump must start with max/min");
      }
      p.sense = tokens[0] == "max" ? Objective::Maximize : Objective::Minimize;
      for (std::size_t k = 1; k < tokens.size(); ++k) p.objective.push_back(parse_double(tokens[k]));
      have_objective = true;
      continue;
    }
    if (tokens[0] == "bounds") {
      if (tokens.size() != 1 + 2 * p.num_variables()) {
        throw Error(ErrorCode::MalformedProblem, "bounds line has wrong width");
      }
      for (std::size_t j = 0; j < p.num_variables(); ++j) {
        p.lower_bounds.push_back(parse_double(tokens[1 + 2 * j]));
        const double up = parse_double(tokens[2 + 2 * j]);
        p.upper_bounds.push_back(std::isinf(up) ? std::nullopt : std::optional<double>(up));
      }
      continue;
    }
    if (tokens.size() < 2) throw Error(ErrorCode::MalformedProblem, "short constraint line");
    const std::string& sense = tokens[tokens.size() - 2];
    const double rhs = parse_double(tokens.back());
    std::vector<double> coeffs;
    for (std::size_t k = 0; k + 2 < tokens.size(); ++k) coeffs.push_back(parse_double(tokens[k]));
    if (sense == "=") {
      p.equalities.push_back({std::move(coeffs), rhs});
    } else if (sense == "<=" || sense == ">=") {
      p.inequalities.push_back(
          {std::move(coeffs), rhs, sense == "<=" ? RowSense::LessEqual : RowSense::GreaterEqual});
    } else {
      throw Error(ErrorCode::MalformedProblem, "unknown sense '" + sense + "'");
    }
  }
  if (!have_objective) throw Error(ErrorCode::MalformedProblem, "empty dump");
  p.check_well_formed();
  return p;
}

}  // namespace cmdplab::lp
