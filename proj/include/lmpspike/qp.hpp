#pragma once

// Primal active-set solver for small strictly convex QPs:
//   min 0.5 x'Hx + h'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.
// Multipliers follow H x + h + A_eq' nu + A_in' y = 0 with y >= 0.

#include "lmpspike/grid.hpp"

#include <vector>

namespace lmpspike {

struct QpProblem {
  Matrix hessian;
  Vector linear;
  Matrix a_eq;
  Vector b_eq;
  Matrix a_in;
  Vector b_in;
};

enum class QpStatus { Optimal, Infeasible };

struct QpResult {
  QpStatus status = QpStatus::Infeasible;
  Vector x;
  Vector eq_multipliers;
  Vector in_multipliers;
  std::vector<int> working_set;  // indices into a_in
  int iterations = 0;
};

struct QpOptions {
  double feasibility_tol = 1e-9;  // relative to 1 + |b|_inf, phase-one acceptance
  int max_iterations = 0;         // 0: automatic cap
};

QpResult solve_qp(const QpProblem& problem, const QpOptions& options = {});

}  // namespace lmpspike
