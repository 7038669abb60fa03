#pragma once

// Dense two-phase simplex for the small LPs that show up in polytope
// manipulation, QP phase-one and lexicographic dual selection.

#include "lmpspike/grid.hpp"

namespace lmpspike {

struct LpProblem {
  Vector c;  // minimize c^T x
  Matrix a_ub;
  Vector b_ub;  // a_ub x <= b_ub
  Matrix a_eq;
  Vector b_eq;  // a_eq x == b_eq
  // Variable bounds; empty means free. Entries may be +-infinity.
  Vector lower;
  Vector upper;

  explicit LpProblem(Eigen::Index num_vars = 0);
  Eigen::Index num_vars() const { return c.size(); }
  void add_le(const Vector& row, double rhs);
  void add_eq(const Vector& row, double rhs);
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Vector x;
  double objective = 0.0;
};

LpResult solve_lp(const LpProblem& problem);

const char* to_string(LpStatus status);

}  // namespace lmpspike
