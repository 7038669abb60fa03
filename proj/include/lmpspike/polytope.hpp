#pragma once

// H-representation polytopes {x : G x <= w} and the LP-based operations the
// region machinery needs.

#include "lmpspike/grid.hpp"

#include <optional>
#include <vector>

namespace lmpspike {

struct Polytope {
  Matrix g;
  Vector w;
  // Origin tag per row, carried through redundancy removal. Meaning is owned
  // by the producer (e.g. which constraint of the QP generated the row).
  std::vector<int> tags;

  Polytope() = default;
  Polytope(Matrix g_, Vector w_);
  Polytope(Matrix g_, Vector w_, std::vector<int> tags_);

  Eigen::Index dim() const { return g.cols(); }
  Eigen::Index num_rows() const { return g.rows(); }
  bool contains(const Vector& x, double tol = 1e-9) const;
  // Smallest slack w - Gx over rows (negative when x is outside).
  double min_slack(const Vector& x) const;
  void append(const Vector& row, double rhs, int tag = -1);
};

Polytope make_box(const Vector& lower, const Vector& upper);
Polytope intersect(const Polytope& a, const Polytope& b);
// Scales each row to unit Euclidean norm; rows with zero norm are kept as-is.
Polytope normalized(const Polytope& p);

struct ChebyshevBall {
  Vector center;
  double radius = 0.0;
};

// Largest inscribed ball (radius capped at `radius_cap`); nullopt when empty.
std::optional<ChebyshevBall> chebyshev_ball(const Polytope& p, double radius_cap = 1e6);

// Ball inscribed in facet `row` (within the hyperplane G_row x = w_row).
std::optional<ChebyshevBall> facet_ball(const Polytope& p, Eigen::Index row, double radius_cap = 1e6);

// Maximum of dir'x over the polytope; nullopt if empty, +inf if unbounded.
std::optional<double> maximize(const Polytope& p, const Vector& dir, Vector* argmax = nullptr);

// Irredundant representation. Rows are normalized first; zero rows are
// dropped (or the result is flagged empty by an infeasible zero row).
Polytope remove_redundant(const Polytope& p, double tol = 1e-9);

bool is_empty(const Polytope& p);
bool interiors_intersect(const Polytope& a, const Polytope& b, double radius_tol);

// Eliminates variable `var` by Fourier-Motzkin; the result lives in one
// dimension less and is passed through remove_redundant.
Polytope fourier_motzkin(const Polytope& p, Eigen::Index var);

}  // namespace lmpspike
