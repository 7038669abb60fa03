#pragma once

// Critical-region decomposition of the parametric OPF over renewable
// injections, with per-region affine LMP and dispatch maps.

#include "lmpspike/opf.hpp"
#include "lmpspike/polytope.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lmpspike {

struct AffineMap {
  Matrix linear;
  Vector offset;

  Vector operator()(const Vector& theta) const { return linear * theta + offset; }
};

struct RegionMaps {
  AffineMap dispatch;  // theta -> g*
  AffineMap duals;     // theta -> multipliers of the binding rows, in binding order
  AffineMap lmp;       // theta -> LMP vector
};

// Solves the equality-constrained KKT system of `active_set` parametrically.
// Throws Error{Numerical} when the binding rows are linearly dependent.
RegionMaps region_maps(const OptimalPartition& active_set, const MpqpProblem& problem);
AffineMap region_lmp_map(const OptimalPartition& active_set, const MpqpProblem& problem, const Matrix& ptdf);

// Row tags of a region polytope: i for the primal row of MPQP row i,
// num_rows + i for the sign constraint on the multiplier of binding row i,
// -1 for rows inherited from the parameter set.
struct CriticalRegion {
  int id = 0;
  OptimalPartition active_set;
  Polytope polytope;
  RegionMaps maps;
  ChebyshevBall chebyshev;
  bool licq = true;
};

struct EnumerationDiagnostics {
  int facet_expansions = 0;
  int degenerate_regions = 0;    // lower-dimensional candidates discarded
  int unresolved_facets = 0;     // facets whose neighbour was not identified
  int coverage_fill_regions = 0; // regions found only by the sampling pass
  int licq_violations = 0;       // regions failing the counting condition
};

struct RegionDecomposition {
  std::vector<CriticalRegion> regions;
  Polytope theta_space;
  Vector box_lower;
  Vector box_upper;
  double coverage_volume_ratio = 0.0;
  EnumerationDiagnostics diagnostics;
};

struct EnumerationOptions {
  int max_facet_expansions = 1000000;
  int coverage_samples = 4000;
  long long coverage_seed = 7;
};

// {theta in box : exists g with A g <= b + E theta}, irredundant.
// Throws Error{Infeasible} when empty.
Polytope feasible_set(const MpqpProblem& problem, const Vector& box_lower, const Vector& box_upper);

// Builds the region of `active_set`; nullopt when its polytope is not
// full-dimensional or the KKT system is singular.
std::optional<CriticalRegion> build_region(const MpqpProblem& problem, const OptimalPartition& active_set,
                                           const Polytope& theta_space);

RegionDecomposition enumerate_regions(const MpqpProblem& problem, const Polytope& theta_space,
                                      const EnumerationOptions& options = {});

struct Location {
  int region_id = -1;
  Vector lmp;
  bool on_face = false;  // more than one candidate region contained theta
};

// Region containing theta. On shared faces the candidate with the
// lexicographically smallest LMP vector wins. nullopt when no region contains
// theta (outside the parameter set, or an uncovered sliver).
std::optional<Location> locate_region(const RegionDecomposition& dec, const Vector& theta, double tol = 1e-9);

// Fraction of uniform samples of theta_space that fall in some region.
double sampled_coverage(const RegionDecomposition& dec, int samples, unsigned long long seed);

std::string decomposition_to_json(const RegionDecomposition& dec, const MpqpProblem& problem);
// Rebuilds a decomposition from its export; the maps are read as stored.
RegionDecomposition decomposition_from_json(const std::string& text, const MpqpProblem& problem);

}  // namespace lmpspike
