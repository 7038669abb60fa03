#pragma once

// Parametric DC-OPF in standard multiparametric QP form:
//   min 0.5 g'Hg + h'g  s.t.  A g <= b + E theta
// Row layout (0-based): 0 balance+, 1 balance-, [2, 2+m) line upper,
// [2+m, 2+2m) line lower, [2+2m, 2+2m+ng) generator upper,
// [2+2m+ng, 2+2m+2ng) generator lower.

#include "lmpspike/grid.hpp"

#include <string>
#include <vector>

namespace lmpspike {

enum class RowKind { BalancePlus, BalanceMinus, LineUpper, LineLower, GenUpper, GenLower };

struct RowLabel {
  RowKind kind;
  int index;  // line or generator index (0-based); 0 for balance rows
};

std::string to_string(const RowLabel& label);

struct MpqpProblem {
  Matrix hessian;  // ng x ng, diagonal
  Vector linear;   // ng
  Matrix a;        // J x ng
  Vector b;        // J
  Matrix e;        // J x ntheta
  std::vector<RowLabel> rows;

  int num_buses = 0;
  int num_lines = 0;
  int num_generators = 0;
  int num_renewables = 0;
  Matrix ptdf;  // m x n
  Vector demand;
  std::vector<int> generator_buses;  // bus id per generator
  std::vector<int> renewable_buses;  // bus id per parameter

  Eigen::Index num_rows() const { return a.rows(); }
  int line_upper_row(int l) const { return 2 + l; }
  int line_lower_row(int l) const { return 2 + num_lines + l; }
  int gen_upper_row(int k) const { return 2 + 2 * num_lines + k; }
  int gen_lower_row(int k) const { return 2 + 2 * num_lines + num_generators + k; }
  Vector rhs(const Vector& theta) const { return b + e * theta; }
  // Line flows f = PTDF (g_ext + theta_ext - d).
  Vector flows(const Vector& g, const Vector& theta) const;
};

MpqpProblem assemble_mpqp(const GridCase& grid);

struct OpfSolution {
  Vector theta;
  Vector g_star;
  double objective = 0.0;
  double lambda_energy = 0.0;
  Vector mu;  // mu_minus - mu_plus per line
  Vector mu_minus;
  Vector mu_plus;
  Vector tau_minus;
  Vector tau_plus;
  Vector flows;
  // One multiplier per MPQP row with H g + h + A' duals = 0. Entry 0 is the
  // free multiplier of the balance equality, entry 1 is always zero.
  Vector duals;
  double kkt_residual = 0.0;
  bool lexicographic_duals = false;  // duals chosen by the degenerate tie-break
};

struct OptimalPartition {
  std::vector<int> binding;    // sorted; contains row 0, never row 1
  std::vector<int> congested;  // line rows
  std::vector<int> saturated;  // generator rows

  bool operator==(const OptimalPartition& o) const { return binding == o.binding; }
  bool operator<(const OptimalPartition& o) const { return binding < o.binding; }
  std::string key() const;
};

OptimalPartition make_partition(const MpqpProblem& problem, std::vector<int> binding);

struct LmpVector {
  Vector values;
  double energy_component = 0.0;
  Vector congestion_component;
};

// Throws Error{Infeasible} when theta is outside the feasible parameter set.
OpfSolution solve_opf(const MpqpProblem& problem, const Vector& theta);

LmpVector compute_lmp(const OpfSolution& solution, const Matrix& ptdf);

// Row-relative binding tolerance 1e-7 (1 + |b_i|).
double activity_tolerance(const MpqpProblem& problem, Eigen::Index row, double rel = 1e-7);
OptimalPartition optimal_partition(const OpfSolution& solution, const MpqpProblem& problem, double rel_tol = 1e-7);

// Counting form of the constraint qualification: 1 + |B_sat| + |B_cong| <= ng.
bool licq_check(const OptimalPartition& partition, int num_generators);

}  // namespace lmpspike
