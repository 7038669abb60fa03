#include "lmpspike/opf.hpp"

#include "lmpspike/error.hpp"
#include "lmpspike/lp.hpp"
#include "lmpspike/qp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lmpspike {

std::string to_string(const RowLabel& label) {
  switch (label.kind) {
    case RowKind::BalancePlus: return "balance+";
    case RowKind::BalanceMinus: return "balance-";
    case RowKind::LineUpper: return "line-upper " + std::to_string(label.index + 1);
    case RowKind::LineLower: return "line-lower " + std::to_string(label.index + 1);
    case RowKind::GenUpper: return "gen-upper " + std::to_string(label.index + 1);
    case RowKind::GenLower: return "gen-lower " + std::to_string(label.index + 1);
  }
  return "?";
}

Vector MpqpProblem::flows(const Vector& g, const Vector& theta) const {
  Vector inj = -demand;
  for (int k = 0; k < num_generators; ++k) inj(generator_buses[k] - 1) += g(k);
  for (int j = 0; j < num_renewables; ++j) inj(renewable_buses[j] - 1) += theta(j);
  return ptdf * inj;
}

MpqpProblem assemble_mpqp(const GridCase& grid) {
  validate(grid);
  if (!grid.has_line_limits()) fail(ErrorKind::Validation, "case has lines without flow limits");
  const int n = grid.num_buses;
  const int m = grid.num_lines();
  const int ng = grid.num_generators();
  const int nt = grid.num_renewables();
  for (int l = 0; l < m; ++l) {
    if (!(*grid.lines[l].f_min < *grid.lines[l].f_max))
      fail(ErrorKind::Validation, "line " + std::to_string(l + 1) + " has an empty flow interval");
  }
  for (int k = 0; k < ng; ++k) {
    if (!(grid.generators[k].g_min < grid.generators[k].g_max))
      fail(ErrorKind::Validation, "generator " + std::to_string(k + 1) + " has a degenerate output range");
  }

  MpqpProblem p;
  p.num_buses = n;
  p.num_lines = m;
  p.num_generators = ng;
  p.num_renewables = nt;
  p.ptdf = build_ptdf(grid).values;
  p.demand = grid.demand;
  p.renewable_buses = grid.renewable_buses;
  for (const Generator& gen : grid.generators) p.generator_buses.push_back(gen.bus);

  p.hessian = Matrix::Zero(ng, ng);
  p.linear.resize(ng);
  for (int k = 0; k < ng; ++k) {
    p.hessian(k, k) = grid.generators[k].cost_quadratic;
    p.linear(k) = grid.generators[k].cost_linear;
  }
  Matrix ptdf_g(m, ng), ptdf_t(m, nt);
  for (int k = 0; k < ng; ++k) ptdf_g.col(k) = p.ptdf.col(p.generator_buses[k] - 1);
  for (int j = 0; j < nt; ++j) ptdf_t.col(j) = p.ptdf.col(p.renewable_buses[j] - 1);
  const Vector ptdf_d = p.ptdf * grid.demand;
  Vector fmax(m), fmin(m);
  for (int l = 0; l < m; ++l) {
    fmax(l) = *grid.lines[l].f_max;
    fmin(l) = *grid.lines[l].f_min;
  }
  const double total_demand = grid.demand.sum();

  const int rows = 2 + 2 * m + 2 * ng;
  p.a = Matrix::Zero(rows, ng);
  p.b = Vector::Zero(rows);
  p.e = Matrix::Zero(rows, nt);
  p.a.row(0).setOnes();
  p.a.row(1).setConstant(-1.0);
  p.b(0) = total_demand;
  p.b(1) = -total_demand;
  p.e.row(0).setConstant(-1.0);
  p.e.row(1).setOnes();
  p.a.middleRows(2, m) = ptdf_g;
  p.a.middleRows(2 + m, m) = -ptdf_g;
  p.b.segment(2, m) = ptdf_d + fmax;
  p.b.segment(2 + m, m) = -ptdf_d - fmin;
  p.e.middleRows(2, m) = -ptdf_t;
  p.e.middleRows(2 + m, m) = ptdf_t;
  p.a.middleRows(2 + 2 * m, ng) = Matrix::Identity(ng, ng);
  p.a.middleRows(2 + 2 * m + ng, ng) = -Matrix::Identity(ng, ng);
  for (int k = 0; k < ng; ++k) {
    p.b(2 + 2 * m + k) = grid.generators[k].g_max;
    p.b(2 + 2 * m + ng + k) = -grid.generators[k].g_min;
  }

  p.rows.push_back({RowKind::BalancePlus, 0});
  p.rows.push_back({RowKind::BalanceMinus, 0});
  for (int l = 0; l < m; ++l) p.rows.push_back({RowKind::LineUpper, l});
  for (int l = 0; l < m; ++l) p.rows.push_back({RowKind::LineLower, l});
  for (int k = 0; k < ng; ++k) p.rows.push_back({RowKind::GenUpper, k});
  for (int k = 0; k < ng; ++k) p.rows.push_back({RowKind::GenLower, k});
  return p;
}

std::string OptimalPartition::key() const {
  std::ostringstream os;
  for (size_t i = 0; i < binding.size(); ++i) os << (i ? "," : "") << binding[i];
  return os.str();
}

OptimalPartition make_partition(const MpqpProblem& problem, std::vector<int> binding) {
  OptimalPartition part;
  binding.erase(std::remove(binding.begin(), binding.end(), 1), binding.end());
  if (std::find(binding.begin(), binding.end(), 0) == binding.end()) binding.push_back(0);
  std::sort(binding.begin(), binding.end());
  binding.erase(std::unique(binding.begin(), binding.end()), binding.end());
  for (int r : binding) {
    if (r < 0 || r >= problem.num_rows()) fail(ErrorKind::Validation, "partition row out of range");
    const RowKind k = problem.rows[r].kind;
    if (k == RowKind::LineUpper || k == RowKind::LineLower) part.congested.push_back(r);
    if (k == RowKind::GenUpper || k == RowKind::GenLower) part.saturated.push_back(r);
  }
  part.binding = std::move(binding);
  return part;
}

double activity_tolerance(const MpqpProblem& problem, Eigen::Index row, double rel) {
  return rel * (1.0 + std::abs(problem.b(row)));
}

namespace {

Matrix select_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(rows.size(), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

// Solves H g + h + A_R' y = 0, A_R g = rhs_R exactly. Returns false when A_R
// is rank deficient.
bool equality_kkt(const MpqpProblem& p, const std::vector<int>& rows, const Vector& rhs, Vector& g, Vector& y) {
  const Matrix ar = select_rows(p.a, rows);
  Eigen::FullPivLU<Matrix> rank_check(ar);
  rank_check.setThreshold(1e-10);
  if (rank_check.rank() < static_cast<Eigen::Index>(rows.size())) return false;
  const Vector hinv = p.hessian.diagonal().cwiseInverse();
  const Matrix hinv_at = hinv.asDiagonal() * ar.transpose();
  const Matrix schur = ar * hinv_at;
  Vector rhs_r(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) rhs_r(i) = rhs(rows[i]);
  y = -schur.ldlt().solve(rhs_r + ar * hinv.cwiseProduct(p.linear));
  g = -hinv.cwiseProduct(p.linear + ar.transpose() * y);
  return true;
}

// Lexicographically smallest multiplier vector over the binding inequality rows
// (in row order), then the balance multiplier follows from stationarity.
Vector lexicographic_duals(const MpqpProblem& p, const std::vector<int>& binding, const Vector& g) {
  const Eigen::Index ng = p.num_generators;
  std::vector<int> ineq;
  for (int r : binding)
    if (r >= 2) ineq.push_back(r);
  const Eigen::Index nv = 1 + static_cast<Eigen::Index>(ineq.size());
  const Vector target = -(p.hessian * g + p.linear);

  LpProblem lp(nv);
  lp.lower = Vector::Zero(nv);
  lp.upper = Vector::Constant(nv, std::numeric_limits<double>::infinity());
  lp.lower(0) = -std::numeric_limits<double>::infinity();
  lp.a_eq = Matrix::Zero(ng, nv);
  lp.a_eq.col(0) = p.a.row(0).transpose();
  for (size_t k = 0; k < ineq.size(); ++k) lp.a_eq.col(1 + k) = p.a.row(ineq[k]).transpose();
  lp.b_eq = target;

  const double scale = 1.0 + target.cwiseAbs().maxCoeff();
  std::vector<double> fixed;
  for (size_t k = 0; k < ineq.size(); ++k) {
    LpProblem step = lp;
    step.c = Vector::Zero(nv);
    step.c(1 + k) = 1.0;
    for (size_t j = 0; j < fixed.size(); ++j) step.upper(1 + j) = fixed[j] + 1e-9 * scale;
    const LpResult r = solve_lp(step);
    if (r.status != LpStatus::Optimal) fail(ErrorKind::Numerical, "lexicographic dual LP failed");
    fixed.push_back(std::max(r.x(1 + k), 0.0));
  }

  // Re-solve exactly on the support of the lexicographic solution.
  std::vector<int> support{0};
  for (size_t k = 0; k < ineq.size(); ++k)
    if (fixed[k] > 1e-9 * scale) support.push_back(ineq[k]);
  const Matrix as = select_rows(p.a, support).transpose();
  const Vector ys = as.colPivHouseholderQr().solve(target);
  Vector duals = Vector::Zero(p.num_rows());
  for (size_t i = 0; i < support.size(); ++i) duals(support[i]) = ys(i);
  for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(support.size()); ++i) duals(support[i]) = std::max(duals(support[i]), 0.0);
  return duals;
}

}  // namespace

OpfSolution solve_opf(const MpqpProblem& p, const Vector& theta) {
  if (theta.size() != p.num_renewables) fail(ErrorKind::Validation, "theta has wrong dimension");
  const Eigen::Index rows = p.num_rows();
  const Vector rhs = p.rhs(theta);

  QpProblem qp;
  qp.hessian = p.hessian;
  qp.linear = p.linear;
  qp.a_eq = p.a.topRows(1);
  qp.b_eq = rhs.head(1);
  qp.a_in = p.a.bottomRows(rows - 2);
  qp.b_in = rhs.tail(rows - 2);
  const QpResult qr = solve_qp(qp);
  if (qr.status != QpStatus::Optimal) fail(ErrorKind::Infeasible, "OPF is infeasible for the given renewable injection");

  Vector g = qr.x;
  std::vector<int> binding{0};
  for (Eigen::Index i = 2; i < rows; ++i) {
    if (std::abs(p.a.row(i).dot(g) - rhs(i)) <= activity_tolerance(p, i)) binding.push_back(static_cast<int>(i));
  }

  OpfSolution s;
  s.theta = theta;
  Vector y_r;
  Vector g_exact;
  bool done = false;
  if (equality_kkt(p, binding, rhs, g_exact, y_r)) {
    const double scale = 1.0 + (p.hessian * g_exact + p.linear).cwiseAbs().maxCoeff();
    bool signs_ok = true;
    for (size_t i = 1; i < binding.size(); ++i) signs_ok = signs_ok && y_r(i) >= -1e-7 * scale;
    if (signs_ok) {
      g = g_exact;
      s.duals = Vector::Zero(rows);
      for (size_t i = 0; i < binding.size(); ++i) s.duals(binding[i]) = i == 0 ? y_r(i) : std::max(y_r(i), 0.0);
      done = true;
    }
  }
  if (!done) {
    s.duals = lexicographic_duals(p, binding, g);
    s.lexicographic_duals = true;
  }

  const int m = p.num_lines;
  const int ng = p.num_generators;
  s.g_star = g;
  s.objective = 0.5 * g.dot(p.hessian * g) + p.linear.dot(g);
  s.lambda_energy = -s.duals(0);
  s.mu_plus = s.duals.segment(2, m);
  s.mu_minus = s.duals.segment(2 + m, m);
  s.mu = s.mu_minus - s.mu_plus;
  s.tau_plus = s.duals.segment(2 + 2 * m, ng);
  s.tau_minus = s.duals.segment(2 + 2 * m + ng, ng);
  s.flows = p.flows(g, theta);
  const Vector stationarity = p.hessian * g + p.linear + p.a.transpose() * s.duals;
  const Vector violation = (p.a * g - rhs).cwiseMax(0.0);
  s.kkt_residual = std::max(stationarity.cwiseAbs().maxCoeff(), violation.tail(rows - 2).maxCoeff());
  s.kkt_residual = std::max(s.kkt_residual, std::abs(p.a.row(0).dot(g) - rhs(0)));
  return s;
}

LmpVector compute_lmp(const OpfSolution& s, const Matrix& ptdf) {
  LmpVector out;
  out.energy_component = s.lambda_energy;
  out.congestion_component = ptdf.transpose() * s.mu;
  out.values = Vector::Constant(ptdf.cols(), s.lambda_energy) + out.congestion_component;
  return out;
}

OptimalPartition optimal_partition(const OpfSolution& s, const MpqpProblem& p, double rel_tol) {
  const Vector rhs = p.rhs(s.theta);
  std::vector<int> binding{0};
  for (Eigen::Index i = 2; i < p.num_rows(); ++i) {
    if (std::abs(p.a.row(i).dot(s.g_star) - rhs(i)) <= activity_tolerance(p, i, rel_tol))
      binding.push_back(static_cast<int>(i));
  }
  return make_partition(p, std::move(binding));
}

bool licq_check(const OptimalPartition& partition, int num_generators) {
  return 1 + partition.saturated.size() + partition.congested.size() <= static_cast<size_t>(num_generators);
}

}  // namespace lmpspike
