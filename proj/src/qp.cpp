#include "lmpspike/qp.hpp"

#include "lmpspike/error.hpp"
#include "lmpspike/lp.hpp"

#include <algorithm>
#include <cmath>

namespace lmpspike {

namespace {

// Finds a point satisfying the constraints, minimizing the largest violation.
bool phase_one(const QpProblem& p, double tol, Vector& x) {
  const Eigen::Index n = p.linear.size();
  LpProblem lp(n + 1);
  lp.c(n) = 1.0;
  lp.lower = Vector::Constant(n + 1, -std::numeric_limits<double>::infinity());
  lp.upper = Vector::Constant(n + 1, std::numeric_limits<double>::infinity());
  lp.lower(n) = 0.0;
  lp.a_ub = Matrix::Zero(p.a_in.rows(), n + 1);
  lp.a_ub.leftCols(n) = p.a_in;
  lp.a_ub.col(n).setConstant(-1.0);
  lp.b_ub = p.b_in;
  lp.a_eq = Matrix::Zero(p.a_eq.rows(), n + 1);
  lp.a_eq.leftCols(n) = p.a_eq;
  lp.b_eq = p.b_eq;
  const LpResult r = solve_lp(lp);
  if (r.status == LpStatus::Unbounded || r.status == LpStatus::IterationLimit) {
    fail(ErrorKind::Numerical, std::string("QP phase one failed: ") + to_string(r.status));
  }
  if (r.status != LpStatus::Optimal) return false;
  double scale = 1.0;
  if (p.b_in.size() > 0) scale = std::max(scale, p.b_in.cwiseAbs().maxCoeff());
  if (p.b_eq.size() > 0) scale = std::max(scale, p.b_eq.cwiseAbs().maxCoeff());
  if (r.x(n) > tol * scale) return false;
  x = r.x.head(n);
  return true;
}

bool independent_of(const Matrix& rows, const Vector& candidate) {
  if (rows.rows() == 0) return candidate.norm() > 1e-12;
  Matrix stacked(rows.rows() + 1, rows.cols());
  stacked << rows, candidate.transpose();
  Eigen::FullPivHouseholderQR<Matrix> qr(stacked.transpose());
  qr.setThreshold(1e-10);
  return qr.rank() == stacked.rows();
}

}  // namespace

QpResult solve_qp(const QpProblem& p, const QpOptions& options) {
  const Eigen::Index n = p.linear.size();
  const Eigen::Index n_eq = p.a_eq.rows();
  const Eigen::Index n_in = p.a_in.rows();
  QpResult result;

  Vector x;
  if (!phase_one(p, options.feasibility_tol, x)) {
    result.status = QpStatus::Infeasible;
    return result;
  }

  const Eigen::LLT<Matrix> hchol(p.hessian);
  if (hchol.info() != Eigen::Success) fail(ErrorKind::Numerical, "QP Hessian is not positive definite");

  // Working set: all equality rows plus linearly independent active inequalities.
  std::vector<int> work;
  Matrix work_rows = p.a_eq;
  const double act_tol = 1e-9;
  for (Eigen::Index i = 0; i < n_in && work_rows.rows() < n; ++i) {
    const double slack = p.b_in(i) - p.a_in.row(i).dot(x);
    if (std::abs(slack) <= act_tol * (1.0 + std::abs(p.b_in(i)))) {
      const Vector row = p.a_in.row(i).transpose();
      if (independent_of(work_rows, row)) {
        work.push_back(static_cast<int>(i));
        work_rows.conservativeResize(work_rows.rows() + 1, n);
        work_rows.row(work_rows.rows() - 1) = row.transpose();
      }
    }
  }

  auto build_rows = [&]() {
    Matrix rows(n_eq + static_cast<Eigen::Index>(work.size()), n);
    if (n_eq > 0) rows.topRows(n_eq) = p.a_eq;
    for (size_t k = 0; k < work.size(); ++k) rows.row(n_eq + k) = p.a_in.row(work[k]);
    return rows;
  };

  const int max_iter = options.max_iterations > 0 ? options.max_iterations
                                                  : static_cast<int>(20 * (n + n_in) + 100);
  Vector multipliers;
  for (int iter = 0; iter < max_iter; ++iter) {
    result.iterations = iter + 1;
    const Matrix aw = build_rows();
    const Vector grad = p.hessian * x + p.linear;
    // Null-space step: min 0.5 s'Hs + grad's  s.t. aw s = 0, then aw' lambda = -(grad + H s).
    Vector step = Vector::Zero(n);
    Vector lambda(aw.rows());
    if (aw.rows() == 0) {
      step = -hchol.solve(grad);
    } else {
      const Eigen::HouseholderQR<Matrix> qr(aw.transpose());
      const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
      const Eigen::Index k = aw.rows();
      if (k < n) {
        const Matrix z = q.rightCols(n - k);
        const Matrix reduced = z.transpose() * p.hessian * z;
        step = -z * reduced.llt().solve(z.transpose() * grad);
      }
      const Vector rhs = -(q.leftCols(k).transpose() * (grad + p.hessian * step));
      lambda = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(rhs);
    }

    const double xscale = 1.0 + x.cwiseAbs().maxCoeff();
    if (step.cwiseAbs().maxCoeff() <= 1e-11 * xscale) {
      // Stationary on the working set: check inequality multiplier signs.
      int drop = -1;
      double most_negative = 0.0;
      const double gscale = 1.0 + grad.cwiseAbs().maxCoeff();
      for (size_t k = 0; k < work.size(); ++k) {
        const double l = lambda(n_eq + k);
        if (l < -1e-10 * gscale && l < most_negative) {
          most_negative = l;
          drop = static_cast<int>(k);
        }
      }
      if (drop < 0) {
        multipliers = lambda;
        result.status = QpStatus::Optimal;
        break;
      }
      work.erase(work.begin() + drop);
      continue;
    }

    // Ratio test against inequalities outside the working set.
    double alpha = 1.0;
    int blocking = -1;
    for (Eigen::Index i = 0; i < n_in; ++i) {
      if (std::find(work.begin(), work.end(), static_cast<int>(i)) != work.end()) continue;
      const double ap = p.a_in.row(i).dot(step);
      if (ap <= 1e-10 * p.a_in.row(i).norm() * step.norm()) continue;
      const double slack = std::max(p.b_in(i) - p.a_in.row(i).dot(x), 0.0);
      const double t = slack / ap;
      if (t < alpha) {
        alpha = t;
        blocking = static_cast<int>(i);
      }
    }
    x += alpha * step;
    if (blocking >= 0) {
      if (!independent_of(build_rows(), p.a_in.row(blocking).transpose()))
        fail(ErrorKind::Numerical, "QP working set became linearly dependent");
      work.push_back(blocking);
    }
  }
  if (result.status != QpStatus::Optimal) fail(ErrorKind::Numerical, "QP active-set iteration cap exceeded");

  result.x = x;
  result.eq_multipliers = multipliers.head(n_eq);
  result.in_multipliers = Vector::Zero(n_in);
  for (size_t k = 0; k < work.size(); ++k) result.in_multipliers(work[k]) = std::max(multipliers(n_eq + k), 0.0);
  result.working_set = work;
  std::sort(result.working_set.begin(), result.working_set.end());
  return result;
}

}  // namespace lmpspike
