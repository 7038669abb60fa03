#include "lmpspike/polytope.hpp"

#include "lmpspike/error.hpp"
#include "lmpspike/lp.hpp"

#include <cmath>
#include <limits>

namespace lmpspike {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Polytope::Polytope(Matrix g_, Vector w_) : g(std::move(g_)), w(std::move(w_)), tags(g.rows(), -1) {}

Polytope::Polytope(Matrix g_, Vector w_, std::vector<int> tags_)
    : g(std::move(g_)), w(std::move(w_)), tags(std::move(tags_)) {
  if (static_cast<Eigen::Index>(tags.size()) != g.rows()) tags.assign(g.rows(), -1);
}

bool Polytope::contains(const Vector& x, double tol) const {
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    if (g.row(i).dot(x) > w(i) + tol * (1.0 + std::abs(w(i)))) return false;
  }
  return true;
}

double Polytope::min_slack(const Vector& x) const {
  double s = kInf;
  for (Eigen::Index i = 0; i < g.rows(); ++i) s = std::min(s, w(i) - g.row(i).dot(x));
  return s;
}

void Polytope::append(const Vector& row, double rhs, int tag) {
  const Eigen::Index d = row.size();
  if (g.rows() == 0 && g.cols() != d) g.resize(0, d);
  g.conservativeResize(g.rows() + 1, d);
  g.row(g.rows() - 1) = row.transpose();
  w.conservativeResize(w.size() + 1);
  w(w.size() - 1) = rhs;
  tags.push_back(tag);
}

Polytope make_box(const Vector& lower, const Vector& upper) {
  const Eigen::Index d = lower.size();
  Polytope p(Matrix::Zero(0, d), Vector(0));
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::isfinite(upper(i))) p.append(Vector::Unit(d, i), upper(i));
    if (std::isfinite(lower(i))) p.append(-Vector::Unit(d, i), -lower(i));
  }
  return p;
}

Polytope intersect(const Polytope& a, const Polytope& b) {
  Matrix g(a.num_rows() + b.num_rows(), a.dim());
  g << a.g, b.g;
  Vector w(a.w.size() + b.w.size());
  w << a.w, b.w;
  std::vector<int> tags = a.tags;
  tags.insert(tags.end(), b.tags.begin(), b.tags.end());
  return Polytope(std::move(g), std::move(w), std::move(tags));
}

Polytope normalized(const Polytope& p) {
  Polytope out = p;
  for (Eigen::Index i = 0; i < p.num_rows(); ++i) {
    const double nrm = p.g.row(i).norm();
    if (nrm > 0.0) {
      out.g.row(i) /= nrm;
      out.w(i) /= nrm;
    }
  }
  return out;
}

namespace {

// max r s.t. g_i x + r*coef_i <= w_i (rows other than `skip`), optional equalities.
std::optional<ChebyshevBall> ball_lp(const Polytope& p, const Vector& coef, const Matrix* eq_rows,
                                     const Vector* eq_rhs, std::optional<Eigen::Index> skip, double cap) {
  const Eigen::Index d = p.dim();
  LpProblem lp(d + 1);
  lp.c(d) = -1.0;
  lp.lower = Vector::Constant(d + 1, -kInf);
  lp.upper = Vector::Constant(d + 1, kInf);
  lp.lower(d) = 0.0;
  lp.upper(d) = cap;
  const Eigen::Index rows = p.num_rows() - (skip ? 1 : 0);
  lp.a_ub = Matrix::Zero(rows, d + 1);
  lp.b_ub = Vector::Zero(rows);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < p.num_rows(); ++i) {
    if (skip && *skip == i) continue;
    lp.a_ub.row(r).head(d) = p.g.row(i);
    lp.a_ub(r, d) = coef(i);
    lp.b_ub(r) = p.w(i);
    ++r;
  }
  if (eq_rows) {
    lp.a_eq = Matrix::Zero(eq_rows->rows(), d + 1);
    lp.a_eq.leftCols(d) = *eq_rows;
    lp.b_eq = *eq_rhs;
  }
  const LpResult res = solve_lp(lp);
  if (res.status == LpStatus::Infeasible) return std::nullopt;
  if (res.status != LpStatus::Optimal) fail(ErrorKind::Numerical, std::string("Chebyshev LP: ") + to_string(res.status));
  return ChebyshevBall{res.x.head(d), res.x(d)};
}

}  // namespace

std::optional<ChebyshevBall> chebyshev_ball(const Polytope& p, double radius_cap) {
  return ball_lp(p, p.g.rowwise().norm(), nullptr, nullptr, std::nullopt, radius_cap);
}

std::optional<ChebyshevBall> facet_ball(const Polytope& p, Eigen::Index row, double radius_cap) {
  // Inside the facet hyperplane, distance to another row's boundary is measured
  // with the component of its normal tangential to the hyperplane.
  const Vector n = p.g.row(row).transpose();
  const double nn = n.squaredNorm();
  Vector coef(p.num_rows());
  for (Eigen::Index i = 0; i < p.num_rows(); ++i) {
    const Vector gi = p.g.row(i).transpose();
    const Vector tangential = gi - (nn > 0.0 ? gi.dot(n) / nn : 0.0) * n;
    coef(i) = tangential.norm();
  }
  const Matrix eq = n.transpose();
  const Vector rhs = Vector::Constant(1, p.w(row));
  return ball_lp(p, coef, &eq, &rhs, row, radius_cap);
}

std::optional<double> maximize(const Polytope& p, const Vector& dir, Vector* argmax) {
  const Eigen::Index d = p.dim();
  LpProblem lp(d);
  lp.c = -dir;
  lp.a_ub = p.g;
  lp.b_ub = p.w;
  const LpResult res = solve_lp(lp);
  if (res.status == LpStatus::Infeasible) return std::nullopt;
  if (res.status == LpStatus::Unbounded) return kInf;
  if (res.status != LpStatus::Optimal) fail(ErrorKind::Numerical, "maximize LP hit iteration limit");
  if (argmax) *argmax = res.x;
  return dir.dot(res.x);
}

bool is_empty(const Polytope& p) { return !chebyshev_ball(p, 1.0).has_value(); }

Polytope remove_redundant(const Polytope& p_in, double tol) {
  Polytope p = normalized(p_in);
  const Eigen::Index d = p.dim();
  std::vector<bool> keep(p.num_rows(), true);
  for (Eigen::Index i = 0; i < p.num_rows(); ++i) {
    if (p.g.row(i).norm() == 0.0) {
      keep[i] = false;
      if (p.w(i) < -tol) {
        // Infeasible constant row: represent emptiness by 0 <= -1.
        Polytope empty(Matrix::Zero(1, d), Vector::Constant(1, -1.0));
        return empty;
      }
    }
  }
  for (Eigen::Index i = 0; i < p.num_rows(); ++i) {
    if (!keep[i]) continue;
    LpProblem lp(d);
    lp.c = -p.g.row(i).transpose();
    Eigen::Index cnt = 0;
    for (Eigen::Index k = 0; k < p.num_rows(); ++k)
      if (keep[k] && k != i) ++cnt;
    lp.a_ub.resize(cnt + 1, d);
    lp.b_ub.resize(cnt + 1);
    Eigen::Index r = 0;
    for (Eigen::Index k = 0; k < p.num_rows(); ++k) {
      if (!keep[k] || k == i) continue;
      lp.a_ub.row(r) = p.g.row(k);
      lp.b_ub(r) = p.w(k);
      ++r;
    }
    lp.a_ub.row(r) = p.g.row(i);
    lp.b_ub(r) = p.w(i) + 1.0;
    const LpResult res = solve_lp(lp);
    if (res.status == LpStatus::Infeasible) {
      // The remaining rows are already empty; the row is irrelevant.
      Polytope empty(Matrix::Zero(1, d), Vector::Constant(1, -1.0));
      return empty;
    }
    if (res.status != LpStatus::Optimal) fail(ErrorKind::Numerical, "redundancy LP failed");
    const double best = p.g.row(i).dot(res.x);
    if (best <= p.w(i) + tol) keep[i] = false;
  }
  Eigen::Index cnt = 0;
  for (bool k : keep) cnt += k;
  Matrix g(cnt, d);
  Vector w(cnt);
  std::vector<int> tags;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < p.num_rows(); ++i) {
    if (!keep[i]) continue;
    g.row(r) = p.g.row(i);
    w(r) = p.w(i);
    tags.push_back(p.tags[i]);
    ++r;
  }
  return Polytope(std::move(g), std::move(w), std::move(tags));
}

bool interiors_intersect(const Polytope& a, const Polytope& b, double radius_tol) {
  const auto ball = chebyshev_ball(intersect(a, b), 1.0);
  return ball && ball->radius > radius_tol;
}

Polytope fourier_motzkin(const Polytope& p, Eigen::Index var) {
  const Eigen::Index d = p.dim();
  std::vector<Eigen::Index> pos, neg, zero;
  for (Eigen::Index i = 0; i < p.num_rows(); ++i) {
    const double a = p.g(i, var);
    if (a > 1e-12) pos.push_back(i);
    else if (a < -1e-12) neg.push_back(i);
    else zero.push_back(i);
  }
  auto drop_var = [&](const Vector& row) {
    Vector out(d - 1);
    out << row.head(var), row.tail(d - var - 1);
    return out;
  };
  Polytope out(Matrix::Zero(0, d - 1), Vector(0));
  for (Eigen::Index i : zero) out.append(drop_var(p.g.row(i).transpose()), p.w(i));
  for (Eigen::Index i : pos) {
    for (Eigen::Index k : neg) {
      const double ai = p.g(i, var);
      const double ak = -p.g(k, var);
      const Vector row = ak * p.g.row(i).transpose() + ai * p.g.row(k).transpose();
      out.append(drop_var(row), ak * p.w(i) + ai * p.w(k));
    }
  }
  return remove_redundant(out);
}

}  // namespace lmpspike
