#include "lmpspike/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace lmpspike {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTol = 1e-11;
constexpr double kCostTol = 1e-10;

// Tableau in row-major dense storage. Column `cols` holds the right-hand side.
class Tableau {
 public:
  Tableau(int rows, int cols) : rows_(rows), cols_(cols), data_((rows + 1) * (cols + 1), 0.0), basis_(rows, -1) {}

  double& at(int r, int c) { return data_[r * (cols_ + 1) + c]; }
  double at(int r, int c) const { return data_[r * (cols_ + 1) + c]; }
  double& rhs(int r) { return at(r, cols_); }
  double& cost(int c) { return at(rows_, c); }
  double cost(int c) const { return at(rows_, c); }
  double& objective() { return at(rows_, cols_); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::vector<int>& basis() { return basis_; }

  void pivot(int pr, int pc) {
    const int width = cols_ + 1;
    double* prow = &data_[pr * width];
    const double inv = 1.0 / prow[pc];
    for (int c = 0; c < width; ++c) prow[c] *= inv;
    prow[pc] = 1.0;
    for (int r = 0; r <= rows_; ++r) {
      if (r == pr) continue;
      double* row = &data_[r * width];
      const double f = row[pc];
      if (f == 0.0) continue;
      for (int c = 0; c < width; ++c) row[c] -= f * prow[c];
      row[pc] = 0.0;
    }
    basis_[pr] = pc;
  }

  // Runs simplex iterations on the current cost row over columns [0, active_cols).
  LpStatus iterate(int active_cols, int max_iter) {
    int stall = 0;
    double last_obj = objective();
    for (int iter = 0; iter < max_iter; ++iter) {
      const bool bland = stall > 50;
      int enter = -1;
      double best = -kCostTol;
      for (int c = 0; c < active_cols; ++c) {
        const double rc = cost(c);
        if (rc < -kCostTol) {
          if (bland) {
            enter = c;
            break;
          }
          if (rc < best) {
            best = rc;
            enter = c;
          }
        }
      }
      if (enter < 0) return LpStatus::Optimal;

      int leave = -1;
      double best_ratio = kInf;
      for (int r = 0; r < rows_; ++r) {
        const double a = at(r, enter);
        if (a > kPivotTol) {
          const double ratio = std::max(rhs(r), 0.0) / a;
          if (ratio < best_ratio - 1e-12 ||
              (ratio <= best_ratio + 1e-12 && leave >= 0 && basis_[r] < basis_[leave])) {
            best_ratio = ratio;
            leave = r;
          }
        }
      }
      if (leave < 0) return LpStatus::Unbounded;
      pivot(leave, enter);
      const double obj = objective();
      if (std::abs(obj - last_obj) <= 1e-14 * (1.0 + std::abs(obj))) {
        ++stall;
      } else {
        stall = 0;
      }
      last_obj = obj;
    }
    return LpStatus::IterationLimit;
  }

 private:
  int rows_;
  int cols_;
  std::vector<double> data_;
  std::vector<int> basis_;
};

// Maps an original variable onto standard-form columns: x = offset + sign*y_a (- y_b).
struct VarMap {
  double offset = 0.0;
  double sign = 1.0;
  int col = -1;
  int col_neg = -1;  // used for free variables
};

}  // namespace

LpProblem::LpProblem(Eigen::Index num_vars)
    : c(Vector::Zero(num_vars)),
      a_ub(0, num_vars),
      b_ub(0),
      a_eq(0, num_vars),
      b_eq(0) {}

void LpProblem::add_le(const Vector& row, double rhs) {
  a_ub.conservativeResize(a_ub.rows() + 1, num_vars());
  a_ub.row(a_ub.rows() - 1) = row.transpose();
  b_ub.conservativeResize(b_ub.size() + 1);
  b_ub(b_ub.size() - 1) = rhs;
}

void LpProblem::add_eq(const Vector& row, double rhs) {
  a_eq.conservativeResize(a_eq.rows() + 1, num_vars());
  a_eq.row(a_eq.rows() - 1) = row.transpose();
  b_eq.conservativeResize(b_eq.size() + 1);
  b_eq(b_eq.size() - 1) = rhs;
}

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration limit";
  }
  return "unknown";
}

LpResult solve_lp(const LpProblem& p) {
  const int n = static_cast<int>(p.num_vars());
  const bool has_lower = p.lower.size() == n;
  const bool has_upper = p.upper.size() == n;

  // Standard-form columns for the structural variables.
  std::vector<VarMap> vars(n);
  int ncols = 0;
  struct BoundRow {
    int col;
    double width;
  };
  std::vector<BoundRow> bound_rows;
  for (int j = 0; j < n; ++j) {
    const double lo = has_lower ? p.lower(j) : -kInf;
    const double hi = has_upper ? p.upper(j) : kInf;
    VarMap& v = vars[j];
    if (std::isfinite(lo)) {
      v.offset = lo;
      v.sign = 1.0;
      v.col = ncols++;
      if (std::isfinite(hi)) bound_rows.push_back({v.col, hi - lo});
    } else if (std::isfinite(hi)) {
      v.offset = hi;
      v.sign = -1.0;
      v.col = ncols++;
    } else {
      v.col = ncols++;
      v.col_neg = ncols++;
    }
    if (std::isfinite(lo) && std::isfinite(hi) && hi < lo) {
      return {LpStatus::Infeasible, Vector(), 0.0};
    }
  }

  const int n_ub = static_cast<int>(p.a_ub.rows());
  const int n_eq = static_cast<int>(p.a_eq.rows());
  const int n_bd = static_cast<int>(bound_rows.size());
  const int rows = n_ub + n_bd + n_eq;

  // Assemble rows as dense coefficient vectors over structural columns.
  Matrix a = Matrix::Zero(rows, ncols);
  Vector b = Vector::Zero(rows);
  std::vector<bool> is_le(rows, true);
  auto put_row = [&](int r, const Eigen::Ref<const Vector>& coeffs, double rhs) {
    double shift = 0.0;
    for (int j = 0; j < n; ++j) {
      const double cj = coeffs(j);
      if (cj == 0.0) continue;
      const VarMap& v = vars[j];
      shift += cj * v.offset;
      a(r, v.col) += cj * v.sign;
      if (v.col_neg >= 0) a(r, v.col_neg) -= cj;
    }
    b(r) = rhs - shift;
  };
  for (int i = 0; i < n_ub; ++i) put_row(i, p.a_ub.row(i).transpose(), p.b_ub(i));
  for (int k = 0; k < n_bd; ++k) {
    a(n_ub + k, bound_rows[k].col) = 1.0;
    b(n_ub + k) = bound_rows[k].width;
  }
  for (int i = 0; i < n_eq; ++i) {
    put_row(n_ub + n_bd + i, p.a_eq.row(i).transpose(), p.b_eq(i));
    is_le[n_ub + n_bd + i] = false;
  }

  // Row equilibration.
  for (int r = 0; r < rows; ++r) {
    const double s = a.row(r).cwiseAbs().maxCoeff();
    if (s > 0.0) {
      a.row(r) /= s;
      b(r) /= s;
    } else if ((is_le[r] && b(r) < -1e-9) || (!is_le[r] && std::abs(b(r)) > 1e-9)) {
      return {LpStatus::Infeasible, Vector(), 0.0};
    }
  }

  // Columns: structural | slacks (one per <= row) | artificials.
  std::vector<int> slack_col(rows, -1);
  int col = ncols;
  for (int r = 0; r < rows; ++r)
    if (is_le[r]) slack_col[r] = col++;
  const int first_art = col;
  std::vector<int> art_col(rows, -1);
  for (int r = 0; r < rows; ++r) {
    const bool slack_basic = is_le[r] && b(r) >= 0.0;
    if (!slack_basic) art_col[r] = col++;
  }
  const int total_cols = col;

  Tableau t(rows, total_cols);
  for (int r = 0; r < rows; ++r) {
    const double flip = b(r) < 0.0 ? -1.0 : 1.0;
    for (int j = 0; j < ncols; ++j) t.at(r, j) = flip * a(r, j);
    if (slack_col[r] >= 0) t.at(r, slack_col[r]) = flip;
    t.rhs(r) = flip * b(r);
    if (art_col[r] >= 0) {
      t.at(r, art_col[r]) = 1.0;
      t.basis()[r] = art_col[r];
    } else {
      t.basis()[r] = slack_col[r];
    }
  }

  const int max_iter = 50 * (rows + total_cols) + 1000;

  if (first_art < total_cols) {
    // Phase one: minimize the sum of artificials.
    for (int r = 0; r < rows; ++r) {
      if (art_col[r] < 0) continue;
      for (int c = 0; c <= total_cols; ++c) {
        if (c >= first_art && c < total_cols) continue;
        t.at(rows, c) -= t.at(r, c);
      }
    }
    const LpStatus s1 = t.iterate(total_cols, max_iter);
    if (s1 == LpStatus::IterationLimit) return {LpStatus::IterationLimit, Vector(), 0.0};
    const double infeas = -t.objective();
    if (infeas > 1e-9 * (1.0 + b.cwiseAbs().maxCoeff())) return {LpStatus::Infeasible, Vector(), 0.0};
    // Drive remaining artificials out of the basis.
    for (int r = 0; r < rows; ++r) {
      if (t.basis()[r] < first_art) continue;
      int pc = -1;
      double best = 1e-9;
      for (int c = 0; c < first_art; ++c) {
        if (std::abs(t.at(r, c)) > best) {
          best = std::abs(t.at(r, c));
          pc = c;
        }
      }
      if (pc >= 0) t.pivot(r, pc);
      // else: redundant row, artificial stays basic at zero and is never re-entered.
    }
  }

  // Phase two cost row over non-artificial columns.
  Vector cost_std = Vector::Zero(total_cols);
  for (int j = 0; j < n; ++j) {
    const VarMap& v = vars[j];
    cost_std(v.col) += p.c(j) * v.sign;
    if (v.col_neg >= 0) cost_std(v.col_neg) -= p.c(j);
  }
  for (int c = 0; c <= total_cols; ++c) t.cost(c) = c < total_cols ? cost_std(c) : 0.0;
  for (int r = 0; r < rows; ++r) {
    const int bc = t.basis()[r];
    const double cb = bc < total_cols ? cost_std(bc) : 0.0;
    if (cb == 0.0) continue;
    for (int c = 0; c <= total_cols; ++c) t.at(rows, c) -= cb * t.at(r, c);
  }
  const LpStatus s2 = t.iterate(first_art, max_iter);
  if (s2 != LpStatus::Optimal) return {s2, Vector(), 0.0};

  Vector y = Vector::Zero(total_cols);
  for (int r = 0; r < rows; ++r) {
    if (t.basis()[r] >= 0) y(t.basis()[r]) = std::max(t.rhs(r), 0.0);
  }
  LpResult result;
  result.status = LpStatus::Optimal;
  result.x.resize(n);
  for (int j = 0; j < n; ++j) {
    const VarMap& v = vars[j];
    double val = v.offset + v.sign * y(v.col);
    if (v.col_neg >= 0) val -= y(v.col_neg);
    result.x(j) = val;
  }
  result.objective = p.c.dot(result.x);
  return result;
}

}  // namespace lmpspike
