#include "lmpspike/regions.hpp"

#include "lmpspike/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <random>

namespace lmpspike {

using nlohmann::json;

namespace {

Matrix select_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(rows.size(), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

double box_scale(const Vector& lo, const Vector& hi) {
  return std::max(1.0, (hi - lo).cwiseAbs().maxCoeff());
}

// Axis-aligned bounding box of a bounded polytope.
void bounding_box(const Polytope& p, Vector& lo, Vector& hi) {
  const Eigen::Index d = p.dim();
  lo.resize(d);
  hi.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Vector dir = Vector::Zero(d);
    dir(j) = 1.0;
    const auto up = maximize(p, dir);
    const auto down = maximize(p, -dir);
    if (!up || !down) fail(ErrorKind::Infeasible, "parameter set is empty");
    if (std::isinf(*up) || std::isinf(*down)) fail(ErrorKind::Validation, "parameter set is unbounded");
    hi(j) = *up;
    lo(j) = -*down;
  }
}

}  // namespace

RegionMaps region_maps(const OptimalPartition& active_set, const MpqpProblem& p) {
  const std::vector<int>& rows = active_set.binding;
  const Matrix ar = select_rows(p.a, rows);
  Eigen::FullPivLU<Matrix> lu(ar);
  lu.setThreshold(1e-10);
  if (lu.rank() < static_cast<Eigen::Index>(rows.size()))
    fail(ErrorKind::Numerical, "binding rows are linearly dependent; maps are not unique");

  const Vector hinv = p.hessian.diagonal().cwiseInverse();
  const Matrix schur = ar * hinv.asDiagonal() * ar.transpose();
  const Eigen::LDLT<Matrix> ldlt(schur);
  const Matrix er = select_rows(p.e, rows);
  Vector br(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) br(i) = p.b(rows[i]);

  RegionMaps maps;
  maps.duals.linear = -ldlt.solve(er);
  maps.duals.offset = -ldlt.solve(br + ar * hinv.cwiseProduct(p.linear));
  maps.dispatch.linear = -(hinv.asDiagonal() * (ar.transpose() * maps.duals.linear));
  maps.dispatch.offset = -hinv.cwiseProduct(p.linear + ar.transpose() * maps.duals.offset);

  // LMP = -y_0 * 1 + PTDF' (y_lower - y_upper).
  Matrix to_lmp = Matrix::Zero(p.num_buses, rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    const RowLabel& label = p.rows[rows[i]];
    switch (label.kind) {
      case RowKind::BalancePlus: to_lmp.col(i).setConstant(-1.0); break;
      case RowKind::LineUpper: to_lmp.col(i) = -p.ptdf.row(label.index).transpose(); break;
      case RowKind::LineLower: to_lmp.col(i) = p.ptdf.row(label.index).transpose(); break;
      default: break;
    }
  }
  maps.lmp.linear = to_lmp * maps.duals.linear;
  maps.lmp.offset = to_lmp * maps.duals.offset;
  return maps;
}

AffineMap region_lmp_map(const OptimalPartition& active_set, const MpqpProblem& problem, const Matrix& ptdf) {
  MpqpProblem view = problem;
  view.ptdf = ptdf;
  return region_maps(active_set, view).lmp;
}

Polytope feasible_set(const MpqpProblem& p, const Vector& box_lower, const Vector& box_upper) {
  const int ng = p.num_generators;
  const int nt = p.num_renewables;
  if (box_lower.size() != nt || box_upper.size() != nt) fail(ErrorKind::Validation, "box has wrong dimension");
  if ((box_upper - box_lower).minCoeff() <= 0.0) fail(ErrorKind::Validation, "box must have positive width");

  // Substitute the last generator from the balance equality, then project out
  // the remaining generators one at a time.
  const int k = ng - 1;
  const double total = p.b(0);
  const int vars = k + nt;
  Polytope lifted;
  lifted.g.resize(0, vars);
  for (Eigen::Index i = 2; i < p.num_rows(); ++i) {
    Vector row(vars);
    for (int j = 0; j < k; ++j) row(j) = p.a(i, j) - p.a(i, k);
    row.tail(nt) = -p.a(i, k) * Vector::Ones(nt) - p.e.row(i).transpose();
    lifted.append(row, p.b(i) - p.a(i, k) * total, static_cast<int>(i));
  }
  for (int j = 0; j < nt; ++j) {
    Vector row = Vector::Zero(vars);
    row(k + j) = 1.0;
    lifted.append(row, box_upper(j));
    row(k + j) = -1.0;
    lifted.append(row, -box_lower(j));
  }
  Polytope proj = remove_redundant(lifted);
  for (int j = 0; j < k; ++j) {
    if (is_empty(proj)) break;
    proj = fourier_motzkin(proj, 0);
  }
  if (proj.dim() != nt || is_empty(proj)) fail(ErrorKind::Infeasible, "feasible parameter set is empty");
  for (int& t : proj.tags) t = -1;
  const auto ball = chebyshev_ball(proj);
  if (!ball || ball->radius <= 1e-9 * box_scale(box_lower, box_upper))
    fail(ErrorKind::Infeasible, "feasible parameter set is empty or not full-dimensional");
  return proj;
}

std::optional<CriticalRegion> build_region(const MpqpProblem& p, const OptimalPartition& active_set,
                                           const Polytope& theta_space) {
  RegionMaps maps;
  try {
    maps = region_maps(active_set, p);
  } catch (const Error&) {
    return std::nullopt;
  }
  const std::vector<int>& rows = active_set.binding;
  const Eigen::Index J = p.num_rows();
  std::vector<bool> in_set(J, false);
  for (int r : rows) in_set[r] = true;

  Polytope poly;
  poly.g.resize(0, p.num_renewables);
  for (Eigen::Index i = 2; i < J; ++i) {
    if (in_set[i]) continue;
    const Vector row = (p.a.row(i) * maps.dispatch.linear - p.e.row(i)).transpose();
    poly.append(row, p.b(i) - p.a.row(i).dot(maps.dispatch.offset), static_cast<int>(i));
  }
  for (size_t pos = 1; pos < rows.size(); ++pos) {
    poly.append(-maps.duals.linear.row(pos).transpose(), maps.duals.offset(pos), static_cast<int>(J + rows[pos]));
  }
  for (Eigen::Index i = 0; i < theta_space.num_rows(); ++i) poly.append(theta_space.g.row(i).transpose(), theta_space.w(i), -1);

  Polytope reduced = remove_redundant(poly);
  if (is_empty(reduced)) return std::nullopt;
  const auto ball = chebyshev_ball(reduced);
  Vector lo, hi;
  bounding_box(theta_space, lo, hi);
  if (!ball || ball->radius <= 1e-8 * box_scale(lo, hi)) return std::nullopt;

  CriticalRegion region;
  region.active_set = active_set;
  region.polytope = std::move(reduced);
  region.maps = std::move(maps);
  region.chebyshev = *ball;
  region.licq = licq_check(active_set, p.num_generators);
  return region;
}

namespace {

class Enumerator {
 public:
  Enumerator(const MpqpProblem& p, const Polytope& theta, const EnumerationOptions& opt)
      : p_(p), theta_(theta), opt_(opt) {
    bounding_box(theta_, lo_, hi_);
    scale_ = box_scale(lo_, hi_);
  }

  RegionDecomposition run() {
    const auto center = chebyshev_ball(theta_);
    if (!center) fail(ErrorKind::Infeasible, "feasible parameter set is empty");
    discover_at(center->center);
    explore();
    std::mt19937_64 rng(static_cast<unsigned long long>(opt_.coverage_seed));
    for (int pass = 0; pass < 5; ++pass) {
      const size_t before = regions_.size();
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (int s = 0; s < opt_.coverage_samples; ++s) {
        Vector x(lo_.size());
        for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = lo_(j) + unit(rng) * (hi_(j) - lo_(j));
        if (theta_.min_slack(x) <= 0.0 || covered(x)) continue;
        if (discover_at(x)) {
          ++diag_.coverage_fill_regions;
          explore();
        }
      }
      if (regions_.size() == before) break;
    }

    std::sort(regions_.begin(), regions_.end(),
              [](const CriticalRegion& a, const CriticalRegion& b) { return a.active_set < b.active_set; });
    RegionDecomposition dec;
    for (size_t i = 0; i < regions_.size(); ++i) {
      regions_[i].id = static_cast<int>(i);
      if (!regions_[i].licq) ++diag_.licq_violations;
    }
    dec.regions = std::move(regions_);
    dec.theta_space = theta_;
    dec.box_lower = lo_;
    dec.box_upper = hi_;
    dec.diagnostics = diag_;
    dec.coverage_volume_ratio = sampled_coverage(dec, 20000, 11);
    return dec;
  }

 private:
  bool covered(const Vector& x) const {
    for (const CriticalRegion& r : regions_)
      if (r.polytope.min_slack(x) >= 0.0) return true;
    return false;
  }

  bool known(const OptimalPartition& part) const { return index_.count(part.binding) > 0; }

  bool add(CriticalRegion region) {
    if (known(region.active_set)) return false;
    index_[region.active_set.binding] = static_cast<int>(regions_.size());
    queue_.push_back(static_cast<int>(regions_.size()));
    regions_.push_back(std::move(region));
    return true;
  }

  // Solves at x and adds the region of its optimal partition.
  bool discover_at(const Vector& x) {
    OptimalPartition part;
    try {
      part = optimal_partition(solve_opf(p_, x), p_);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Infeasible) return false;
      throw;
    }
    if (known(part)) return false;
    if (rejected_.count(part.binding)) return false;
    auto region = build_region(p_, part, theta_);
    if (!region) {
      rejected_.insert({part.binding, true});
      ++diag_.degenerate_regions;
      return false;
    }
    return add(std::move(*region));
  }

  void explore() {
    while (!queue_.empty()) {
      const int idx = queue_.front();
      queue_.pop_front();
      const Polytope poly = regions_[idx].polytope;
      const OptimalPartition part = regions_[idx].active_set;
      for (Eigen::Index f = 0; f < poly.num_rows(); ++f) {
        if (poly.tags[f] < 0) continue;
        if (++diag_.facet_expansions > opt_.max_facet_expansions)
          fail(ErrorKind::Numerical, "region enumeration exceeded the facet expansion cap");
        expand_facet(poly, part, f);
      }
    }
  }

  void expand_facet(const Polytope& poly, const OptimalPartition& part, Eigen::Index f) {
    const auto fb = facet_ball(poly, f);
    if (!fb) return;
    const Vector normal = poly.g.row(f).transpose() / poly.g.row(f).norm();
    const double eps = 1e-6 * std::max(1.0, fb->center.cwiseAbs().maxCoeff());
    const Vector x = fb->center + eps * normal;
    if (theta_.min_slack(x) <= 0.0) return;
    if (covered(x)) return;

    const int tag = poly.tags[f];
    const int J = static_cast<int>(p_.num_rows());
    std::vector<int> toggled = part.binding;
    if (tag < J) {
      toggled.push_back(tag);
    } else {
      toggled.erase(std::remove(toggled.begin(), toggled.end(), tag - J), toggled.end());
    }
    const OptimalPartition guess = make_partition(p_, toggled);
    if (!known(guess) && !rejected_.count(guess.binding)) {
      auto region = build_region(p_, guess, theta_);
      if (region && region->polytope.min_slack(x) >= -1e-9 * scale_) {
        add(std::move(*region));
        return;
      }
    }
    for (double step : {1e-6, 1e-5, 1e-4, 1e-3}) {
      const Vector y = fb->center + step * scale_ * normal;
      if (theta_.min_slack(y) <= 0.0) break;
      if (covered(y)) return;
      if (discover_at(y) && covered(y)) return;
    }
    ++diag_.unresolved_facets;
  }

  const MpqpProblem& p_;
  const Polytope& theta_;
  EnumerationOptions opt_;
  Vector lo_, hi_;
  double scale_ = 1.0;
  std::vector<CriticalRegion> regions_;
  std::map<std::vector<int>, int> index_;
  std::map<std::vector<int>, bool> rejected_;
  std::deque<int> queue_;
  EnumerationDiagnostics diag_;
};

}  // namespace

RegionDecomposition enumerate_regions(const MpqpProblem& problem, const Polytope& theta_space,
                                      const EnumerationOptions& options) {
  if (theta_space.dim() != problem.num_renewables) fail(ErrorKind::Validation, "parameter set has wrong dimension");
  return Enumerator(problem, theta_space, options).run();
}

std::optional<Location> locate_region(const RegionDecomposition& dec, const Vector& theta, double tol) {
  std::optional<Location> best;
  int candidates = 0;
  for (const CriticalRegion& r : dec.regions) {
    if (!r.polytope.contains(theta, tol)) continue;
    ++candidates;
    Vector lmp = r.maps.lmp(theta);
    if (!best || std::lexicographical_compare(lmp.data(), lmp.data() + lmp.size(), best->lmp.data(),
                                              best->lmp.data() + best->lmp.size())) {
      best = Location{r.id, std::move(lmp), false};
    }
  }
  if (best) best->on_face = candidates > 1;
  return best;
}

double sampled_coverage(const RegionDecomposition& dec, int samples, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  long long inside = 0, hit = 0;
  const Eigen::Index d = dec.box_lower.size();
  for (int s = 0; s < samples; ++s) {
    Vector x(d);
    for (Eigen::Index j = 0; j < d; ++j) x(j) = dec.box_lower(j) + unit(rng) * (dec.box_upper(j) - dec.box_lower(j));
    if (!dec.theta_space.contains(x, 0.0)) continue;
    ++inside;
    for (const CriticalRegion& r : dec.regions) {
      if (r.polytope.contains(x, 1e-12)) {
        ++hit;
        break;
      }
    }
  }
  return inside == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(inside);
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Matrix matrix_from(const json& j, Eigen::Index cols) {
  Matrix m(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != static_cast<size_t>(cols)) fail(ErrorKind::Parse, "matrix row has wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

Vector vector_from(const json& j) {
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

json polytope_json(const Polytope& p) {
  return json{{"G", matrix_json(p.g)}, {"w", vector_json(p.w)}, {"tags", p.tags}};
}

Polytope polytope_from(const json& j, Eigen::Index dim) {
  Polytope p(matrix_from(j.at("G"), dim), vector_from(j.at("w")));
  if (j.contains("tags")) p.tags = j.at("tags").get<std::vector<int>>();
  if (static_cast<Eigen::Index>(p.tags.size()) != p.num_rows()) fail(ErrorKind::Parse, "polytope tags have wrong length");
  return p;
}

json map_json(const AffineMap& m) { return json{{"linear", matrix_json(m.linear)}, {"offset", vector_json(m.offset)}}; }

AffineMap map_from(const json& j, Eigen::Index dim) {
  return AffineMap{matrix_from(j.at("linear"), dim), vector_from(j.at("offset"))};
}

}  // namespace

std::string decomposition_to_json(const RegionDecomposition& dec, const MpqpProblem& problem) {
  json regions = json::array();
  for (const CriticalRegion& r : dec.regions) {
    json labels = json::array();
    for (int row : r.active_set.binding) labels.push_back(to_string(problem.rows[row]));
    regions.push_back(json{{"id", r.id},
                           {"active_set", r.active_set.binding},
                           {"active_labels", labels},
                           {"G", matrix_json(r.polytope.g)},
                           {"w", vector_json(r.polytope.w)},
                           {"tags", r.polytope.tags},
                           {"C", matrix_json(r.maps.lmp.linear)},
                           {"c", vector_json(r.maps.lmp.offset)},
                           {"dispatch", map_json(r.maps.dispatch)},
                           {"duals", map_json(r.maps.duals)},
                           {"chebyshev_center", vector_json(r.chebyshev.center)},
                           {"chebyshev_radius", r.chebyshev.radius},
                           {"licq", r.licq}});
  }
  const EnumerationDiagnostics& d = dec.diagnostics;
  json out{{"num_regions", dec.regions.size()},
           {"num_renewables", problem.num_renewables},
           {"num_buses", problem.num_buses},
           {"theta_space", polytope_json(dec.theta_space)},
           {"box_lower", vector_json(dec.box_lower)},
           {"box_upper", vector_json(dec.box_upper)},
           {"coverage_volume_ratio", dec.coverage_volume_ratio},
           {"diagnostics",
            {{"facet_expansions", d.facet_expansions},
             {"degenerate_regions", d.degenerate_regions},
             {"unresolved_facets", d.unresolved_facets},
             {"coverage_fill_regions", d.coverage_fill_regions},
             {"licq_violations", d.licq_violations}}},
           {"regions", regions}};
  return out.dump(1);
}

RegionDecomposition decomposition_from_json(const std::string& text, const MpqpProblem& problem) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("decomposition document: ") + e.what());
  }
  try {
    const Eigen::Index dim = problem.num_renewables;
    if (doc.at("num_renewables").get<Eigen::Index>() != dim || doc.at("num_buses").get<int>() != problem.num_buses)
      fail(ErrorKind::Validation, "decomposition does not match the case dimensions");
    RegionDecomposition dec;
    dec.theta_space = polytope_from(doc.at("theta_space"), dim);
    dec.box_lower = vector_from(doc.at("box_lower"));
    dec.box_upper = vector_from(doc.at("box_upper"));
    dec.coverage_volume_ratio = doc.at("coverage_volume_ratio").get<double>();
    const json& d = doc.at("diagnostics");
    dec.diagnostics.facet_expansions = d.at("facet_expansions").get<int>();
    dec.diagnostics.degenerate_regions = d.at("degenerate_regions").get<int>();
    dec.diagnostics.unresolved_facets = d.at("unresolved_facets").get<int>();
    dec.diagnostics.coverage_fill_regions = d.at("coverage_fill_regions").get<int>();
    dec.diagnostics.licq_violations = d.at("licq_violations").get<int>();
    for (const json& jr : doc.at("regions")) {
      CriticalRegion r;
      r.id = jr.at("id").get<int>();
      r.active_set = make_partition(problem, jr.at("active_set").get<std::vector<int>>());
      r.polytope = Polytope(matrix_from(jr.at("G"), dim), vector_from(jr.at("w")), jr.at("tags").get<std::vector<int>>());
      r.maps.lmp = AffineMap{matrix_from(jr.at("C"), dim), vector_from(jr.at("c"))};
      r.maps.dispatch = map_from(jr.at("dispatch"), dim);
      r.maps.duals = map_from(jr.at("duals"), dim);
      r.chebyshev.center = vector_from(jr.at("chebyshev_center"));
      r.chebyshev.radius = jr.at("chebyshev_radius").get<double>();
      r.licq = jr.at("licq").get<bool>();
      dec.regions.push_back(std::move(r));
    }
    return dec;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("decomposition document: ") + e.what());
  }
}

}  // namespace lmpspike
