#include "lmpspike/spike.hpp"

#include "lmpspike/error.hpp"
#include "lmpspike/qp.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lmpspike {

SpikeSpec build_thresholds(const Vector& lmp_at_mean, double err_rel) {
  if (!(err_rel > 0.0) || !std::isfinite(err_rel)) fail(ErrorKind::Validation, "err_rel must be positive");
  SpikeSpec spec;
  spec.alpha_minus.resize(lmp_at_mean.size());
  spec.alpha_plus.resize(lmp_at_mean.size());
  for (Eigen::Index i = 0; i < lmp_at_mean.size(); ++i) {
    const double l = lmp_at_mean(i);
    if (l == 0.0)
      fail(ErrorKind::Validation, "LMP at the mean is zero at bus " + std::to_string(i + 1) + "; relative thresholds collapse");
    spec.alpha_minus(i) = l - err_rel * std::abs(l);
    spec.alpha_plus(i) = l + err_rel * std::abs(l);
  }
  return spec;
}

void validate_spec(const SpikeSpec& spec, const Vector& lmp) {
  if (spec.alpha_minus.size() != lmp.size() || spec.alpha_plus.size() != lmp.size())
    fail(ErrorKind::Validation, "thresholds have wrong dimension");
  for (Eigen::Index i = 0; i < lmp.size(); ++i) {
    if (!(spec.alpha_minus(i) < lmp(i) && lmp(i) < spec.alpha_plus(i)))
      fail(ErrorKind::Validation, "LMP at the mean lies outside the threshold band at bus " + std::to_string(i + 1));
  }
  for (int b : spec.node_filter)
    if (b < 1 || b > lmp.size()) fail(ErrorKind::Validation, "node filter names an unknown bus");
}

std::vector<int> spec_nodes(const SpikeSpec& spec, int num_buses) {
  std::vector<int> nodes = spec.node_filter;
  if (nodes.empty()) {
    nodes.resize(num_buses);
    std::iota(nodes.begin(), nodes.end(), 1);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

RateFunction::RateFunction(Vector mu, Matrix sigma, double epsilon)
    : mu_(std::move(mu)), sigma_(std::move(sigma)), epsilon_(epsilon) {
  if (sigma_.rows() != mu_.size() || sigma_.cols() != mu_.size()) fail(ErrorKind::Validation, "covariance has wrong dimension");
  if (!(epsilon_ > 0.0)) fail(ErrorKind::Validation, "noise scale epsilon must be positive");
  if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + sigma_.cwiseAbs().maxCoeff()))
    fail(ErrorKind::Validation, "covariance is not symmetric");
  Eigen::LLT<Matrix> llt(sigma_);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Validation, "covariance is not positive definite");
  chol_ = llt.matrixL();
}

double RateFunction::operator()(const Vector& theta) const {
  const Vector z = chol_.triangularView<Eigen::Lower>().solve(theta - mu_);
  return 0.5 * z.squaredNorm();
}

std::optional<PieceMinimum> minimize_rate_piece(const RateFunction& rf, const CriticalRegion& region, int node,
                                                SpikeSign sign, const SpikeSpec& spec) {
  // theta = mu + L z turns the rate into 0.5 |z|^2.
  const Matrix& l = rf.cholesky_factor();
  const Vector& mu = rf.mu();
  const Polytope& poly = region.polytope;
  const Eigen::Index d = mu.size();
  const Eigen::Index rows = poly.num_rows();

  QpProblem qp;
  qp.hessian = Matrix::Identity(d, d);
  qp.linear = Vector::Zero(d);
  qp.a_eq.resize(0, d);
  qp.b_eq.resize(0);
  qp.a_in.resize(rows + 1, d);
  qp.b_in.resize(rows + 1);
  qp.a_in.topRows(rows) = poly.g * l;
  qp.b_in.head(rows) = poly.w - poly.g * mu;
  const Vector c_row = region.maps.lmp.linear.row(node).transpose();
  const double c0 = region.maps.lmp.offset(node);
  if (sign == SpikeSign::Plus) {
    qp.a_in.row(rows) = -(l.transpose() * c_row).transpose();
    qp.b_in(rows) = c0 + c_row.dot(mu) - spec.alpha_plus(node);
  } else {
    qp.a_in.row(rows) = (l.transpose() * c_row).transpose();
    qp.b_in(rows) = spec.alpha_minus(node) - c0 - c_row.dot(mu);
  }
  const QpResult r = solve_qp(qp);
  if (r.status != QpStatus::Optimal) return std::nullopt;
  PieceMinimum out;
  out.theta = mu + l * r.x;
  out.rate = 0.5 * r.x.squaredNorm();
  return out;
}

SpikeDecayResult decay_rates(const RegionDecomposition& dec, const RateFunction& rf, const SpikeSpec& spec) {
  const int n = static_cast<int>(spec.alpha_plus.size());
  SpikeDecayResult result;
  result.num_parameters = rf.mu().size();
  for (int bus : spec_nodes(spec, n)) {
    NodeDecay nd;
    nd.node = bus;
    const int i = bus - 1;
    for (const CriticalRegion& region : dec.regions) {
      for (SpikeSign s : {SpikeSign::Minus, SpikeSign::Plus}) {
        const auto piece = minimize_rate_piece(rf, region, i, s, spec);
        if (!piece) continue;
        double& slot = s == SpikeSign::Minus ? nd.rate_minus : nd.rate_plus;
        slot = std::min(slot, piece->rate);
        // Strict improvement keeps the first region in id order on ties.
        if (piece->rate < nd.rate) {
          nd.rate = piece->rate;
          nd.sign = s;
          nd.theta_star = piece->theta;
          nd.region_id = region.id;
          const double alpha = s == SpikeSign::Minus ? spec.alpha_minus(i) : spec.alpha_plus(i);
          nd.boundary_gap = std::abs(region.maps.lmp.linear.row(i).dot(piece->theta) + region.maps.lmp.offset(i) - alpha);
        }
      }
    }
    if (nd.reachable()) {
      nd.on_theta_boundary = dec.theta_space.min_slack(nd.theta_star) <= 1e-7 * (1.0 + nd.theta_star.cwiseAbs().maxCoeff());
    }
    result.overall = std::min(result.overall, nd.rate);
    result.nodes.push_back(std::move(nd));
  }
  return result;
}

NodeRanking rank_nodes(const SpikeDecayResult& result) {
  const size_t k = result.nodes.size();
  std::vector<size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    const NodeDecay& x = result.nodes[a];
    const NodeDecay& y = result.nodes[b];
    if (x.rate != y.rate) return x.rate < y.rate;
    return x.node < y.node;
  });
  NodeRanking out;
  out.rank.assign(k, 0);
  out.normalized.assign(k, 0.0);
  double best = NodeDecay::kInfinity;
  for (const NodeDecay& nd : result.nodes) best = std::min(best, nd.rate);
  for (size_t pos = 0; pos < k; ++pos) {
    out.order.push_back(result.nodes[idx[pos]].node);
    out.rank[idx[pos]] = static_cast<int>(pos) + 1;
  }
  for (size_t j = 0; j < k; ++j) {
    const double r = result.nodes[j].rate;
    if (!std::isfinite(r)) continue;
    out.normalized[j] = r > 0.0 ? -best / r : -1.0;
  }
  return out;
}

double approx_probability(double rate, double epsilon) {
  if (!(epsilon > 0.0)) fail(ErrorKind::Validation, "epsilon must be positive");
  return std::exp(-rate / epsilon);
}

std::string decay_rates_csv(const SpikeDecayResult& result, const NodeRanking& ranking) {
  std::ostringstream os;
  const Eigen::Index d = result.num_parameters;
  os << "node,I_star_minus,I_star_plus,I_star";
  for (Eigen::Index j = 0; j < d; ++j) os << ",theta_star_" << j + 1;
  os << ",region_id,normalized_score,rank,unreachable\n";
  for (size_t k = 0; k < result.nodes.size(); ++k) {
    const NodeDecay& nd = result.nodes[k];
    os << nd.node << ',' << text::num(nd.rate_minus) << ',' << text::num(nd.rate_plus) << ',' << text::num(nd.rate);
    for (Eigen::Index j = 0; j < d; ++j) os << ',' << (nd.reachable() ? text::num(nd.theta_star(j)) : "null");
    os << ',' << (nd.reachable() ? std::to_string(nd.region_id) : "null") << ',' << text::num(ranking.normalized[k]) << ','
       << ranking.rank[k] << ',' << (nd.reachable() ? 0 : 1) << '\n';
  }
  return os.str();
}

}  // namespace lmpspike
