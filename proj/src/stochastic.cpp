#include "lmpspike/stochastic.hpp"

#include "lmpspike/error.hpp"
#include "text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace lmpspike {

Matrix graph_covariance(const GridCase& grid, double kappa, double tau_squared) {
  if (!(tau_squared > 0.0)) fail(ErrorKind::Validation, "tau_squared must be positive");
  if (!(kappa > 0.0)) fail(ErrorKind::Validation, "kappa must be positive");
  const Matrix lap = weighted_laplacian(grid);
  const Vector deg = lap.diagonal();
  for (Eigen::Index i = 0; i < deg.size(); ++i)
    if (!(deg(i) > 0.0)) fail(ErrorKind::Validation, "bus " + std::to_string(i + 1) + " is isolated");
  const Vector s = deg.cwiseSqrt().cwiseInverse();
  Matrix lsym = s.asDiagonal() * lap * s.asDiagonal();
  lsym = 0.5 * (lsym + lsym.transpose());
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(lsym);
  if (eig.info() != Eigen::Success) fail(ErrorKind::Numerical, "eigendecomposition of the normalized Laplacian failed");
  Vector f(eig.eigenvalues().size());
  for (Eigen::Index i = 0; i < f.size(); ++i)
    f(i) = std::pow(tau_squared, kappa) * std::pow(eig.eigenvalues()(i) + tau_squared, -kappa);
  Matrix c = eig.eigenvectors() * f.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (c + c.transpose());
}

Matrix build_covariance(const GridCase& grid, const CovarianceSpec& spec) {
  const int nt = grid.num_renewables();
  if (!(spec.q > 0.0)) fail(ErrorKind::Validation, "q must be positive");
  if (spec.installed.size() != nt) fail(ErrorKind::Validation, "installed capacities have wrong dimension");
  if (nt > 0 && !(spec.installed.minCoeff() > 0.0)) fail(ErrorKind::Validation, "installed capacities must be positive");
  const Matrix c = graph_covariance(grid, spec.kappa, spec.tau_squared);
  Matrix sub(nt, nt);
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nt; ++b) sub(a, b) = c(grid.renewable_buses[a] - 1, grid.renewable_buses[b] - 1);
  Vector delta(nt);
  for (int a = 0; a < nt; ++a) delta(a) = spec.q * spec.installed(a) / std::sqrt(sub(a, a));
  Matrix sigma = delta.asDiagonal() * sub * delta.asDiagonal();
  for (int a = 0; a < nt; ++a) sigma(a, a) = std::pow(spec.q * spec.installed(a), 2);
  return sigma;
}

Philox4x32::Counter Philox4x32::block(Counter c, Key k) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

namespace {

// Uniform on the open interval (0, 1) with 53 bits.
double open_unit(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(a >> 5) << 26) | (b >> 6);
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

Matrix sample(const GaussianModel& model, long long n, std::uint64_t seed) {
  if (n < 1) fail(ErrorKind::Validation, "sample count must be at least 1");
  const Eigen::Index d = model.mu.size();
  Eigen::LLT<Matrix> llt(model.sigma);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Validation, "covariance is not positive definite");
  const Matrix l = llt.matrixL();
  const Philox4x32::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  Matrix out(n, d);
  Vector z(d);
  for (long long k = 0; k < n; ++k) {
    const auto chunk = static_cast<std::uint32_t>(k / kSampleChunk);
    const auto local = static_cast<std::uint32_t>(k % kSampleChunk);
    for (Eigen::Index j = 0; j < d; j += 2) {
      const auto r = Philox4x32::block({local, chunk, static_cast<std::uint32_t>(j / 2), 0u}, key);
      const double u1 = open_unit(r[0], r[1]);
      const double u2 = open_unit(r[2], r[3]);
      const double rad = std::sqrt(-2.0 * std::log(u1));
      z(j) = rad * std::cos(2.0 * std::numbers::pi * u2);
      if (j + 1 < d) z(j + 1) = rad * std::sin(2.0 * std::numbers::pi * u2);
    }
    out.row(k) = (model.mu + l * z).transpose();
  }
  return out;
}

void SampleLocations::lmp(long long k, const RegionDecomposition& dec, Vector& out) const {
  const int r = region[k];
  if (r >= 0) {
    const AffineMap& m = dec.regions[r].maps.lmp;
    out.noalias() = m.linear * samples.row(k).transpose();
    out += m.offset;
  } else if (r == kDirect) {
    out = direct_lmp[direct_slot[k]];
  } else {
    fail(ErrorKind::Validation, "sample is infeasible and has no price");
  }
}

SampleLocations locate_samples(const Matrix& samples, const RegionDecomposition& dec, const MpqpProblem& problem) {
  SampleLocations loc;
  loc.samples = samples;
  const long long n = samples.rows();
  loc.region.assign(n, SampleLocations::kInfeasible);
  loc.direct_slot.assign(n, -1);
  for (long long k = 0; k < n; ++k) {
    const Vector theta = samples.row(k).transpose();
    if (const auto hit = locate_region(dec, theta)) {
      loc.region[k] = hit->region_id;
      continue;
    }
    try {
      const OpfSolution s = solve_opf(problem, theta);
      loc.region[k] = SampleLocations::kDirect;
      loc.direct_slot[k] = static_cast<int>(loc.direct_lmp.size());
      loc.direct_lmp.push_back(compute_lmp(s, problem.ptdf).values);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Infeasible) throw;
      ++loc.infeasible;
    }
  }
  return loc;
}

long long Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }

MCResult mc_spike_probabilities(const SampleLocations& loc, const RegionDecomposition& dec, const SpikeSpec& spec,
                                std::uint64_t seed) {
  MCResult mc;
  mc.n_samples = loc.size();
  mc.seed = seed;
  mc.nodes = spec_nodes(spec, static_cast<int>(spec.alpha_plus.size()));
  mc.counts.assign(mc.nodes.size(), 0);
  mc.infeasible = loc.infeasible;
  mc.direct_solves = static_cast<long long>(loc.direct_lmp.size());
  Vector lmp;
  for (long long k = 0; k < loc.size(); ++k) {
    if (loc.region[k] == SampleLocations::kInfeasible) continue;
    loc.lmp(k, dec, lmp);
    bool any = false;
    for (size_t j = 0; j < mc.nodes.size(); ++j) {
      const int i = mc.nodes[j] - 1;
      if (lmp(i) < spec.alpha_minus(i) || lmp(i) > spec.alpha_plus(i)) {
        ++mc.counts[j];
        any = true;
      }
    }
    if (any) ++mc.any_count;
  }
  const long long valid = mc.n_samples - mc.infeasible;
  for (long long c : mc.counts) mc.probability.push_back(valid > 0 ? static_cast<double>(c) / valid : 0.0);
  mc.any_probability = valid > 0 ? static_cast<double>(mc.any_count) / valid : 0.0;
  return mc;
}

Histogram empirical_density(const SampleLocations& loc, const RegionDecomposition& dec, int node, int bins,
                            const SpikeSpec* spec) {
  if (bins < 2) fail(ErrorKind::Validation, "histogram needs at least 2 bins");
  if (node < 1 || dec.regions.empty() || node > dec.regions.front().maps.lmp.offset.size())
    fail(ErrorKind::Validation, "histogram node is not a bus of the case");
  const int i = node - 1;
  std::vector<double> values;
  values.reserve(loc.size());
  Vector lmp;
  for (long long k = 0; k < loc.size(); ++k) {
    if (loc.region[k] == SampleLocations::kInfeasible) continue;
    loc.lmp(k, dec, lmp);
    values.push_back(lmp(i));
  }
  Histogram h;
  h.node = node;
  if (spec) {
    h.alpha_minus = spec->alpha_minus(i);
    h.alpha_plus = spec->alpha_plus(i);
  }
  h.counts.assign(bins, 0);
  double lo = 0.0, hi = 1.0;
  if (!values.empty()) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }
  if (!(hi > lo)) {
    const double pad = 1e-9 * (1.0 + std::abs(lo));
    lo -= pad;
    hi += pad;
  }
  h.edges = Vector::LinSpaced(bins + 1, lo, hi);
  const double width = (hi - lo) / bins;
  for (double v : values) {
    int b = static_cast<int>(std::floor((v - lo) / width));
    h.counts[std::clamp(b, 0, bins - 1)] += 1;
  }
  return h;
}

std::vector<int> find_modes(const Histogram& h, int min_separation, double valley, double min_mass) {
  const int nb = static_cast<int>(h.counts.size());
  const long long total = h.total();
  if (total == 0) return {};
  std::vector<int> peaks;
  for (int b = 0; b < nb; ++b) {
    const long long c = h.counts[b];
    if (c < min_mass * static_cast<double>(total)) continue;
    const long long left = b > 0 ? h.counts[b - 1] : -1;
    const long long right = b + 1 < nb ? h.counts[b + 1] : -1;
    // Plateaus count once, at their leftmost bin.
    if (c > left && c >= right) peaks.push_back(b);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&](int a, int b) { return h.counts[a] > h.counts[b]; });
  std::vector<int> accepted;
  for (int p : peaks) {
    bool separate = true;
    for (int q : accepted) {
      const int lo = std::min(p, q), hi = std::max(p, q);
      long long floor_count = h.counts[lo];
      for (int b = lo; b <= hi; ++b) floor_count = std::min(floor_count, h.counts[b]);
      const bool deep = floor_count <= (1.0 - valley) * static_cast<double>(h.counts[p]);
      if (hi - lo < min_separation || !deep) {
        separate = false;
        break;
      }
    }
    if (separate) accepted.push_back(p);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

int count_modes(const Histogram& h, int min_separation, double valley, double min_mass) {
  return static_cast<int>(find_modes(h, min_separation, valley, min_mass).size());
}

RankingAgreement compare_ranking(const MCResult& mc, const SpikeDecayResult& ldp, double floor) {
  RankingAgreement out;
  out.floor = floor >= 0.0 ? floor : (mc.n_samples > 0 ? 10.0 / static_cast<double>(mc.n_samples) : 0.0);
  struct Entry {
    int node;
    double rate;
    double prob;
  };
  std::vector<Entry> entries;
  for (const NodeDecay& nd : ldp.nodes) {
    const auto it = std::find(mc.nodes.begin(), mc.nodes.end(), nd.node);
    if (it == mc.nodes.end()) continue;
    const double p = mc.probability[it - mc.nodes.begin()];
    if (p > out.floor) entries.push_back({nd.node, nd.rate, p});
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.rate != b.rate) return a.rate < b.rate;
    return a.node < b.node;
  });
  for (const Entry& e : entries) out.resolvable.push_back(e.node);
  std::vector<Entry> by_prob = entries;
  std::stable_sort(by_prob.begin(), by_prob.end(), [](const Entry& a, const Entry& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.node < b.node;
  });
  for (const Entry& e : by_prob) out.mc_order.push_back(e.node);

  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0, pairs = 0;
  for (size_t a = 0; a < entries.size(); ++a) {
    for (size_t b = a + 1; b < entries.size(); ++b) {
      ++pairs;
      const double dx = entries[b].rate - entries[a].rate;  // > 0 when a is ranked as more likely
      const double dy = entries[a].prob - entries[b].prob;
      if (dx == 0.0) ++ties_x;
      if (dy == 0.0) ++ties_y;
      if (dx == 0.0 || dy == 0.0) continue;
      if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  out.discordant_pairs = static_cast<int>(discordant);
  out.exact_match = discordant == 0;
  const double denom = std::sqrt(static_cast<double>(pairs - ties_x) * static_cast<double>(pairs - ties_y));
  out.kendall_tau = denom > 0.0 ? static_cast<double>(concordant - discordant) / denom : 1.0;
  return out;
}

std::string mc_csv(const MCResult& mc, const SpikeSpec& spec, const Vector& lmp_at_mean, const SpikeDecayResult& ldp,
                   const NodeRanking& ranking) {
  std::vector<size_t> by_prob(mc.nodes.size());
  std::iota(by_prob.begin(), by_prob.end(), 0);
  std::stable_sort(by_prob.begin(), by_prob.end(),
                   [&](size_t a, size_t b) { return mc.probability[a] > mc.probability[b]; });
  std::vector<int> mc_rank(mc.nodes.size());
  for (size_t pos = 0; pos < by_prob.size(); ++pos) mc_rank[by_prob[pos]] = static_cast<int>(pos) + 1;

  std::ostringstream os;
  os << "node,lmp_at_mean,alpha_minus,alpha_plus,count,p_hat,I_star,normalized_score,ldp_rank,mc_rank\n";
  for (size_t j = 0; j < mc.nodes.size(); ++j) {
    const int bus = mc.nodes[j];
    const int i = bus - 1;
    double rate = NodeDecay::kInfinity, score = 0.0;
    int rank = 0;
    for (size_t k = 0; k < ldp.nodes.size(); ++k) {
      if (ldp.nodes[k].node != bus) continue;
      rate = ldp.nodes[k].rate;
      score = ranking.normalized[k];
      rank = ranking.rank[k];
    }
    os << bus << ',' << text::num(lmp_at_mean(i)) << ',' << text::num(spec.alpha_minus(i)) << ','
       << text::num(spec.alpha_plus(i)) << ',' << mc.counts[j] << ',' << text::num(mc.probability[j]) << ','
       << text::num(rate) << ',' << text::num(score) << ',' << rank << ',' << mc_rank[j] << '\n';
  }
  return os.str();
}

std::string histogram_json(const Histogram& h) {
  nlohmann::json edges = nlohmann::json::array();
  for (Eigen::Index i = 0; i < h.edges.size(); ++i) edges.push_back(h.edges(i));
  nlohmann::json doc{{"node", h.node},
                     {"edges", edges},
                     {"counts", h.counts},
                     {"alpha_minus", h.alpha_minus},
                     {"alpha_plus", h.alpha_plus},
                     {"modes", count_modes(h)}};
  nlohmann::json centers = nlohmann::json::array();
  for (int b : find_modes(h)) centers.push_back(0.5 * (h.edges(b) + h.edges(b + 1)));
  doc["mode_centers"] = centers;
  return doc.dump(1) + "\n";
}

}  // namespace lmpspike
