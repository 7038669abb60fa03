// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include "../oracles.hpp"
#include "lmpspike/analysis.hpp"
#include "lmpspike/error.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

using namespace lmpspike;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_config(const std::string& name) {
  std::ifstream in(std::string(LMPSPIKE_CONFIG_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

AnalysisConfig config(const std::string& name) { return parse_config(read_config(name), LMPSPIKE_CONFIG_DIR); }

GaussianModel gaussian(const AnalysisModel& m, const AnalysisConfig& c) {
  GaussianModel g;
  g.mu = *c.forecast_fraction * m.installed;
  g.sigma = build_covariance(m.grid, CovarianceSpec{c.kappa, c.tau_squared, c.q_values.front(), m.installed});
  return g;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Table1 {
  AnalysisConfig cfg;
  AnalysisModel model;
  GaussianModel gauss;
  Vector lmp_mean;
  SpikeSpec spec;
  SpikeDecayResult ldp;
  double seconds = 0.0;
};

Table1 table1_setting() {
  const auto t0 = Clock::now();
  Table1 t;
  t.cfg = config("table1.json");
  t.model = build_model(t.cfg);
  t.gauss = gaussian(t.model, t.cfg);
  t.lmp_mean = lmp_at(t.model, t.gauss.mu);
  t.spec = build_thresholds(t.lmp_mean, t.cfg.err_rel.front());
  t.ldp = decay_rates(t.model.decomposition, RateFunction(t.gauss.mu, t.gauss.sigma, t.cfg.epsilon), t.spec);
  t.seconds = seconds_since(t0);
  return t;
}

double rate_of(const SpikeDecayResult& r, int node) {
  for (const NodeDecay& nd : r.nodes)
    if (nd.node == node) return nd.rate;
  return NodeDecay::kInfinity;
}

void table1_ranking(const Table1& t) {
  const std::vector<int> expected{9, 8, 7, 10, 11, 6, 12, 13, 14, 4, 5, 1, 2, 3};
  const NodeRanking rk = rank_nodes(t.ldp);
  // The reference table reports the Mahalanobis form (theta-mu)' S^-1 (theta-mu),
  // twice the rate computed here.
  const double i9 = 2.0 * rate_of(t.ldp, 9), i3 = 2.0 * rate_of(t.ldp, 3);
  // Nodes whose decay rates agree to solver precision are interchangeable:
  // their relative order is a tie-break convention, not a prediction.
  const auto tied = [&](int a, int b) {
    const double ra = rate_of(t.ldp, a), rb = rate_of(t.ldp, b);
    return ra == rb || std::abs(ra - rb) <= 1e-9 * std::max(std::abs(ra), std::abs(rb));
  };
  bool order_ok = rk.order.size() == expected.size();
  for (size_t k = 0; order_ok && k < expected.size(); ++k)
    order_ok = rk.order[k] == expected[k] || tied(rk.order[k], expected[k]);
  const bool strict = rk.order == expected;
  const bool i9_ok = i9 >= 8.1e-4 / 2 && i9 <= 8.1e-4 * 2;
  const bool i3_ok = i3 >= 2.7e3 / 2 && i3 <= 2.7e3 * 2;
  const bool time_ok = t.seconds < 120.0;
  report("table1-ranking", order_ok && i9_ok && i3_ok && time_ok,
         fmt("order=%s expected=%s (%s) 2I*_9=%.4e (8.1e-04 x/2) 2I*_3=%.4e (2.7e+03 x/2) M=%zu time=%.2fs (<120s)",
             join(rk.order).c_str(), join(expected).c_str(),
             strict ? "identical" : (order_ok ? "equal up to ties" : "differs"), i9, i3, t.model.decomposition.regions.size(), t.seconds));
}

void mc_cross_check(const Table1& t) {
  const auto t0 = Clock::now();
  const Matrix s = sample(t.gauss, 1000000, t.cfg.seed);
  const SampleLocations loc = locate_samples(s, t.model.decomposition, t.model.problem);
  const MCResult mc = mc_spike_probabilities(loc, t.model.decomposition, t.spec, t.cfg.seed);
  const double secs = seconds_since(t0) + t.seconds;
  auto p_of = [&](int node) {
    for (size_t j = 0; j < mc.nodes.size(); ++j)
      if (mc.nodes[j] == node) return mc.probability[j];
    return -1.0;
  };
  const double p9 = p_of(9);
  bool zeros = true;
  for (int node : {1, 2, 3, 5}) zeros = zeros && p_of(node) == 0.0;
  const RankingAgreement agree = compare_ranking(mc, t.ldp);
  const bool p9_ok = p9 >= 0.81 && p9 <= 0.91;
  report("mc-cross-check", p9_ok && zeros && agree.exact_match && secs < 300.0,
         fmt("P_9=%.5f in [0.81,0.91]; P_{1,2,3,5}=%.3g,%.3g,%.3g,%.3g (all 0); resolvable=%zu ldp=%s mc=%s "
             "discordant=%d tau=%.3f; time=%.2fs (<300s)",
             p9, p_of(1), p_of(2), p_of(3), p_of(5), agree.resolvable.size(), join(agree.resolvable).c_str(),
             join(agree.mc_order).c_str(), agree.discordant_pairs, agree.kendall_tau, secs));
}

void region_solver_equivalence(const Table1& t) {
  const RegionDecomposition& dec = t.model.decomposition;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int total = 0, faces = 0, uncovered = 0, agree = 0;
  double worst = 0.0;
  while (total < 10000) {
    Vector th(2);
    for (int j = 0; j < 2; ++j) th(j) = dec.box_lower(j) + u(rng) * (dec.box_upper(j) - dec.box_lower(j));
    if (!dec.theta_space.contains(th, 0.0)) continue;
    ++total;
    const auto loc = locate_region(dec, th);
    if (loc && loc->on_face) {
      ++faces;
      continue;
    }
    const Vector direct = compute_lmp(solve_opf(t.model.problem, th), t.model.problem.ptdf).values;
    if (!loc) {
      ++uncovered;
      continue;
    }
    const double err = (loc->lmp - direct).cwiseAbs().maxCoeff();
    worst = std::max(worst, err);
    agree += err <= 1e-6;
  }
  const double frac = static_cast<double>(agree) / (total - faces);
  report("region-solver-equivalence", frac >= 0.999,
         fmt("%d/%d samples within 1e-6 (%.5f >= 0.999), facet hits excluded=%d, uncovered=%d, max err=%.2e", agree,
             total - faces, frac, faces, uncovered, worst));
}

void boundary_attainment(const Table1& t) {
  const RateFunction rf(t.gauss.mu, t.gauss.sigma, t.cfg.epsilon);
  int finite = 0, ok = 0;
  double worst = 0.0;
  for (double err : {0.25, 0.5, 1.0, 10.0}) {
    const SpikeSpec spec = build_thresholds(t.lmp_mean, err);
    for (const NodeDecay& nd : decay_rates(t.model.decomposition, rf, spec).nodes) {
      if (!nd.reachable()) continue;
      ++finite;
      const bool good = nd.boundary_gap <= 1e-6 || nd.on_theta_boundary;
      if (!nd.on_theta_boundary) worst = std::max(worst, nd.boundary_gap);
      ok += good;
    }
  }
  report("boundary-attainment", ok == finite && finite > 0,
         fmt("%d/%d finite minimizers on the threshold (<=1e-6) or on the parameter-set boundary; max gap=%.2e", ok,
             finite, worst));
}

// --- desk-scale oracles -----------------------------------------------------

struct Toy {
  MpqpProblem problem;
  RegionDecomposition dec;
};

Toy toy(const std::string& file, const Vector& lo, const Vector& hi) {
  Toy t;
  t.problem = assemble_mpqp(load_case(oracle::data(file)));
  t.dec = enumerate_regions(t.problem, feasible_set(t.problem, lo, hi));
  return t;
}

// Distinct oracle partitions over a grid of cell centres, offset so that no
// point lands on a region boundary with rational coordinates.
size_t grid_partitions(const Toy& t, const Vector& lo, const Vector& hi, int per_axis) {
  std::set<std::vector<int>> seen;
  const Eigen::Index d = lo.size();
  const long long total = d == 1 ? per_axis : 1LL * per_axis * per_axis;
  for (long long k = 0; k < total; ++k) {
    Vector th(d);
    long long rem = k;
    for (Eigen::Index j = 0; j < d; ++j) {
      th(j) = lo(j) + (hi(j) - lo(j)) * ((rem % per_axis) + 0.5 + 1e-3 * std::sqrt(2.0 + j)) / per_axis;
      rem /= per_axis;
    }
    const auto kkt = oracle::dense_active_set(t.problem, th);
    if (!kkt) continue;
    seen.insert(oracle::binding_rows(t.problem, kkt->g, th));
  }
  return seen.size();
}

struct GridBest {
  std::vector<double> plus, minus;
};

// Direct-solve grid minimisation of the rate over the spike sets of every
// node. The budget of points is split over successive zoom levels around
// the incumbent of each (node, sign).
GridBest grid_rates(const Toy& t, const RateFunction& rf, const SpikeSpec& spec, const Vector& lo, const Vector& hi,
                    long long budget) {
  const int n = t.problem.num_buses;
  const Eigen::Index d = lo.size();
  GridBest best{std::vector<double>(n, NodeDecay::kInfinity), std::vector<double>(n, NodeDecay::kInfinity)};
  auto scan = [&](const Vector& a, const Vector& b, long long points, const std::function<void(const Vector&, const Vector&)>& f) {
    const int per = d == 1 ? static_cast<int>(points) : static_cast<int>(std::sqrt(static_cast<double>(points)));
    const long long total = d == 1 ? per : 1LL * per * per;
    for (long long k = 0; k < total; ++k) {
      Vector th(d);
      long long rem = k;
      for (Eigen::Index j = 0; j < d; ++j) {
        th(j) = a(j) + (b(j) - a(j)) * static_cast<double>(rem % per) / (per - 1);
        rem /= per;
      }
      Vector lmp;
      try {
        lmp = compute_lmp(solve_opf(t.problem, th), t.problem.ptdf).values;
      } catch (const Error&) {
        continue;
      }
      f(th, lmp);
    }
    return (b - a) / (per - 1);
  };
  if (d == 1) {
    scan(lo, hi, budget, [&](const Vector& th, const Vector& lmp) {
      const double r = rf(th);
      for (int i = 0; i < n; ++i) {
        if (lmp(i) >= spec.alpha_plus(i)) best.plus[i] = std::min(best.plus[i], r);
        if (lmp(i) <= spec.alpha_minus(i)) best.minus[i] = std::min(best.minus[i], r);
      }
    });
    return best;
  }
  // Coarse level shared by all targets, then per-target zooms.
  const long long coarse = budget / 4;
  std::vector<Vector> arg_plus(n), arg_minus(n);
  const Vector h = scan(lo, hi, coarse, [&](const Vector& th, const Vector& lmp) {
    const double r = rf(th);
    for (int i = 0; i < n; ++i) {
      if (lmp(i) >= spec.alpha_plus(i) && r < best.plus[i]) best.plus[i] = r, arg_plus[i] = th;
      if (lmp(i) <= spec.alpha_minus(i) && r < best.minus[i]) best.minus[i] = r, arg_minus[i] = th;
    }
  });
  const long long per_target = (budget - coarse) / (2 * n * 3);
  for (int i = 0; i < n; ++i) {
    for (int sgn = 0; sgn < 2; ++sgn) {
      double& val = sgn == 0 ? best.plus[i] : best.minus[i];
      Vector& arg = sgn == 0 ? arg_plus[i] : arg_minus[i];
      if (!std::isfinite(val)) continue;
      Vector width = h;
      for (int z = 0; z < 3; ++z) {
        const Vector a = (arg - 2.0 * width).cwiseMax(lo), b = (arg + 2.0 * width).cwiseMin(hi);
        width = scan(a, b, per_target, [&](const Vector& th, const Vector& lmp) {
          const bool hit = sgn == 0 ? lmp(i) >= spec.alpha_plus(i) : lmp(i) <= spec.alpha_minus(i);
          if (!hit) return;
          const double r = rf(th);
          if (r < val) val = r, arg = th;
        });
      }
    }
  }
  return best;
}

void desk_oracles() {
  const Vector lo1 = Vector::Zero(1), hi1 = Vector::Constant(1, 10.0);
  const Vector lo2 = Vector::Zero(2), hi2 = Vector::Constant(2, 25.0);
  const Toy two = toy("two_bus.json", lo1, hi1);
  const Toy three = toy("three_bus.json", lo2, hi2);

  // (a) region counts.
  const size_t g2 = grid_partitions(two, lo1, hi1, 2000);
  const size_t g3 = grid_partitions(three, lo2, hi2, 300);
  const bool counts_ok = g2 == two.dec.regions.size() && g3 == three.dec.regions.size();

  // (b) decay rates.
  double worst = 0.0;
  int compared = 0;
  bool reach_ok = true;
  auto compare = [&](const Toy& t, const RateFunction& rf, const SpikeSpec& spec, const Vector& lo, const Vector& hi) {
    const GridBest gb = grid_rates(t, rf, spec, lo, hi, 1000000);
    for (const NodeDecay& nd : decay_rates(t.dec, rf, spec).nodes) {
      const int i = nd.node - 1;
      for (int sgn = 0; sgn < 2; ++sgn) {
        const double mine = sgn == 0 ? nd.rate_plus : nd.rate_minus;
        const double ref = sgn == 0 ? gb.plus[i] : gb.minus[i];
        if (std::isinf(mine) || std::isinf(ref)) {
          reach_ok = reach_ok && std::isinf(mine) == std::isinf(ref);
          continue;
        }
        ++compared;
        worst = std::max(worst, std::abs(mine - ref) / std::max(std::abs(ref), 1e-12));
      }
    }
  };
  SpikeSpec s2;
  s2.alpha_minus = Vector::Constant(2, -1e9);
  s2.alpha_plus = Vector::Constant(2, 2.5);
  compare(two, RateFunction(Vector::Constant(1, 8.0), Matrix::Constant(1, 1, 0.25)), s2, lo1, hi1);
  Matrix sig3(2, 2);
  sig3 << 6.0, 2.0, 2.0, 4.0;
  Vector mu3(2);
  mu3 << 8.0, 12.0;
  const SpikeSpec s3 =
      build_thresholds(compute_lmp(solve_opf(three.problem, mu3), three.problem.ptdf).values, 0.25);
  compare(three, RateFunction(mu3, sig3), s3, lo2, hi2);
  const bool rates_ok = reach_ok && compared > 0 && worst <= 1e-3;

  // (c) halfspace tail: node 1 of the two-bus toy spikes iff theta < 7.5;
  // theta > 10 is infeasible and excluded from the denominator.
  const long long n = 1000000;
  const SampleLocations loc =
      locate_samples(sample({Vector::Constant(1, 8.0), Matrix::Constant(1, 1, 0.25)}, n, 99), two.dec, two.problem);
  SpikeSpec sh;
  sh.alpha_minus = Vector::Constant(2, -1e9);
  sh.alpha_plus = Vector::Constant(2, 1e9);
  sh.alpha_plus(0) = 2.5;
  const MCResult mc = mc_spike_probabilities(loc, two.dec, sh, 99);
  const double p = oracle::normal_cdf(-1.0) / oracle::normal_cdf(4.0);
  const double se = std::sqrt(p * (1 - p) / static_cast<double>(n - mc.infeasible));
  const double z = (mc.probability[0] - p) / se;
  const bool tail_ok = std::abs(z) <= 3.0;

  report("desk-oracles", counts_ok && rates_ok && tail_ok,
         fmt("(a) regions 2-bus %zu vs grid %zu, 3-bus %zu vs grid %zu; (b) %d rates, max rel err %.2e (<=1e-3)%s; "
             "(c) P=%.5f vs %.5f, z=%.2f (|z|<=3)",
             two.dec.regions.size(), g2, three.dec.regions.size(), g3, compared, worst,
             reach_ok ? "" : " reachability mismatch", mc.probability[0], p, z));
}

void analytic_checks(const Table1& t) {
  // Uncongested: case14 with generous limits everywhere.
  GridCase loose = t.model.grid;
  for (Line& l : loose.lines) l.f_min = -1e5, l.f_max = 1e5;
  const MpqpProblem lp = assemble_mpqp(loose);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 120.0);
  double spread = 0.0;
  for (int k = 0; k < 50; ++k) {
    Vector th(2);
    th << u(rng), u(rng);
    const OpfSolution s = solve_opf(lp, th);
    const Vector lmp = compute_lmp(s, lp.ptdf).values;
    spread = std::max(spread, (lmp.array() - s.lambda_energy).abs().maxCoeff());
  }
  const bool flat_ok = spread <= 1e-9;

  // Finite-difference marginal cost of demand at 20 interior points.
  const RegionDecomposition& dec = t.model.decomposition;
  int points = 0, checked = 0;
  double fd_worst = 0.0;
  std::uniform_real_distribution<double> v(0.0, 1.0);
  while (points < 20) {
    Vector th(2);
    for (int j = 0; j < 2; ++j) th(j) = dec.box_lower(j) + v(rng) * (dec.box_upper(j) - dec.box_lower(j));
    const auto loc = locate_region(dec, th);
    if (!loc || loc->on_face) continue;
    const CriticalRegion& r = dec.regions[loc->region_id];
    if (r.polytope.min_slack(th) < 1e-2) continue;
    ++points;
    const OpfSolution s0 = solve_opf(t.model.problem, th);
    const OptimalPartition part = optimal_partition(s0, t.model.problem);
    const Vector lmp = compute_lmp(s0, t.model.problem.ptdf).values;
    for (int b = 0; b < t.model.grid.num_buses; ++b) {
      const double h = 1e-6;
      // Buses without load use a one-sided three-point stencil.
      const bool central = t.model.grid.demand(b) >= h;
      GridCase up = t.model.grid, dn = t.model.grid;
      up.demand(b) += h;
      dn.demand(b) += central ? -h : 2.0 * h;
      const MpqpProblem pu = assemble_mpqp(up), pd = assemble_mpqp(dn);
      const OpfSolution su = solve_opf(pu, th), sd = solve_opf(pd, th);
      // The derivative only exists while the binding set is unchanged.
      if (!(optimal_partition(su, pu) == part) || !(optimal_partition(sd, pd) == part)) continue;
      ++checked;
      const double ju = su.objective, jd = sd.objective, j0 = s0.objective;
      const double fd = central ? (ju - jd) / (2 * h) : (-3.0 * j0 + 4.0 * ju - jd) / (2 * h);
      fd_worst = std::max(fd_worst, std::abs(fd - lmp(b)) / std::max(1.0, std::abs(lmp(b))));
    }
  }
  const bool fd_ok = fd_worst <= 1e-3 && checked >= points * t.model.grid.num_buses / 2;

  // Rate function at the mean and a closed-form halfspace.
  const RateFunction rf(t.gauss.mu, t.gauss.sigma);
  const double at_mean = rf(t.gauss.mu);
  Matrix sd = Matrix::Zero(2, 2);
  sd(0, 0) = 4.0;
  sd(1, 1) = 9.0;
  const RateFunction diag(Vector::Zero(2), sd);
  CriticalRegion half;
  half.polytope = make_box(Vector::Constant(2, -100.0), Vector::Constant(2, 100.0));
  half.maps.lmp.linear = Matrix::Identity(2, 2);
  half.maps.lmp.offset = Vector::Zero(2);
  SpikeSpec hs;
  hs.alpha_minus = Vector::Constant(2, -1e9);
  hs.alpha_plus = Vector::Constant(2, 1e9);
  hs.alpha_plus(1) = 1.5;
  const auto piece = minimize_rate_piece(diag, half, 1, SpikeSign::Plus, hs);
  const double closed = 1.5 * 1.5 / (2.0 * 9.0);
  const double half_err = piece ? std::abs(piece->rate - closed) : NodeDecay::kInfinity;
  const bool rate_ok = at_mean == 0.0 && half_err <= 1e-12;

  report("kkt-analytic", flat_ok && fd_ok && rate_ok,
         fmt("uncongested LMP spread=%.2e (<=1e-9); FD marginal cost max rel err=%.2e over %d points, %d bus checks (<=1e-3); "
             "I(mu)=%.1e; halfspace |I-a^2/2s^2|=%.1e (<=1e-12)",
             spread, fd_worst, points, checked, at_mean, half_err));
}

std::vector<double> mode_centers(const Histogram& h) {
  std::vector<double> out;
  for (int b : find_modes(h)) out.push_back(0.5 * (h.edges(b) + h.edges(b + 1)));
  return out;
}

void fig1_modes(const Table1& high) {
  const AnalysisConfig low_cfg = config("fig1_low.json");
  const AnalysisModel& m = high.model;
  const GaussianModel low = gaussian(m, low_cfg);
  const int bins = low_cfg.bins;
  auto hist = [&](const GaussianModel& g, std::uint64_t seed) {
    const SampleLocations loc = locate_samples(sample(g, low_cfg.n_samples, seed), m.decomposition, m.problem);
    return empirical_density(loc, m.decomposition, 10, bins);
  };
  const Histogram hl = hist(low, low_cfg.seed);
  const Histogram hh = hist(high.gauss, high.cfg.seed);
  const std::vector<double> ml = mode_centers(hl), mh = mode_centers(hh);
  const bool multimodal = ml.size() >= 2;
  // Mode structure differs when the counts differ or some mode has no
  // counterpart within three bin widths of the coarser histogram.
  const double tol = 3.0 * std::max(hl.edges(1) - hl.edges(0), hh.edges(1) - hh.edges(0));
  bool differs = ml.size() != mh.size();
  for (double a : ml) {
    bool matched = false;
    for (double b : mh) matched = matched || std::abs(a - b) <= tol;
    differs = differs || !matched;
  }
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += fmt("%s%.2f", i ? "," : "", v[i]);
    return s;
  };
  report("fig1-modes", multimodal && differs,
         fmt("low forecast node 10: %zu modes at [%s] (>=2); high forecast: %zu modes at [%s]; structure %s",
             ml.size(), list(ml).c_str(), mh.size(), list(mh).c_str(), differs ? "differs" : "matches"));
}

}  // namespace

int main() {
  try {
    const Table1 t = table1_setting();
    table1_ranking(t);
    mc_cross_check(t);
    region_solver_equivalence(t);
    boundary_attainment(t);
    desk_oracles();
    analytic_checks(t);
    fig1_modes(t);
  } catch (const std::exception& e) {
    std::printf("FAIL  acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
