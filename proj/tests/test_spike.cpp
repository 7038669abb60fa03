#include "lmpspike/error.hpp"
#include "lmpspike/spike.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace lmpspike;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

struct Toy {
  MpqpProblem problem;
  RegionDecomposition dec;
};

Toy two_bus() {
  Toy t;
  t.problem = assemble_mpqp(load_case(oracle::data("two_bus.json")));
  t.dec = enumerate_regions(t.problem, feasible_set(t.problem, Vector::Zero(1), Vector::Constant(1, 10.0)));
  return t;
}

Toy three_bus() {
  Toy t;
  t.problem = assemble_mpqp(load_case(oracle::data("three_bus.json")));
  t.dec = enumerate_regions(t.problem, feasible_set(t.problem, Vector::Zero(2), Vector::Constant(2, 25.0)));
  return t;
}

// Region that is a box with LMP_0 = theta_0 and LMP_1 = const.
CriticalRegion box_region(double lo, double hi, double const_price) {
  CriticalRegion r;
  r.polytope = make_box(vec2(lo, lo), vec2(hi, hi));
  r.maps.lmp.linear = Matrix::Zero(2, 2);
  r.maps.lmp.linear(0, 0) = 1.0;
  r.maps.lmp.offset = vec2(0.0, const_price);
  return r;
}

SpikeSpec spec2(double am0, double ap0, double am1, double ap1) {
  SpikeSpec s;
  s.alpha_minus = vec2(am0, am1);
  s.alpha_plus = vec2(ap0, ap1);
  return s;
}

// Minimum rate over feasible grid points whose direct-solve LMP hits the
// threshold, refined by repeated zooming around the best point.
double grid_min_rate(const MpqpProblem& p, const RateFunction& rf, int node, SpikeSign sign, double alpha,
                     const Vector& lo, const Vector& hi, int per_axis, int zooms) {
  const Eigen::Index d = lo.size();
  Vector a = lo, b = hi;
  double best = std::numeric_limits<double>::infinity();
  Vector arg;
  for (int z = 0; z <= zooms; ++z) {
    const long long total = d == 1 ? per_axis : static_cast<long long>(per_axis) * per_axis;
    for (long long k = 0; k < total; ++k) {
      Vector t(d);
      long long rem = k;
      for (Eigen::Index j = 0; j < d; ++j) {
        t(j) = a(j) + (b(j) - a(j)) * static_cast<double>(rem % per_axis) / (per_axis - 1);
        rem /= per_axis;
      }
      Vector lmp;
      try {
        lmp = compute_lmp(solve_opf(p, t), p.ptdf).values;
      } catch (const Error&) {
        continue;
      }
      const bool hit = sign == SpikeSign::Plus ? lmp(node) >= alpha : lmp(node) <= alpha;
      if (!hit) continue;
      const double r = rf(t);
      if (r < best) {
        best = r;
        arg = t;
      }
    }
    if (!std::isfinite(best)) return best;
    const Vector half = 4.0 * (b - a) / (per_axis - 1);
    a = (arg - half).cwiseMax(lo);
    b = (arg + half).cwiseMin(hi);
  }
  return best;
}

}  // namespace

TEST_CASE("relative thresholds") {
  Vector lmp(2);
  lmp << 20.0, -8.0;
  const SpikeSpec s = build_thresholds(lmp, 0.25);
  CHECK(s.alpha_minus(0) == doctest::Approx(15.0));
  CHECK(s.alpha_plus(0) == doctest::Approx(25.0));
  CHECK(s.alpha_minus(1) == doctest::Approx(-10.0));
  CHECK(s.alpha_plus(1) == doctest::Approx(-6.0));
  CHECK_NOTHROW(validate_spec(s, lmp));
  CHECK_THROWS_AS(build_thresholds(lmp, 0.0), Error);
  CHECK_THROWS_AS(build_thresholds(lmp, -1.0), Error);
  CHECK_THROWS_AS(build_thresholds(vec2(1.0, 0.0), 0.5), Error);
  CHECK_THROWS_AS(validate_spec(spec2(21, 25, -10, -6), lmp), Error);
  SpikeSpec f = s;
  f.node_filter = {2};
  CHECK(spec_nodes(f, 2) == std::vector<int>{2});
  CHECK(spec_nodes(s, 2) == std::vector<int>{1, 2});
}

TEST_CASE("rate function values") {
  Matrix sig(2, 2);
  sig << 4.0, 1.0, 1.0, 2.0;
  const RateFunction rf(vec2(1.0, 2.0), sig);
  CHECK(rf(vec2(1.0, 2.0)) == 0.0);
  const Vector d = vec2(2.0, -1.0);
  CHECK(rf(vec2(3.0, 1.0)) == doctest::Approx(0.5 * d.dot(sig.inverse() * d)).epsilon(1e-12));
  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(RateFunction(vec2(0, 0), bad), Error);
  Matrix asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(RateFunction(vec2(0, 0), asym), Error);
  CHECK_THROWS_AS(RateFunction(vec2(0, 0), sig, 0.0), Error);
}

TEST_CASE("axis-aligned piece has the closed-form minimum") {
  Matrix sig = Matrix::Zero(2, 2);
  sig(0, 0) = 9.0;
  sig(1, 1) = 0.5;
  const RateFunction rf(vec2(5.0, 5.0), sig);
  const CriticalRegion r = box_region(0.0, 20.0, 3.0);
  const double a = 2.5;
  const auto plus = minimize_rate_piece(rf, r, 0, SpikeSign::Plus, spec2(0.0, 5.0 + a, 0.0, 10.0));
  REQUIRE(plus);
  CHECK(plus->rate == doctest::Approx(a * a / (2.0 * 9.0)).epsilon(1e-12));
  CHECK(plus->theta(0) == doctest::Approx(5.0 + a).epsilon(1e-12));
  CHECK(plus->theta(1) == doctest::Approx(5.0).epsilon(1e-12));
  const auto minus = minimize_rate_piece(rf, r, 0, SpikeSign::Minus, spec2(1.0, 100.0, 0.0, 10.0));
  REQUIRE(minus);
  CHECK(minus->rate == doctest::Approx(16.0 / 18.0).epsilon(1e-12));
  // Threshold beyond the region: empty piece.
  CHECK_FALSE(minimize_rate_piece(rf, r, 0, SpikeSign::Plus, spec2(0.0, 21.0, 0.0, 10.0)));
  // Constant price below the threshold never spikes.
  CHECK_FALSE(minimize_rate_piece(rf, r, 1, SpikeSign::Plus, spec2(0.0, 21.0, 0.0, 10.0)));
}

TEST_CASE("unreachable node has infinite rate and ranks last") {
  Matrix sig = Matrix::Identity(2, 2);
  const RateFunction rf(vec2(5.0, 5.0), sig);
  RegionDecomposition dec;
  dec.regions.push_back(box_region(0.0, 10.0, 3.0));
  dec.theta_space = make_box(vec2(0.0, 0.0), vec2(10.0, 10.0));
  const SpikeSpec spec = spec2(4.0, 6.0, 2.0, 4.0);
  const SpikeDecayResult res = decay_rates(dec, rf, spec);
  REQUIRE(res.nodes.size() == 2);
  CHECK(res.nodes[0].reachable());
  CHECK(res.nodes[0].rate == doctest::Approx(0.5));
  CHECK_FALSE(res.nodes[1].reachable());
  CHECK(std::isinf(res.nodes[1].rate));
  CHECK(res.overall == doctest::Approx(0.5));
  const NodeRanking rk = rank_nodes(res);
  CHECK(rk.order == std::vector<int>{1, 2});
  CHECK(rk.normalized[0] == doctest::Approx(-1.0));
  CHECK(rk.normalized[1] == 0.0);
  const std::string csv = decay_rates_csv(res, rk);
  std::istringstream is(csv);
  std::string header, row1, row2;
  std::getline(is, header);
  std::getline(is, row1);
  std::getline(is, row2);
  CHECK(header == "node,I_star_minus,I_star_plus,I_star,theta_star_1,theta_star_2,region_id,normalized_score,rank,unreachable");
  CHECK(row2.rfind("2,null,null,null,null,null,null,", 0) == 0);
  CHECK(row2.substr(row2.size() - 4) == ",2,1");
}

TEST_CASE("two bus: decay rate against a dense scan") {
  const Toy t = two_bus();
  const RateFunction rf(Vector::Constant(1, 8.0), Matrix::Constant(1, 1, 0.25));
  SpikeSpec spec;
  spec.alpha_minus = Vector::Constant(2, -1e9);
  spec.alpha_plus = Vector::Constant(2, 2.5);
  const SpikeDecayResult res = decay_rates(t.dec, rf, spec);
  for (const NodeDecay& nd : res.nodes) {
    CHECK(nd.rate == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(nd.theta_star(0) == doctest::Approx(7.5).epsilon(1e-10));
    CHECK(nd.sign == SpikeSign::Plus);
    CHECK(nd.boundary_gap < 1e-9);
    CHECK(std::isinf(nd.rate_minus));
    const double scan = grid_min_rate(t.problem, rf, nd.node - 1, SpikeSign::Plus, 2.5, Vector::Zero(1),
                                      Vector::Constant(1, 10.0), 1001, 3);
    CHECK(std::abs(scan - nd.rate) <= 1e-4);
  }
}

TEST_CASE("three bus: decay rates against a zooming grid scan") {
  const Toy t = three_bus();
  Matrix sig(2, 2);
  sig << 6.0, 2.0, 2.0, 4.0;
  const Vector mu = vec2(8.0, 12.0);
  const RateFunction rf(mu, sig);
  const Vector lmp = compute_lmp(solve_opf(t.problem, mu), t.problem.ptdf).values;
  const SpikeSpec spec = build_thresholds(lmp, 0.25);
  const SpikeDecayResult res = decay_rates(t.dec, rf, spec);
  int reachable = 0;
  for (const NodeDecay& nd : res.nodes) {
    const int i = nd.node - 1;
    const double sp = grid_min_rate(t.problem, rf, i, SpikeSign::Plus, spec.alpha_plus(i), Vector::Zero(2),
                                    Vector::Constant(2, 25.0), 101, 4);
    const double sm = grid_min_rate(t.problem, rf, i, SpikeSign::Minus, spec.alpha_minus(i), Vector::Zero(2),
                                    Vector::Constant(2, 25.0), 101, 4);
    if (std::isfinite(nd.rate_plus)) CHECK(std::abs(sp - nd.rate_plus) <= 1e-3 * (1.0 + nd.rate_plus));
    else CHECK(std::isinf(sp));
    if (std::isfinite(nd.rate_minus)) CHECK(std::abs(sm - nd.rate_minus) <= 1e-3 * (1.0 + nd.rate_minus));
    else CHECK(std::isinf(sm));
    if (nd.reachable()) {
      ++reachable;
      CHECK(rf(nd.theta_star) == doctest::Approx(nd.rate).epsilon(1e-9));
      CHECK(t.dec.theta_space.contains(nd.theta_star, 1e-7));
    }
  }
  CHECK(reachable >= 2);
}

TEST_CASE("minimizer sits on the threshold or the parameter-set boundary") {
  const Toy t = three_bus();
  Matrix sig(2, 2);
  sig << 6.0, 2.0, 2.0, 4.0;
  const Vector mu = vec2(8.0, 12.0);
  const RateFunction rf(mu, sig);
  const Vector lmp = compute_lmp(solve_opf(t.problem, mu), t.problem.ptdf).values;
  for (double err : {0.1, 0.25, 0.5}) {
    const SpikeSpec spec = build_thresholds(lmp, err);
    for (const NodeDecay& nd : decay_rates(t.dec, rf, spec).nodes) {
      if (!nd.reachable()) continue;
      CHECK((nd.boundary_gap <= 1e-6 * (1.0 + lmp.cwiseAbs().maxCoeff()) || nd.on_theta_boundary));
      // No point on the segment towards the mean is a cheaper spike.
      for (double s = 0.05; s < 1.0; s += 0.05) {
        const Vector p = nd.theta_star + s * (mu - nd.theta_star);
        const auto loc = locate_region(t.dec, p);
        if (!loc) continue;
        const int i = nd.node - 1;
        const bool hit = nd.sign == SpikeSign::Plus ? loc->lmp(i) >= spec.alpha_plus(i) + 1e-9
                                                    : loc->lmp(i) <= spec.alpha_minus(i) - 1e-9;
        if (hit) CHECK(rf(p) >= nd.rate - 1e-9);
      }
    }
  }
}

TEST_CASE("decay rate is nondecreasing in the relative threshold") {
  const Toy t = three_bus();
  Matrix sig(2, 2);
  sig << 6.0, 2.0, 2.0, 4.0;
  const Vector mu = vec2(8.0, 12.0);
  const RateFunction rf(mu, sig);
  const Vector lmp = compute_lmp(solve_opf(t.problem, mu), t.problem.ptdf).values;
  std::vector<double> prev(3, 0.0);
  for (double err : {0.05, 0.1, 0.25, 0.5, 1.0, 2.0}) {
    const SpikeDecayResult r = decay_rates(t.dec, rf, build_thresholds(lmp, err));
    for (size_t k = 0; k < r.nodes.size(); ++k) {
      CHECK(r.nodes[k].rate >= prev[k] - 1e-12);
      prev[k] = r.nodes[k].rate;
    }
  }
}

TEST_CASE("ranking is invariant under covariance scaling") {
  const Toy t = three_bus();
  Matrix sig(2, 2);
  sig << 6.0, 2.0, 2.0, 4.0;
  const Vector mu = vec2(8.0, 12.0);
  const Vector lmp = compute_lmp(solve_opf(t.problem, mu), t.problem.ptdf).values;
  const SpikeSpec spec = build_thresholds(lmp, 0.25);
  const SpikeDecayResult a = decay_rates(t.dec, RateFunction(mu, sig), spec);
  const SpikeDecayResult b = decay_rates(t.dec, RateFunction(mu, 3.0 * sig), spec);
  CHECK(rank_nodes(a).order == rank_nodes(b).order);
  for (size_t k = 0; k < a.nodes.size(); ++k) {
    if (!a.nodes[k].reachable()) continue;
    CHECK(b.nodes[k].rate == doctest::Approx(a.nodes[k].rate / 3.0).epsilon(1e-8));
  }
}

TEST_CASE("ranking ties are broken by bus id") {
  SpikeDecayResult r;
  for (int bus : {3, 1, 2}) {
    NodeDecay nd;
    nd.node = bus;
    nd.rate = bus == 2 ? 0.5 : 1.0;
    r.nodes.push_back(nd);
  }
  const NodeRanking rk = rank_nodes(r);
  CHECK(rk.order == std::vector<int>{2, 1, 3});
  CHECK(rk.rank == std::vector<int>{3, 2, 1});
  CHECK(rk.normalized[0] == doctest::Approx(-0.5));
}

TEST_CASE("large-deviation probability approximation") {
  // First entry of the reference ranking table.
  CHECK(approx_probability(8.116e-4) == doctest::Approx(0.999189).epsilon(1e-6));
  CHECK(approx_probability(2.0, 0.5) == doctest::Approx(std::exp(-4.0)));
  CHECK(approx_probability(NodeDecay::kInfinity) == 0.0);
  CHECK_THROWS_AS(approx_probability(1.0, 0.0), Error);
}
