#pragma once

// Price-spike events and their large-deviation decay rates under Gaussian
// renewable noise.

#include "lmpspike/regions.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace lmpspike {

struct SpikeSpec {
  Vector alpha_minus;  // per bus
  Vector alpha_plus;
  std::vector<int> node_filter;  // bus ids; empty means every bus
};

// alpha = LMP +- err_rel |LMP|. Rejects err_rel <= 0 and zero prices.
SpikeSpec build_thresholds(const Vector& lmp_at_mean, double err_rel);
// Requires alpha_minus < lmp_at_mean < alpha_plus componentwise.
void validate_spec(const SpikeSpec& spec, const Vector& lmp_at_mean);
std::vector<int> spec_nodes(const SpikeSpec& spec, int num_buses);

class RateFunction {
 public:
  RateFunction(Vector mu, Matrix sigma, double epsilon = 1.0);

  double operator()(const Vector& theta) const;
  const Vector& mu() const { return mu_; }
  const Matrix& sigma() const { return sigma_; }
  const Matrix& cholesky_factor() const { return chol_; }  // lower, sigma = L L'
  double epsilon() const { return epsilon_; }

 private:
  Vector mu_;
  Matrix sigma_;
  Matrix chol_;
  double epsilon_;
};

enum class SpikeSign { Minus, Plus };

struct PieceMinimum {
  double rate = 0.0;
  Vector theta;
};

// Minimum of the rate over cl(region ∩ {LMP_node >= alpha_plus}) (or <= alpha_minus).
// nullopt when the piece is empty. `node` is 0-based.
std::optional<PieceMinimum> minimize_rate_piece(const RateFunction& rf, const CriticalRegion& region, int node,
                                                SpikeSign sign, const SpikeSpec& spec);

struct NodeDecay {
  int node = 0;  // bus id
  double rate_minus = kInfinity;
  double rate_plus = kInfinity;
  double rate = kInfinity;  // min of the two signs
  SpikeSign sign = SpikeSign::Plus;
  Vector theta_star;
  int region_id = -1;
  double boundary_gap = 0.0;      // |LMP_node(theta*) - alpha| under the region map
  bool on_theta_boundary = false; // theta* on the boundary of the parameter set

  bool reachable() const { return rate < kInfinity; }

  static constexpr double kInfinity = std::numeric_limits<double>::infinity();
};

struct SpikeDecayResult {
  std::vector<NodeDecay> nodes;  // in bus order, restricted to the node filter
  double overall = NodeDecay::kInfinity;
  Eigen::Index num_parameters = 0;
};

SpikeDecayResult decay_rates(const RegionDecomposition& dec, const RateFunction& rf, const SpikeSpec& spec);

struct NodeRanking {
  std::vector<int> order;            // bus ids, most likely spike first
  std::vector<int> rank;             // per entry of SpikeDecayResult::nodes, 1-based
  std::vector<double> normalized;    // -min_k I*_k / I*_i per entry; 0 when unreachable
};

NodeRanking rank_nodes(const SpikeDecayResult& result);

double approx_probability(double rate, double epsilon = 1.0);

std::string decay_rates_csv(const SpikeDecayResult& result, const NodeRanking& ranking);

}  // namespace lmpspike
