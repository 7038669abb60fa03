#pragma once

// Gaussian forecast-error model on the renewable buses and the Monte Carlo
// estimators used to validate the decay-rate ranking.

#include "lmpspike/spike.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lmpspike {

struct CovarianceSpec {
  double kappa = 2.0;
  double tau_squared = 1.0;
  double q = 0.0;     // target standard deviation as a fraction of installed capacity
  Vector installed;   // per renewable bus (MW)
};

// tau^(2 kappa) (L_sym + tau^2 I)^(-kappa) over all buses, L_sym the
// degree-normalized susceptance Laplacian.
Matrix graph_covariance(const GridCase& grid, double kappa, double tau_squared);
// Restriction to the renewable buses, rescaled so that sigma_i = q installed_i.
Matrix build_covariance(const GridCase& grid, const CovarianceSpec& spec);

struct GaussianModel {
  Vector mu;
  Matrix sigma;

  Vector std_dev() const { return sigma.diagonal().cwiseSqrt(); }
};

// Philox4x32-10 counter-based generator (Salmon et al. constants).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key);
};

inline constexpr const char* kGeneratorName = "philox4x32-10/box-muller/v1";
inline constexpr int kSampleChunk = 65536;

// n draws from N(mu, sigma), one per row. Sample k lives in chunk k / 65536,
// whose substream is keyed by (seed, chunk); results do not depend on how
// chunks are scheduled.
Matrix sample(const GaussianModel& model, long long n, std::uint64_t seed);

// Where each sample landed: a region id, kDirect when its LMP came from a
// direct solve, or kInfeasible.
struct SampleLocations {
  static constexpr int kDirect = -1;
  static constexpr int kInfeasible = -2;

  Matrix samples;
  std::vector<int> region;
  std::vector<int> direct_slot;   // index into direct_lmp for kDirect samples
  std::vector<Vector> direct_lmp;
  long long infeasible = 0;

  long long size() const { return static_cast<long long>(region.size()); }
  void lmp(long long k, const RegionDecomposition& dec, Vector& out) const;
};

SampleLocations locate_samples(const Matrix& samples, const RegionDecomposition& dec, const MpqpProblem& problem);

struct Histogram {
  int node = 0;  // bus id
  Vector edges;  // bins + 1
  std::vector<long long> counts;
  double alpha_minus = 0.0;
  double alpha_plus = 0.0;

  long long total() const;
};

struct MCResult {
  long long n_samples = 0;
  std::uint64_t seed = 0;
  std::vector<int> nodes;             // bus ids covered by the estimate
  std::vector<long long> counts;      // per entry of nodes
  std::vector<double> probability;    // counts / (n - infeasible)
  long long any_count = 0;
  double any_probability = 0.0;
  long long infeasible = 0;
  long long direct_solves = 0;
};

MCResult mc_spike_probabilities(const SampleLocations& loc, const RegionDecomposition& dec, const SpikeSpec& spec,
                                std::uint64_t seed = 0);

// Histogram of LMP at `node` (bus id) over the feasible samples; bins span the
// sampled range.
Histogram empirical_density(const SampleLocations& loc, const RegionDecomposition& dec, int node, int bins,
                            const SpikeSpec* spec = nullptr);

// Bin indices of the peaks of the histogram that hold at least `min_mass` of the samples, lie
// `min_separation` bins from every taller accepted peak, and are separated
// from each of them by a valley at least `valley` below the peak.
std::vector<int> find_modes(const Histogram& h, int min_separation = 3, double valley = 0.2, double min_mass = 0.005);
int count_modes(const Histogram& h, int min_separation = 3, double valley = 0.2, double min_mass = 0.005);

struct RankingAgreement {
  double floor = 0.0;
  std::vector<int> resolvable;  // bus ids with P > floor, in decay-rate order
  std::vector<int> mc_order;    // same nodes ordered by estimated probability
  int discordant_pairs = 0;
  bool exact_match = false;
  double kendall_tau = 1.0;
};

// Compares the decay-rate order with the Monte Carlo order over nodes whose
// estimate exceeds floor (default 10 / n). Tied estimates are compatible with
// either order.
RankingAgreement compare_ranking(const MCResult& mc, const SpikeDecayResult& ldp, double floor = -1.0);

std::string mc_csv(const MCResult& mc, const SpikeSpec& spec, const Vector& lmp_at_mean, const SpikeDecayResult& ldp,
                   const NodeRanking& ranking);
std::string histogram_json(const Histogram& h);

}  // namespace lmpspike
