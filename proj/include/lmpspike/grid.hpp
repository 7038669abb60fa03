#pragma once

// Network data model and topology-derived matrices for the DC approximation.

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lmpspike {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Line {
  int from_bus = 0;
  int to_bus = 0;
  double reactance = 0.0;  // per unit
  std::optional<double> f_min;  // MW
  std::optional<double> f_max;  // MW
};

struct Generator {
  int bus = 0;
  double g_min = 0.0;
  double g_max = 0.0;
  double cost_quadratic = 0.0;  // diagonal entry of H, i.e. J(g) = 0.5*H*g^2 + h*g
  double cost_linear = 0.0;
};

// Buses are numbered 1..n; all vectors indexed by bus are stored 0-based.
struct GridCase {
  int num_buses = 0;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  Vector demand;                     // MW per bus
  std::vector<int> renewable_buses;  // ordered parameter buses (bus ids)
  int reference_bus = 1;

  int num_lines() const { return static_cast<int>(lines.size()); }
  int num_generators() const { return static_cast<int>(generators.size()); }
  int num_renewables() const { return static_cast<int>(renewable_buses.size()); }
  bool has_line_limits() const;
};

// Throws Error{Validation} on a violated invariant (connectivity, reactance,
// demand sign, cost convexity, bus ranges, limit signs).
void validate(const GridCase& grid);

GridCase parse_case_json(const std::string& text);
GridCase parse_case_matpower(const std::string& text);
// Dispatches on extension: ".m" is MATPOWER, anything else native JSON.
GridCase load_case(const std::filesystem::path& path);
std::string case_to_json(const GridCase& grid);

// Edge-vertex incidence: +1 at from_bus, -1 at to_bus.
Matrix incidence_matrix(const GridCase& grid);
Vector line_susceptances(const GridCase& grid);  // 1/x per line
Matrix weighted_laplacian(const GridCase& grid);  // A^T B A

struct PtdfMatrix {
  Matrix values;  // m x n
  int reference_bus = 1;
};

PtdfMatrix build_ptdf(const GridCase& grid);

// Flows for a zero-sum injection by solving the reduced Laplacian system
// directly (angles), independent of the PTDF assembly.
Vector dc_power_flow(const GridCase& grid, const Vector& injection);

struct LineLimitOptions {
  double gamma_line = 2.0;
  double lambda = 0.6;
  // Limit, as a fraction of the largest base flow, for lines that carry no
  // base flow. The scaled rule gives them a zero limit; a tiny positive cap
  // keeps both flow rows independent.
  double zero_flow_fraction = 1e-6;
};

// Base dispatch without line limits or renewables, then
// f_max = lambda*gamma*|f_base|, f_min = -f_max.
GridCase derive_line_limits(const GridCase& grid, const LineLimitOptions& options);
Vector base_case_flows(const GridCase& grid);

}  // namespace lmpspike
