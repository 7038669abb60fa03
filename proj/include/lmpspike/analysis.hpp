#pragma once

// Config-driven pipelines behind the command-line subcommands.

#include "lmpspike/stochastic.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lmpspike {

struct AnalysisConfig {
  std::filesystem::path case_path;
  std::optional<double> gamma_line;  // derive line limits when set
  double lambda_safety = 0.6;
  double zero_flow_fraction = 1e-6;
  std::vector<int> renewable_buses;  // empty: keep the case's list

  std::optional<Vector> installed;
  std::optional<Vector> box_lower;
  std::optional<Vector> box_upper;

  std::optional<double> forecast_fraction;
  std::optional<Vector> forecast_mu;

  std::vector<double> q_values;
  double kappa = 2.0;
  double tau_squared = 1.0;
  std::optional<Matrix> sigma;

  std::vector<double> err_rel;
  std::optional<Vector> alpha_minus;
  std::optional<Vector> alpha_plus;
  std::vector<int> node_filter;
  double epsilon = 1.0;

  long long n_samples = 100000;
  std::uint64_t seed = 1;
  int bins = 200;
  std::vector<int> histogram_nodes;  // empty: every analysed node

  std::filesystem::path output_dir = "out";
};

// Relative case paths resolve against base_dir. Throws Error{Parse} or
// Error{Validation}.
AnalysisConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);
std::string config_to_json(const AnalysisConfig& config);

// Model shared by every command: case with limits, MPQP, parameter set and
// its region decomposition.
struct AnalysisModel {
  GridCase grid;
  MpqpProblem problem;
  RegionDecomposition decomposition;
  Vector installed;
};

AnalysisModel build_model(const AnalysisConfig& config, bool with_regions = true);

// LMP at theta: region map when theta is covered, otherwise a direct solve.
Vector lmp_at(const AnalysisModel& model, const Vector& theta);

// Runs "regions", "rank", "mc" or "ptdf", writing files below
// config.output_dir. Returns the text summary printed by the CLI.
std::string run_command(const std::string& command, const AnalysisConfig& config);

}  // namespace lmpspike
