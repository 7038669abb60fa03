// Command-line front end. Talks to the library only through the C API.

#include "lmpspike/lmpspike.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kExitConfig = 2;

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument(item);
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(text);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Price-spike analysis for DC power grids with stochastic renewables"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir, err_rel;
  long long seed = -1, n_samples = -1;
  const std::pair<const char*, const char*> commands[] = {{"regions", "enumerate critical regions"},
                                                          {"rank", "rank nodes by decay rate"},
                                                          {"mc", "Monte Carlo validation"},
                                                          {"ptdf", "dump the PTDF matrix"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "analysis config (JSON)")->required();
    sub->add_option("--seed", seed, "Monte Carlo seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--err-rel", err_rel, "relative spike threshold(s), comma separated");
    sub->add_option("--n-samples", n_samples, "Monte Carlo sample count");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read config " << config_path << "\n";
    return kExitConfig;
  }
  std::stringstream buf;
  buf << in.rdbuf();

  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(buf.str());
    if (!cfg.is_object()) throw std::invalid_argument("config must be a JSON object");
    if (seed >= 0) cfg["mc"]["seed"] = seed;
    if (n_samples != -1) cfg["mc"]["n_samples"] = n_samples;
    if (!out_dir.empty()) cfg["output_dir"] = out_dir;
    if (!err_rel.empty()) {
      const auto values = parse_list(err_rel);
      cfg["thresholds"].erase("alpha_minus");
      cfg["thresholds"].erase("alpha_plus");
      cfg["thresholds"]["err_rel"] = values.size() == 1 ? nlohmann::json(values[0]) : nlohmann::json(values);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::string base = std::filesystem::path(config_path).parent_path().string();
  char* summary = nullptr;
  const lmps_status st = lmps_run(command.c_str(), cfg.dump().c_str(), base.empty() ? "." : base.c_str(), &summary);
  if (st != LMPS_OK) {
    std::cerr << "error: " << lmps_last_error() << "\n";
    return static_cast<int>(st);
  }
  std::cout << summary;
  lmps_string_free(summary);
  return 0;
}
