#include "lmpspike/analysis.hpp"

#include "lmpspike/error.hpp"
#include "text.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace lmpspike {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& what) { fail(ErrorKind::Validation, "config: " + what); }

double number(const json& j, const std::string& key) {
  if (!j.is_number()) bad("'" + key + "' must be a number");
  return j.get<double>();
}

Vector vec(const json& j, const std::string& key) {
  if (!j.is_array()) bad("'" + key + "' must be an array of numbers");
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], key);
  return v;
}

std::vector<int> ints(const json& j, const std::string& key) {
  if (!j.is_array()) bad("'" + key + "' must be an array of integers");
  std::vector<int> out;
  for (const json& e : j) {
    if (!e.is_number_integer()) bad("'" + key + "' must be an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

std::vector<double> scalar_or_list(const json& j, const std::string& key) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array() || j.empty()) bad("'" + key + "' must be a number or a non-empty list");
  std::vector<double> out;
  for (const json& e : j) out.push_back(number(e, key));
  return out;
}

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad("'" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) bad("unknown key '" + it.key() + "' in " + where);
  }
}

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(to_json(Vector(m.row(i).transpose())));
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Validation, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorKind::Validation, "cannot write " + path.string());
}

std::string point_label(const char* name, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%g", name, v);
  return buf;
}

}  // namespace

AnalysisConfig parse_config(const std::string& text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("config is not valid JSON: ") + e.what());
  }
  only_keys(doc, "config",
            {"case", "gamma_line", "lambda_safety", "zero_flow_fraction", "renewable_buses", "installed", "theta_box",
             "forecast", "covariance", "thresholds", "node_filter", "epsilon", "mc", "output_dir"});
  AnalysisConfig c;
  if (!doc.contains("case") || !doc["case"].is_string()) bad("'case' (path to the case file) is required");
  c.case_path = doc["case"].get<std::string>();
  if (c.case_path.is_relative()) c.case_path = base_dir / c.case_path;
  if (doc.contains("gamma_line")) c.gamma_line = number(doc["gamma_line"], "gamma_line");
  if (doc.contains("lambda_safety")) c.lambda_safety = number(doc["lambda_safety"], "lambda_safety");
  if (doc.contains("zero_flow_fraction")) c.zero_flow_fraction = number(doc["zero_flow_fraction"], "zero_flow_fraction");
  if (doc.contains("renewable_buses")) c.renewable_buses = ints(doc["renewable_buses"], "renewable_buses");
  if (doc.contains("installed")) c.installed = vec(doc["installed"], "installed");
  if (doc.contains("theta_box")) {
    const json& b = doc["theta_box"];
    only_keys(b, "theta_box", {"lower", "upper"});
    if (b.contains("lower")) c.box_lower = vec(b["lower"], "theta_box.lower");
    if (b.contains("upper")) c.box_upper = vec(b["upper"], "theta_box.upper");
  }
  if (doc.contains("forecast")) {
    const json& f = doc["forecast"];
    only_keys(f, "forecast", {"fraction_of_installed", "mu"});
    if (f.contains("fraction_of_installed") && f.contains("mu")) bad("forecast takes either fraction_of_installed or mu");
    if (f.contains("fraction_of_installed")) {
      c.forecast_fraction = number(f["fraction_of_installed"], "forecast.fraction_of_installed");
      if (!(*c.forecast_fraction > 0.0)) bad("forecast.fraction_of_installed must be positive");
    }
    if (f.contains("mu")) c.forecast_mu = vec(f["mu"], "forecast.mu");
  }
  if (doc.contains("covariance")) {
    const json& s = doc["covariance"];
    only_keys(s, "covariance", {"q", "kappa", "tau_squared", "sigma"});
    if (s.contains("q") && s.contains("sigma")) bad("covariance takes either q or sigma");
    if (s.contains("q")) c.q_values = scalar_or_list(s["q"], "covariance.q");
    for (double q : c.q_values)
      if (!(q > 0.0)) bad("covariance.q must be positive");
    if (s.contains("kappa")) c.kappa = number(s["kappa"], "covariance.kappa");
    if (s.contains("tau_squared")) c.tau_squared = number(s["tau_squared"], "covariance.tau_squared");
    if (!(c.kappa > 0.0)) bad("covariance.kappa must be positive");
    if (!(c.tau_squared > 0.0)) bad("covariance.tau_squared must be positive");
    if (s.contains("sigma")) {
      const json& m = s["sigma"];
      if (!m.is_array() || m.empty()) bad("covariance.sigma must be a square matrix");
      Matrix sig(m.size(), m.size());
      for (size_t i = 0; i < m.size(); ++i) {
        const Vector row = vec(m[i], "covariance.sigma");
        if (row.size() != sig.cols()) bad("covariance.sigma must be a square matrix");
        sig.row(i) = row.transpose();
      }
      c.sigma = sig;
    }
  }
  if (doc.contains("thresholds")) {
    const json& t = doc["thresholds"];
    only_keys(t, "thresholds", {"err_rel", "alpha_minus", "alpha_plus"});
    const bool explicit_alpha = t.contains("alpha_minus") || t.contains("alpha_plus");
    if (t.contains("err_rel") && explicit_alpha) bad("thresholds take either err_rel or alpha_minus/alpha_plus");
    if (t.contains("err_rel")) c.err_rel = scalar_or_list(t["err_rel"], "thresholds.err_rel");
    for (double e : c.err_rel)
      if (!(e > 0.0)) bad("thresholds.err_rel must be positive");
    if (explicit_alpha) {
      if (!t.contains("alpha_minus") || !t.contains("alpha_plus")) bad("alpha_minus and alpha_plus go together");
      c.alpha_minus = vec(t["alpha_minus"], "thresholds.alpha_minus");
      c.alpha_plus = vec(t["alpha_plus"], "thresholds.alpha_plus");
    }
  }
  if (doc.contains("node_filter")) c.node_filter = ints(doc["node_filter"], "node_filter");
  if (doc.contains("epsilon")) c.epsilon = number(doc["epsilon"], "epsilon");
  if (!(c.epsilon > 0.0)) bad("epsilon must be positive");
  if (doc.contains("mc")) {
    const json& m = doc["mc"];
    only_keys(m, "mc", {"n_samples", "seed", "bins", "histogram_nodes"});
    if (m.contains("n_samples")) {
      if (!m["n_samples"].is_number_integer()) bad("mc.n_samples must be an integer");
      c.n_samples = m["n_samples"].get<long long>();
    }
    if (m.contains("seed")) {
      if (!m["seed"].is_number_integer() || m["seed"].get<long long>() < 0) bad("mc.seed must be a non-negative integer");
      c.seed = m["seed"].get<std::uint64_t>();
    }
    if (m.contains("bins")) {
      if (!m["bins"].is_number_integer()) bad("mc.bins must be an integer");
      c.bins = m["bins"].get<int>();
    }
    if (m.contains("histogram_nodes")) c.histogram_nodes = ints(m["histogram_nodes"], "mc.histogram_nodes");
  }
  if (c.n_samples < 1) bad("mc.n_samples must be at least 1");
  if (c.bins < 2) bad("mc.bins must be at least 2");
  if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string()) bad("'output_dir' must be a string");
    c.output_dir = doc["output_dir"].get<std::string>();
  }
  return c;
}

std::string config_to_json(const AnalysisConfig& c) {
  json doc;
  doc["case"] = c.case_path.string();
  if (c.gamma_line) doc["gamma_line"] = *c.gamma_line;
  doc["lambda_safety"] = c.lambda_safety;
  doc["zero_flow_fraction"] = c.zero_flow_fraction;
  if (!c.renewable_buses.empty()) doc["renewable_buses"] = c.renewable_buses;
  if (c.installed) doc["installed"] = to_json(*c.installed);
  if (c.box_lower || c.box_upper) {
    doc["theta_box"] = json::object();
    if (c.box_lower) doc["theta_box"]["lower"] = to_json(*c.box_lower);
    if (c.box_upper) doc["theta_box"]["upper"] = to_json(*c.box_upper);
  }
  if (c.forecast_fraction) doc["forecast"] = {{"fraction_of_installed", *c.forecast_fraction}};
  if (c.forecast_mu) doc["forecast"] = {{"mu", to_json(*c.forecast_mu)}};
  json cov{{"kappa", c.kappa}, {"tau_squared", c.tau_squared}};
  if (!c.q_values.empty()) cov["q"] = c.q_values.size() == 1 ? json(c.q_values[0]) : json(c.q_values);
  if (c.sigma) cov["sigma"] = to_json(*c.sigma);
  doc["covariance"] = cov;
  json thr = json::object();
  if (!c.err_rel.empty()) thr["err_rel"] = c.err_rel.size() == 1 ? json(c.err_rel[0]) : json(c.err_rel);
  if (c.alpha_minus) thr["alpha_minus"] = to_json(*c.alpha_minus);
  if (c.alpha_plus) thr["alpha_plus"] = to_json(*c.alpha_plus);
  doc["thresholds"] = thr;
  if (!c.node_filter.empty()) doc["node_filter"] = c.node_filter;
  doc["epsilon"] = c.epsilon;
  doc["mc"] = {{"n_samples", c.n_samples}, {"seed", c.seed}, {"bins", c.bins}};
  if (!c.histogram_nodes.empty()) doc["mc"]["histogram_nodes"] = c.histogram_nodes;
  doc["output_dir"] = c.output_dir.string();
  return doc.dump(2) + "\n";
}

AnalysisModel build_model(const AnalysisConfig& c, bool with_regions) {
  AnalysisModel m;
  if (!fs::exists(c.case_path)) fail(ErrorKind::Parse, "case file not found: " + c.case_path.string());
  m.grid = load_case(c.case_path);
  if (!c.renewable_buses.empty()) {
    m.grid.renewable_buses = c.renewable_buses;
    validate(m.grid);
  }
  if (m.grid.renewable_buses.empty()) bad("no renewable buses given");
  if (c.gamma_line) {
    m.grid = derive_line_limits(m.grid, LineLimitOptions{*c.gamma_line, c.lambda_safety, c.zero_flow_fraction});
  } else if (!m.grid.has_line_limits()) {
    bad("case has no line limits; set gamma_line to derive them");
  }
  m.problem = assemble_mpqp(m.grid);
  if (!with_regions) return m;

  const int nt = m.grid.num_renewables();
  double headroom = m.grid.demand.sum();
  for (const Generator& g : m.grid.generators) headroom -= g.g_min;
  const Vector lo = c.box_lower.value_or(Vector::Zero(nt));
  const Vector hi = c.box_upper.value_or(Vector::Constant(nt, headroom));
  if (lo.size() != nt || hi.size() != nt) bad("theta_box has wrong dimension");
  const Polytope theta = feasible_set(m.problem, lo, hi);
  m.decomposition = enumerate_regions(m.problem, theta);
  if (c.installed) {
    if (c.installed->size() != nt) bad("installed has wrong dimension");
    m.installed = *c.installed;
  } else {
    m.installed = m.decomposition.box_upper;
  }
  return m;
}

Vector lmp_at(const AnalysisModel& m, const Vector& theta) {
  if (const auto hit = locate_region(m.decomposition, theta)) return hit->lmp;
  return compute_lmp(solve_opf(m.problem, theta), m.problem.ptdf).values;
}

namespace {

std::string ptdf_csv(const AnalysisModel& m) {
  std::ostringstream os;
  os << "line,from,to";
  for (int b = 1; b <= m.grid.num_buses; ++b) os << ",bus_" << b;
  os << '\n';
  for (int l = 0; l < m.grid.num_lines(); ++l) {
    os << l + 1 << ',' << m.grid.lines[l].from_bus << ',' << m.grid.lines[l].to_bus;
    for (int b = 0; b < m.grid.num_buses; ++b) os << ',' << text::num(m.problem.ptdf(l, b));
    os << '\n';
  }
  return os.str();
}

std::string cmd_ptdf(const AnalysisConfig& c) {
  const AnalysisModel m = build_model(c, false);
  write_file(c.output_dir / "ptdf.csv", ptdf_csv(m));
  write_file(c.output_dir / "resolved_config.json", config_to_json(c));
  std::ostringstream os;
  os << "PTDF " << m.grid.num_lines() << " x " << m.grid.num_buses << " (reference bus " << m.grid.reference_bus
     << ") written to " << (c.output_dir / "ptdf.csv").string() << '\n';
  return os.str();
}

std::string regions_summary(const AnalysisModel& m) {
  const RegionDecomposition& d = m.decomposition;
  std::ostringstream os;
  os << "regions M = " << d.regions.size() << '\n';
  os << "coverage ratio = " << text::num(d.coverage_volume_ratio, 6) << '\n';
  os << "installed (axis maxima) =";
  for (Eigen::Index j = 0; j < m.installed.size(); ++j) os << ' ' << text::num(m.installed(j), 6);
  os << '\n';
  os << "facet expansions = " << d.diagnostics.facet_expansions << ", degenerate candidates = "
     << d.diagnostics.degenerate_regions << ", unresolved facets = " << d.diagnostics.unresolved_facets
     << ", LICQ violations = " << d.diagnostics.licq_violations << '\n';
  for (const CriticalRegion& r : d.regions) {
    os << "  region " << r.id << (r.licq ? "" : " (LICQ fails)") << ":";
    for (int row : r.active_set.binding) os << ' ' << to_string(m.problem.rows[row]);
    os << '\n';
  }
  return os.str();
}

std::string cmd_regions(const AnalysisConfig& c) {
  const AnalysisModel m = build_model(c);
  write_file(c.output_dir / "decomposition.json", decomposition_to_json(m.decomposition, m.problem) + "\n");
  write_file(c.output_dir / "resolved_config.json", config_to_json(c));
  return regions_summary(m);
}

// One point of a (q, err_rel) sweep.
struct Point {
  std::optional<double> q;
  std::optional<double> err_rel;
  fs::path dir;
};

std::vector<Point> sweep_points(const AnalysisConfig& c) {
  std::vector<std::optional<double>> qs, errs;
  for (double q : c.q_values) qs.push_back(q);
  if (qs.empty()) qs.push_back(std::nullopt);
  for (double e : c.err_rel) errs.push_back(e);
  if (errs.empty()) errs.push_back(std::nullopt);
  std::vector<Point> pts;
  for (const auto& q : qs) {
    for (const auto& e : errs) {
      fs::path dir = c.output_dir;
      if (qs.size() > 1) dir /= point_label("q", *q);
      if (errs.size() > 1) dir /= point_label("err_rel", *e);
      pts.push_back({q, e, dir});
    }
  }
  return pts;
}

GaussianModel gaussian_model(const AnalysisConfig& c, const AnalysisModel& m, const std::optional<double>& q) {
  const int nt = m.grid.num_renewables();
  GaussianModel g;
  if (c.forecast_fraction) {
    g.mu = *c.forecast_fraction * m.installed;
  } else if (c.forecast_mu) {
    g.mu = *c.forecast_mu;
  } else {
    bad("forecast needs fraction_of_installed or mu");
  }
  if (g.mu.size() != nt) bad("forecast.mu has wrong dimension");
  if (q) {
    g.sigma = build_covariance(m.grid, CovarianceSpec{c.kappa, c.tau_squared, *q, m.installed});
  } else if (c.sigma) {
    g.sigma = *c.sigma;
  } else {
    bad("covariance needs q or sigma");
  }
  if (g.sigma.rows() != nt) bad("covariance.sigma has wrong dimension");
  return g;
}

SpikeSpec spike_spec(const AnalysisConfig& c, const Vector& lmp_mean, const std::optional<double>& err) {
  SpikeSpec spec;
  if (err) {
    spec = build_thresholds(lmp_mean, *err);
  } else if (c.alpha_minus && c.alpha_plus) {
    spec.alpha_minus = *c.alpha_minus;
    spec.alpha_plus = *c.alpha_plus;
  } else {
    bad("thresholds need err_rel or alpha_minus/alpha_plus");
  }
  spec.node_filter = c.node_filter;
  validate_spec(spec, lmp_mean);
  return spec;
}

std::string point_config(const AnalysisConfig& c, const Point& p, const GaussianModel& g, const Vector& lmp_mean,
                         const SpikeSpec& spec, const AnalysisModel& m) {
  json doc = json::parse(config_to_json(c));
  if (p.q) doc["covariance"]["q"] = *p.q;
  if (p.err_rel) doc["thresholds"]["err_rel"] = *p.err_rel;
  doc["output_dir"] = p.dir.string();
  doc["resolved"] = {{"generator", kGeneratorName},
                     {"installed", to_json(m.installed)},
                     {"mu", to_json(g.mu)},
                     {"sigma", to_json(g.sigma)},
                     {"lmp_at_mean", to_json(lmp_mean)},
                     {"alpha_minus", to_json(spec.alpha_minus)},
                     {"alpha_plus", to_json(spec.alpha_plus)},
                     {"num_regions", m.decomposition.regions.size()}};
  return doc.dump(2) + "\n";
}

std::string point_heading(const Point& p) {
  std::ostringstream os;
  os << "==";
  if (p.q) os << " q " << *p.q;
  if (p.err_rel) os << " err_rel " << *p.err_rel;
  os << " ==\n";
  return os.str();
}

std::string ranking_table(const SpikeDecayResult& res, const NodeRanking& rk) {
  std::ostringstream os;
  os << "rank  node  I_star            normalized\n";
  for (size_t pos = 0; pos < rk.order.size(); ++pos) {
    size_t k = 0;
    while (res.nodes[k].node != rk.order[pos]) ++k;
    char line[160];
    std::snprintf(line, sizeof line, "%4zu  %4d  %-16s  %s\n", pos + 1, res.nodes[k].node,
                  text::num(res.nodes[k].rate, 4).c_str(), text::num(rk.normalized[k], 4).c_str());
    os << line;
  }
  return os.str();
}

std::string cmd_rank(const AnalysisConfig& c) {
  const AnalysisModel m = build_model(c);
  write_file(c.output_dir / "resolved_config.json", config_to_json(c));
  std::ostringstream os;
  os << "regions M = " << m.decomposition.regions.size() << '\n';
  for (const Point& p : sweep_points(c)) {
    const GaussianModel g = gaussian_model(c, m, p.q);
    const Vector lmp_mean = lmp_at(m, g.mu);
    const SpikeSpec spec = spike_spec(c, lmp_mean, p.err_rel);
    const RateFunction rf(g.mu, g.sigma, c.epsilon);
    const SpikeDecayResult res = decay_rates(m.decomposition, rf, spec);
    const NodeRanking rk = rank_nodes(res);
    const std::string table = ranking_table(res, rk);
    write_file(p.dir / "decay_rates.csv", decay_rates_csv(res, rk));
    write_file(p.dir / "ranking.txt", table);
    write_file(p.dir / "resolved_config.json", point_config(c, p, g, lmp_mean, spec, m));
    os << point_heading(p) << table;
  }
  return os.str();
}

std::string cmd_mc(const AnalysisConfig& c) {
  const AnalysisModel m = build_model(c);
  write_file(c.output_dir / "resolved_config.json", config_to_json(c));
  std::ostringstream os;
  os << "regions M = " << m.decomposition.regions.size() << ", samples n = " << c.n_samples << ", seed = " << c.seed
     << '\n';
  std::optional<double> located_q;
  bool located = false;
  SampleLocations loc;
  for (const Point& p : sweep_points(c)) {
    const GaussianModel g = gaussian_model(c, m, p.q);
    if (!located || located_q != p.q) {
      loc = locate_samples(sample(g, c.n_samples, c.seed), m.decomposition, m.problem);
      located = true;
      located_q = p.q;
    }
    const Vector lmp_mean = lmp_at(m, g.mu);
    const SpikeSpec spec = spike_spec(c, lmp_mean, p.err_rel);
    const RateFunction rf(g.mu, g.sigma, c.epsilon);
    const SpikeDecayResult res = decay_rates(m.decomposition, rf, spec);
    const NodeRanking rk = rank_nodes(res);
    const MCResult mc = mc_spike_probabilities(loc, m.decomposition, spec, c.seed);
    const RankingAgreement agree = compare_ranking(mc, res);

    write_file(p.dir / "mc.csv", mc_csv(mc, spec, lmp_mean, res, rk));
    std::vector<int> hist_nodes = c.histogram_nodes.empty() ? mc.nodes : c.histogram_nodes;
    json modes = json::object();
    for (int node : hist_nodes) {
      const Histogram h = empirical_density(loc, m.decomposition, node, c.bins, &spec);
      write_file(p.dir / ("hist_node_" + std::to_string(node) + ".json"), histogram_json(h));
      modes[std::to_string(node)] = count_modes(h);
    }
    json approx = json::object();
    for (const NodeDecay& nd : res.nodes)
      approx[std::to_string(nd.node)] = nd.reachable() ? json(approx_probability(nd.rate, c.epsilon)) : json(0.0);
    json report{{"n_samples", mc.n_samples},
                {"seed", mc.seed},
                {"generator", kGeneratorName},
                {"infeasible", mc.infeasible},
                {"direct_solves", mc.direct_solves},
                {"p_any", mc.any_probability},
                {"floor", agree.floor},
                {"resolvable_ldp_order", agree.resolvable},
                {"resolvable_mc_order", agree.mc_order},
                {"discordant_pairs", agree.discordant_pairs},
                {"exact_match", agree.exact_match},
                {"kendall_tau", agree.kendall_tau},
                {"ldp_order", rk.order},
                {"ldp_probability_approximation", approx},
                {"histogram_modes", modes}};
    write_file(p.dir / "comparison.json", report.dump(2) + "\n");
    write_file(p.dir / "resolved_config.json", point_config(c, p, g, lmp_mean, spec, m));

    os << point_heading(p);
    os << "node  p_hat         I_star        ldp_rank\n";
    for (size_t j = 0; j < mc.nodes.size(); ++j) {
      size_t k = 0;
      while (k < res.nodes.size() && res.nodes[k].node != mc.nodes[j]) ++k;
      char line[160];
      std::snprintf(line, sizeof line, "%4d  %-12s  %-12s  %d\n", mc.nodes[j], text::num(mc.probability[j], 5).c_str(),
                    text::num(res.nodes[k].rate, 4).c_str(), rk.rank[k]);
      os << line;
    }
    os << "P(any spike) = " << text::num(mc.any_probability, 5) << ", infeasible samples = " << mc.infeasible
       << ", ranking over " << agree.resolvable.size() << " resolvable nodes: "
       << (agree.exact_match ? "exact match" : "mismatch") << " (Kendall tau " << text::num(agree.kendall_tau, 4)
       << ")\n";
  }
  return os.str();
}

}  // namespace

std::string run_command(const std::string& command, const AnalysisConfig& c) {
  if (command == "ptdf") return cmd_ptdf(c);
  if (command == "regions") return cmd_regions(c);
  if (command == "rank") return cmd_rank(c);
  if (command == "mc") return cmd_mc(c);
  bad("unknown command '" + command + "'");
}

}  // namespace lmpspike
