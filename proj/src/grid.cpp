#include "lmpspike/grid.hpp"

#include "lmpspike/error.hpp"
#include "lmpspike/qp.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <regex>
#include <sstream>

namespace lmpspike {

using nlohmann::json;

bool GridCase::has_line_limits() const {
  return std::all_of(lines.begin(), lines.end(), [](const Line& l) { return l.f_min && l.f_max; });
}

void validate(const GridCase& g) {
  const int n = g.num_buses;
  if (n < 1) fail(ErrorKind::Validation, "case has no buses");
  auto check_bus = [n](int bus, const std::string& what) {
    if (bus < 1 || bus > n) fail(ErrorKind::Validation, what + " refers to unknown bus " + std::to_string(bus));
  };
  if (g.demand.size() != n) fail(ErrorKind::Validation, "demand vector length differs from bus count");
  for (int i = 0; i < n; ++i) {
    if (!(g.demand(i) >= 0.0)) fail(ErrorKind::Validation, "negative demand at bus " + std::to_string(i + 1));
  }
  for (size_t l = 0; l < g.lines.size(); ++l) {
    const Line& line = g.lines[l];
    const std::string name = "line " + std::to_string(l + 1);
    check_bus(line.from_bus, name);
    check_bus(line.to_bus, name);
    if (line.from_bus == line.to_bus) fail(ErrorKind::Validation, name + " is a self loop");
    if (!(line.reactance > 0.0)) fail(ErrorKind::Validation, name + " has nonpositive reactance");
    if (line.f_max && !(*line.f_max >= 0.0)) fail(ErrorKind::Validation, name + " has negative f_max");
    if (line.f_min && !(*line.f_min <= 0.0)) fail(ErrorKind::Validation, name + " has positive f_min");
  }
  if (g.generators.empty()) fail(ErrorKind::Validation, "case has no controllable generators");
  for (size_t k = 0; k < g.generators.size(); ++k) {
    const Generator& gen = g.generators[k];
    const std::string name = "generator " + std::to_string(k + 1);
    check_bus(gen.bus, name);
    if (!(gen.cost_quadratic > 0.0)) fail(ErrorKind::Validation, name + " has nonpositive quadratic cost");
    if (!(gen.g_min <= gen.g_max)) fail(ErrorKind::Validation, name + " has g_min > g_max");
  }
  std::vector<int> seen;
  for (int bus : g.renewable_buses) {
    check_bus(bus, "renewable");
    if (std::find(seen.begin(), seen.end(), bus) != seen.end())
      fail(ErrorKind::Validation, "renewable bus " + std::to_string(bus) + " listed twice");
    seen.push_back(bus);
  }
  check_bus(g.reference_bus, "reference");

  // Connectivity by breadth-first search.
  std::vector<std::vector<int>> adj(n);
  for (const Line& l : g.lines) {
    adj[l.from_bus - 1].push_back(l.to_bus - 1);
    adj[l.to_bus - 1].push_back(l.from_bus - 1);
  }
  std::vector<bool> visited(n, false);
  std::queue<int> q;
  q.push(0);
  visited[0] = true;
  int count = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (!visited[v]) {
        visited[v] = true;
        ++count;
        q.push(v);
      }
    }
  }
  if (count != n) fail(ErrorKind::Validation, "network graph is disconnected");
}

namespace {

double number_field(const json& obj, const char* key, const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number())
    fail(ErrorKind::Parse, context + " is missing numeric field '" + key + "'");
  return it->get<double>();
}

std::optional<double> optional_number(const json& obj, const char* key, const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) fail(ErrorKind::Parse, context + " field '" + key + "' is not a number");
  return it->get<double>();
}

int bus_count_from(const json& buses) {
  if (buses.is_number_integer()) return buses.get<int>();
  if (!buses.is_array()) fail(ErrorKind::Parse, "'buses' must be an array of bus ids or a count");
  std::vector<int> ids;
  for (const auto& b : buses) {
    if (!b.is_number_integer()) fail(ErrorKind::Parse, "bus ids must be integers");
    ids.push_back(b.get<int>());
  }
  std::sort(ids.begin(), ids.end());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] != static_cast<int>(i) + 1) fail(ErrorKind::Parse, "bus ids must be exactly 1..n");
  }
  return static_cast<int>(ids.size());
}

}  // namespace

GridCase parse_case_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("case JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::Parse, "case JSON must be an object");
  if (!doc.contains("buses")) fail(ErrorKind::Parse, "case JSON is missing 'buses'");

  GridCase g;
  g.num_buses = bus_count_from(doc["buses"]);
  g.demand = Vector::Zero(g.num_buses);

  const json lines = doc.value("lines", json::array());
  for (size_t l = 0; l < lines.size(); ++l) {
    const std::string ctx = "line " + std::to_string(l + 1);
    const json& e = lines[l];
    Line line;
    line.from_bus = static_cast<int>(number_field(e, "from", ctx));
    line.to_bus = static_cast<int>(number_field(e, "to", ctx));
    line.reactance = number_field(e, "x", ctx);
    line.f_max = optional_number(e, "fmax", ctx);
    line.f_min = optional_number(e, "fmin", ctx);
    if (line.f_max && !line.f_min) line.f_min = -*line.f_max;
    g.lines.push_back(line);
  }

  const json gens = doc.value("generators", json::array());
  for (size_t k = 0; k < gens.size(); ++k) {
    const std::string ctx = "generator " + std::to_string(k + 1);
    const json& e = gens[k];
    Generator gen;
    gen.bus = static_cast<int>(number_field(e, "bus", ctx));
    gen.g_min = optional_number(e, "gmin", ctx).value_or(0.0);
    gen.g_max = number_field(e, "gmax", ctx);
    // Polynomial coefficients c2*g^2 + c1*g, so H = 2*c2.
    gen.cost_quadratic = 2.0 * number_field(e, "c2", ctx);
    gen.cost_linear = optional_number(e, "c1", ctx).value_or(0.0);
    g.generators.push_back(gen);
  }

  if (doc.contains("loads")) {
    const json& loads = doc["loads"];
    if (!loads.is_object()) fail(ErrorKind::Parse, "'loads' must map bus id to MW");
    for (const auto& [key, value] : loads.items()) {
      int bus = 0;
      try {
        bus = std::stoi(key);
      } catch (...) {
        fail(ErrorKind::Parse, "load key '" + key + "' is not a bus id");
      }
      if (bus < 1 || bus > g.num_buses) fail(ErrorKind::Parse, "load at unknown bus " + key);
      if (!value.is_number()) fail(ErrorKind::Parse, "load at bus " + key + " is not a number");
      g.demand(bus - 1) += value.get<double>();
    }
  }
  if (doc.contains("renewables")) {
    for (const auto& b : doc["renewables"]) g.renewable_buses.push_back(b.get<int>());
  }
  g.reference_bus = doc.value("reference", 1);
  validate(g);
  return g;
}

namespace {

// Extracts the numeric rows of "mpc.<name> = [ ... ];".
std::vector<std::vector<double>> matpower_table(const std::string& text, const std::string& name) {
  const std::regex start("mpc\\." + name + "\\s*=\\s*\\[");
  std::smatch m;
  if (!std::regex_search(text, m, start)) return {};
  const size_t begin = m.position(0) + m.length(0);
  const size_t end = text.find(']', begin);
  if (end == std::string::npos) fail(ErrorKind::Parse, "unterminated mpc." + name + " table");
  std::string body = text.substr(begin, end - begin);

  std::vector<std::vector<double>> rows;
  std::istringstream lines(body);
  std::string line;
  while (std::getline(lines, line)) {
    const size_t pct = line.find('%');
    if (pct != std::string::npos) line.resize(pct);
    std::istringstream parts(line);
    std::string chunk;
    while (std::getline(parts, chunk, ';')) {
      std::istringstream tokens(chunk);
      std::vector<double> row;
      std::string tok;
      while (tokens >> tok) {
        try {
          row.push_back(std::stod(tok));
        } catch (...) {
          fail(ErrorKind::Parse, "mpc." + name + ": bad number '" + tok + "'");
        }
      }
      if (!row.empty()) rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace

GridCase parse_case_matpower(const std::string& text) {
  const auto bus = matpower_table(text, "bus");
  const auto gen = matpower_table(text, "gen");
  const auto branch = matpower_table(text, "branch");
  const auto gencost = matpower_table(text, "gencost");
  if (bus.empty()) fail(ErrorKind::Parse, "MATPOWER case has no mpc.bus table");
  if (gen.empty()) fail(ErrorKind::Parse, "MATPOWER case has no mpc.gen table");
  if (gencost.size() < gen.size()) fail(ErrorKind::Parse, "mpc.gencost must have one row per generator");

  GridCase g;
  g.num_buses = static_cast<int>(bus.size());
  g.demand = Vector::Zero(g.num_buses);
  for (size_t i = 0; i < bus.size(); ++i) {
    if (bus[i].size() < 3) fail(ErrorKind::Parse, "mpc.bus row " + std::to_string(i + 1) + " is too short");
    if (static_cast<int>(bus[i][0]) != static_cast<int>(i) + 1)
      fail(ErrorKind::Parse, "mpc.bus numbers must be 1..n in order");
    g.demand(i) = bus[i][2];
  }
  for (size_t k = 0; k < gen.size(); ++k) {
    const auto& row = gen[k];
    const auto& cost = gencost[k];
    const std::string ctx = "generator " + std::to_string(k + 1);
    if (row.size() < 10) fail(ErrorKind::Parse, "mpc.gen row for " + ctx + " is too short");
    if (cost.size() < 4 || static_cast<int>(cost[0]) != 2)
      fail(ErrorKind::Parse, ctx + ": only polynomial gencost (model 2) is supported");
    const int ncost = static_cast<int>(cost[3]);
    if (ncost < 1 || ncost > 3 || static_cast<int>(cost.size()) < 4 + ncost)
      fail(ErrorKind::Parse, ctx + ": gencost polynomial degree must be at most 2");
    double c2 = 0.0, c1 = 0.0;
    if (ncost == 3) {
      c2 = cost[4];
      c1 = cost[5];
    } else if (ncost == 2) {
      c1 = cost[4];
    }
    Generator gn;
    gn.bus = static_cast<int>(row[0]);
    gn.g_max = row[8];
    gn.g_min = row[9];
    gn.cost_quadratic = 2.0 * c2;
    gn.cost_linear = c1;
    g.generators.push_back(gn);
  }
  for (size_t l = 0; l < branch.size(); ++l) {
    const auto& row = branch[l];
    if (row.size() < 4) fail(ErrorKind::Parse, "mpc.branch row " + std::to_string(l + 1) + " is missing reactance");
    if (row.size() > 10 && row[10] == 0.0) continue;  // out of service
    Line line;
    line.from_bus = static_cast<int>(row[0]);
    line.to_bus = static_cast<int>(row[1]);
    // Transformers: the DC susceptance is 1 / (x * tap), as in MATPOWER's makeBdc.
    const double tap = row.size() > 8 && row[8] != 0.0 ? row[8] : 1.0;
    line.reactance = row[3] * tap;
    g.lines.push_back(line);
  }
  g.reference_bus = 1;
  validate(g);
  return g;
}

GridCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Parse, "cannot open case file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".m") return parse_case_matpower(buf.str());
  return parse_case_json(buf.str());
}

std::string case_to_json(const GridCase& g) {
  json doc;
  json buses = json::array();
  for (int i = 1; i <= g.num_buses; ++i) buses.push_back(i);
  doc["buses"] = buses;
  json lines = json::array();
  for (const Line& l : g.lines) {
    json e = {{"from", l.from_bus}, {"to", l.to_bus}, {"x", l.reactance}};
    if (l.f_max) e["fmax"] = *l.f_max;
    if (l.f_min) e["fmin"] = *l.f_min;
    lines.push_back(e);
  }
  doc["lines"] = lines;
  json gens = json::array();
  for (const Generator& gn : g.generators) {
    gens.push_back({{"bus", gn.bus},
                    {"gmin", gn.g_min},
                    {"gmax", gn.g_max},
                    {"c2", 0.5 * gn.cost_quadratic},
                    {"c1", gn.cost_linear}});
  }
  doc["generators"] = gens;
  json loads = json::object();
  for (int i = 0; i < g.num_buses; ++i)
    if (g.demand(i) != 0.0) loads[std::to_string(i + 1)] = g.demand(i);
  doc["loads"] = loads;
  doc["renewables"] = g.renewable_buses;
  doc["reference"] = g.reference_bus;
  return doc.dump(2);
}

Matrix incidence_matrix(const GridCase& g) {
  Matrix a = Matrix::Zero(g.num_lines(), g.num_buses);
  for (int l = 0; l < g.num_lines(); ++l) {
    a(l, g.lines[l].from_bus - 1) = 1.0;
    a(l, g.lines[l].to_bus - 1) = -1.0;
  }
  return a;
}

Vector line_susceptances(const GridCase& g) {
  Vector b(g.num_lines());
  for (int l = 0; l < g.num_lines(); ++l) b(l) = 1.0 / g.lines[l].reactance;
  return b;
}

Matrix weighted_laplacian(const GridCase& g) {
  const Matrix a = incidence_matrix(g);
  return a.transpose() * line_susceptances(g).asDiagonal() * a;
}

namespace {

std::vector<int> non_reference(const GridCase& g) {
  std::vector<int> keep;
  for (int i = 0; i < g.num_buses; ++i)
    if (i != g.reference_bus - 1) keep.push_back(i);
  return keep;
}

}  // namespace

PtdfMatrix build_ptdf(const GridCase& g) {
  const int n = g.num_buses;
  const int m = g.num_lines();
  const Matrix a = incidence_matrix(g);
  const Vector w = line_susceptances(g);
  const Matrix lap = a.transpose() * w.asDiagonal() * a;
  const std::vector<int> keep = non_reference(g);
  const int r = n - 1;

  Matrix lap_red(r, r);
  Matrix a_red(m, r);
  for (int j = 0; j < r; ++j) {
    a_red.col(j) = a.col(keep[j]);
    for (int i = 0; i < r; ++i) lap_red(i, j) = lap(keep[i], keep[j]);
  }
  PtdfMatrix ptdf;
  ptdf.reference_bus = g.reference_bus;
  ptdf.values = Matrix::Zero(m, n);
  if (r == 0) return ptdf;
  const Eigen::FullPivLU<Matrix> lu(lap_red);
  if (!lu.isInvertible()) fail(ErrorKind::Validation, "reduced Laplacian is singular (disconnected network)");
  // B * A_red * L_red^{-1} = (L_red^{-T} A_red^T B)^T and L_red is symmetric.
  const Matrix block = (lu.solve(a_red.transpose() * w.asDiagonal())).transpose();
  for (int j = 0; j < r; ++j) ptdf.values.col(keep[j]) = block.col(j);
  return ptdf;
}

Vector dc_power_flow(const GridCase& g, const Vector& injection) {
  const Matrix a = incidence_matrix(g);
  const Vector w = line_susceptances(g);
  const Matrix lap = a.transpose() * w.asDiagonal() * a;
  const std::vector<int> keep = non_reference(g);
  const int r = static_cast<int>(keep.size());
  Matrix lap_red(r, r);
  Vector p_red(r);
  for (int i = 0; i < r; ++i) {
    p_red(i) = injection(keep[i]);
    for (int j = 0; j < r; ++j) lap_red(i, j) = lap(keep[i], keep[j]);
  }
  Vector angle = Vector::Zero(g.num_buses);
  if (r > 0) {
    const Vector ang_red = lap_red.ldlt().solve(p_red);
    for (int i = 0; i < r; ++i) angle(keep[i]) = ang_red(i);
  }
  return w.asDiagonal() * (a * angle);
}

Vector base_case_flows(const GridCase& g) {
  const int ng = g.num_generators();
  QpProblem qp;
  qp.hessian = Matrix::Zero(ng, ng);
  qp.linear.resize(ng);
  for (int k = 0; k < ng; ++k) {
    qp.hessian(k, k) = g.generators[k].cost_quadratic;
    qp.linear(k) = g.generators[k].cost_linear;
  }
  qp.a_eq = Matrix::Ones(1, ng);
  qp.b_eq = Vector::Constant(1, g.demand.sum());
  qp.a_in = Matrix::Zero(2 * ng, ng);
  qp.b_in.resize(2 * ng);
  for (int k = 0; k < ng; ++k) {
    qp.a_in(k, k) = 1.0;
    qp.b_in(k) = g.generators[k].g_max;
    qp.a_in(ng + k, k) = -1.0;
    qp.b_in(ng + k) = -g.generators[k].g_min;
  }
  const QpResult r = solve_qp(qp);
  if (r.status != QpStatus::Optimal) fail(ErrorKind::Infeasible, "base-case dispatch without line limits is infeasible");
  Vector injection = -g.demand;
  for (int k = 0; k < ng; ++k) injection(g.generators[k].bus - 1) += r.x(k);
  return build_ptdf(g).values * injection;
}

GridCase derive_line_limits(const GridCase& g, const LineLimitOptions& opt) {
  if (!(opt.gamma_line >= 1.0)) fail(ErrorKind::Validation, "gamma_line must be >= 1");
  if (!(opt.lambda >= 1.0 / opt.gamma_line - 1e-12 && opt.lambda <= 1.0 + 1e-12))
    fail(ErrorKind::Validation, "lambda must lie in [1/gamma_line, 1]");
  if (!(opt.zero_flow_fraction > 0.0)) fail(ErrorKind::Validation, "zero_flow_fraction must be positive");
  const Vector f = base_case_flows(g);
  const double fmax_abs = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
  const double zero_tol = 1e-9 * (1.0 + fmax_abs);
  GridCase out = g;
  for (int l = 0; l < g.num_lines(); ++l) {
    double limit = opt.lambda * opt.gamma_line * std::abs(f(l));
    if (std::abs(f(l)) <= zero_tol) limit = opt.zero_flow_fraction * fmax_abs;
    out.lines[l].f_max = limit;
    out.lines[l].f_min = -limit;
  }
  return out;
}

}  // namespace lmpspike
