#include "lmpspike/lmpspike.h"

#include "lmpspike/analysis.hpp"
#include "lmpspike/error.hpp"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

struct lmps_case {
  lmpspike::GridCase grid;
};

struct lmps_decomposition {
  lmpspike::MpqpProblem problem;
  lmpspike::RegionDecomposition dec;
};

namespace {

thread_local std::string g_last_error;

lmps_status status_of(lmpspike::ErrorKind kind) {
  switch (kind) {
    case lmpspike::ErrorKind::Parse:
    case lmpspike::ErrorKind::Validation: return LMPS_ERR_CONFIG;
    case lmpspike::ErrorKind::Infeasible: return LMPS_ERR_INFEASIBLE;
    case lmpspike::ErrorKind::Numerical: return LMPS_ERR_NUMERICAL;
  }
  return LMPS_ERR_NUMERICAL;
}

template <class F>
lmps_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return LMPS_OK;
  } catch (const lmpspike::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return LMPS_ERR_NUMERICAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return LMPS_ERR_NUMERICAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) lmpspike::fail(lmpspike::ErrorKind::Validation, std::string(name) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

lmpspike::Vector copy_in(const double* p, int n) {
  lmpspike::Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = p[i];
  return v;
}

}  // namespace

extern "C" {

const char* lmps_version(void) { return "1.0.0"; }

const char* lmps_last_error(void) { return g_last_error.c_str(); }

void lmps_string_free(char* s) { std::free(s); }

lmps_status lmps_run(const char* command, const char* config_json, const char* base_dir, char** summary) {
  return guarded([&] {
    require(command, "command");
    require(config_json, "config_json");
    require(summary, "summary");
    *summary = nullptr;
    const auto cfg = lmpspike::parse_config(config_json, base_dir ? base_dir : ".");
    *summary = dup(lmpspike::run_command(command, cfg));
  });
}

lmps_status lmps_config_resolve(const char* config_json, const char* base_dir, char** resolved_json) {
  return guarded([&] {
    require(config_json, "config_json");
    require(resolved_json, "resolved_json");
    *resolved_json = dup(lmpspike::config_to_json(lmpspike::parse_config(config_json, base_dir ? base_dir : ".")));
  });
}

lmps_status lmps_case_load(const char* path, lmps_case** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new lmps_case{lmpspike::load_case(path)};
  });
}

lmps_status lmps_case_from_json(const char* json, lmps_case** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = new lmps_case{lmpspike::parse_case_json(json)};
  });
}

void lmps_case_free(lmps_case* c) { delete c; }

lmps_status lmps_case_dims(const lmps_case* c, int* buses, int* lines, int* generators, int* renewables) {
  return guarded([&] {
    require(c, "case");
    if (buses) *buses = c->grid.num_buses;
    if (lines) *lines = c->grid.num_lines();
    if (generators) *generators = c->grid.num_generators();
    if (renewables) *renewables = c->grid.num_renewables();
  });
}

lmps_status lmps_case_set_renewables(lmps_case* c, const int* buses, int count) {
  return guarded([&] {
    require(c, "case");
    if (count > 0) require(buses, "buses");
    lmpspike::GridCase next = c->grid;
    next.renewable_buses.assign(buses, buses + count);
    lmpspike::validate(next);
    c->grid = std::move(next);
  });
}

lmps_status lmps_case_derive_limits(lmps_case* c, double gamma_line, double lambda, double zero_flow_fraction) {
  return guarded([&] {
    require(c, "case");
    c->grid = lmpspike::derive_line_limits(c->grid, {gamma_line, lambda, zero_flow_fraction});
  });
}

lmps_status lmps_case_ptdf(const lmps_case* c, double* out) {
  return guarded([&] {
    require(c, "case");
    require(out, "out");
    const lmpspike::Matrix p = lmpspike::build_ptdf(c->grid).values;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j) out[i * p.cols() + j] = p(i, j);
  });
}

lmps_status lmps_case_solve_opf(const lmps_case* c, const double* theta, double* lmp, double* dispatch) {
  return guarded([&] {
    require(c, "case");
    require(lmp, "lmp");
    const int nt = c->grid.num_renewables();
    if (nt > 0) require(theta, "theta");
    const auto problem = lmpspike::assemble_mpqp(c->grid);
    const auto sol = lmpspike::solve_opf(problem, copy_in(theta, nt));
    const lmpspike::Vector prices = lmpspike::compute_lmp(sol, problem.ptdf).values;
    for (Eigen::Index i = 0; i < prices.size(); ++i) lmp[i] = prices(i);
    if (dispatch)
      for (Eigen::Index k = 0; k < sol.g_star.size(); ++k) dispatch[k] = sol.g_star(k);
  });
}

lmps_status lmps_decomposition_build(const lmps_case* c, const double* box_lower, const double* box_upper,
                                     lmps_decomposition** out) {
  return guarded([&] {
    require(c, "case");
    require(out, "out");
    auto d = std::make_unique<lmps_decomposition>();
    d->problem = lmpspike::assemble_mpqp(c->grid);
    const int nt = c->grid.num_renewables();
    double headroom = c->grid.demand.sum();
    for (const auto& g : c->grid.generators) headroom -= g.g_min;
    const lmpspike::Vector lo = box_lower ? copy_in(box_lower, nt) : lmpspike::Vector::Zero(nt);
    const lmpspike::Vector hi = box_upper ? copy_in(box_upper, nt) : lmpspike::Vector::Constant(nt, headroom);
    d->dec = lmpspike::enumerate_regions(d->problem, lmpspike::feasible_set(d->problem, lo, hi));
    *out = d.release();
  });
}

lmps_status lmps_decomposition_load(const lmps_case* c, const char* json, lmps_decomposition** out) {
  return guarded([&] {
    require(c, "case");
    require(json, "json");
    require(out, "out");
    auto d = std::make_unique<lmps_decomposition>();
    d->problem = lmpspike::assemble_mpqp(c->grid);
    d->dec = lmpspike::decomposition_from_json(json, d->problem);
    *out = d.release();
  });
}

void lmps_decomposition_free(lmps_decomposition* d) { delete d; }

lmps_status lmps_decomposition_count(const lmps_decomposition* d, int* regions) {
  return guarded([&] {
    require(d, "decomposition");
    require(regions, "regions");
    *regions = static_cast<int>(d->dec.regions.size());
  });
}

lmps_status lmps_decomposition_save(const lmps_decomposition* d, char** json) {
  return guarded([&] {
    require(d, "decomposition");
    require(json, "json");
    *json = dup(lmpspike::decomposition_to_json(d->dec, d->problem));
  });
}

lmps_status lmps_decomposition_locate(const lmps_decomposition* d, const double* theta, int* region_id, double* lmp) {
  return guarded([&] {
    require(d, "decomposition");
    require(theta, "theta");
    require(region_id, "region_id");
    const auto hit = lmpspike::locate_region(d->dec, copy_in(theta, d->problem.num_renewables));
    *region_id = hit ? hit->region_id : -1;
    if (hit && lmp)
      for (Eigen::Index i = 0; i < hit->lmp.size(); ++i) lmp[i] = hit->lmp(i);
  });
}

}  // extern "C"
