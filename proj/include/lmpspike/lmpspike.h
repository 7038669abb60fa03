#ifndef LMPSPIKE_H
#define LMPSPIKE_H

/* C interface to the lmpspike library. Every call returns an lmps_status;
 * on failure lmps_last_error() describes the problem (per thread). Strings
 * handed out by the library are released with lmps_string_free. */

#ifdef __cplusplus
extern "C" {
#endif

#if defined(LMPS_BUILDING_LIBRARY)
#define LMPS_API __attribute__((visibility("default")))
#else
#define LMPS_API
#endif

typedef enum lmps_status {
  LMPS_OK = 0,
  LMPS_ERR_CONFIG = 2,     /* parse, validation or bad argument */
  LMPS_ERR_INFEASIBLE = 3, /* the OPF or parameter set is infeasible */
  LMPS_ERR_NUMERICAL = 4   /* internal numerical failure */
} lmps_status;

typedef struct lmps_case lmps_case;
typedef struct lmps_decomposition lmps_decomposition;

LMPS_API const char* lmps_version(void);
LMPS_API const char* lmps_last_error(void);
LMPS_API void lmps_string_free(char* s);

/* Runs one of "regions", "rank", "mc", "ptdf" from a JSON config. Relative
 * case paths resolve against base_dir (may be NULL for the working
 * directory). *summary receives the text report. */
LMPS_API lmps_status lmps_run(const char* command, const char* config_json, const char* base_dir, char** summary);

/* Resolved form of a config document after defaults are applied. */
LMPS_API lmps_status lmps_config_resolve(const char* config_json, const char* base_dir, char** resolved_json);

LMPS_API lmps_status lmps_case_load(const char* path, lmps_case** out);
LMPS_API lmps_status lmps_case_from_json(const char* json, lmps_case** out);
LMPS_API void lmps_case_free(lmps_case* c);
LMPS_API lmps_status lmps_case_dims(const lmps_case* c, int* buses, int* lines, int* generators, int* renewables);
LMPS_API lmps_status lmps_case_set_renewables(lmps_case* c, const int* buses, int count);
LMPS_API lmps_status lmps_case_derive_limits(lmps_case* c, double gamma_line, double lambda, double zero_flow_fraction);
/* Row-major lines x buses. */
LMPS_API lmps_status lmps_case_ptdf(const lmps_case* c, double* out);
/* LMP per bus and optional dispatch per generator at renewable injection theta. */
LMPS_API lmps_status lmps_case_solve_opf(const lmps_case* c, const double* theta, double* lmp, double* dispatch);

/* Box bounds may be NULL: lower defaults to 0, upper to total demand minus
 * total minimum generation. */
LMPS_API lmps_status lmps_decomposition_build(const lmps_case* c, const double* box_lower, const double* box_upper,
                                              lmps_decomposition** out);
LMPS_API lmps_status lmps_decomposition_load(const lmps_case* c, const char* json, lmps_decomposition** out);
LMPS_API void lmps_decomposition_free(lmps_decomposition* d);
LMPS_API lmps_status lmps_decomposition_count(const lmps_decomposition* d, int* regions);
LMPS_API lmps_status lmps_decomposition_save(const lmps_decomposition* d, char** json);
/* *region_id is -1 when no region covers theta; lmp is then left untouched. */
LMPS_API lmps_status lmps_decomposition_locate(const lmps_decomposition* d, const double* theta, int* region_id,
                                               double* lmp);

#ifdef __cplusplus
}
#endif

#endif
