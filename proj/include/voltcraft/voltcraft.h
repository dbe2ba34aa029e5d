#ifndef VOLTCRAFT_H
#define VOLTCRAFT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(VOLTCRAFT_BUILDING)
#    define VC_API __declspec(dllexport)
#  else
#    define VC_API __declspec(dllimport)
#  endif
#else
#  define VC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vc_status {
  VC_OK = 0,
  VC_ERR_PARSE = 1,
  VC_ERR_TOPOLOGY,
  VC_ERR_UNIT,
  VC_ERR_CAPABILITY,
  VC_ERR_UNKNOWN_BUS,
  VC_ERR_DIVERGED,
  VC_ERR_NUMERICAL,
  VC_ERR_ACTION_OUT_OF_BOUNDS,
  VC_ERR_INFEASIBLE,
  VC_ERR_MAX_ITERATIONS,
  VC_ERR_TOO_MANY_INVERTERS,
  VC_ERR_NO_FEASIBLE_POINT,
  VC_ERR_DIMENSION_MISMATCH,
  VC_ERR_NON_FINITE_ACTIVATION,
  VC_ERR_NON_FINITE_GRADIENT,
  VC_ERR_DEGENERATE_SUPPORT,
  VC_ERR_OUT_OF_SUPPORT,
  VC_ERR_VERSION_MISMATCH,
  VC_ERR_MISSING_COLUMN,
  VC_ERR_NON_MONOTONE_TIME,
  VC_ERR_IO,
  VC_ERR_INVALID_ARGUMENT,
  VC_ERR_INTERNAL = 100
} vc_status;

typedef struct vc_network vc_network;
typedef struct vc_dataset vc_dataset;
typedef struct vc_policy vc_policy;

VC_API const char* vc_version(void);
/* Symbolic name of a status, e.g. "ParseError". */
VC_API const char* vc_status_name(vc_status status);
/* Message of the last failure on the calling thread ("" if none). */
VC_API const char* vc_last_error(void);
/* Frees strings returned through char** out-parameters. */
VC_API void vc_string_free(char* s);

/* Feeders. */
VC_API vc_status vc_network_load(const char* path, vc_network** out);
VC_API void vc_network_free(vc_network* net);
VC_API size_t vc_network_size(const vc_network* net); /* branch buses N */
VC_API size_t vc_network_num_inverters(const vc_network* net);
/* source_path (may be NULL) adds the file digest to the report. */
VC_API vc_status vc_network_report(const vc_network* net, const char* source_path, char** report_json);

/* Per-unit vectors of length N (entry n-1 for bus n); q_g has one entry per
   inverter. `loss` receives the line loss, `violation` the band excursion. */
VC_API vc_status vc_power_flow(const vc_network* net, const double* p, const double* q_c, size_t n,
                               const double* q_g, size_t m, double* loss, double* violation);
VC_API vc_status vc_power_flow_file(const vc_network* net, const char* state_path, char** result_json);
VC_API vc_status vc_solve_baseline(const vc_network* net, const double* p, const double* q_c, size_t n,
                                   double* q_g_out, size_t m, double* objective, double* max_cone_slack);

/* Time series. */
VC_API vc_status vc_dataset_load(const vc_network* net, const char* csv_path, double power_factor,
                                 double train_fraction, vc_dataset** out);
/* profile_json may be NULL or "" for defaults. */
VC_API vc_status vc_dataset_synthesize(const vc_network* net, const char* profile_json, uint64_t seed,
                                       const char* csv_path, vc_dataset** out);
VC_API void vc_dataset_free(vc_dataset* data);
VC_API size_t vc_dataset_size(const vc_dataset* data);
VC_API size_t vc_dataset_train_size(const vc_dataset* data);
VC_API vc_status vc_dataset_state(const vc_dataset* data, size_t index, double* p, double* q_c, size_t n,
                                  int64_t* timestamp);

/* Policies. config_json follows the training config format (NULL for
   defaults). */
VC_API vc_status vc_policy_create(const vc_network* net, const char* config_json, vc_policy** out);
VC_API vc_status vc_policy_load(const char* path, vc_policy** out);
VC_API vc_status vc_policy_save(const vc_policy* policy, const char* path);
VC_API void vc_policy_free(vc_policy* policy);
VC_API size_t vc_policy_num_params(const vc_policy* policy);
/* deterministic != 0 returns the box-clipped mean; otherwise one sample
   drawn with `seed`. */
VC_API vc_status vc_policy_act(const vc_policy* policy, const double* p, const double* q_c, size_t n,
                               int deterministic, uint64_t seed, double* q_g_out, size_t m);

/* Experiments. Each writes out_csv when it is non-NULL and returns a JSON
   summary. split is "all", "train" or "test". options_json carries
   {"split", "deterministic", "seed", "penalty_coeff"}. */
VC_API vc_status vc_run_baseline(const vc_network* net, const vc_dataset* data, const char* split,
                                 const char* out_csv, char** summary_json);
VC_API vc_status vc_manifest_create(const char* network_path, const char* data_path, const char* config_path,
                                    const char* model_out, char** manifest_json);
/* model_out may be NULL to keep the manifest's output paths. */
VC_API vc_status vc_run_train(const char* manifest_json, const char* model_out, char** summary_json);
VC_API vc_status vc_run_infer(const vc_policy* policy, const vc_network* net, const vc_dataset* data,
                              const char* options_json, const char* out_csv, char** summary_json);
VC_API vc_status vc_run_compare(const vc_policy* policy, const vc_network* net, const vc_dataset* data,
                                const char* options_json, const char* out_csv, char** summary_json);
VC_API vc_status vc_run_bench(const vc_policy* policy, const vc_network* net, const vc_dataset* data,
                              const char* options_json, char** summary_json);

#ifdef __cplusplus
}
#endif

#endif
