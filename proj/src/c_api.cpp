#include "voltcraft/voltcraft.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <new>
#include <optional>
#include <span>
#include <sstream>
#include <string>

#include "voltcraft/baseline.hpp"
#include "voltcraft/dataset.hpp"
#include "voltcraft/error.hpp"
#include "voltcraft/experiments.hpp"
#include "voltcraft/network.hpp"
#include "voltcraft/policy.hpp"
#include "voltcraft/powerflow.hpp"
#include "voltcraft/trainer.hpp"

struct vc_network {
  voltcraft::NetworkModel model;
};
struct vc_dataset {
  voltcraft::TimeSeriesDataset data;
};
struct vc_policy {
  voltcraft::PolicyModel model;
};

namespace {

thread_local std::string g_last_error;

template <class F>
vc_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return VC_OK;
  } catch (const voltcraft::Error& e) {
    g_last_error = e.what();
    return static_cast<vc_status>(static_cast<int>(e.code()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return VC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VC_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) voltcraft::fail(voltcraft::ErrorCode::InvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put_string(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

std::string read_file(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) voltcraft::fail(voltcraft::ErrorCode::Io, std::string("cannot open ") + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

voltcraft::GridState make_state(const vc_network* net, const double* p, const double* q_c, size_t n) {
  require(net && p && q_c, "null argument");
  if (n != net->model.size())
    voltcraft::fail(voltcraft::ErrorCode::DimensionMismatch, "state length does not match the feeder");
  voltcraft::GridState s;
  s.p.assign(p, p + n);
  s.q_c.assign(q_c, q_c + n);
  return s;
}

const char* opt_str(const char* s) { return s ? s : ""; }

}  // namespace

extern "C" {

const char* vc_version(void) { return "0.1.0"; }

const char* vc_status_name(vc_status status) {
  if (status == VC_OK) return "Ok";
  if (status == VC_ERR_INTERNAL) return "InternalError";
  if (status < VC_ERR_PARSE || status > VC_ERR_INVALID_ARGUMENT) return "Unknown";
  return voltcraft::to_string(static_cast<voltcraft::ErrorCode>(static_cast<int>(status)));
}

const char* vc_last_error(void) { return g_last_error.c_str(); }

void vc_string_free(char* s) { std::free(s); }

vc_status vc_network_load(const char* path, vc_network** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    *out = new vc_network{voltcraft::load_network(path)};
  });
}

void vc_network_free(vc_network* net) { delete net; }

size_t vc_network_size(const vc_network* net) { return net ? net->model.size() : 0; }

size_t vc_network_num_inverters(const vc_network* net) { return net ? net->model.num_inverters() : 0; }

vc_status vc_network_report(const vc_network* net, const char* source_path, char** report_json) {
  return guarded([&] {
    require(net && report_json, "null argument");
    put_string(report_json, voltcraft::validate_report(net->model, opt_str(source_path)));
  });
}

vc_status vc_power_flow(const vc_network* net, const double* p, const double* q_c, size_t n, const double* q_g,
                        size_t m, double* loss, double* violation) {
  return guarded([&] {
    const voltcraft::GridState s = make_state(net, p, q_c, n);
    require(q_g || m == 0, "null argument");
    if (m != net->model.num_inverters())
      voltcraft::fail(voltcraft::ErrorCode::DimensionMismatch, "action length does not match the feeder");
    voltcraft::LossOptions opts;
    opts.strict = true;
    const auto ev = voltcraft::evaluate_loss(net->model, s, std::span<const double>(q_g, m), opts);
    if (loss) *loss = ev.objective;
    if (violation) *violation = ev.violation;
  });
}

vc_status vc_power_flow_file(const vc_network* net, const char* state_path, char** result_json) {
  return guarded([&] {
    require(net && state_path && result_json, "null argument");
    const auto sf = voltcraft::parse_state_file(net->model, read_file(state_path));
    put_string(result_json, voltcraft::run_pf(net->model, sf));
  });
}

vc_status vc_solve_baseline(const vc_network* net, const double* p, const double* q_c, size_t n, double* q_g_out,
                            size_t m, double* objective, double* max_cone_slack) {
  return guarded([&] {
    const voltcraft::GridState s = make_state(net, p, q_c, n);
    if (m != net->model.num_inverters())
      voltcraft::fail(voltcraft::ErrorCode::DimensionMismatch, "action length does not match the feeder");
    require(q_g_out || m == 0, "null argument");
    const auto sol = voltcraft::solve_baseline(net->model, s);
    std::copy(sol.q_g_star.begin(), sol.q_g_star.end(), q_g_out);
    if (objective) *objective = sol.objective;
    if (max_cone_slack) *max_cone_slack = voltcraft::exactness_check(sol).max_abs_slack;
  });
}

vc_status vc_dataset_load(const vc_network* net, const char* csv_path, double power_factor, double train_fraction,
                          vc_dataset** out) {
  return guarded([&] {
    require(net && csv_path && out, "null argument");
    *out = nullptr;
    *out = new vc_dataset{voltcraft::load_timeseries(csv_path, net->model, power_factor, train_fraction)};
  });
}

vc_status vc_dataset_synthesize(const vc_network* net, const char* profile_json, uint64_t seed, const char* csv_path,
                                vc_dataset** out) {
  return guarded([&] {
    require(net != nullptr, "null argument");
    if (out) *out = nullptr;
    const std::string text = opt_str(profile_json);
    const voltcraft::ProfileConfig profile = text.empty() ? voltcraft::ProfileConfig{} : voltcraft::parse_profile(text);
    const auto series = voltcraft::synthesize_measurements(net->model, profile, seed);
    if (csv_path) voltcraft::write_measurements(csv_path, series);
    if (out) {
      auto data = voltcraft::to_dataset(net->model, series, profile.power_factor, profile.train_fraction);
      data.provenance = "synthetic:" + std::to_string(seed);
      *out = new vc_dataset{std::move(data)};
    }
  });
}

void vc_dataset_free(vc_dataset* data) { delete data; }

size_t vc_dataset_size(const vc_dataset* data) { return data ? data->data.intervals.size() : 0; }

size_t vc_dataset_train_size(const vc_dataset* data) { return data ? data->data.train.size() : 0; }

vc_status vc_dataset_state(const vc_dataset* data, size_t index, double* p, double* q_c, size_t n,
                           int64_t* timestamp) {
  return guarded([&] {
    require(data && p && q_c, "null argument");
    if (index >= data->data.intervals.size()) voltcraft::fail(voltcraft::ErrorCode::InvalidArgument, "index out of range");
    const auto& s = data->data.intervals[index];
    if (n != s.p.size()) voltcraft::fail(voltcraft::ErrorCode::DimensionMismatch, "buffer length does not match the feeder");
    std::copy(s.p.begin(), s.p.end(), p);
    std::copy(s.q_c.begin(), s.q_c.end(), q_c);
    if (timestamp) *timestamp = s.timestamp;
  });
}

vc_status vc_policy_create(const vc_network* net, const char* config_json, vc_policy** out) {
  return guarded([&] {
    require(net && out, "null argument");
    *out = nullptr;
    const std::string text = opt_str(config_json);
    const voltcraft::RunConfig cfg = text.empty() ? voltcraft::RunConfig{} : voltcraft::parse_run_config(text);
    *out = new vc_policy{voltcraft::PolicyModel::for_network(net->model, cfg.train.hidden, cfg.train.sigma_floor,
                                                              voltcraft::derive_seed(cfg.train.seed, 0))};
  });
}

vc_status vc_policy_load(const char* path, vc_policy** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    *out = new vc_policy{voltcraft::PolicyModel::load(path)};
  });
}

vc_status vc_policy_save(const vc_policy* policy, const char* path) {
  return guarded([&] {
    require(policy && path, "null argument");
    policy->model.save(path);
  });
}

void vc_policy_free(vc_policy* policy) { delete policy; }

size_t vc_policy_num_params(const vc_policy* policy) { return policy ? policy->model.num_params() : 0; }

vc_status vc_policy_act(const vc_policy* policy, const double* p, const double* q_c, size_t n, int deterministic,
                        uint64_t seed, double* q_g_out, size_t m) {
  return guarded([&] {
    require(policy && p && q_c && (q_g_out || m == 0), "null argument");
    if (m != policy->model.num_actions())
      voltcraft::fail(voltcraft::ErrorCode::DimensionMismatch, "action buffer length does not match the policy");
    voltcraft::GridState s;
    s.p.assign(p, p + n);
    s.q_c.assign(q_c, q_c + n);
    voltcraft::Rng rng(seed);
    const auto q = voltcraft::infer(policy->model, s,
                                    deterministic ? voltcraft::InferMode::Deterministic : voltcraft::InferMode::Sample,
                                    &rng);
    std::copy(q.begin(), q.end(), q_g_out);
  });
}

vc_status vc_run_baseline(const vc_network* net, const vc_dataset* data, const char* split, const char* out_csv,
                          char** summary_json) {
  return guarded([&] {
    require(net && data, "null argument");
    const auto sel = voltcraft::parse_split(split ? split : "all");
    put_string(summary_json, voltcraft::run_baseline(net->model, data->data, sel, opt_str(out_csv)));
  });
}

vc_status vc_manifest_create(const char* network_path, const char* data_path, const char* config_path,
                             const char* model_out, char** manifest_json) {
  return guarded([&] {
    require(network_path && data_path && model_out && manifest_json, "null argument");
    std::optional<std::string> cfg;
    if (config_path && *config_path) cfg = config_path;
    const auto m = voltcraft::make_manifest(network_path, data_path, cfg, model_out);
    put_string(manifest_json, voltcraft::manifest_to_json(m));
  });
}

vc_status vc_run_train(const char* manifest_json, const char* model_out, char** summary_json) {
  return guarded([&] {
    require(manifest_json != nullptr, "null argument");
    auto m = voltcraft::manifest_from_json(manifest_json);
    if (model_out && *model_out) {
      m.model_out = model_out;
      m.trace_out = m.model_out + ".trace.csv";
    }
    const std::string summary = voltcraft::run_train(m);
    std::ofstream mf(m.model_out + ".manifest.json", std::ios::binary);
    if (!mf) voltcraft::fail(voltcraft::ErrorCode::Io, "cannot write " + m.model_out + ".manifest.json");
    mf << voltcraft::manifest_to_json(m) << '\n';
    put_string(summary_json, summary);
  });
}

vc_status vc_run_infer(const vc_policy* policy, const vc_network* net, const vc_dataset* data,
                       const char* options_json, const char* out_csv, char** summary_json) {
  return guarded([&] {
    require(policy && net && data, "null argument");
    const auto opts = voltcraft::parse_infer_options(opt_str(options_json));
    put_string(summary_json, voltcraft::run_infer(policy->model, net->model, data->data, opts, opt_str(out_csv)));
  });
}

vc_status vc_run_compare(const vc_policy* policy, const vc_network* net, const vc_dataset* data,
                         const char* options_json, const char* out_csv, char** summary_json) {
  return guarded([&] {
    require(policy && net && data, "null argument");
    const auto opts = voltcraft::parse_infer_options(opt_str(options_json));
    put_string(summary_json, voltcraft::run_compare(policy->model, net->model, data->data, opts, opt_str(out_csv)));
  });
}

vc_status vc_run_bench(const vc_policy* policy, const vc_network* net, const vc_dataset* data,
                       const char* options_json, char** summary_json) {
  return guarded([&] {
    require(policy && net && data, "null argument");
    const auto opts = voltcraft::parse_infer_options(opt_str(options_json));
    put_string(summary_json, voltcraft::run_bench(policy->model, net->model, data->data, opts));
  });
}

}  // extern "C"
