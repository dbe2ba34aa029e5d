// voltcraft command-line front end. Talks to the library only through the C
// API in voltcraft.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "voltcraft/voltcraft.h"

namespace {

using json = nlohmann::json;

struct Failure {
  vc_status status;
  std::string message;
};

void check(vc_status st) {
  if (st != VC_OK) throw Failure{st, vc_last_error()};
}

// Owns a string returned by the library.
std::string take(char* s) {
  std::string out = s ? s : "";
  vc_string_free(s);
  return out;
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};
using Network = Handle<vc_network, vc_network_free>;
using Dataset = Handle<vc_dataset, vc_dataset_free>;
using Policy = Handle<vc_policy, vc_policy_free>;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{VC_ERR_IO, "cannot open " + path};
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct DataArgs {
  std::string network;
  std::string data;
  double power_factor = 0.8;
  double train_fraction = 0.7;
};

void load_data(const DataArgs& a, Network& net, Dataset& data) {
  check(vc_network_load(a.network.c_str(), net.out()));
  check(vc_dataset_load(net.get(), a.data.c_str(), a.power_factor, a.train_fraction, data.out()));
}

struct PolicyArgs {
  std::string model;
  std::string split;
  bool deterministic = false;
  std::uint64_t seed = 1;
  double penalty = 100.0;

  std::string options() const {
    return json{{"split", split}, {"deterministic", deterministic}, {"seed", seed}, {"penalty_coeff", penalty}}.dump();
  }
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--network", a.network, "Feeder JSON file")->required();
  cmd->add_option("--data", a.data, "Time-series CSV")->required();
  cmd->add_option("--power-factor", a.power_factor, "Load power factor")->capture_default_str();
  cmd->add_option("--train-fraction", a.train_fraction, "Leading share of intervals used for training")
      ->capture_default_str();
}

void add_policy_options(CLI::App* cmd, PolicyArgs& p, const char* default_split) {
  cmd->add_option("--model", p.model, "Policy model file")->required();
  cmd->add_option("--split", p.split, std::string("all, train or test (default ") + default_split + ")");
  cmd->add_flag("--deterministic", p.deterministic, "Dispatch the clipped mean instead of sampling");
  cmd->add_option("--seed", p.seed, "Sampling seed")->capture_default_str();
  cmd->add_option("--penalty", p.penalty, "Penalty coefficient for band violations")->capture_default_str();
}

void print_bench_table(const std::string& summary) {
  const json j = json::parse(summary);
  std::printf("%-10s %12s %12s\n", "", "median_ms", "p95_ms");
  std::printf("%-10s %12.4f %12.4f\n", "infer", j["infer_median_ms"].get<double>(), j["infer_p95_ms"].get<double>());
  std::printf("%-10s %12.4f %12.4f\n", "baseline", j["baseline_median_ms"].get<double>(),
              j["baseline_p95_ms"].get<double>());
  std::printf("intervals %zu, median ratio %.5f\n", j["intervals"].get<std::size_t>(), j["median_ratio"].get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voltcraft: learned reactive-power control for radial feeders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", vc_version());

  std::string network_path, state_path, out_path, manifest_path, config_path, profile_path;
  DataArgs data_args;
  PolicyArgs policy_args;
  std::string baseline_split = "all";
  bool bench_json = false;
  std::uint64_t synth_seed = 1;
  std::optional<int> synth_days, synth_interval;

  auto* validate = app.add_subcommand("validate", "Check a feeder file and print a summary");
  validate->add_option("--network", network_path, "Feeder JSON file")->required();

  auto* pf = app.add_subcommand("pf", "Exact power flow for one operating point");
  pf->add_option("--network", network_path, "Feeder JSON file")->required();
  pf->add_option("--state", state_path, "State JSON file")->required();

  auto* baseline = app.add_subcommand("baseline", "Per-interval optimal setpoints via the cone relaxation");
  add_data_options(baseline, data_args);
  baseline->add_option("--split", baseline_split, "all, train or test")->capture_default_str();
  baseline->add_option("--out", out_path, "Output CSV");

  auto* train = app.add_subcommand("train", "Train a policy (from flags or a manifest)");
  train->add_option("--network", data_args.network, "Feeder JSON file");
  train->add_option("--data", data_args.data, "Time-series CSV");
  train->add_option("--config", config_path, "Training config JSON");
  train->add_option("--manifest", manifest_path, "Repeat the run described by this manifest");
  train->add_option("--out", out_path, "Model file (trace and manifest are written beside it)");

  auto* infer = app.add_subcommand("infer", "Dispatch a trained policy over a time series");
  add_data_options(infer, data_args);
  add_policy_options(infer, policy_args, "test");
  infer->add_option("--out", out_path, "Output CSV");

  auto* compare = app.add_subcommand("compare", "Learned versus optimal loss per interval");
  add_data_options(compare, data_args);
  add_policy_options(compare, policy_args, "test");
  compare->add_option("--out", out_path, "Output CSV");

  auto* bench = app.add_subcommand("bench", "Time policy inference against the baseline solve");
  add_data_options(bench, data_args);
  add_policy_options(bench, policy_args, "all");
  bench->add_flag("--json", bench_json, "Print the JSON summary instead of a table");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic load and solar time series");
  synth->add_option("--network", network_path, "Feeder JSON file")->required();
  synth->add_option("--out", out_path, "Output CSV")->required();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--profile", profile_path, "Profile JSON");
  synth->add_option("--days", synth_days, "Number of days");
  synth->add_option("--interval", synth_interval, "Interval length in seconds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      Network net;
      check(vc_network_load(network_path.c_str(), net.out()));
      char* report = nullptr;
      check(vc_network_report(net.get(), network_path.c_str(), &report));
      std::cout << take(report) << '\n';
    } else if (pf->parsed()) {
      Network net;
      check(vc_network_load(network_path.c_str(), net.out()));
      char* result = nullptr;
      check(vc_power_flow_file(net.get(), state_path.c_str(), &result));
      std::cout << take(result) << '\n';
    } else if (baseline->parsed()) {
      Network net;
      Dataset data;
      load_data(data_args, net, data);
      char* summary = nullptr;
      check(vc_run_baseline(net.get(), data.get(), baseline_split.c_str(), out_path.empty() ? nullptr : out_path.c_str(),
                            &summary));
      std::cout << take(summary) << '\n';
    } else if (train->parsed()) {
      std::string manifest;
      if (!manifest_path.empty()) {
        manifest = read_file(manifest_path);
      } else {
        if (data_args.network.empty() || data_args.data.empty() || out_path.empty())
          throw Failure{VC_ERR_INVALID_ARGUMENT, "train needs --network, --data and --out, or --manifest"};
        char* m = nullptr;
        check(vc_manifest_create(data_args.network.c_str(), data_args.data.c_str(),
                                 config_path.empty() ? nullptr : config_path.c_str(), out_path.c_str(), &m));
        manifest = take(m);
      }
      char* summary = nullptr;
      check(vc_run_train(manifest.c_str(), out_path.empty() ? nullptr : out_path.c_str(), &summary));
      std::cout << take(summary) << '\n';
    } else if (infer->parsed() || compare->parsed() || bench->parsed()) {
      Network net;
      Dataset data;
      load_data(data_args, net, data);
      Policy policy;
      check(vc_policy_load(policy_args.model.c_str(), policy.out()));
      if (policy_args.split.empty()) policy_args.split = bench->parsed() ? "all" : "test";
      const std::string opts = policy_args.options();
      const char* out = out_path.empty() ? nullptr : out_path.c_str();
      char* summary = nullptr;
      if (infer->parsed()) {
        check(vc_run_infer(policy.get(), net.get(), data.get(), opts.c_str(), out, &summary));
        std::cout << take(summary) << '\n';
      } else if (compare->parsed()) {
        check(vc_run_compare(policy.get(), net.get(), data.get(), opts.c_str(), out, &summary));
        std::cout << take(summary) << '\n';
      } else {
        check(vc_run_bench(policy.get(), net.get(), data.get(), opts.c_str(), &summary));
        const std::string s = take(summary);
        if (bench_json)
          std::cout << s << '\n';
        else
          print_bench_table(s);
      }
    } else if (synth->parsed()) {
      Network net;
      check(vc_network_load(network_path.c_str(), net.out()));
      json profile = profile_path.empty() ? json::object() : json::parse(read_file(profile_path), nullptr, false);
      if (profile.is_discarded()) throw Failure{VC_ERR_PARSE, "profile " + profile_path + " is not valid JSON"};
      if (synth_days) profile["days"] = *synth_days;
      if (synth_interval) profile["interval_s"] = *synth_interval;
      Dataset data;
      check(vc_dataset_synthesize(net.get(), profile.dump().c_str(), synth_seed, out_path.c_str(), data.out()));
      std::cout << json{{"out", out_path}, {"intervals", vc_dataset_size(data.get())}, {"seed", synth_seed}}.dump(2)
                << '\n';
    }
  } catch (const Failure& f) {
    const json record{{"error", vc_status_name(f.status)}, {"code", static_cast<int>(f.status)}, {"message", f.message}};
    std::cerr << record.dump() << '\n';
    return 1;
  }
  return 0;
}
