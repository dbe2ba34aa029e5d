#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voltcraft/dataset.hpp"
#include "voltcraft/network.hpp"
#include "voltcraft/policy.hpp"
#include "voltcraft/trainer.hpp"

namespace voltcraft {

/// Environment variable that overrides the run seed when a manifest is
/// created from a config file.
constexpr const char* kSeedEnv = "VOLTCRAFT_SEED";

enum class SplitSel { All, Train, Test };
SplitSel parse_split(const std::string& name);
std::vector<std::size_t> select(const TimeSeriesDataset& data, SplitSel sel);

/// Training configuration file: a JSON object with the TrainConfig fields
/// plus the data options `power_factor`, `train_fraction` and
/// `record_baseline`. Unknown keys are rejected.
struct RunConfig {
  TrainConfig train;
  double power_factor = kDefaultPowerFactor;
  double train_fraction = kDefaultTrainFraction;
  bool record_baseline = true;
};
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_to_json(const RunConfig& config);

ProfileConfig parse_profile(const std::string& json_text);

/// Everything needed to repeat a training run bit for bit.
struct TrainManifest {
  static constexpr const char* kVersion = "voltcraft-manifest/1";
  std::string feeder_path;
  std::string feeder_digest;
  std::string data_path;
  std::string data_digest;
  RunConfig config;
  std::string model_out;
  std::string trace_out;
};
std::string manifest_to_json(const TrainManifest& manifest);
TrainManifest manifest_from_json(const std::string& json_text);

/// Builds a manifest from paths and an optional config file, applying the
/// seed override from the environment.
TrainManifest make_manifest(const std::string& feeder_path, const std::string& data_path,
                            const std::optional<std::string>& config_path, const std::string& model_out);

/// Each run_* writes its CSV (when a path is given) and returns a JSON
/// summary.
std::string validate_report(const NetworkModel& model, const std::string& feeder_path);

/// State file: {"timestamp", "power_factor", "pc_kw": {label: kW},
/// "pg_kw": {label: kW}, "q_g_kvar": {label: kvar}}; absent buses are zero.
struct StateFile {
  GridState state;
  std::vector<double> q_g;
};
StateFile parse_state_file(const NetworkModel& model, const std::string& json_text);
std::string run_pf(const NetworkModel& model, const StateFile& state);

std::string run_baseline(const NetworkModel& model, const TimeSeriesDataset& data, SplitSel sel,
                         const std::string& out_csv);

std::string run_train(const TrainManifest& manifest);

struct InferOptions {
  SplitSel split = SplitSel::Test;
  InferMode mode = InferMode::Sample;
  std::uint64_t seed = 1;
  double penalty_coeff = 100.0;
};
InferOptions parse_infer_options(const std::string& json_text);

std::string run_infer(const PolicyModel& policy, const NetworkModel& model, const TimeSeriesDataset& data,
                      const InferOptions& opts, const std::string& out_csv);

struct CompareRow {
  long long timestamp = 0;
  std::size_t index = 0;
  double learned = 0.0;
  std::optional<double> optimal;
  bool learned_feasible = false;
};
struct CompareResult {
  std::vector<CompareRow> rows;
  double mean_learned = 0.0;
  double mean_optimal = 0.0;  // over rows with an optimum
  double relative_gap = 0.0;  // (mean learned - mean optimal) / mean optimal, same rows
  double feasible_fraction = 0.0;
};
CompareResult compare(const PolicyModel& policy, const NetworkModel& model, const TimeSeriesDataset& data,
                      const InferOptions& opts);
std::string run_compare(const PolicyModel& policy, const NetworkModel& model, const TimeSeriesDataset& data,
                        const InferOptions& opts, const std::string& out_csv);

struct BenchResult {
  std::size_t intervals = 0;
  double infer_median_s = 0.0;
  double infer_p95_s = 0.0;
  double baseline_median_s = 0.0;
  double baseline_p95_s = 0.0;
  double ratio = 0.0;  // infer median / baseline median
};
BenchResult bench(const PolicyModel& policy, const NetworkModel& model, const TimeSeriesDataset& data,
                  const InferOptions& opts);
std::string run_bench(const PolicyModel& policy, const NetworkModel& model, const TimeSeriesDataset& data,
                      const InferOptions& opts);

}  // namespace voltcraft
