#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "voltcraft/network.hpp"

namespace voltcraft {

/// Raw measurements in kW, one row per timestamp (seconds). Load columns are
/// keyed by bus label (`<label>_pc_kw`), solar columns likewise
/// (`<label>_pg_kw`).
struct MeasurementSeries {
  std::vector<long long> timestamps;
  std::vector<std::string> load_labels;
  std::vector<std::string> pv_labels;
  std::vector<std::vector<double>> pc_kw;  // [row][load column]
  std::vector<std::vector<double>> pg_kw;  // [row][pv column]
};

MeasurementSeries parse_measurements(const std::string& text);
MeasurementSeries read_measurements(const std::string& path);
std::string format_measurements(const MeasurementSeries& series);
void write_measurements(const std::string& path, const MeasurementSeries& series);

struct TimeSeriesDataset {
  std::vector<GridState> intervals;
  double interval_s = 0.0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::string provenance;
  /// Solar readings pulled back into [0, nameplate].
  std::size_t clipped = 0;
};

constexpr double kDefaultPowerFactor = 0.8;
constexpr double kDefaultTrainFraction = 0.7;

/// Converts measurements to per-unit states: q_c = p_c tan(arccos pf),
/// p = p_g - p_c. Loads are required for every bus with a nonzero peak load
/// and solar for every inverter bus; other columns are ignored.
TimeSeriesDataset to_dataset(const NetworkModel& model, const MeasurementSeries& series,
                             double power_factor = kDefaultPowerFactor,
                             double train_fraction = kDefaultTrainFraction);

TimeSeriesDataset load_timeseries(const std::string& path, const NetworkModel& model,
                                  double power_factor = kDefaultPowerFactor,
                                  double train_fraction = kDefaultTrainFraction);

/// First `train_fraction` of the intervals (in time order) train, the rest
/// test.
void split(TimeSeriesDataset& data, double train_fraction);

struct ProfileConfig {
  int days = 1;
  int interval_s = 60;
  long long start_timestamp = 1314144000;  // 2011-08-24 00:00 UTC
  /// Fraction of each bus's peak load at the daily maximum of the shape.
  double load_scale = 1.0;
  /// Night-time floor of the load shape relative to its maximum.
  double load_base = 0.4;
  /// Relative std of the per-bus AR(1) load noise.
  double load_noise = 0.03;
  /// Fraction of nameplate produced at clear-sky solar noon.
  double solar_scale = 0.9;
  double sunrise_h = 6.0;
  double sunset_h = 20.0;
  /// Mean number of cloud events per daylight hour.
  double cloud_rate = 3.0;
  /// Largest solar change per minute as a fraction of nameplate.
  double max_ramp = 0.15;
  double power_factor = kDefaultPowerFactor;
  double train_fraction = kDefaultTrainFraction;
};

MeasurementSeries synthesize_measurements(const NetworkModel& model, const ProfileConfig& profile,
                                          std::uint64_t seed);
TimeSeriesDataset synthesize_timeseries(const NetworkModel& model, const ProfileConfig& profile,
                                        std::uint64_t seed);

/// All loads at `load_factor` times peak, solar at `pv_fraction` of nameplate.
GridState nominal_state(const NetworkModel& model, double load_factor = 1.0, double pv_fraction = 0.0,
                        double power_factor = kDefaultPowerFactor);

/// Formats with 17 significant digits.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace voltcraft
