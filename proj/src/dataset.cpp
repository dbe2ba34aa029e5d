#include "voltcraft/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "voltcraft/error.hpp"
#include "voltcraft/rng.hpp"

namespace voltcraft {

namespace {

constexpr std::string_view kLoadSuffix = "_pc_kw";
constexpr std::string_view kPvSuffix = "_pg_kw";

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view f = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.remove_suffix(1);
    out.push_back(f);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

double wrap_hours(double d) {
  d = std::fmod(d, 24.0);
  if (d > 12.0) d -= 24.0;
  if (d < -12.0) d += 24.0;
  return d;
}

double bump(double h, double center, double width) {
  const double d = wrap_hours(h - center) / width;
  return std::exp(-0.5 * d * d);
}

// Residential shape: small morning peak, broad daytime plateau, evening peak.
double raw_load_shape(double h) { return 0.25 * bump(h, 7.5, 1.2) + 0.45 * bump(h, 13.0, 3.5) + bump(h, 19.0, 2.0); }

double clear_sky(double h, double rise, double set) {
  if (h <= rise || h >= set) return 0.0;
  return std::pow(std::sin(M_PI * (h - rise) / (set - rise)), 1.2);
}

double reactive_ratio(double power_factor) {
  if (!(power_factor > 0.0 && power_factor <= 1.0))
    fail(ErrorCode::InvalidArgument, "power factor must lie in (0, 1]");
  return std::sqrt(1.0 - power_factor * power_factor) / power_factor;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    fail(ErrorCode::Parse, "not a number: '" + std::string(text) + "'");
  return v;
}

MeasurementSeries parse_measurements(const std::string& text) {
  MeasurementSeries s;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<int> role;  // per column: 0 ignore, 1 load, 2 pv
  std::size_t ncols = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (!header) {
      if (fields.empty() || fields[0] != "timestamp")
        fail(ErrorCode::Parse, "time series header must start with 'timestamp'");
      std::set<std::string_view> seen;
      for (std::size_t c = 1; c < fields.size(); ++c) {
        if (!seen.insert(fields[c]).second)
          fail(ErrorCode::Parse, "duplicate column '" + std::string(fields[c]) + "'");
        if (ends_with(fields[c], kLoadSuffix)) {
          role.push_back(1);
          s.load_labels.emplace_back(fields[c].substr(0, fields[c].size() - kLoadSuffix.size()));
        } else if (ends_with(fields[c], kPvSuffix)) {
          role.push_back(2);
          s.pv_labels.emplace_back(fields[c].substr(0, fields[c].size() - kPvSuffix.size()));
        } else {
          role.push_back(0);
        }
      }
      ncols = fields.size();
      header = true;
      continue;
    }
    if (fields.size() != ncols)
      fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected " + std::to_string(ncols) +
                                 " fields, found " + std::to_string(fields.size()));
    long long ts = 0;
    const auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), ts);
    if (ec != std::errc() || ptr != fields[0].data() + fields[0].size() || fields[0].empty())
      fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": timestamp must be integer seconds");
    if (!s.timestamps.empty() && ts <= s.timestamps.back())
      fail(ErrorCode::NonMonotoneTime, "line " + std::to_string(line_no) + ": timestamp " + std::to_string(ts) +
                                           " does not increase");
    s.timestamps.push_back(ts);
    std::vector<double> pc, pg;
    for (std::size_t c = 1; c < ncols; ++c) {
      if (role[c - 1] == 0) continue;
      double v;
      try {
        v = parse_double(fields[c]);
      } catch (const Error&) {
        fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": bad value '" + std::string(fields[c]) + "'");
      }
      if (!std::isfinite(v)) fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": non-finite value");
      (role[c - 1] == 1 ? pc : pg).push_back(v);
    }
    s.pc_kw.push_back(std::move(pc));
    s.pg_kw.push_back(std::move(pg));
  }
  if (!header) fail(ErrorCode::Parse, "time series is empty");
  if (s.timestamps.empty()) fail(ErrorCode::Parse, "time series has no data rows");
  return s;
}

MeasurementSeries read_measurements(const std::string& path) { return parse_measurements(slurp(path)); }

std::string format_measurements(const MeasurementSeries& s) {
  std::string out = "timestamp";
  for (const auto& l : s.load_labels) out += "," + l + std::string(kLoadSuffix);
  for (const auto& l : s.pv_labels) out += "," + l + std::string(kPvSuffix);
  out += '\n';
  for (std::size_t t = 0; t < s.timestamps.size(); ++t) {
    out += std::to_string(s.timestamps[t]);
    for (double v : s.pc_kw[t]) out += "," + format_double(v);
    for (double v : s.pg_kw[t]) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

void write_measurements(const std::string& path, const MeasurementSeries& series) {
  spit(path, format_measurements(series));
}

TimeSeriesDataset to_dataset(const NetworkModel& model, const MeasurementSeries& series, double power_factor,
                             double train_fraction) {
  const double tan_phi = reactive_ratio(power_factor);
  const std::size_t n = model.size();

  std::vector<std::optional<std::size_t>> load_col(n + 1), pv_col(n + 1);
  for (std::size_t c = 0; c < series.load_labels.size(); ++c)
    if (auto b = model.find_label(series.load_labels[c]); b && *b > 0) load_col[*b] = c;
  for (std::size_t c = 0; c < series.pv_labels.size(); ++c)
    if (auto b = model.find_label(series.pv_labels[c]); b && *b > 0) pv_col[*b] = c;

  std::string missing;
  for (BusId b = 1; b <= n; ++b) {
    if (model.peak_load()[b] > 0.0 && !load_col[b]) missing += " " + model.label(b) + std::string(kLoadSuffix);
    if (model.inverter_at(b) && !pv_col[b]) missing += " " + model.label(b) + std::string(kPvSuffix);
  }
  if (!missing.empty()) fail(ErrorCode::MissingColumn, "time series lacks columns:" + missing);

  TimeSeriesDataset data;
  data.intervals.reserve(series.timestamps.size());
  for (std::size_t t = 0; t < series.timestamps.size(); ++t) {
    GridState s;
    s.timestamp = series.timestamps[t];
    s.p.assign(n, 0.0);
    s.q_c.assign(n, 0.0);
    for (BusId b = 1; b <= n; ++b) {
      double pc = load_col[b] ? series.pc_kw[t][*load_col[b]] : 0.0;
      double pg = 0.0;
      if (auto k = model.inverter_at(b)) {
        pg = series.pg_kw[t][*pv_col[b]];
        const double nameplate = model.pu_to_kw(model.inverters()[*k].p_rated);
        if (pg > nameplate || pg < 0.0) {
          pg = std::clamp(pg, 0.0, nameplate);
          ++data.clipped;
        }
      }
      s.p[b - 1] = model.kw_to_pu(pg - pc);
      s.q_c[b - 1] = model.kw_to_pu(pc * tan_phi);
    }
    data.intervals.push_back(std::move(s));
  }
  if (series.timestamps.size() > 1) {
    std::vector<long long> gaps;
    for (std::size_t t = 1; t < series.timestamps.size(); ++t)
      gaps.push_back(series.timestamps[t] - series.timestamps[t - 1]);
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    data.interval_s = static_cast<double>(gaps[gaps.size() / 2]);
  }
  split(data, train_fraction);
  return data;
}

TimeSeriesDataset load_timeseries(const std::string& path, const NetworkModel& model, double power_factor,
                                  double train_fraction) {
  TimeSeriesDataset data = to_dataset(model, read_measurements(path), power_factor, train_fraction);
  data.provenance = "file:" + path;
  return data;
}

void split(TimeSeriesDataset& data, double train_fraction) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
    fail(ErrorCode::InvalidArgument, "train fraction must lie in [0, 1]");
  const std::size_t total = data.intervals.size();
  const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(total) + 1e-9));
  data.train.clear();
  data.test.clear();
  for (std::size_t i = 0; i < total; ++i) (i < cut ? data.train : data.test).push_back(i);
}

MeasurementSeries synthesize_measurements(const NetworkModel& model, const ProfileConfig& cfg, std::uint64_t seed) {
  if (cfg.days < 1 || cfg.interval_s < 1 || 86400 % cfg.interval_s != 0)
    fail(ErrorCode::InvalidArgument, "profile needs days >= 1 and an interval dividing one day");
  if (!(cfg.sunrise_h < cfg.sunset_h)) fail(ErrorCode::InvalidArgument, "sunrise must precede sunset");
  if (cfg.load_scale < 0.0 || cfg.solar_scale < 0.0 || cfg.load_noise < 0.0 || cfg.cloud_rate < 0.0 ||
      cfg.max_ramp < 0.0 || cfg.load_base < 0.0 || cfg.load_base > 1.0)
    fail(ErrorCode::InvalidArgument, "profile amplitudes must be nonnegative");

  const int per_day = 86400 / cfg.interval_s;
  const std::size_t steps = static_cast<std::size_t>(cfg.days) * per_day;
  const double dt_h = cfg.interval_s / 3600.0;
  Rng rng(seed);

  double shape_max = 0.0;
  for (int k = 0; k < 1440; ++k) shape_max = std::max(shape_max, raw_load_shape(k / 60.0));

  MeasurementSeries s;
  s.timestamps.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) s.timestamps[t] = cfg.start_timestamp + static_cast<long long>(t) * cfg.interval_s;

  std::vector<BusId> loads;
  for (BusId b = 1; b <= model.size(); ++b)
    if (model.peak_load()[b] > 0.0) loads.push_back(b);
  for (BusId b : loads) s.load_labels.push_back(model.label(b));
  for (const InverterSpec& inv : model.inverters()) s.pv_labels.push_back(model.label(inv.bus));
  s.pc_kw.assign(steps, std::vector<double>(loads.size(), 0.0));
  s.pg_kw.assign(steps, std::vector<double>(model.num_inverters(), 0.0));

  const double rho = std::exp(-cfg.interval_s / 1800.0);
  for (std::size_t c = 0; c < loads.size(); ++c) {
    const double peak_kw = model.pu_to_kw(model.peak_load()[loads[c]]);
    const double shift = rng.uniform(-0.75, 0.75);
    const double amp = rng.uniform(0.9, 1.0);
    double noise = cfg.load_noise * rng.normal();
    for (std::size_t t = 0; t < steps; ++t) {
      const double h = (t % per_day) * dt_h;
      const double shape = cfg.load_base + (1.0 - cfg.load_base) * raw_load_shape(h - shift) / shape_max;
      s.pc_kw[t][c] = std::max(0.0, peak_kw * cfg.load_scale * amp * shape * (1.0 + noise));
      noise = rho * noise + std::sqrt(1.0 - rho * rho) * cfg.load_noise * rng.normal();
    }
  }

  const double ramp_fraction = cfg.max_ramp * std::min(1.0, cfg.interval_s / 60.0);
  for (std::size_t k = 0; k < model.num_inverters(); ++k) {
    const double nameplate = model.pu_to_kw(model.inverters()[k].p_rated);
    const double max_delta = ramp_fraction * nameplate;
    double prev = 0.0;
    double depth = 0.0;
    double remaining_h = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      const double h = (t % per_day) * dt_h;
      const double clear = clear_sky(h, cfg.sunrise_h, cfg.sunset_h);
      if (remaining_h > 0.0) {
        remaining_h -= dt_h;
        if (remaining_h <= 0.0) depth = 0.0;
      } else if (clear > 0.0 && rng.uniform() < cfg.cloud_rate * dt_h) {
        depth = rng.uniform(0.3, 0.8);
        remaining_h = rng.uniform(2.0, 20.0) / 60.0;
      }
      const double target = nameplate * cfg.solar_scale * clear * (1.0 - depth);
      const double pg = std::clamp(prev + std::clamp(target - prev, -max_delta, max_delta), 0.0, nameplate);
      s.pg_kw[t][k] = pg;
      prev = pg;
    }
  }
  return s;
}

TimeSeriesDataset synthesize_timeseries(const NetworkModel& model, const ProfileConfig& profile, std::uint64_t seed) {
  TimeSeriesDataset data =
      to_dataset(model, synthesize_measurements(model, profile, seed), profile.power_factor, profile.train_fraction);
  data.provenance = "synthetic:" + std::to_string(seed);
  return data;
}

GridState nominal_state(const NetworkModel& model, double load_factor, double pv_fraction, double power_factor) {
  const double tan_phi = reactive_ratio(power_factor);
  GridState s;
  s.p.assign(model.size(), 0.0);
  s.q_c.assign(model.size(), 0.0);
  for (BusId b = 1; b <= model.size(); ++b) {
    const double pc = load_factor * model.peak_load()[b];
    s.p[b - 1] = -pc;
    s.q_c[b - 1] = pc * tan_phi;
  }
  for (const InverterSpec& inv : model.inverters()) s.p[inv.bus - 1] += pv_fraction * inv.p_rated;
  return s;
}

}  // namespace voltcraft
