#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace voltcraft {

/// Dense bus index. 0 is the substation, 1..N are the branch buses.
using BusId = std::size_t;

/// Line n joins bus n to its parent. Impedance in per-unit.
struct Line {
  BusId bus = 0;
  BusId parent = 0;
  double r = 0.0;
  double x = 0.0;
};

struct InverterSpec {
  BusId bus = 0;
  double p_rated = 0.0;  // per-unit
  double s_rated = 0.0;  // per-unit
  double q_min = 0.0;
  double q_max = 0.0;
};

/// Squared-magnitude voltage limits.
struct VoltageBand {
  double v_min = 0.9025;
  double v_max = 1.1025;
};

inline constexpr double kDefaultOversizing = 1.08;

/// Symmetric reactive box sqrt(s^2 - p^2). Throws Capability if s < p.
std::pair<double, double> reactive_capability(double p_rated, double s_rated);
std::pair<double, double> reactive_capability(const InverterSpec& spec);

/// Unvalidated description of a feeder, in the units of the feeder file.
/// Labels may be arbitrary; NetworkModel::build maps them to dense ids.
struct FeederDescription {
  struct Bus {
    std::string label;
    std::optional<std::string> parent;  // nullopt for the substation
    double r_pu = 0.0;
    double x_pu = 0.0;
    double peak_load_kw = 0.0;
  };
  struct Inverter {
    std::string bus;
    double p_rated_kw = 0.0;
    std::optional<double> s_rated_kw;
    std::optional<double> q_min_kvar;
    std::optional<double> q_max_kvar;
  };

  std::string name;
  double base_mva = 1.0;
  double base_kv = 12.47;
  double v0_pu = 1.0;  // magnitude
  double band_min_pu = 0.95;  // magnitudes
  double band_max_pu = 1.05;
  std::vector<Bus> buses;
  std::vector<Inverter> inverters;
};

/// Radial feeder in per-unit. Immutable once built.
class NetworkModel {
 public:
  static NetworkModel build(const FeederDescription& desc);

  /// Number of branch buses N (== number of lines).
  std::size_t size() const noexcept { return lines_.size(); }
  std::size_t num_buses() const noexcept { return lines_.size() + 1; }
  std::size_t num_inverters() const noexcept { return inverters_.size(); }

  const std::string& name() const noexcept { return name_; }
  double base_mva() const noexcept { return base_mva_; }
  double base_kv() const noexcept { return base_kv_; }
  /// Squared substation voltage.
  double v0() const noexcept { return v0_; }

  /// Line feeding bus n (n >= 1).
  const Line& line(BusId bus) const;
  std::span<const Line> lines() const noexcept { return lines_; }
  BusId parent(BusId bus) const { return line(bus).parent; }
  std::span<const BusId> children(BusId bus) const;
  const VoltageBand& band(BusId bus) const;

  /// Root first; among buses whose parent is already placed, the smallest
  /// id goes next.
  std::span<const BusId> topological_order() const noexcept { return order_; }
  std::size_t depth() const noexcept { return depth_; }

  std::span<const InverterSpec> inverters() const noexcept { return inverters_; }
  /// Index into inverters() of the unit at `bus`, if any.
  std::optional<std::size_t> inverter_at(BusId bus) const;

  const std::string& label(BusId bus) const;
  std::optional<BusId> find_label(const std::string& label) const;

  /// Nominal peak active load per bus in per-unit (entry 0 unused).
  std::span<const double> peak_load() const noexcept { return peak_load_; }

  double kw_to_pu(double kw) const noexcept { return kw / (base_mva_ * 1000.0); }
  double pu_to_kw(double pu) const noexcept { return pu * base_mva_ * 1000.0; }

 private:
  NetworkModel() = default;

  std::string name_;
  double base_mva_ = 1.0;
  double base_kv_ = 1.0;
  double v0_ = 1.0;
  std::vector<Line> lines_;  // lines_[n - 1] feeds bus n
  std::vector<std::vector<BusId>> children_;
  std::vector<VoltageBand> bands_;  // per bus, including root
  std::vector<BusId> order_;
  std::size_t depth_ = 0;
  std::vector<InverterSpec> inverters_;
  std::vector<std::optional<std::size_t>> inverter_index_;
  std::vector<std::string> labels_;
  std::vector<double> peak_load_;
};

/// Per-interval state s = (p, q_c), both of length N, entry n-1 for bus n.
struct GridState {
  std::vector<double> p;    // net active injection p^g - p^c
  std::vector<double> q_c;  // reactive consumption
  long long timestamp = 0;
};

void validate_state(const NetworkModel& model, const GridState& state);

FeederDescription parse_feeder(const std::string& text);
FeederDescription read_feeder_file(const std::string& path);
NetworkModel load_network(const std::string& path);

/// FNV-1a over the raw feeder file bytes, hex encoded.
std::string file_digest(const std::string& path);

}  // namespace voltcraft
