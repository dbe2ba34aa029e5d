#include "voltcraft/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <queue>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "voltcraft/error.hpp"

namespace voltcraft {

namespace {

std::string label_of(const nlohmann::json& j, const char* what) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_number_unsigned()) return std::to_string(j.get<unsigned long long>());
  fail(ErrorCode::Parse, std::string("feeder: ") + what + " must be a string or integer");
}

double number_of(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number())
    fail(ErrorCode::Parse, std::string("feeder: missing numeric field '") + key + "'");
  return it->get<double>();
}

std::optional<double> optional_number(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number())
    fail(ErrorCode::Parse, std::string("feeder: field '") + key + "' must be numeric");
  return it->get<double>();
}

bool all_dense_integer_labels(const FeederDescription& desc, std::size_t root) {
  const std::size_t n = desc.buses.size();
  std::vector<bool> seen(n, false);
  for (const auto& bus : desc.buses) {
    std::size_t pos = 0;
    unsigned long long value = 0;
    try {
      value = std::stoull(bus.label, &pos);
    } catch (...) {
      return false;
    }
    if (pos != bus.label.size() || value >= n || seen[value]) return false;
    seen[value] = true;
  }
  return desc.buses[root].label == "0";
}

}  // namespace

std::pair<double, double> reactive_capability(double p_rated, double s_rated) {
  if (!(p_rated > 0.0) || !std::isfinite(s_rated))
    fail(ErrorCode::Capability, "inverter active rating must be positive");
  if (s_rated < p_rated)
    fail(ErrorCode::Capability, "inverter apparent rating below active rating");
  const double q_max = std::sqrt((s_rated - p_rated) * (s_rated + p_rated));
  return {-q_max, q_max};
}

std::pair<double, double> reactive_capability(const InverterSpec& spec) {
  return reactive_capability(spec.p_rated, spec.s_rated);
}

NetworkModel NetworkModel::build(const FeederDescription& desc) {
  if (!(desc.base_mva > 0.0) || !std::isfinite(desc.base_mva))
    fail(ErrorCode::Unit, "base_mva must be positive");
  if (!(desc.base_kv > 0.0) || !std::isfinite(desc.base_kv))
    fail(ErrorCode::Unit, "base_kv must be positive");
  if (!(desc.v0_pu > 0.0) || !std::isfinite(desc.v0_pu))
    fail(ErrorCode::Unit, "v0_pu must be positive");
  if (!(desc.band_min_pu > 0.0) || !(desc.band_min_pu < desc.band_max_pu) ||
      !std::isfinite(desc.band_max_pu))
    fail(ErrorCode::Unit, "voltage band must satisfy 0 < min < max");
  if (desc.buses.empty()) fail(ErrorCode::Topology, "feeder has no buses");

  std::optional<std::size_t> root;
  std::unordered_map<std::string, std::size_t> by_label;
  for (std::size_t i = 0; i < desc.buses.size(); ++i) {
    const auto& bus = desc.buses[i];
    if (!by_label.emplace(bus.label, i).second)
      fail(ErrorCode::Topology, "bus '" + bus.label + "' listed more than once (multiple parents)");
    if (!bus.parent) {
      if (root) fail(ErrorCode::Topology, "more than one root bus");
      root = i;
    }
  }
  if (!root) fail(ErrorCode::Topology, "no root bus (every bus has a parent)");

  // Dense id assignment: identity when labels already are 0..N with root 0,
  // otherwise root first then file order.
  const std::size_t total = desc.buses.size();
  std::vector<BusId> dense(total);
  if (all_dense_integer_labels(desc, *root)) {
    for (std::size_t i = 0; i < total; ++i) dense[i] = std::stoull(desc.buses[i].label);
  } else {
    BusId next = 1;
    for (std::size_t i = 0; i < total; ++i) dense[i] = (i == *root) ? 0 : next++;
  }

  NetworkModel m;
  m.name_ = desc.name;
  m.base_mva_ = desc.base_mva;
  m.base_kv_ = desc.base_kv;
  m.v0_ = desc.v0_pu * desc.v0_pu;
  const std::size_t n = total - 1;
  m.lines_.resize(n);
  m.children_.assign(total, {});
  m.labels_.resize(total);
  m.peak_load_.assign(total, 0.0);
  m.bands_.assign(total, VoltageBand{desc.band_min_pu * desc.band_min_pu,
                                     desc.band_max_pu * desc.band_max_pu});

  for (std::size_t i = 0; i < total; ++i) {
    const auto& bus = desc.buses[i];
    const BusId id = dense[i];
    m.labels_[id] = bus.label;
    if (!(bus.peak_load_kw >= 0.0) || !std::isfinite(bus.peak_load_kw))
      fail(ErrorCode::Unit, "bus '" + bus.label + "': peak_load_kw must be non-negative");
    m.peak_load_[id] = m.kw_to_pu(bus.peak_load_kw);
    if (i == *root) continue;
    if (*bus.parent == bus.label)
      fail(ErrorCode::Topology, "bus '" + bus.label + "' is its own parent");
    auto it = by_label.find(*bus.parent);
    if (it == by_label.end())
      fail(ErrorCode::Topology,
           "bus '" + bus.label + "' has unknown parent '" + *bus.parent + "' (disconnected)");
    if (!(bus.r_pu >= 0.0) || !std::isfinite(bus.r_pu) || !std::isfinite(bus.x_pu))
      fail(ErrorCode::Unit, "line into bus '" + bus.label + "': r must be >= 0 and x finite");
    if (!(bus.r_pu + std::abs(bus.x_pu) > 0.0))
      fail(ErrorCode::Unit, "line into bus '" + bus.label + "' has zero impedance");
    m.lines_[id - 1] = Line{id, dense[it->second], bus.r_pu, bus.x_pu};
  }

  for (const auto& line : m.lines_) m.children_[line.parent].push_back(line.bus);
  for (auto& c : m.children_) std::sort(c.begin(), c.end());

  // Min-heap Kahn traversal from the root; anything unreached sits on a cycle
  // or in a component detached from the substation.
  std::priority_queue<BusId, std::vector<BusId>, std::greater<>> ready;
  std::vector<std::size_t> level(total, 0);
  ready.push(0);
  while (!ready.empty()) {
    const BusId b = ready.top();
    ready.pop();
    m.order_.push_back(b);
    for (BusId c : m.children_[b]) {
      level[c] = level[b] + 1;
      m.depth_ = std::max(m.depth_, level[c]);
      ready.push(c);
    }
  }
  if (m.order_.size() != total)
    fail(ErrorCode::Topology, "feeder graph has a cycle or a bus disconnected from the root");

  const VoltageBand& root_band = m.bands_[0];
  if (m.v0_ < root_band.v_min || m.v0_ > root_band.v_max)
    fail(ErrorCode::Unit, "substation voltage outside the voltage band");

  m.inverter_index_.assign(total, std::nullopt);
  for (const auto& inv : desc.inverters) {
    auto it = by_label.find(inv.bus);
    if (it == by_label.end()) fail(ErrorCode::UnknownBus, "inverter on unknown bus '" + inv.bus + "'");
    const BusId id = dense[it->second];
    if (id == 0) fail(ErrorCode::Topology, "inverter placed on the substation bus");
    if (m.inverter_index_[id]) fail(ErrorCode::Topology, "two inverters on bus '" + inv.bus + "'");
    InverterSpec spec;
    spec.bus = id;
    spec.p_rated = m.kw_to_pu(inv.p_rated_kw);
    spec.s_rated = inv.s_rated_kw ? m.kw_to_pu(*inv.s_rated_kw) : kDefaultOversizing * spec.p_rated;
    std::tie(spec.q_min, spec.q_max) = reactive_capability(spec);
    if (inv.q_min_kvar || inv.q_max_kvar) {
      const double tol = 1e-9 * std::max(1.0, spec.q_max);
      const double q_lo = inv.q_min_kvar ? m.kw_to_pu(*inv.q_min_kvar) : spec.q_min;
      const double q_hi = inv.q_max_kvar ? m.kw_to_pu(*inv.q_max_kvar) : spec.q_max;
      if (std::abs(q_lo + q_hi) > tol || std::abs(q_hi - spec.q_max) > tol)
        fail(ErrorCode::Capability,
             "inverter on bus '" + inv.bus + "': reactive box must be symmetric sqrt(s^2-p^2)");
    }
    m.inverter_index_[id] = m.inverters_.size();
    m.inverters_.push_back(spec);
  }
  return m;
}

const Line& NetworkModel::line(BusId bus) const {
  if (bus == 0 || bus > lines_.size())
    fail(ErrorCode::UnknownBus, "no line feeds bus " + std::to_string(bus));
  return lines_[bus - 1];
}

std::span<const BusId> NetworkModel::children(BusId bus) const {
  if (bus >= children_.size()) fail(ErrorCode::UnknownBus, "unknown bus " + std::to_string(bus));
  return children_[bus];
}

const VoltageBand& NetworkModel::band(BusId bus) const {
  if (bus >= bands_.size()) fail(ErrorCode::UnknownBus, "unknown bus " + std::to_string(bus));
  return bands_[bus];
}

std::optional<std::size_t> NetworkModel::inverter_at(BusId bus) const {
  if (bus >= inverter_index_.size()) fail(ErrorCode::UnknownBus, "unknown bus " + std::to_string(bus));
  return inverter_index_[bus];
}

const std::string& NetworkModel::label(BusId bus) const {
  if (bus >= labels_.size()) fail(ErrorCode::UnknownBus, "unknown bus " + std::to_string(bus));
  return labels_[bus];
}

std::optional<BusId> NetworkModel::find_label(const std::string& label) const {
  for (BusId b = 0; b < labels_.size(); ++b)
    if (labels_[b] == label) return b;
  return std::nullopt;
}

void validate_state(const NetworkModel& model, const GridState& state) {
  const std::size_t n = model.size();
  if (state.p.size() != n || state.q_c.size() != n)
    fail(ErrorCode::DimensionMismatch, "state vectors must have length " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(state.p[i]) || !std::isfinite(state.q_c[i]))
      fail(ErrorCode::InvalidArgument, "state contains non-finite entries");
}

FeederDescription parse_feeder(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("feeder: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::Parse, "feeder: top level must be an object");

  FeederDescription d;
  d.name = j.value("name", std::string{});
  d.base_mva = number_of(j, "base_mva");
  d.base_kv = number_of(j, "base_kv");
  d.v0_pu = number_of(j, "v0_pu");
  if (auto it = j.find("voltage_band_pu"); it != j.end()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number())
      fail(ErrorCode::Parse, "feeder: voltage_band_pu must be [min, max]");
    d.band_min_pu = (*it)[0].get<double>();
    d.band_max_pu = (*it)[1].get<double>();
  }

  auto buses = j.find("buses");
  if (buses == j.end() || !buses->is_array()) fail(ErrorCode::Parse, "feeder: missing 'buses' array");
  for (const auto& b : *buses) {
    if (!b.is_object() || !b.contains("id")) fail(ErrorCode::Parse, "feeder: bus entries need an 'id'");
    FeederDescription::Bus bus;
    bus.label = label_of(b["id"], "bus id");
    auto parent = b.find("parent");
    if (parent != b.end() && !parent->is_null()) {
      bus.parent = label_of(*parent, "bus parent");
      bus.r_pu = number_of(b, "r_pu");
      bus.x_pu = number_of(b, "x_pu");
    }
    bus.peak_load_kw = optional_number(b, "peak_load_kw").value_or(0.0);
    d.buses.push_back(std::move(bus));
  }

  if (auto invs = j.find("inverters"); invs != j.end()) {
    if (!invs->is_array()) fail(ErrorCode::Parse, "feeder: 'inverters' must be an array");
    for (const auto& i : *invs) {
      if (!i.is_object() || !i.contains("bus")) fail(ErrorCode::Parse, "feeder: inverter needs 'bus'");
      FeederDescription::Inverter inv;
      inv.bus = label_of(i["bus"], "inverter bus");
      inv.p_rated_kw = number_of(i, "p_rated_kw");
      inv.s_rated_kw = optional_number(i, "s_rated_kw");
      inv.q_min_kvar = optional_number(i, "q_min_kvar");
      inv.q_max_kvar = optional_number(i, "q_max_kvar");
      d.inverters.push_back(std::move(inv));
    }
  }
  return d;
}

namespace {
std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace

FeederDescription read_feeder_file(const std::string& path) { return parse_feeder(slurp(path)); }

NetworkModel load_network(const std::string& path) {
  return NetworkModel::build(read_feeder_file(path));
}

std::string file_digest(const std::string& path) {
  const std::string bytes = slurp(path);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace voltcraft
