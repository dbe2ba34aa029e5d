#pragma once

#include <optional>
#include <string>
#include <vector>

#include "voltcraft/error.hpp"
#include "voltcraft/network.hpp"
#include "voltcraft/policy.hpp"
#include "voltcraft/rng.hpp"
#include "oracles.hpp"

namespace fixture {

inline voltcraft::NetworkModel feeder(const std::string& json) {
  return voltcraft::NetworkModel::build(voltcraft::parse_feeder(json));
}

inline voltcraft::NetworkModel bundled(const std::string& name) {
  return voltcraft::load_network(oracle::data_path("feeders/" + name + ".json"));
}

// One line, r = 0.02, x = 0.01, with an optional 100 kW inverter at bus 1.
inline voltcraft::NetworkModel two_bus(bool inverter = true, double v0 = 1.0) {
  std::string inv = inverter ? R"([{"bus": 1, "p_rated_kw": 100}])" : "[]";
  return feeder(R"({"base_mva": 1.0, "base_kv": 12.47, "v0_pu": )" + std::to_string(v0) +
                R"(, "buses": [{"id": 0, "parent": null},
                                {"id": 1, "parent": 0, "r_pu": 0.02, "x_pu": 0.01, "peak_load_kw": 100}],
                    "inverters": )" + inv + "}");
}

inline voltcraft::GridState state(std::vector<double> p, std::vector<double> q_c) {
  voltcraft::GridState s;
  s.p = std::move(p);
  s.q_c = std::move(q_c);
  return s;
}

// Random small policy with nontrivial weights and input scaling.
inline voltcraft::PolicyModel random_model(voltcraft::Rng& rng) {
  const int in = 2 + static_cast<int>(rng.below(4));
  const int layers = 1 + static_cast<int>(rng.below(2));
  const int m = 1 + static_cast<int>(rng.below(3));
  std::vector<int> sizes{in};
  for (int l = 0; l < layers; ++l) sizes.push_back(3 + static_cast<int>(rng.below(4)));
  sizes.push_back(2 * m);
  std::vector<voltcraft::ActionBox> box;
  for (int k = 0; k < m; ++k) {
    const double half = rng.uniform(0.02, 0.5);
    box.push_back({-half, half});
  }
  voltcraft::PolicyModel model(sizes, box, rng.uniform(0.005, 0.05));
  Eigen::VectorXd theta(static_cast<Eigen::Index>(model.num_params()));
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = rng.uniform(-1.0, 1.0);
  model.set_params(theta);
  std::vector<double> mean(in), scale(in);
  for (int i = 0; i < in; ++i) {
    mean[i] = rng.uniform(-0.5, 0.5);
    scale[i] = rng.uniform(0.5, 2.0);
  }
  model.set_normalization(mean, scale);
  return model;
}

inline std::vector<double> random_input(const voltcraft::PolicyModel& model, voltcraft::Rng& rng) {
  std::vector<double> x(model.input_size());
  for (double& v : x) v = rng.uniform(-2.0, 2.0);
  return x;
}

// Error code raised by f, or nullopt if it returns normally.
template <class F>
std::optional<voltcraft::ErrorCode> error_of(F&& f) {
  try {
    f();
  } catch (const voltcraft::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace fixture
