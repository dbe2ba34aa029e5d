#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltcraft/network.hpp"
#include "voltcraft/rng.hpp"

namespace voltcraft {

/// Gaussian restricted and renormalized to [lo, hi].
struct TruncatedGaussian {
  double mu = 0.0;
  double sigma = 1.0;
  double lo = -1.0;
  double hi = 1.0;
};

/// Standard normal helpers.
double normal_pdf(double x);
double normal_cdf(double x);

/// log(Phi(beta) - Phi(alpha)) evaluated on the side of the mean where
/// it does not cancel.
double log_normalizer(const TruncatedGaussian& dist);

double sample(const TruncatedGaussian& dist, Rng& rng);
double log_prob(const TruncatedGaussian& dist, double q);

struct TruncatedGaussianScore {
  double d_mu = 0.0;
  double d_sigma = 0.0;
};
TruncatedGaussianScore score(const TruncatedGaussian& dist, double q);

struct PolicyOutput {
  std::vector<double> mu;
  std::vector<double> sigma;
};

struct PolicyGradientRecord {
  std::vector<double> action;
  double log_prob = 0.0;
  Eigen::VectorXd grad_theta_log_prob;
};

struct ActionBox {
  double lo = 0.0;
  double hi = 0.0;
};

/// Feed-forward ReLU network mapping a standardized state (p, q_c) to a
/// truncated-Gaussian head per inverter. The final layer emits
/// [a_1..a_M, b_1..b_M] with mu = lo + (hi - lo) logistic(a) and
/// sigma = softplus(b) + sigma_floor.
///
/// Parameters live in one flat vector: for each layer, the weight matrix
/// (rows = outputs) in row-major order followed by the bias.
class PolicyModel {
 public:
  static constexpr const char* kVersion = "voltcraft-policy/1";

  PolicyModel() = default;
  PolicyModel(std::vector<int> layer_sizes, std::vector<ActionBox> action_box, double sigma_floor);

  /// Network sized for the feeder: 2N inputs, 2M outputs. Weights are drawn
  /// uniformly from +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
  static PolicyModel for_network(const NetworkModel& model, std::vector<int> hidden,
                                 double sigma_floor, std::uint64_t seed);

  void initialize(std::uint64_t seed);

  const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
  int input_size() const { return sizes_.front(); }
  std::size_t num_actions() const noexcept { return box_.size(); }
  std::size_t num_params() const noexcept { return static_cast<std::size_t>(theta_.size()); }
  const std::vector<ActionBox>& action_box() const noexcept { return box_; }
  double sigma_floor() const noexcept { return sigma_floor_; }

  const Eigen::VectorXd& params() const noexcept { return theta_; }
  void set_params(const Eigen::VectorXd& theta);

  const std::vector<double>& input_mean() const noexcept { return mean_; }
  const std::vector<double>& input_scale() const noexcept { return scale_; }
  void set_normalization(std::vector<double> mean, std::vector<double> scale);
  /// Mean and standard deviation of the inputs over `states`; constant
  /// features get scale 1.
  void fit_normalization(std::span<const GridState> states);

  static std::vector<double> input_vector(const GridState& state);

  PolicyOutput forward(std::span<const double> input) const;
  PolicyOutput forward(const GridState& state) const { return forward(input_vector(state)); }

  std::vector<TruncatedGaussian> distribution(std::span<const double> input) const;

  double log_prob(std::span<const double> input, std::span<const double> action) const;
  std::vector<double> sample(std::span<const double> input, Rng& rng) const;
  /// Box-clipped mean action.
  std::vector<double> mean_action(std::span<const double> input) const;

  PolicyGradientRecord grad_log_prob(std::span<const double> input, std::span<const double> action) const;

  std::string to_json() const;
  static PolicyModel from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static PolicyModel load(const std::filesystem::path& path);

 private:
  struct Tape {
    std::vector<Eigen::VectorXd> act;  // act[0] = standardized input
    Eigen::VectorXd out;               // raw final-layer output
  };
  void check_layout() const;
  Tape run(std::span<const double> input) const;
  PolicyOutput head(const Eigen::VectorXd& out) const;

  std::vector<int> sizes_;
  std::vector<ActionBox> box_;
  double sigma_floor_ = 0.01;
  Eigen::VectorXd theta_;
  std::vector<double> mean_;
  std::vector<double> scale_;
};

}  // namespace voltcraft
