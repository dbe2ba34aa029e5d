#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltcraft/network.hpp"
#include "voltcraft/policy.hpp"
#include "voltcraft/powerflow.hpp"

namespace voltcraft {

enum class OptimizerKind { Sgd, Adam };
enum class BaselineMode { None, RunningMean };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 30;
  int epochs = 40;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double penalty_coeff = 100.0;
  BaselineMode baseline_mode = BaselineMode::RunningMean;
  int baseline_window = 200;
  std::uint64_t seed = 1;
  double sigma_floor = 0.01;
  std::vector<int> hidden{48, 32, 16};
  /// Rescale the batch gradient to this L2 norm when it is longer; <= 0
  /// disables clipping.
  double clip_norm = 10.0;
  /// Window of the running average reported in the loss trace.
  int trace_window = 200;
};

void validate(const TrainConfig& config);

const char* to_string(OptimizerKind kind);
const char* to_string(BaselineMode mode);

struct EpisodeRecord {
  std::size_t state_index = 0;
  PolicyGradientRecord grad;
  double loss = 0.0;  // penalized
};

struct EpisodeBatch {
  std::vector<EpisodeRecord> records;
  double batch_mean_loss() const;
};

/// (1/B) sum_i (f_i - b) grad log pi_i, summed in record order.
Eigen::VectorXd estimate_gradient(const EpisodeBatch& batch, double baseline);

struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long long step = 0;
};

/// In-place SGD or Adam step on the model parameters.
void apply_update(PolicyModel& model, const Eigen::VectorXd& gradient, const TrainConfig& config,
                  OptimizerState& state);

/// Scales g to at most `max_norm` in L2; returns the norm before clipping.
double clip_gradient(Eigen::VectorXd& g, double max_norm);

/// Trailing mean over the last `window` entries (fewer at the start),
/// summed oldest first.
std::vector<double> running_average(std::span<const double> raw, int window);

struct LossTrace {
  std::vector<double> raw;  // penalized loss per step
  std::vector<double> objective;  // unpenalized loss per step
  std::vector<double> running_avg;
  std::vector<std::optional<double>> baseline_opt;
  std::vector<bool> feasible;
  std::vector<std::size_t> state_index;
};

std::string format_trace_csv(const LossTrace& trace);

struct TrainResult {
  PolicyModel model;
  LossTrace trace;
  long long updates = 0;
  Eigen::VectorXd final_gradient;
};

/// Policy-gradient training. `states` is visited in a fresh shuffled order
/// each epoch; one update per `batch_size` samples (the last batch of an
/// epoch may be shorter). `baseline_opt`, when given, is indexed like
/// `states` and copied into the trace (NaN marks a missing optimum).
TrainResult train(PolicyModel model, const NetworkModel& network, std::span<const GridState> states,
                  const TrainConfig& config, std::span<const double> baseline_opt = {});

/// Raises DimensionMismatch unless the policy was built for this feeder.
void check_compatible(const PolicyModel& model, const NetworkModel& network);

enum class InferMode { Sample, Deterministic };

std::vector<double> infer(const PolicyModel& model, const GridState& state, InferMode mode, Rng* rng = nullptr);

/// Independent stream seeds derived from one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace voltcraft
