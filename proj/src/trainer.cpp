#include "voltcraft/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voltcraft/dataset.hpp"
#include "voltcraft/error.hpp"

namespace voltcraft {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate))
    fail(ErrorCode::InvalidArgument, "learning_rate must be finite and nonnegative");
  if (c.batch_size < 1) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (c.epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0) || !(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0) ||
      !(c.adam_eps > 0.0))
    fail(ErrorCode::InvalidArgument, "Adam constants need 0 <= beta < 1 and eps > 0");
  if (!(c.penalty_coeff >= 0.0)) fail(ErrorCode::InvalidArgument, "penalty_coeff must be nonnegative");
  if (c.baseline_window < 1 || c.trace_window < 1) fail(ErrorCode::InvalidArgument, "windows must be >= 1");
  if (!(c.sigma_floor > 0.0)) fail(ErrorCode::InvalidArgument, "sigma_floor must be positive");
  for (int h : c.hidden)
    if (h < 1) fail(ErrorCode::InvalidArgument, "hidden layer sizes must be >= 1");
}

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }
const char* to_string(BaselineMode mode) { return mode == BaselineMode::RunningMean ? "running_mean" : "none"; }

double EpisodeBatch::batch_mean_loss() const {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const EpisodeRecord& r : records) sum += r.loss;
  return sum / static_cast<double>(records.size());
}

Eigen::VectorXd estimate_gradient(const EpisodeBatch& batch, double baseline) {
  if (batch.records.empty()) fail(ErrorCode::InvalidArgument, "empty episode batch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(batch.records.front().grad.grad_theta_log_prob.size());
  for (const EpisodeRecord& r : batch.records) {
    if (r.grad.grad_theta_log_prob.size() != g.size())
      fail(ErrorCode::DimensionMismatch, "episode gradients have different lengths");
    g += (r.loss - baseline) * r.grad.grad_theta_log_prob;
  }
  g /= static_cast<double>(batch.records.size());
  if (!g.allFinite()) fail(ErrorCode::NonFiniteGradient, "non-finite policy-gradient estimate");
  return g;
}

void apply_update(PolicyModel& model, const Eigen::VectorXd& g, const TrainConfig& config, OptimizerState& st) {
  const Eigen::VectorXd& theta = model.params();
  if (g.size() != theta.size()) fail(ErrorCode::DimensionMismatch, "gradient length does not match the model");
  if (config.optimizer == OptimizerKind::Sgd) {
    model.set_params(theta - config.learning_rate * g);
    ++st.step;
    return;
  }
  if (st.m.size() != g.size()) {
    st.m = Eigen::VectorXd::Zero(g.size());
    st.v = Eigen::VectorXd::Zero(g.size());
    st.step = 0;
  }
  ++st.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  st.m = b1 * st.m + (1.0 - b1) * g;
  st.v = b2 * st.v + (1.0 - b2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  Eigen::VectorXd next = theta;
  for (Eigen::Index i = 0; i < next.size(); ++i)
    next[i] -= config.learning_rate * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + config.adam_eps);
  model.set_params(next);
}

double clip_gradient(Eigen::VectorXd& g, double max_norm) {
  const double norm = g.norm();
  if (max_norm > 0.0 && norm > max_norm) g *= max_norm / norm;
  return norm;
}

std::vector<double> running_average(std::span<const double> raw, int window) {
  if (window < 1) fail(ErrorCode::InvalidArgument, "running-average window must be >= 1");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::size_t first = i + 1 > static_cast<std::size_t>(window) ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t j = first; j <= i; ++j) sum += raw[j];
    out[i] = sum / static_cast<double>(i + 1 - first);
  }
  return out;
}

std::string format_trace_csv(const LossTrace& t) {
  std::string out = "step,raw_loss,objective,running_avg,baseline_opt_loss,feasible\n";
  for (std::size_t i = 0; i < t.raw.size(); ++i) {
    out += std::to_string(i) + "," + format_double(t.raw[i]) + "," + format_double(t.objective[i]) + "," +
           format_double(t.running_avg[i]) + ",";
    if (i < t.baseline_opt.size() && t.baseline_opt[i]) out += format_double(*t.baseline_opt[i]);
    out += t.feasible[i] ? ",1\n" : ",0\n";
  }
  return out;
}

void check_compatible(const PolicyModel& model, const NetworkModel& network) {
  if (model.input_size() != 2 * static_cast<int>(network.size()) || model.num_actions() != network.num_inverters())
    fail(ErrorCode::DimensionMismatch, "policy was built for a different feeder size");
  const auto invs = network.inverters();
  for (std::size_t k = 0; k < invs.size(); ++k) {
    const ActionBox& b = model.action_box()[k];
    if (std::abs(b.lo - invs[k].q_min) > 1e-12 || std::abs(b.hi - invs[k].q_max) > 1e-12)
      fail(ErrorCode::DimensionMismatch, "policy action box differs from inverter capability at bus " +
                                             network.label(invs[k].bus));
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TrainResult train(PolicyModel model, const NetworkModel& network, std::span<const GridState> states,
                  const TrainConfig& config, std::span<const double> baseline_opt) {
  validate(config);
  check_compatible(model, network);
  if (states.empty()) fail(ErrorCode::InvalidArgument, "training set is empty");
  if (!baseline_opt.empty() && baseline_opt.size() != states.size())
    fail(ErrorCode::DimensionMismatch, "baseline_opt must match the training set");
  for (const GridState& s : states) validate_state(network, s);
  model.fit_normalization(states);

  Rng rng(derive_seed(config.seed, 1));
  LossOptions lopts;
  lopts.penalty_coeff = config.penalty_coeff;
  lopts.strict = true;

  TrainResult res;
  LossTrace& trace = res.trace;
  const std::size_t total = states.size() * static_cast<std::size_t>(config.epochs);
  trace.raw.reserve(total);
  OptimizerState opt;
  std::vector<std::size_t> order(states.size());

  EpisodeBatch batch;
  auto flush = [&](int epoch) {
    if (batch.records.empty()) return;
    double b = 0.0;
    if (config.baseline_mode == BaselineMode::RunningMean) {
      // Mean of losses seen before this batch, so b stays independent of
      // the batch's own samples.
      const std::size_t end = trace.raw.size() - batch.records.size();
      const std::size_t first = end > static_cast<std::size_t>(config.baseline_window) ? end - config.baseline_window : 0;
      if (end > first) {
        double sum = 0.0;
        for (std::size_t j = first; j < end; ++j) sum += trace.raw[j];
        b = sum / static_cast<double>(end - first);
      }
    }
    Eigen::VectorXd g;
    try {
      g = estimate_gradient(batch, b);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteGradient) throw;
      fail(ErrorCode::NonFiniteGradient, std::string(e.what()) + " (epoch " + std::to_string(epoch + 1) +
                                             ", update " + std::to_string(res.updates + 1) + ")");
    }
    clip_gradient(g, config.clip_norm);
    apply_update(model, g, config, opt);
    res.final_gradient = std::move(g);
    ++res.updates;
    batch.records.clear();
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const GridState& s = states[idx];
      const std::vector<double> x = PolicyModel::input_vector(s);
      const std::vector<double> q = model.sample(x, rng);
      const LossEvaluation ev = evaluate_loss(network, s, q, lopts);
      EpisodeRecord rec;
      rec.state_index = idx;
      rec.grad = model.grad_log_prob(x, q);
      rec.loss = ev.penalized;
      if (!std::isfinite(rec.loss)) fail(ErrorCode::NonFiniteGradient, "non-finite loss during training");
      trace.raw.push_back(ev.penalized);
      trace.objective.push_back(ev.objective);
      trace.feasible.push_back(ev.feasible);
      trace.state_index.push_back(idx);
      if (baseline_opt.empty() || std::isnan(baseline_opt[idx]))
        trace.baseline_opt.push_back(std::nullopt);
      else
        trace.baseline_opt.push_back(baseline_opt[idx]);
      batch.records.push_back(std::move(rec));
      if (batch.records.size() == static_cast<std::size_t>(config.batch_size)) flush(epoch);
    }
    flush(epoch);
  }
  trace.running_avg = running_average(trace.raw, config.trace_window);
  res.model = std::move(model);
  return res;
}

std::vector<double> infer(const PolicyModel& model, const GridState& state, InferMode mode, Rng* rng) {
  const std::vector<double> x = PolicyModel::input_vector(state);
  if (mode == InferMode::Deterministic) return model.mean_action(x);
  if (!rng) fail(ErrorCode::InvalidArgument, "sample mode needs a random generator");
  return model.sample(x, *rng);
}

}  // namespace voltcraft
