#include "voltcraft/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include "voltcraft/error.hpp"

namespace voltcraft {

namespace {

using json = nlohmann::json;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const boost::math::normal_distribution<double> kStd;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void check_dist(const TruncatedGaussian& d) {
  if (!(d.lo < d.hi) || !(d.sigma > 0.0) || !std::isfinite(d.mu) || !std::isfinite(d.sigma) ||
      !std::isfinite(d.lo) || !std::isfinite(d.hi))
    fail(ErrorCode::InvalidArgument, "truncated Gaussian needs lo < hi, sigma > 0 and finite parameters");
}

}  // namespace

double normal_pdf(double x) { return std::exp(log_pdf(x)); }
double normal_cdf(double x) { return boost::math::cdf(kStd, x); }

double log_normalizer(const TruncatedGaussian& d) {
  check_dist(d);
  const double alpha = (d.lo - d.mu) / d.sigma;
  const double beta = (d.hi - d.mu) / d.sigma;
  double z;
  if (alpha >= 0.0) {
    const double qa = boost::math::cdf(boost::math::complement(kStd, alpha));
    const double qb = boost::math::cdf(boost::math::complement(kStd, beta));
    z = qa - qb;
  } else {
    z = boost::math::cdf(kStd, beta) - boost::math::cdf(kStd, alpha);
  }
  if (!(z >= 1e-300)) fail(ErrorCode::DegenerateSupport, "truncation mass underflows");
  return std::log(z);
}

double sample(const TruncatedGaussian& d, Rng& rng) {
  log_normalizer(d);  // rejects degenerate support
  const double alpha = (d.lo - d.mu) / d.sigma;
  const double beta = (d.hi - d.mu) / d.sigma;
  const double u = rng.uniform();
  double x;
  if (alpha >= 0.0) {
    // Work with upper-tail probabilities so the far tail keeps precision.
    const double qa = boost::math::cdf(boost::math::complement(kStd, alpha));
    const double qb = boost::math::cdf(boost::math::complement(kStd, beta));
    x = boost::math::quantile(boost::math::complement(kStd, qa - u * (qa - qb)));
  } else {
    const double pa = boost::math::cdf(kStd, alpha);
    const double pb = boost::math::cdf(kStd, beta);
    x = boost::math::quantile(kStd, pa + u * (pb - pa));
  }
  return std::clamp(d.mu + d.sigma * x, d.lo, d.hi);
}

double log_prob(const TruncatedGaussian& d, double q) {
  if (!(q >= d.lo && q <= d.hi)) fail(ErrorCode::OutOfSupport, "action outside the distribution support");
  const double log_z = log_normalizer(d);
  return log_pdf((q - d.mu) / d.sigma) - std::log(d.sigma) - log_z;
}

TruncatedGaussianScore score(const TruncatedGaussian& d, double q) {
  if (!(q >= d.lo && q <= d.hi)) fail(ErrorCode::OutOfSupport, "action outside the distribution support");
  const double log_z = log_normalizer(d);
  const double alpha = (d.lo - d.mu) / d.sigma;
  const double beta = (d.hi - d.mu) / d.sigma;
  const double z = (q - d.mu) / d.sigma;
  const double ra = std::exp(log_pdf(alpha) - log_z);
  const double rb = std::exp(log_pdf(beta) - log_z);
  TruncatedGaussianScore g;
  g.d_mu = (z + rb - ra) / d.sigma;
  g.d_sigma = (z * z - 1.0 + beta * rb - alpha * ra) / d.sigma;
  return g;
}

PolicyModel::PolicyModel(std::vector<int> layer_sizes, std::vector<ActionBox> action_box, double sigma_floor)
    : sizes_(std::move(layer_sizes)), box_(std::move(action_box)), sigma_floor_(sigma_floor) {
  if (sizes_.size() < 2) fail(ErrorCode::DimensionMismatch, "policy needs at least input and output layers");
  for (int s : sizes_)
    if (s <= 0) fail(ErrorCode::DimensionMismatch, "layer sizes must be positive");
  if (sizes_.back() != 2 * static_cast<int>(box_.size()))
    fail(ErrorCode::DimensionMismatch, "output layer must have two entries per inverter");
  for (const ActionBox& b : box_)
    if (!(b.lo < b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi))
      fail(ErrorCode::InvalidArgument, "action box needs finite lo < hi");
  if (!(sigma_floor_ > 0.0) || !std::isfinite(sigma_floor_))
    fail(ErrorCode::InvalidArgument, "sigma_floor must be positive");
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
    count += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
  theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count));
  mean_.assign(sizes_.front(), 0.0);
  scale_.assign(sizes_.front(), 1.0);
}

PolicyModel PolicyModel::for_network(const NetworkModel& model, std::vector<int> hidden, double sigma_floor,
                                     std::uint64_t seed) {
  std::vector<int> sizes;
  sizes.push_back(2 * static_cast<int>(model.size()));
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(2 * static_cast<int>(model.num_inverters()));
  std::vector<ActionBox> box;
  for (const InverterSpec& inv : model.inverters()) box.push_back({inv.q_min, inv.q_max});
  PolicyModel p(std::move(sizes), std::move(box), sigma_floor);
  p.initialize(seed);
  return p;
}

void PolicyModel::initialize(std::uint64_t seed) {
  Rng rng(seed);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(in) * out; ++k) theta_[off++] = rng.uniform(-limit, limit);
    for (int k = 0; k < out; ++k) theta_[off++] = 0.0;
  }
}

void PolicyModel::set_params(const Eigen::VectorXd& theta) {
  if (theta.size() != theta_.size()) fail(ErrorCode::DimensionMismatch, "parameter vector has the wrong length");
  if (!theta.allFinite()) fail(ErrorCode::InvalidArgument, "parameters must be finite");
  theta_ = theta;
}

void PolicyModel::set_normalization(std::vector<double> mean, std::vector<double> scale) {
  if (mean.size() != static_cast<std::size_t>(input_size()) || scale.size() != mean.size())
    fail(ErrorCode::DimensionMismatch, "normalization length does not match the input layer");
  for (std::size_t i = 0; i < mean.size(); ++i)
    if (!std::isfinite(mean[i]) || !(scale[i] > 0.0) || !std::isfinite(scale[i]))
      fail(ErrorCode::InvalidArgument, "normalization needs finite means and positive scales");
  mean_ = std::move(mean);
  scale_ = std::move(scale);
}

void PolicyModel::fit_normalization(std::span<const GridState> states) {
  const std::size_t n = static_cast<std::size_t>(input_size());
  std::vector<double> mean(n, 0.0), var(n, 0.0);
  if (states.empty()) fail(ErrorCode::InvalidArgument, "cannot fit normalization on an empty dataset");
  for (const GridState& s : states) {
    const std::vector<double> x = input_vector(s);
    if (x.size() != n) fail(ErrorCode::DimensionMismatch, "state length does not match the input layer");
    for (std::size_t i = 0; i < n; ++i) mean[i] += x[i];
  }
  for (double& m : mean) m /= static_cast<double>(states.size());
  for (const GridState& s : states) {
    const std::vector<double> x = input_vector(s);
    for (std::size_t i = 0; i < n; ++i) var[i] += (x[i] - mean[i]) * (x[i] - mean[i]);
  }
  std::vector<double> scale(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double sd = std::sqrt(var[i] / static_cast<double>(states.size()));
    scale[i] = sd > 1e-12 ? sd : 1.0;
  }
  set_normalization(std::move(mean), std::move(scale));
}

std::vector<double> PolicyModel::input_vector(const GridState& state) {
  std::vector<double> x(state.p);
  x.insert(x.end(), state.q_c.begin(), state.q_c.end());
  return x;
}

PolicyModel::Tape PolicyModel::run(std::span<const double> input) const {
  if (static_cast<int>(input.size()) != input_size())
    fail(ErrorCode::DimensionMismatch, "input has " + std::to_string(input.size()) + " entries, policy expects " +
                                           std::to_string(input_size()));
  Tape tape;
  Eigen::VectorXd x(input_size());
  for (int i = 0; i < input_size(); ++i) x[i] = (input[i] - mean_[i]) / scale_[i];
  if (!x.allFinite()) fail(ErrorCode::NonFiniteActivation, "non-finite policy input");
  tape.act.push_back(x);
  Eigen::Index off = 0;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<const RowMat> W(theta_.data() + off, out, in);
    off += static_cast<Eigen::Index>(in) * out;
    Eigen::Map<const Eigen::VectorXd> b(theta_.data() + off, out);
    off += out;
    Eigen::VectorXd y = W * tape.act.back() + b;
    if (!y.allFinite()) fail(ErrorCode::NonFiniteActivation, "non-finite activation in layer " + std::to_string(l + 1));
    if (l + 1 < layers) {
      tape.act.push_back(y.cwiseMax(0.0));
    } else {
      tape.out = std::move(y);
    }
  }
  return tape;
}

PolicyOutput PolicyModel::head(const Eigen::VectorXd& out) const {
  const std::size_t m = box_.size();
  PolicyOutput o;
  o.mu.resize(m);
  o.sigma.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    o.mu[k] = box_[k].lo + (box_[k].hi - box_[k].lo) * logistic(out[static_cast<Eigen::Index>(k)]);
    o.sigma[k] = softplus(out[static_cast<Eigen::Index>(m + k)]) + sigma_floor_;
  }
  return o;
}

PolicyOutput PolicyModel::forward(std::span<const double> input) const { return head(run(input).out); }

std::vector<TruncatedGaussian> PolicyModel::distribution(std::span<const double> input) const {
  const PolicyOutput o = forward(input);
  std::vector<TruncatedGaussian> d(box_.size());
  for (std::size_t k = 0; k < box_.size(); ++k) d[k] = {o.mu[k], o.sigma[k], box_[k].lo, box_[k].hi};
  return d;
}

double PolicyModel::log_prob(std::span<const double> input, std::span<const double> action) const {
  if (action.size() != box_.size()) fail(ErrorCode::DimensionMismatch, "action length does not match the policy");
  const auto d = distribution(input);
  double lp = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) lp += voltcraft::log_prob(d[k], action[k]);
  return lp;
}

std::vector<double> PolicyModel::sample(std::span<const double> input, Rng& rng) const {
  const auto d = distribution(input);
  std::vector<double> q(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) q[k] = voltcraft::sample(d[k], rng);
  return q;
}

std::vector<double> PolicyModel::mean_action(std::span<const double> input) const {
  const PolicyOutput o = forward(input);
  std::vector<double> q(o.mu.size());
  for (std::size_t k = 0; k < q.size(); ++k) q[k] = std::clamp(o.mu[k], box_[k].lo, box_[k].hi);
  return q;
}

PolicyGradientRecord PolicyModel::grad_log_prob(std::span<const double> input, std::span<const double> action) const {
  if (action.size() != box_.size()) fail(ErrorCode::DimensionMismatch, "action length does not match the policy");
  const Tape tape = run(input);
  const PolicyOutput o = head(tape.out);
  const std::size_t m = box_.size();

  PolicyGradientRecord rec;
  rec.action.assign(action.begin(), action.end());
  Eigen::VectorXd g(2 * m);
  for (std::size_t k = 0; k < m; ++k) {
    const TruncatedGaussian d{o.mu[k], o.sigma[k], box_[k].lo, box_[k].hi};
    rec.log_prob += voltcraft::log_prob(d, action[k]);
    const TruncatedGaussianScore sc = score(d, action[k]);
    const double a = tape.out[static_cast<Eigen::Index>(k)];
    const double b = tape.out[static_cast<Eigen::Index>(m + k)];
    const double s = logistic(a);
    g[static_cast<Eigen::Index>(k)] = sc.d_mu * (box_[k].hi - box_[k].lo) * s * (1.0 - s);
    g[static_cast<Eigen::Index>(m + k)] = sc.d_sigma * logistic(b);
  }

  rec.grad_theta_log_prob = Eigen::VectorXd::Zero(theta_.size());
  Eigen::Index end = theta_.size();
  for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const Eigen::Index boff = end - out;
    const Eigen::Index woff = boff - static_cast<Eigen::Index>(in) * out;
    Eigen::Map<RowMat> dW(rec.grad_theta_log_prob.data() + woff, out, in);
    dW.noalias() = g * tape.act[l].transpose();
    rec.grad_theta_log_prob.segment(boff, out) = g;
    if (l > 0) {
      Eigen::Map<const RowMat> W(theta_.data() + woff, out, in);
      Eigen::VectorXd prev = W.transpose() * g;
      for (int i = 0; i < in; ++i)
        if (!(tape.act[l][i] > 0.0)) prev[i] = 0.0;
      g = std::move(prev);
    }
    end = woff;
  }
  if (!rec.grad_theta_log_prob.allFinite() || !std::isfinite(rec.log_prob))
    fail(ErrorCode::NonFiniteGradient, "non-finite policy gradient");
  return rec;
}

void PolicyModel::check_layout() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
    count += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
  if (count != num_params()) fail(ErrorCode::DimensionMismatch, "parameter count does not match layer sizes");
}

std::string PolicyModel::to_json() const {
  check_layout();
  json j;
  j["version"] = kVersion;
  j["layer_sizes"] = sizes_;
  json box = json::array();
  for (const ActionBox& b : box_) box.push_back({b.lo, b.hi});
  j["action_box"] = box;
  j["sigma_floor"] = sigma_floor_;
  j["normalization"] = {{"mean", mean_}, {"scale", scale_}};
  json layers = json::array();
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const Eigen::Index nw = static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1];
    std::vector<double> w(theta_.data() + off, theta_.data() + off + nw);
    off += nw;
    std::vector<double> b(theta_.data() + off, theta_.data() + off + sizes_[l + 1]);
    off += sizes_[l + 1];
    layers.push_back({{"weight", w}, {"bias", b}});
  }
  j["layers"] = layers;
  return j.dump(1);
}

PolicyModel PolicyModel::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("model file: ") + e.what());
  }
  try {
    if (!j.is_object() || !j.contains("version")) fail(ErrorCode::Parse, "model file has no version tag");
    const std::string version = j.at("version").get<std::string>();
    if (version != kVersion)
      fail(ErrorCode::VersionMismatch, "model version '" + version + "', expected '" + kVersion + "'");
    std::vector<ActionBox> box;
    for (const json& b : j.at("action_box")) {
      if (b.size() != 2) fail(ErrorCode::Parse, "action_box entries need [lo, hi]");
      box.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    }
    PolicyModel p(j.at("layer_sizes").get<std::vector<int>>(), std::move(box), j.at("sigma_floor").get<double>());
    p.set_normalization(j.at("normalization").at("mean").get<std::vector<double>>(),
                        j.at("normalization").at("scale").get<std::vector<double>>());
    const json& layers = j.at("layers");
    if (layers.size() + 1 != p.sizes_.size()) fail(ErrorCode::Parse, "model file has the wrong number of layers");
    Eigen::VectorXd theta(p.theta_.size());
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto w = layers[l].at("weight").get<std::vector<double>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(p.sizes_[l]) * p.sizes_[l + 1] ||
          b.size() != static_cast<std::size_t>(p.sizes_[l + 1]))
        fail(ErrorCode::Parse, "layer " + std::to_string(l + 1) + " has the wrong shape");
      for (double v : w) theta[off++] = v;
      for (double v : b) theta[off++] = v;
    }
    p.set_params(theta);
    return p;
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("model file: ") + e.what());
  }
}

void PolicyModel::save(const std::filesystem::path& path) const {
  const std::string text = to_json();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << text << '\n';
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

PolicyModel PolicyModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

}  // namespace voltcraft
