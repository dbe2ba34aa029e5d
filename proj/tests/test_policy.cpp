#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "fixtures.hpp"
#include "voltcraft/policy.hpp"
#include "voltcraft/rng.hpp"

using namespace voltcraft;
using fixture::error_of;
using fixture::random_input;
using fixture::random_model;

namespace {

const oracle::Quadrature quad;

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments true_moments(const TruncatedGaussian& d) {
  const double m = oracle::expectation([](double q) { return q; }, d.mu, d.sigma, d.lo, d.hi, quad);
  const double m2 = oracle::expectation([](double q) { return q * q; }, d.mu, d.sigma, d.lo, d.hi, quad);
  return {m, std::sqrt(m2 - m * m)};
}

double softplus(double x) { return std::log1p(std::exp(x)); }

}  // namespace

TEST_CASE("standard normal helpers") {
  CHECK(normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
}

TEST_CASE("log density of a standard normal on a wide box") {
  const TruncatedGaussian d{0.0, 1.0, -10.0, 10.0};
  CHECK(log_prob(d, 0.0) == doctest::Approx(-0.918939).epsilon(1e-6));
  CHECK(std::abs(log_prob(d, 0.0) + 0.5 * std::log(2.0 * std::numbers::pi)) <= 1e-14);
}

TEST_CASE("log density at the edge of a tight or remote box stays finite and accurate") {
  for (const TruncatedGaussian& d : {TruncatedGaussian{0.0, 1.0, 5.0, 5.001}, TruncatedGaussian{0.0, 1.0, 20.0, 20.5},
                                      TruncatedGaussian{0.0, 1.0, -20.5, -20.0}, TruncatedGaussian{0.3, 0.05, -0.1, 0.0}}) {
    const oracle::TruncNormal o(d.mu, d.sigma, d.lo, d.hi, quad);
    for (double q : {d.lo, d.hi, 0.5 * (d.lo + d.hi)}) {
      const double lp = log_prob(d, q);
      CHECK(std::isfinite(lp));
      CHECK(lp == doctest::Approx(std::log(o.pdf(q))).epsilon(1e-8));
    }
  }
}

TEST_CASE("density integrates to one over its box") {
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    const double lo = rng.uniform(-1.0, 0.5);
    const double hi = lo + rng.uniform(0.01, 1.5);
    const double mu = rng.uniform(lo - 0.5, hi + 0.5);
    const TruncatedGaussian d{mu, rng.uniform(0.01, 1.0), lo, hi};
    const double mass = quad.integrate([&](double q) { return std::exp(log_prob(d, q)); }, lo, hi, 400);
    CHECK(std::abs(mass - 1.0) <= 1e-6);
  }
}

TEST_CASE("support errors") {
  CHECK(error_of([] { log_prob(TruncatedGaussian{0.0, 1.0, -1.0, 1.0}, 1.5); }) == ErrorCode::OutOfSupport);
  CHECK(error_of([] { log_normalizer(TruncatedGaussian{0.0, 0.01, 100.0, 101.0}); }) == ErrorCode::DegenerateSupport);
  Rng rng(1);
  CHECK(error_of([&] { sample(TruncatedGaussian{0.0, 0.01, 100.0, 101.0}, rng); }) == ErrorCode::DegenerateSupport);
  CHECK(error_of([] { log_normalizer(TruncatedGaussian{0.0, -1.0, -1.0, 1.0}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("samples stay in the box and match the quadrature moments") {
  const int n = 1000000;
  SUBCASE("centred mean on a symmetric box") {
    const TruncatedGaussian d{0.0, 0.4, -0.5, 0.5};
    const Moments truth = true_moments(d);
    Rng rng(99);
    double sum = 0.0;
    bool inside = true;
    for (int i = 0; i < n; ++i) {
      const double q = sample(d, rng);
      inside &= q >= d.lo && q <= d.hi;
      sum += q;
    }
    CHECK(inside);
    CHECK(std::abs(sum / n - truth.mean) <= 4.0 * truth.sd / std::sqrt(double(n)));
  }
  SUBCASE("off-centre mean") {
    const TruncatedGaussian d{0.35, 0.2, -0.5, 0.5};
    const Moments truth = true_moments(d);
    Rng rng(7);
    double sum = 0.0;
    bool inside = true;
    for (int i = 0; i < n; ++i) {
      const double q = sample(d, rng);
      inside &= q >= d.lo && q <= d.hi;
      sum += q;
    }
    CHECK(inside);
    CHECK(std::abs(sum / n - truth.mean) <= 4.0 * truth.sd / std::sqrt(double(n)));
  }
  SUBCASE("narrow sigma on a wide box recovers sigma") {
    const TruncatedGaussian d{0.1, 0.01, -1.0, 1.0};
    Rng rng(5);
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double q = sample(d, rng);
      s1 += q;
      s2 += q * q;
    }
    const double mean = s1 / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    CHECK(std::abs(sd - d.sigma) <= 0.01 * d.sigma);
  }
  SUBCASE("far tail on one side") {
    const TruncatedGaussian d{0.0, 0.01, 0.2, 0.3};
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
      const double q = sample(d, rng);
      REQUIRE(q >= d.lo);
      REQUIRE(q <= d.hi);
    }
  }
}

TEST_CASE("score function") {
  SUBCASE("untruncated limit") {
    const TruncatedGaussian d{0.1, 0.2, -50.0, 50.0};
    for (double q : {-0.3, 0.0, 0.25, 0.6}) {
      const TruncatedGaussianScore s = score(d, q);
      CHECK(std::abs(s.d_mu - (q - d.mu) / (d.sigma * d.sigma)) <= 1e-10);
      const double z = (q - d.mu) / d.sigma;
      CHECK(std::abs(s.d_sigma - (z * z - 1.0) / d.sigma) <= 1e-10);
    }
  }
  SUBCASE("mean at the centre of a symmetric box") {
    const TruncatedGaussian d{0.0, 0.3, -0.2, 0.2};
    CHECK(std::abs(score(d, 0.0).d_mu) <= 1e-15);
  }
  SUBCASE("matches differences of the log density") {
    Rng rng(21);
    for (int i = 0; i < 200; ++i) {
      const double lo = rng.uniform(-1.0, 0.0);
      const double hi = lo + rng.uniform(0.05, 1.0);
      const TruncatedGaussian d{rng.uniform(lo - 0.3, hi + 0.3), rng.uniform(0.02, 0.8), lo, hi};
      const double q = rng.uniform(lo, hi);
      const double h = 1e-6;
      auto lp = [&](double mu, double sigma) { return log_prob(TruncatedGaussian{mu, sigma, lo, hi}, q); };
      const double fd_mu = (lp(d.mu + h, d.sigma) - lp(d.mu - h, d.sigma)) / (2 * h);
      const double fd_sigma = (lp(d.mu, d.sigma + h) - lp(d.mu, d.sigma - h)) / (2 * h);
      const TruncatedGaussianScore s = score(d, q);
      CHECK(std::abs(s.d_mu - fd_mu) <= 1e-5 * std::max(1.0, std::abs(fd_mu)));
      CHECK(std::abs(s.d_sigma - fd_sigma) <= 1e-5 * std::max(1.0, std::abs(fd_sigma)));
    }
  }
}

TEST_CASE("score-function estimate of a quadratic loss gradient is unbiased") {
  // d/dmu E[(q - c)^2] by central differences of quadrature expectations.
  const double mu = 0.3, sigma = 0.5, lo = -1.0, hi = 1.0, c = 0.6, h = 1e-5;
  auto f = [&](double q) { return (q - c) * (q - c); };
  const double truth = (oracle::expectation(f, mu + h, sigma, lo, hi, quad) -
                        oracle::expectation(f, mu - h, sigma, lo, hi, quad)) /
                       (2 * h);
  const TruncatedGaussian d{mu, sigma, lo, hi};
  Rng rng(2718);
  const int n = 1000000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double q = sample(d, rng);
    const double g = f(q) * score(d, q).d_mu;
    s1 += g;
    s2 += g * g;
  }
  const double mean = s1 / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(mean - truth) <= 3.0 * se);
}

TEST_CASE("forward pass") {
  SUBCASE("zero network sits at the box midpoint") {
    PolicyModel model({4, 5, 3, 4}, {{-0.1, 0.3}, {-0.2, 0.2}}, 0.01);
    const PolicyOutput out = model.forward(std::vector<double>{0.3, -1.0, 2.0, 0.5});
    CHECK(out.mu[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(out.mu[1] == doctest::Approx(0.0));
    for (double s : out.sigma) CHECK(s == doctest::Approx(std::log(2.0) + 0.01).epsilon(1e-15));
  }
  SUBCASE("zero input reduces to the bias chain") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      PolicyModel model = random_model(rng);
      const std::vector<double> at_mean = model.input_mean();
      const PolicyOutput out = model.forward(at_mean);

      // Matrix arithmetic on the flat parameter vector.
      const auto& sizes = model.layer_sizes();
      const Eigen::VectorXd& th = model.params();
      std::vector<double> act(sizes[0], 0.0);
      std::size_t off = 0;
      for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        std::vector<double> next(sizes[l + 1]);
        for (int o = 0; o < sizes[l + 1]; ++o) {
          double sum = 0.0;
          for (int i = 0; i < sizes[l]; ++i) sum += th[off + o * sizes[l] + i] * act[i];
          next[o] = sum;
        }
        off += sizes[l] * sizes[l + 1];
        for (int o = 0; o < sizes[l + 1]; ++o) next[o] += th[off + o];
        off += sizes[l + 1];
        if (l + 2 < sizes.size())
          for (double& v : next) v = std::max(v, 0.0);
        act = next;
      }
      const std::size_t m = model.num_actions();
      for (std::size_t k = 0; k < m; ++k) {
        const ActionBox b = model.action_box()[k];
        const double mu = b.lo + (b.hi - b.lo) / (1.0 + std::exp(-act[k]));
        const double sigma = softplus(act[m + k]) + model.sigma_floor();
        CHECK(out.mu[k] == doctest::Approx(mu).epsilon(1e-13));
        CHECK(out.sigma[k] == doctest::Approx(sigma).epsilon(1e-13));
      }
    }
  }
  SUBCASE("pure in its inputs") {
    Rng rng(6);
    const PolicyModel model = random_model(rng);
    const std::vector<double> x = random_input(model, rng);
    const PolicyOutput a = model.forward(x);
    const PolicyOutput b = model.forward(x);
    CHECK(std::memcmp(a.mu.data(), b.mu.data(), a.mu.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.sigma.data(), b.sigma.data(), a.sigma.size() * sizeof(double)) == 0);
  }
  SUBCASE("errors") {
    PolicyModel model({3, 4, 2}, {{-0.1, 0.1}}, 0.01);
    CHECK(error_of([&] { model.forward(std::vector<double>{1.0, 2.0}); }) == ErrorCode::DimensionMismatch);
    CHECK(error_of([&] { model.forward(std::vector<double>{1.0, NAN, 2.0}); }) == ErrorCode::NonFiniteActivation);
    CHECK(error_of([] { PolicyModel({3, 4, 3}, {{-0.1, 0.1}}, 0.01); }) == ErrorCode::DimensionMismatch);
    CHECK(error_of([] { PolicyModel({3, 2}, {{-0.1, 0.1}}, 0.0); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("joint log density is the sum over inverters") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const PolicyModel model = random_model(rng);
    const std::vector<double> x = random_input(model, rng);
    const std::vector<double> q = model.sample(x, rng);
    const auto dists = model.distribution(x);
    double sum = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) sum += log_prob(dists[k], q[k]);
    CHECK(model.log_prob(x, q) == doctest::Approx(sum).epsilon(1e-14));
    const auto mean = model.mean_action(x);
    for (std::size_t k = 0; k < q.size(); ++k) {
      CHECK(q[k] >= model.action_box()[k].lo);
      CHECK(q[k] <= model.action_box()[k].hi);
      CHECK(mean[k] == doctest::Approx(dists[k].mu).epsilon(1e-15));
    }
  }
}

TEST_CASE("parameter gradient matches central differences") {
  Rng rng(31415);
  for (int trial = 0; trial < 20; ++trial) {
    PolicyModel model = random_model(rng);
    const std::vector<double> x = random_input(model, rng);
    const std::vector<double> q = model.sample(x, rng);
    const PolicyGradientRecord rec = model.grad_log_prob(x, q);
    CHECK(rec.log_prob == doctest::Approx(model.log_prob(x, q)).epsilon(1e-14));
    const Eigen::VectorXd theta = model.params();
    const double h = 1e-6;
    int bad = 0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd t = theta;
      t[i] = theta[i] + h;
      model.set_params(t);
      const double up = model.log_prob(x, q);
      t[i] = theta[i] - h;
      model.set_params(t);
      const double down = model.log_prob(x, q);
      const double fd = (up - down) / (2 * h);
      const double an = rec.grad_theta_log_prob[i];
      if (std::abs(fd - an) > 1e-4 * std::max(std::abs(fd), std::abs(an)) + 1e-8) ++bad;
    }
    model.set_params(theta);
    CHECK(bad == 0);
  }
}

TEST_CASE("initialization draws Glorot-uniform weights and zero biases") {
  const NetworkModel net = fixture::bundled("six_bus");
  const PolicyModel a = PolicyModel::for_network(net, {8, 4}, 0.01, 42);
  const PolicyModel b = PolicyModel::for_network(net, {8, 4}, 0.01, 42);
  const PolicyModel c = PolicyModel::for_network(net, {8, 4}, 0.01, 43);
  CHECK(a.layer_sizes() == std::vector<int>{10, 8, 4, 4});
  CHECK(a.params() == b.params());
  CHECK(a.params() != c.params());
  const auto& sizes = a.layer_sizes();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double limit = std::sqrt(6.0 / (sizes[l] + sizes[l + 1]));
    for (int i = 0; i < sizes[l] * sizes[l + 1]; ++i) CHECK(std::abs(a.params()[off + i]) <= limit);
    off += sizes[l] * sizes[l + 1];
    for (int i = 0; i < sizes[l + 1]; ++i) CHECK(a.params()[off + i] == 0.0);
    off += sizes[l + 1];
  }
  CHECK(a.action_box()[0].hi == net.inverters()[0].q_max);
}

TEST_CASE("model files round-trip bit for bit") {
  Rng rng(8);
  const PolicyModel model = random_model(rng);
  const auto path = std::filesystem::temp_directory_path() / "voltcraft_policy_roundtrip.json";
  model.save(path);
  const PolicyModel back = PolicyModel::load(path);
  REQUIRE(back.num_params() == model.num_params());
  CHECK(std::memcmp(back.params().data(), model.params().data(), model.num_params() * sizeof(double)) == 0);
  CHECK(back.input_mean() == model.input_mean());
  CHECK(back.input_scale() == model.input_scale());
  CHECK(back.sigma_floor() == model.sigma_floor());
  const std::vector<double> x = random_input(model, rng);
  const PolicyOutput a = model.forward(x);
  const PolicyOutput b = back.forward(x);
  CHECK(std::memcmp(a.mu.data(), b.mu.data(), a.mu.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(a.sigma.data(), b.sigma.data(), a.sigma.size() * sizeof(double)) == 0);
  CHECK(back.to_json() == model.to_json());

  const std::string text = model.to_json();
  CHECK(error_of([&] { PolicyModel::from_json(text.substr(0, text.size() / 2)); }) == ErrorCode::Parse);
  std::string other = text;
  other.replace(other.find(PolicyModel::kVersion), std::strlen(PolicyModel::kVersion), "voltcraft-policy/0");
  CHECK(error_of([&] { PolicyModel::from_json(other); }) == ErrorCode::VersionMismatch);
  CHECK(error_of([&] { PolicyModel::load(path.string() + ".missing"); }) == ErrorCode::Io);
  std::filesystem::remove(path);
}
