#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "fixtures.hpp"
#include "voltcraft/baseline.hpp"
#include "voltcraft/dataset.hpp"
#include "voltcraft/powerflow.hpp"
#include "voltcraft/trainer.hpp"

using namespace voltcraft;
using fixture::error_of;

namespace {

bool same_bits(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

EpisodeRecord record(Eigen::VectorXd grad, double loss) {
  EpisodeRecord r;
  r.grad.grad_theta_log_prob = std::move(grad);
  r.loss = loss;
  return r;
}

TrainConfig small_config() {
  TrainConfig c;
  c.hidden = {8, 8};
  c.epochs = 2;
  c.batch_size = 5;
  return c;
}

}  // namespace

TEST_CASE("optimizer steps") {
  PolicyModel model({2, 3, 2}, {{-0.1, 0.1}}, 0.01);
  model.initialize(7);
  const Eigen::VectorXd theta = model.params();
  const Eigen::Index n = theta.size();

  SUBCASE("first Adam step moves each weight by the learning rate against the gradient sign") {
    Eigen::VectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i) c[i] = (i % 2 ? -1.0 : 1.0) * (0.01 + 0.37 * i);
    TrainConfig cfg;
    cfg.learning_rate = 0.003;
    OptimizerState st;
    apply_update(model, c, cfg, st);
    for (Eigen::Index i = 0; i < n; ++i)
      CHECK(model.params()[i] ==
            doctest::Approx(theta[i] - cfg.learning_rate * c[i] / (std::abs(c[i]) + cfg.adam_eps)).epsilon(1e-12));
    CHECK(st.step == 1);
  }
  SUBCASE("SGD with a zero gradient leaves the weights alone") {
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::Sgd;
    OptimizerState st;
    apply_update(model, Eigen::VectorXd::Zero(n), cfg, st);
    CHECK(same_bits(model.params(), theta));
  }
  SUBCASE("SGD with unit rate and gradient theta lands on zero") {
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.learning_rate = 1.0;
    OptimizerState st;
    apply_update(model, theta, cfg, st);
    CHECK(model.params().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("gradient length must match") {
    OptimizerState st;
    CHECK(error_of([&] { apply_update(model, Eigen::VectorXd::Zero(n + 1), TrainConfig{}, st); }) ==
          ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("gradient estimate") {
  const Eigen::Vector3d g1(1.0, -2.0, 0.5), g2(-0.5, 0.25, 3.0);
  SUBCASE("constant loss equal to the baseline gives zero") {
    EpisodeBatch b;
    b.records = {record(g1, 4.2), record(g2, 4.2)};
    CHECK(estimate_gradient(b, 4.2).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("a single record scales its score") {
    EpisodeBatch b;
    b.records = {record(g1, 3.0)};
    const Eigen::VectorXd g = estimate_gradient(b, 0.0);
    for (int i = 0; i < 3; ++i) CHECK(g[i] == 3.0 * g1[i]);
  }
  SUBCASE("batch average") {
    EpisodeBatch b;
    b.records = {record(g1, 3.0), record(g2, 1.0)};
    const Eigen::VectorXd g = estimate_gradient(b, 1.0);
    for (int i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx((2.0 * g1[i]) / 2.0));
    CHECK(b.batch_mean_loss() == 2.0);
  }
  SUBCASE("failures") {
    EpisodeBatch b;
    CHECK(error_of([&] { estimate_gradient(b, 0.0); }) == ErrorCode::InvalidArgument);
    b.records = {record(g1, std::nan(""))};
    CHECK(error_of([&] { estimate_gradient(b, 0.0); }) == ErrorCode::NonFiniteGradient);
    b.records = {record(g1, 1.0), record(Eigen::Vector2d(1, 1), 1.0)};
    CHECK(error_of([&] { estimate_gradient(b, 0.0); }) == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("batch gradient estimates are unbiased with or without a baseline") {
  // One action, no hidden layer: theta = (w_a, w_b, b_a, b_b).
  PolicyModel model({1, 2}, {{-1.0, 1.0}}, 0.01);
  Eigen::VectorXd theta(4);
  theta << 0.4, -0.3, 0.2, -0.5;
  model.set_params(theta);
  const std::vector<double> x{0.5};
  const double c = 0.6;
  auto f = [&](double q) { return (q - c) * (q - c); };
  const oracle::Quadrature quad;
  auto expected = [&](const Eigen::VectorXd& th) {
    PolicyModel m = model;
    m.set_params(th);
    const TruncatedGaussian d = m.distribution(x)[0];
    return oracle::expectation(f, d.mu, d.sigma, d.lo, d.hi, quad);
  };
  Eigen::VectorXd truth(4);
  for (int i = 0; i < 4; ++i) {
    const double h = 1e-5;
    Eigen::VectorXd up = theta, dn = theta;
    up[i] += h;
    dn[i] -= h;
    truth[i] = (expected(up) - expected(dn)) / (2 * h);
  }

  for (double baseline : {0.0, 0.5}) {
    CAPTURE(baseline);
    Rng rng(77);
    const int batches = 100, per_batch = 10000;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(4), s2 = Eigen::VectorXd::Zero(4);
    for (int k = 0; k < batches; ++k) {
      EpisodeBatch batch;
      batch.records.reserve(per_batch);
      for (int i = 0; i < per_batch; ++i) {
        const std::vector<double> q = model.sample(x, rng);
        EpisodeRecord r;
        r.grad = model.grad_log_prob(x, q);
        r.loss = f(q[0]);
        batch.records.push_back(std::move(r));
      }
      const Eigen::VectorXd g = estimate_gradient(batch, baseline);
      s1 += g;
      s2 += g.cwiseProduct(g);
    }
    const Eigen::VectorXd mean = s1 / batches;
    for (int i = 0; i < 4; ++i) {
      const double se = std::sqrt((s2[i] / batches - mean[i] * mean[i]) / batches);
      CHECK(std::abs(mean[i] - truth[i]) <= 3.0 * se);
    }
  }
}

TEST_CASE("gradient clipping") {
  Eigen::VectorXd g(2);
  g << 30.0, 40.0;
  CHECK(clip_gradient(g, 10.0) == 50.0);
  CHECK(g[0] == doctest::Approx(6.0));
  CHECK(g[1] == doctest::Approx(8.0));
  CHECK(g.norm() == doctest::Approx(10.0));
  Eigen::VectorXd short_g(2);
  short_g << 0.3, 0.4;
  clip_gradient(short_g, 10.0);
  CHECK(short_g[0] == 0.3);
  Eigen::VectorXd off = g * 100.0;
  clip_gradient(off, 0.0);
  CHECK(off[0] == doctest::Approx(600.0));
}

TEST_CASE("running average") {
  const std::vector<double> raw{1, 2, 3, 4, 5};
  CHECK(running_average(raw, 2) == std::vector<double>{1.0, 1.5, 2.5, 3.5, 4.5});
  CHECK(running_average(raw, 10) == std::vector<double>{1.0, 1.5, 2.0, 2.5, 3.0});
  CHECK(running_average(raw, 1) == raw);
  CHECK(error_of([&] { running_average(raw, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(validate(TrainConfig{}));
  TrainConfig frozen;
  frozen.learning_rate = 0.0;
  CHECK_NOTHROW(validate(frozen));
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return error_of([&] { validate(c); });
  };
  CHECK(bad([](TrainConfig& c) { c.learning_rate = -1e-3; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](TrainConfig& c) { c.learning_rate = std::nan(""); }) == ErrorCode::InvalidArgument);
  CHECK(bad([](TrainConfig& c) { c.batch_size = 0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](TrainConfig& c) { c.epochs = 0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](TrainConfig& c) { c.adam_beta1 = 1.0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](TrainConfig& c) { c.adam_eps = 0.0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](TrainConfig& c) { c.penalty_coeff = -1.0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](TrainConfig& c) { c.sigma_floor = 0.0; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](TrainConfig& c) { c.hidden = {4, 0}; }) == ErrorCode::InvalidArgument);
  CHECK(bad([](TrainConfig& c) { c.baseline_window = 0; }) == ErrorCode::InvalidArgument);
}

TEST_CASE("zero learning rate keeps the initial policy and samples its expected loss") {
  const NetworkModel m = fixture::two_bus(true);
  const GridState s = fixture::state({-0.1}, {0.02});
  const std::vector<GridState> states(1000, s);
  TrainConfig cfg = small_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 10;
  cfg.batch_size = 30;
  const PolicyModel init = PolicyModel::for_network(m, cfg.hidden, cfg.sigma_floor, 3);
  const TrainResult r = train(init, m, states, cfg);
  CHECK(same_bits(r.model.params(), init.params()));

  const TruncatedGaussian d = r.model.distribution(PolicyModel::input_vector(s))[0];
  auto loss = [&](double q) { return evaluate_loss(m, s, std::vector<double>{q}).penalized; };
  const double truth = oracle::expectation(loss, d.mu, d.sigma, d.lo, d.hi, oracle::Quadrature{});
  double s1 = 0.0, s2 = 0.0;
  for (double v : r.trace.raw) {
    s1 += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(r.trace.raw.size());
  const double mean = s1 / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(r.trace.raw.size() == 10000);
  CHECK(std::abs(mean - truth) <= 4.0 * se);
}

TEST_CASE("training loop bookkeeping") {
  const NetworkModel m = fixture::bundled("six_bus");
  std::vector<GridState> states;
  std::vector<double> opt;
  for (int i = 0; i < 7; ++i) {
    states.push_back(nominal_state(m, 0.5 + 0.1 * i, 0.3));
    opt.push_back(i == 2 ? std::nan("") : 0.001 * i);
  }
  TrainConfig cfg = small_config();
  cfg.batch_size = 3;
  cfg.trace_window = 4;
  const TrainResult r = train(PolicyModel::for_network(m, cfg.hidden, cfg.sigma_floor, 1), m, states, cfg, opt);

  SUBCASE("one update per full batch plus the epoch remainder") {
    CHECK(r.updates == 2 * 3);
    CHECK(r.trace.raw.size() == 14);
  }
  SUBCASE("each epoch visits every state once") {
    for (int e = 0; e < 2; ++e) {
      std::vector<std::size_t> seen(r.trace.state_index.begin() + 7 * e, r.trace.state_index.begin() + 7 * (e + 1));
      std::sort(seen.begin(), seen.end());
      for (std::size_t i = 0; i < 7; ++i) CHECK(seen[i] == i);
    }
  }
  SUBCASE("trace columns agree") {
    CHECK(r.trace.running_avg == running_average(r.trace.raw, 4));
    for (std::size_t i = 0; i < r.trace.raw.size(); ++i) {
      const std::size_t k = r.trace.state_index[i];
      CHECK(r.trace.raw[i] >= r.trace.objective[i]);
      if (k == 2)
        CHECK_FALSE(r.trace.baseline_opt[i].has_value());
      else
        CHECK(*r.trace.baseline_opt[i] == opt[k]);
    }
  }
  SUBCASE("trace CSV round-trips every value") {
    std::istringstream in(format_trace_csv(r.trace));
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,raw_loss,objective,running_avg,baseline_opt_loss,feasible");
    std::size_t i = 0;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) f.push_back(cell);
      if (f.size() == 5) f.insert(f.begin() + 4, "");
      REQUIRE(f.size() == 6);
      CHECK(std::stoul(f[0]) == i);
      CHECK(parse_double(f[1]) == r.trace.raw[i]);
      CHECK(parse_double(f[2]) == r.trace.objective[i]);
      CHECK(parse_double(f[3]) == r.trace.running_avg[i]);
      CHECK(f[4].empty() == !r.trace.baseline_opt[i].has_value());
      CHECK((f[5] == "1") == r.trace.feasible[i]);
      ++i;
    }
    CHECK(i == r.trace.raw.size());
  }
  SUBCASE("input errors") {
    const PolicyModel p = PolicyModel::for_network(m, cfg.hidden, cfg.sigma_floor, 1);
    CHECK(error_of([&] { train(p, m, std::span<const GridState>{}, cfg); }) == ErrorCode::InvalidArgument);
    const std::vector<double> short_opt(3, 0.0);
    CHECK(error_of([&] { train(p, m, states, cfg, short_opt); }) == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("one repeated state trains to the grid optimum") {
  // Reactive demand large enough that the optimum sits on the capability
  // limit, which a bounded-mean policy reaches to within a cell.
  const NetworkModel m = fixture::two_bus(true);
  const GridState s = fixture::state({-0.1}, {0.2});
  const std::vector<GridState> states(1000, s);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.hidden = {8, 8};
  cfg.epochs = 40;
  const TrainResult r = train(PolicyModel::for_network(m, cfg.hidden, cfg.sigma_floor, 1), m, states, cfg);
  const int n = 10000;
  const OpfSolution grid = grid_search_oracle(m, s, n);
  const InverterSpec inv = m.inverters()[0];
  const double cell = (inv.q_max - inv.q_min) / (n - 1);
  const TruncatedGaussian d = r.model.distribution(PolicyModel::input_vector(s))[0];
  CHECK(std::abs(d.mu - grid.q_g_star[0]) <= cell);
  CHECK(d.sigma < 0.011);
}

TEST_CASE("seeds control the whole run") {
  const NetworkModel m = fixture::bundled("six_bus");
  std::vector<GridState> states;
  for (int i = 0; i < 12; ++i) states.push_back(nominal_state(m, 0.4 + 0.07 * i, 0.5));
  TrainConfig cfg = small_config();
  const PolicyModel init = PolicyModel::for_network(m, cfg.hidden, cfg.sigma_floor, 1);
  const TrainResult a = train(init, m, states, cfg);
  const TrainResult b = train(init, m, states, cfg);
  CHECK(same_bits(a.model.params(), b.model.params()));
  CHECK(a.trace.raw == b.trace.raw);
  CHECK(a.model.to_json() == b.model.to_json());
  cfg.seed = 2;
  const TrainResult c = train(init, m, states, cfg);
  CHECK_FALSE(same_bits(a.model.params(), c.model.params()));
  CHECK(a.trace.raw != c.trace.raw);
}

TEST_CASE("derived seeds") {
  CHECK(derive_seed(1, 1) == derive_seed(1, 1));
  CHECK(derive_seed(1, 1) != derive_seed(1, 2));
  CHECK(derive_seed(1, 1) != derive_seed(2, 1));
  CHECK(derive_seed(0, 0) != 0);
}

TEST_CASE("inference") {
  const NetworkModel m = fixture::bundled("sce47_surrogate");
  PolicyModel p = PolicyModel::for_network(m, {16}, 0.01, 5);
  const GridState s = nominal_state(m, 0.8, 0.6);
  SUBCASE("samples stay in the capability box") {
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
      const std::vector<double> q = infer(p, s, InferMode::Sample, &rng);
      for (std::size_t k = 0; k < q.size(); ++k) {
        CHECK(q[k] >= m.inverters()[k].q_min);
        CHECK(q[k] <= m.inverters()[k].q_max);
      }
    }
  }
  SUBCASE("deterministic mode is the clipped mean and repeats exactly") {
    const std::vector<double> a = infer(p, s, InferMode::Deterministic);
    CHECK(a == infer(p, s, InferMode::Deterministic));
    CHECK(a == p.mean_action(PolicyModel::input_vector(s)));
  }
  SUBCASE("sample mode needs a generator") {
    CHECK(error_of([&] { infer(p, s, InferMode::Sample); }) == ErrorCode::InvalidArgument);
  }
  SUBCASE("a policy for another feeder is rejected") {
    const NetworkModel six = fixture::bundled("six_bus");
    CHECK(error_of([&] { check_compatible(p, six); }) == ErrorCode::DimensionMismatch);
    CHECK_NOTHROW(check_compatible(p, m));
  }
}
