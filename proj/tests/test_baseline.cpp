#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "voltcraft/baseline.hpp"
#include "voltcraft/dataset.hpp"
#include "voltcraft/powerflow.hpp"
#include "voltcraft/rng.hpp"
#include "voltcraft/socp.hpp"

using namespace voltcraft;
using fixture::error_of;

namespace {

Eigen::SparseMatrix<double> sparse(const Eigen::MatrixXd& d) { return d.sparseView(); }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("cone solver: linear program vertex") {
  // max x1 + x2 s.t. x1 + 2 x2 <= 4, 3 x1 + x2 <= 6, x >= 0.
  ConeProgram prog;
  prog.c = Eigen::Vector2d(-1.0, -1.0);
  prog.A.resize(0, 2);
  prog.b.resize(0);
  Eigen::MatrixXd G(4, 2);
  G << 1, 2, 3, 1, -1, 0, 0, -1;
  prog.G = sparse(G);
  prog.h = Eigen::Vector4d(4, 6, 0, 0);
  prog.nonneg = 4;
  const ConeSolution s = solve_cone_program(prog);
  CHECK(s.status == ConeStatus::Optimal);
  CHECK(s.x(0) == doctest::Approx(1.6).epsilon(1e-7));
  CHECK(s.x(1) == doctest::Approx(1.2).epsilon(1e-7));
  CHECK(s.primal_objective == doctest::Approx(-2.8).epsilon(1e-8));
}

TEST_CASE("cone solver: norm of a fixed vector") {
  // min t s.t. (t, u) in the cone, u = (3, 4).
  ConeProgram prog;
  prog.c = Eigen::Vector3d(1, 0, 0);
  Eigen::MatrixXd A(2, 3);
  A << 0, 1, 0, 0, 0, 1;
  prog.A = sparse(A);
  prog.b = Eigen::Vector2d(3, 4);
  prog.G = sparse(-Eigen::MatrixXd::Identity(3, 3));
  prog.h = Eigen::Vector3d::Zero();
  prog.soc_dims = {3};
  const ConeSolution s = solve_cone_program(prog);
  CHECK(s.status == ConeStatus::Optimal);
  CHECK(s.x(0) == doctest::Approx(5.0).epsilon(1e-8));
  CHECK(s.gap <= 1e-7);
}

TEST_CASE("zero state needs no compensation") {
  const NetworkModel m = fixture::bundled("six_bus");
  const GridState zero = fixture::state(std::vector<double>(m.size()), std::vector<double>(m.size()));
  const OpfSolution s = solve_baseline(m, zero);
  // Loss is quadratic in q around zero, so a gap of 1e-11 pins q only to
  // about its square root.
  for (double q : s.q_g_star) CHECK(std::abs(q) <= 1e-6);
  CHECK(std::abs(s.objective) <= 1e-10);
  for (double slack : exactness_check(s).slacks) CHECK(std::abs(slack) <= 1e-10);
}

TEST_CASE("six-bus optimum agrees with the 41x41 grid oracle") {
  const NetworkModel m = fixture::bundled("six_bus");
  for (double load : {0.5, 1.0, 1.3}) {
    const GridState st = nominal_state(m, load, 0.4);
    const OpfSolution opt = solve_baseline(m, st);
    const OpfSolution grid = grid_search_oracle(m, st, 41);
    CHECK(std::abs(opt.objective - grid.objective) <= 0.01 * grid.objective);
    CHECK(opt.objective <= grid.objective + 1e-10);
    for (std::size_t k = 0; k < opt.q_g_star.size(); ++k) {
      const double cell = (m.inverters()[k].q_max - m.inverters()[k].q_min) / 40.0;
      CHECK(std::abs(opt.q_g_star[k] - grid.q_g_star[k]) <= cell);
    }
  }
}

TEST_CASE("relaxation bounds every feasible action from below") {
  const NetworkModel m = fixture::bundled("six_bus");
  const GridState st = nominal_state(m, 1.0, 0.3);
  const OpfSolution opt = solve_baseline(m, st);
  Rng rng(2024);
  int feasible = 0, violations = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> q;
    for (const InverterSpec& inv : m.inverters()) q.push_back(rng.uniform(inv.q_min, inv.q_max));
    const LossEvaluation ev = evaluate_loss(m, st, q);
    if (!ev.feasible) continue;
    ++feasible;
    if (opt.objective > ev.objective + 1e-8) ++violations;
  }
  CHECK(feasible == 1000);
  CHECK(violations == 0);
}

TEST_CASE("solutions satisfy the box, band and cone invariants") {
  const NetworkModel m = fixture::bundled("sce47_surrogate");
  Rng rng(8);
  for (int i = 0; i < 15; ++i) {
    const double load = rng.uniform(0.1, 1.3);
    const double pv = rng.uniform(0.0, 1.0);
    const GridState st = nominal_state(m, load, pv);
    const OpfSolution s = solve_baseline(m, st);
    for (std::size_t k = 0; k < s.q_g_star.size(); ++k) {
      CHECK(s.q_g_star[k] >= m.inverters()[k].q_min - 1e-12);
      CHECK(s.q_g_star[k] <= m.inverters()[k].q_max + 1e-12);
    }
    for (BusId b = 1; b < s.v.size(); ++b) {
      CHECK(s.v[b] >= m.band(b).v_min - 1e-8);
      CHECK(s.v[b] <= m.band(b).v_max + 1e-8);
    }
    for (double c : s.cone_residuals) CHECK(c <= 1e-8);
    CHECK(s.objective >= 0.0);
    CHECK(s.kkt_residual <= 1e-8);
  }
}

TEST_CASE("bundled feeders are exact under nominal loading") {
  for (const char* name : {"chain3", "six_bus", "sce47_surrogate"}) {
    const NetworkModel m = fixture::bundled(name);
    for (double pv : {0.0, 0.5, 1.0}) {
      const OpfSolution s = solve_baseline(m, nominal_state(m, 1.0, pv));
      const ExactnessReport r = exactness_check(s);
      CHECK(r.exact);
      CHECK(r.max_abs_slack <= 1e-6);
    }
  }
}

TEST_CASE("exact solutions reproduce under the power flow") {
  const NetworkModel m = fixture::bundled("sce47_surrogate");
  const GridState st = nominal_state(m, 0.8, 0.7);
  const OpfSolution s = solve_baseline(m, st);
  REQUIRE(exactness_check(s).exact);
  const LossEvaluation ev = evaluate_loss(m, st, s.q_g_star);
  CHECK(max_abs_diff(ev.flow.v, s.v) <= 1e-6);
  CHECK(max_abs_diff(ev.flow.ell, s.ell) <= 1e-6);
  CHECK(max_abs_diff(ev.flow.P, s.P) <= 1e-6);
  CHECK(max_abs_diff(ev.flow.Q, s.Q) <= 1e-6);
  CHECK(std::abs(ev.objective - s.objective) <= 1e-8);
}

TEST_CASE("maximizing loss breaks exactness") {
  const NetworkModel m = fixture::bundled("six_bus");
  SolverOptions o;
  o.maximize_loss = true;
  const OpfSolution s = solve_baseline(m, nominal_state(m, 1.0, 0.3), o);
  const ExactnessReport r = exactness_check(s);
  CHECK_FALSE(r.exact);
  CHECK(r.max_abs_slack > 1e-6);
}

TEST_CASE("grid oracle") {
  SUBCASE("one inverter lands within a cell of the optimum") {
    const NetworkModel m = fixture::two_bus(true);
    const GridState st = fixture::state({-0.15}, {0.03});
    const int n = 2001;
    const OpfSolution grid = grid_search_oracle(m, st, n);
    const OpfSolution opt = solve_baseline(m, st);
    const double cell = (m.inverters()[0].q_max - m.inverters()[0].q_min) / (n - 1);
    CHECK(std::abs(grid.q_g_star[0] - opt.q_g_star[0]) <= cell);
  }
  SUBCASE("symmetric case picks the centre") {
    const NetworkModel m = fixture::two_bus(true);
    const OpfSolution grid = grid_search_oracle(m, fixture::state({0.0}, {0.0}), 3);
    CHECK(grid.q_g_star[0] == 0.0);
  }
  SUBCASE("limits") {
    const NetworkModel m47 = fixture::bundled("sce47_surrogate");
    CHECK(error_of([&] { grid_search_oracle(m47, nominal_state(m47), 5); }) == ErrorCode::TooManyInverters);
    const NetworkModel m = fixture::two_bus(true);
    CHECK(error_of([&] { grid_search_oracle(m, fixture::state({0.0}, {0.0}), 2); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("a band no action can meet") {
  SUBCASE("sag below the band is infeasible for the relaxation too") {
    const NetworkModel m = fixture::two_bus(true);
    const GridState st = fixture::state({-2.5}, {1.25});
    CHECK(error_of([&] { grid_search_oracle(m, st, 21); }) == ErrorCode::NoFeasiblePoint);
    try {
      solve_baseline(m, st);
      FAIL("expected an infeasibility report");
    } catch (const InfeasibleError& e) {
      CHECK(e.code() == ErrorCode::Infeasible);
      const oracle::TwoBus best = oracle::two_bus(1.0, 0.02, 0.01, 2.5, 1.25 - m.inverters()[0].q_max);
      CHECK(e.max_violation() == doctest::Approx(0.9025 - best.v1).epsilon(1e-6));
      // The least-violating point injects all the reactive power it can.
      CHECK(e.least_violating_point().q_g_star[0] == doctest::Approx(m.inverters()[0].q_max).epsilon(1e-6));
    }
  }
  SUBCASE("overvoltage is met only by inflating the current") {
    // Raising l lowers v along the relaxed cone, so the relaxation stays
    // feasible while every physical action violates the band.
    const NetworkModel m = fixture::feeder(R"({"base_mva": 1, "base_kv": 12.47, "v0_pu": 1.0,
      "voltage_band_pu": [0.9, 1.0],
      "buses": [{"id": 0, "parent": null}, {"id": 1, "parent": 0, "r_pu": 0.02, "x_pu": 0.01}],
      "inverters": [{"bus": 1, "p_rated_kw": 100}]})");
    const GridState st = fixture::state({0.5}, {0.0});
    CHECK(error_of([&] { grid_search_oracle(m, st, 21); }) == ErrorCode::NoFeasiblePoint);
    const OpfSolution s = solve_baseline(m, st);
    CHECK_FALSE(exactness_check(s).exact);
  }
}
