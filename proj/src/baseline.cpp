#include "voltcraft/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "voltcraft/socp.hpp"

namespace voltcraft {

namespace {

using Trip = Eigen::Triplet<double>;

/// Variable layout of the relaxed branch-flow program:
/// [P(N) Q(N) ell(N) v(N) q_g(M) | t_lo(N) t_hi(N) when elastic].
struct Layout {
  int n = 0;
  int m = 0;
  bool elastic = false;
  int P(std::size_t i) const { return static_cast<int>(i); }
  int Q(std::size_t i) const { return n + static_cast<int>(i); }
  int L(std::size_t i) const { return 2 * n + static_cast<int>(i); }
  int V(std::size_t i) const { return 3 * n + static_cast<int>(i); }
  int G(std::size_t k) const { return 4 * n + static_cast<int>(k); }
  int Tlo(std::size_t i) const { return 4 * n + m + static_cast<int>(i); }
  int Thi(std::size_t i) const { return 5 * n + m + static_cast<int>(i); }
  int size() const { return 4 * n + m + (elastic ? 2 * n : 0); }
};

ConeProgram build_program(const NetworkModel& model, const GridState& state, const Layout& lay,
                          bool maximize) {
  const std::size_t n = model.size();
  ConeProgram prog;
  prog.c = Eigen::VectorXd::Zero(lay.size());
  if (lay.elastic) {
    for (std::size_t i = 0; i < n; ++i) prog.c[lay.Tlo(i)] = prog.c[lay.Thi(i)] = 1.0;
  } else {
    for (const Line& ln : model.lines()) prog.c[lay.L(ln.bus - 1)] = maximize ? -ln.r : ln.r;
  }

  // Branch-flow equalities.
  std::vector<Trip> a;
  prog.b = Eigen::VectorXd::Zero(3 * n);
  for (const Line& ln : model.lines()) {
    const std::size_t i = ln.bus - 1;
    const int rp = static_cast<int>(i);
    const int rq = static_cast<int>(n + i);
    const int rv = static_cast<int>(2 * n + i);
    a.emplace_back(rp, lay.P(i), 1.0);
    a.emplace_back(rp, lay.L(i), -ln.r);
    a.emplace_back(rq, lay.Q(i), 1.0);
    a.emplace_back(rq, lay.L(i), -ln.x);
    for (BusId c : model.children(ln.bus)) {
      a.emplace_back(rp, lay.P(c - 1), -1.0);
      a.emplace_back(rq, lay.Q(c - 1), -1.0);
    }
    if (auto k = model.inverter_at(ln.bus)) a.emplace_back(rq, lay.G(*k), 1.0);
    prog.b[rp] = -state.p[i];
    prog.b[rq] = state.q_c[i];

    a.emplace_back(rv, lay.V(i), 1.0);
    a.emplace_back(rv, lay.P(i), 2.0 * ln.r);
    a.emplace_back(rv, lay.Q(i), 2.0 * ln.x);
    a.emplace_back(rv, lay.L(i), -(ln.r * ln.r + ln.x * ln.x));
    if (ln.parent == 0)
      prog.b[rv] = model.v0();
    else
      a.emplace_back(rv, lay.V(ln.parent - 1), -1.0);
  }
  prog.A.resize(3 * n, lay.size());
  prog.A.setFromTriplets(a.begin(), a.end());

  // Orthant rows: action box, voltage band, elastic slacks; then one
  // rotated cone per line written as
  // |(2P, 2Q, ell - v_parent)| <= v_parent + ell.
  std::vector<Trip> g;
  std::vector<double> h;
  int row = 0;
  auto orthant = [&](std::initializer_list<std::pair<int, double>> coeffs, double rhs) {
    for (auto [col, val] : coeffs) g.emplace_back(row, col, val);
    h.push_back(rhs);
    ++row;
  };
  const auto invs = model.inverters();
  for (std::size_t k = 0; k < invs.size(); ++k) {
    orthant({{lay.G(k), 1.0}}, invs[k].q_max);
    orthant({{lay.G(k), -1.0}}, -invs[k].q_min);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const VoltageBand& band = model.band(i + 1);
    if (lay.elastic) {
      orthant({{lay.V(i), 1.0}, {lay.Thi(i), -1.0}}, band.v_max);
      orthant({{lay.V(i), -1.0}, {lay.Tlo(i), -1.0}}, -band.v_min);
      orthant({{lay.Thi(i), -1.0}}, 0.0);
      orthant({{lay.Tlo(i), -1.0}}, 0.0);
    } else {
      orthant({{lay.V(i), 1.0}}, band.v_max);
      orthant({{lay.V(i), -1.0}}, -band.v_min);
    }
  }
  prog.nonneg = row;
  for (const Line& ln : model.lines()) {
    const std::size_t i = ln.bus - 1;
    const bool root_parent = ln.parent == 0;
    const double v0 = model.v0();
    g.emplace_back(row, lay.L(i), -1.0);
    if (!root_parent) g.emplace_back(row, lay.V(ln.parent - 1), -1.0);
    h.push_back(root_parent ? v0 : 0.0);
    ++row;
    g.emplace_back(row, lay.P(i), -2.0);
    h.push_back(0.0);
    ++row;
    g.emplace_back(row, lay.Q(i), -2.0);
    h.push_back(0.0);
    ++row;
    g.emplace_back(row, lay.L(i), -1.0);
    if (!root_parent) g.emplace_back(row, lay.V(ln.parent - 1), 1.0);
    h.push_back(root_parent ? -v0 : 0.0);
    ++row;
    prog.soc_dims.push_back(4);
  }
  prog.G.resize(row, lay.size());
  prog.G.setFromTriplets(g.begin(), g.end());
  prog.h = Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
  return prog;
}

OpfSolution extract(const NetworkModel& model, const Layout& lay, const ConeSolution& cs,
                    double exact_tol) {
  const std::size_t n = model.size();
  OpfSolution out;
  out.P.resize(n);
  out.Q.resize(n);
  out.ell.resize(n);
  out.v.resize(n + 1);
  out.v[0] = model.v0();
  for (std::size_t i = 0; i < n; ++i) {
    out.P[i] = cs.x[lay.P(i)];
    out.Q[i] = cs.x[lay.Q(i)];
    out.ell[i] = cs.x[lay.L(i)];
    out.v[i + 1] = cs.x[lay.V(i)];
  }
  for (std::size_t k = 0; k < model.num_inverters(); ++k) out.q_g_star.push_back(cs.x[lay.G(k)]);
  out.objective = 0.0;
  out.cone_residuals.resize(n);
  for (const Line& ln : model.lines()) {
    const std::size_t i = ln.bus - 1;
    double& ell = out.ell[i];
    const double lift = (out.P[i] * out.P[i] + out.Q[i] * out.Q[i]) / out.v[ln.parent] - ell;
    // Interior-point iterates may sit a hair outside the cone; lift the
    // current onto it when the miss is below the exactness scale.
    if (lift > 0.0 && lift <= exact_tol) ell += lift;
    out.objective += ln.r * ell;
    out.cone_residuals[i] = (out.P[i] * out.P[i] + out.Q[i] * out.Q[i]) / out.v[ln.parent] - ell;
  }
  out.exact = exactness_check(out, exact_tol).exact;
  out.kkt_residual = std::max({cs.primal_residual, cs.dual_residual, std::abs(cs.gap)});
  out.iterations = cs.iterations;
  return out;
}

}  // namespace

OpfSolution solve_baseline(const NetworkModel& model, const GridState& state, const SolverOptions& opts) {
  validate_state(model, state);
  ConeSolverOptions copts;
  // The solver measures scaled residuals; cone slacks are reported unscaled.
  copts.feas_tol = 0.1 * opts.feas_tol;
  copts.accept_gap_tol = opts.obj_tol;
  copts.max_iter = opts.max_iter;

  Layout lay{static_cast<int>(model.size()), static_cast<int>(model.num_inverters()), false};
  const ConeSolution cs = solve_cone_program(build_program(model, state, lay, opts.maximize_loss), copts);
  if (cs.status == ConeStatus::Optimal) {
    OpfSolution out = extract(model, lay, cs, opts.exact_tol);
    if (out.kkt_residual > opts.kkt_tol)
      fail(ErrorCode::Numerical, "baseline KKT residual " + std::to_string(out.kkt_residual) +
                                     " above tolerance");
    return out;
  }

  // Diagnose: minimize total band excursion.
  Layout elastic = lay;
  elastic.elastic = true;
  const ConeSolution es = solve_cone_program(build_program(model, state, elastic, false), copts);
  if (es.status == ConeStatus::Optimal) {
    OpfSolution point = extract(model, elastic, es, opts.exact_tol);
    double worst = 0.0;
    for (BusId b = 1; b < point.v.size(); ++b) {
      const VoltageBand& band = model.band(b);
      worst = std::max({worst, band.v_min - point.v[b], point.v[b] - band.v_max});
    }
    if (worst > opts.feas_tol)
      throw InfeasibleError("no voltage-feasible setpoint exists (max band violation " +
                                std::to_string(worst) + ")",
                            worst, std::move(point));
  }
  if (cs.status == ConeStatus::MaxIterations)
    fail(ErrorCode::MaxIterations, "baseline solver hit the iteration limit");
  fail(ErrorCode::Numerical, "baseline solver stalled before reaching tolerance");
}

OpfSolution grid_search_oracle(const NetworkModel& model, const GridState& state, int points_per_axis) {
  validate_state(model, state);
  const std::size_t m = model.num_inverters();
  if (m > 3) fail(ErrorCode::TooManyInverters, "grid search supports at most 3 inverters");
  if (points_per_axis < 3) fail(ErrorCode::InvalidArgument, "grid search needs >= 3 points per axis");
  const auto invs = model.inverters();

  std::vector<int> idx(m, 0);
  std::vector<double> action(m, 0.0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_action;
  PowerFlowSolution best_flow;
  LossOptions lopts;
  lopts.penalty_coeff = 0.0;
  const int steps = points_per_axis - 1;
  while (true) {
    for (std::size_t k = 0; k < m; ++k) {
      const double lo = invs[k].q_min;
      const double hi = invs[k].q_max;
      action[k] = idx[k] == steps ? hi : lo + (hi - lo) * idx[k] / steps;
    }
    try {
      LossEvaluation ev = evaluate_loss(model, state, action, lopts);
      if (ev.violation == 0.0 && ev.objective < best) {
        best = ev.objective;
        best_action = action;
        best_flow = std::move(ev.flow);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Diverged && e.code() != ErrorCode::Numerical) throw;
    }
    // Lexicographic odometer, last axis fastest.
    std::size_t k = m;
    while (k > 0 && idx[k - 1] == steps) idx[--k] = 0;
    if (k == 0) break;
    ++idx[k - 1];
  }
  if (best_action.empty() && m > 0) fail(ErrorCode::NoFeasiblePoint, "no grid point satisfies the voltage band");
  if (m == 0 && !std::isfinite(best)) fail(ErrorCode::NoFeasiblePoint, "operating point violates the voltage band");

  OpfSolution out;
  out.q_g_star = best_action;
  out.P = best_flow.P;
  out.Q = best_flow.Q;
  out.ell = best_flow.ell;
  out.v = best_flow.v;
  out.objective = best;
  out.cone_residuals.resize(model.size());
  for (const Line& ln : model.lines()) {
    const std::size_t i = ln.bus - 1;
    out.cone_residuals[i] = (out.P[i] * out.P[i] + out.Q[i] * out.Q[i]) / out.v[ln.parent] - out.ell[i];
  }
  out.exact = true;
  out.kkt_residual = best_flow.max_residual;
  out.iterations = best_flow.iterations;
  return out;
}

ExactnessReport exactness_check(const OpfSolution& sol, double exact_tol) {
  ExactnessReport rep;
  rep.slacks = sol.cone_residuals;
  for (double s : rep.slacks) rep.max_abs_slack = std::max(rep.max_abs_slack, std::abs(s));
  rep.exact = rep.max_abs_slack <= exact_tol;
  return rep;
}

}  // namespace voltcraft
