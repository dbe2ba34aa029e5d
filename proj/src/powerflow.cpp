#include "voltcraft/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "voltcraft/error.hpp"

namespace voltcraft {

double BranchFlowResiduals::max() const {
  return std::max(std::max(active, reactive), std::max(voltage, current));
}

namespace {

void check_lengths(const NetworkModel& model, std::span<const double> p, std::span<const double> q) {
  if (p.size() != model.size() || q.size() != model.size())
    fail(ErrorCode::DimensionMismatch,
         "injection vectors must have length " + std::to_string(model.size()));
}

}  // namespace

PowerFlowSolution solve_power_flow(const NetworkModel& model, std::span<const double> p,
                                   std::span<const double> q, const PowerFlowOptions& opts) {
  check_lengths(model, p, q);
  const std::size_t n = model.size();
  const auto order = model.topological_order();

  PowerFlowSolution sol;
  sol.P.assign(n, 0.0);
  sol.Q.assign(n, 0.0);
  sol.ell.assign(n, 0.0);
  sol.v.assign(n + 1, model.v0());

  auto backward_sweep = [&] {
    for (auto k = order.size(); k-- > 1;) {
      const BusId b = order[k];
      const Line& ln = model.line(b);
      double P = -p[b - 1] + ln.r * sol.ell[b - 1];
      double Q = -q[b - 1] + ln.x * sol.ell[b - 1];
      for (BusId c : model.children(b)) {
        P += sol.P[c - 1];
        Q += sol.Q[c - 1];
      }
      sol.P[b - 1] = P;
      sol.Q[b - 1] = Q;
    }
  };
  auto forward_sweep = [&] {
    for (std::size_t k = 1; k < order.size(); ++k) {
      const BusId b = order[k];
      const Line& ln = model.line(b);
      const std::size_t i = b - 1;
      sol.v[b] = sol.v[ln.parent] - 2.0 * (ln.r * sol.P[i] + ln.x * sol.Q[i]) +
                 (ln.r * ln.r + ln.x * ln.x) * sol.ell[i];
      if (!(sol.v[b] > 0.0) || !std::isfinite(sol.v[b]))
        fail(ErrorCode::Numerical, "non-positive voltage at bus " + model.label(b));
    }
  };

  double prev_update = INFINITY;
  int growth_streak = 0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    sol.iterations = it;
    backward_sweep();
    forward_sweep();

    double update = 0.0;
    for (std::size_t k = 1; k < order.size(); ++k) {
      const BusId b = order[k];
      const std::size_t i = b - 1;
      const double ell = (sol.P[i] * sol.P[i] + sol.Q[i] * sol.Q[i]) / sol.v[model.parent(b)];
      update = std::max(update, std::abs(ell - sol.ell[i]));
      sol.ell[i] = ell;
    }
    if (!std::isfinite(update)) fail(ErrorCode::Numerical, "non-finite current update");

    if (update <= opts.tol) {
      // Re-sweep with the settled currents so balance and voltage equations
      // hold to rounding.
      backward_sweep();
      forward_sweep();
      break;
    }
    growth_streak = (update > prev_update) ? growth_streak + 1 : 0;
    prev_update = update;
    if (growth_streak >= 10)
      fail(ErrorCode::Diverged, "power flow update grew for 10 consecutive sweeps");
  }

  sol.max_residual = branch_flow_residuals(model, p, q, sol.P, sol.Q, sol.ell, sol.v).max();
  sol.converged = sol.max_residual <= opts.tol;
  if (!sol.converged)
    fail(ErrorCode::Diverged, "power flow did not converge in " + std::to_string(opts.max_iter) +
                                  " sweeps (residual " + std::to_string(sol.max_residual) + ")");
  sol.loss = 0.0;
  for (const Line& ln : model.lines()) sol.loss += ln.r * sol.ell[ln.bus - 1];
  return sol;
}

BranchFlowResiduals branch_flow_residuals(const NetworkModel& model, std::span<const double> p,
                                          std::span<const double> q, std::span<const double> P,
                                          std::span<const double> Q, std::span<const double> ell,
                                          std::span<const double> v) {
  BranchFlowResiduals res;
  for (const Line& ln : model.lines()) {
    const std::size_t i = ln.bus - 1;
    double sumP = 0.0;
    double sumQ = 0.0;
    for (BusId c : model.children(ln.bus)) {
      sumP += P[c - 1];
      sumQ += Q[c - 1];
    }
    res.active = std::max(res.active, std::abs(P[i] - (sumP - p[i] + ln.r * ell[i])));
    res.reactive = std::max(res.reactive, std::abs(Q[i] - (sumQ - q[i] + ln.x * ell[i])));
    const double vdrop = v[ln.parent] - 2.0 * (ln.r * P[i] + ln.x * Q[i]) +
                         (ln.r * ln.r + ln.x * ln.x) * ell[i];
    res.voltage = std::max(res.voltage, std::abs(v[ln.bus] - vdrop));
    res.current = std::max(res.current, std::abs(ell[i] * v[ln.parent] - (P[i] * P[i] + Q[i] * Q[i])));
  }
  return res;
}

std::pair<std::vector<double>, std::vector<double>> injection_vectors(
    const NetworkModel& model, const GridState& state, std::span<const double> q_g) {
  validate_state(model, state);
  if (q_g.size() != model.num_inverters())
    fail(ErrorCode::DimensionMismatch,
         "action must have one entry per inverter (" + std::to_string(model.num_inverters()) + ")");
  std::vector<double> p = state.p;
  std::vector<double> q(state.q_c.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = -state.q_c[i];
  const auto invs = model.inverters();
  for (std::size_t m = 0; m < invs.size(); ++m) q[invs[m].bus - 1] += q_g[m];
  return {std::move(p), std::move(q)};
}

double band_violation(const NetworkModel& model, std::span<const double> v) {
  double total = 0.0;
  for (BusId b = 1; b < v.size(); ++b) {
    const VoltageBand& band = model.band(b);
    total += std::max(0.0, band.v_min - v[b]) + std::max(0.0, v[b] - band.v_max);
  }
  return total;
}

LossEvaluation evaluate_loss(const NetworkModel& model, const GridState& state,
                             std::span<const double> q_g, const LossOptions& opts) {
  if (q_g.size() != model.num_inverters())
    fail(ErrorCode::DimensionMismatch, "action length does not match inverter count");
  if (!(opts.penalty_coeff >= 0.0)) fail(ErrorCode::InvalidArgument, "penalty_coeff must be >= 0");
  std::vector<double> action(q_g.begin(), q_g.end());
  const auto invs = model.inverters();
  for (std::size_t m = 0; m < action.size(); ++m) {
    const auto& inv = invs[m];
    if (!std::isfinite(action[m])) fail(ErrorCode::InvalidArgument, "non-finite action");
    if (action[m] < inv.q_min || action[m] > inv.q_max) {
      if (opts.strict)
        fail(ErrorCode::ActionOutOfBounds,
             "action for inverter on bus " + model.label(inv.bus) + " outside capability box");
      action[m] = std::clamp(action[m], inv.q_min, inv.q_max);
    }
  }
  auto [p, q] = injection_vectors(model, state, action);

  LossEvaluation out;
  out.flow = solve_power_flow(model, p, q, opts.power_flow);
  out.objective = out.flow.loss;
  out.violation = band_violation(model, out.flow.v);
  out.penalized = out.objective + opts.penalty_coeff * out.violation;
  out.feasible = out.violation <= opts.feas_tol;
  return out;
}

}  // namespace voltcraft
