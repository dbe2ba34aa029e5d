#pragma once

#include <span>
#include <utility>
#include <vector>

#include "voltcraft/network.hpp"

namespace voltcraft {

struct PowerFlowOptions {
  double tol = 1e-10;
  int max_iter = 200;
};

/// Branch-flow solution. P, Q, ell have length N (entry n-1 is line n);
/// v has length N+1 and v[0] is the substation.
struct PowerFlowSolution {
  std::vector<double> P;
  std::vector<double> Q;
  std::vector<double> ell;
  std::vector<double> v;
  double loss = 0.0;
  int iterations = 0;
  bool converged = false;
  double max_residual = 0.0;
};

/// Worst absolute residual of each DistFlow equation family.
struct BranchFlowResiduals {
  double active = 0.0;    // P balance
  double reactive = 0.0;  // Q balance
  double voltage = 0.0;   // voltage drop
  double current = 0.0;   // ell * v_parent = P^2 + Q^2
  double max() const;
};

/// Forward-backward sweep with a flat start. p and q are net injections of
/// length N. Throws Diverged or Numerical.
PowerFlowSolution solve_power_flow(const NetworkModel& model, std::span<const double> p,
                                   std::span<const double> q, const PowerFlowOptions& opts = {});

BranchFlowResiduals branch_flow_residuals(const NetworkModel& model, std::span<const double> p,
                                          std::span<const double> q, std::span<const double> P,
                                          std::span<const double> Q, std::span<const double> ell,
                                          std::span<const double> v);

/// q = scatter(q_g onto inverter buses) - q_c; p passed through.
std::pair<std::vector<double>, std::vector<double>> injection_vectors(
    const NetworkModel& model, const GridState& state, std::span<const double> q_g);

struct LossOptions {
  double penalty_coeff = 100.0;
  double feas_tol = 1e-8;
  /// Reject out-of-box actions instead of clipping them.
  bool strict = false;
  PowerFlowOptions power_flow{};
};

struct LossEvaluation {
  double objective = 0.0;  // sum r_n ell_n
  double violation = 0.0;  // sum of voltage band excursions
  double penalized = 0.0;
  bool feasible = true;
  PowerFlowSolution flow;
};

double band_violation(const NetworkModel& model, std::span<const double> v);

LossEvaluation evaluate_loss(const NetworkModel& model, const GridState& state,
                             std::span<const double> q_g, const LossOptions& opts = {});

}  // namespace voltcraft
