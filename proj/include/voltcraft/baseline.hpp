#pragma once

#include <vector>

#include "voltcraft/error.hpp"
#include "voltcraft/network.hpp"
#include "voltcraft/powerflow.hpp"

namespace voltcraft {

struct SolverOptions {
  double kkt_tol = 1e-8;
  double feas_tol = 1e-8;
  double exact_tol = 1e-6;
  double obj_tol = 1e-8;
  int max_iter = 80;
  /// Flip the objective to maximize line losses. Only useful for probing
  /// relaxation exactness.
  bool maximize_loss = false;
};

/// Jointly optimal setpoints under the cone relaxation. Flow vectors follow
/// the PowerFlowSolution layout (v includes the substation at index 0).
struct OpfSolution {
  std::vector<double> q_g_star;
  std::vector<double> P;
  std::vector<double> Q;
  std::vector<double> ell;
  std::vector<double> v;
  double objective = 0.0;
  /// (P^2 + Q^2) / v_parent - ell per line; <= 0 inside the relaxation.
  std::vector<double> cone_residuals;
  bool exact = false;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Raised when no voltage-feasible setpoint exists; carries the point that
/// minimizes total band excursion.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& message, double max_violation, OpfSolution point)
      : Error(ErrorCode::Infeasible, message), max_violation_(max_violation), point_(std::move(point)) {}
  double max_violation() const noexcept { return max_violation_; }
  const OpfSolution& least_violating_point() const noexcept { return point_; }

 private:
  double max_violation_;
  OpfSolution point_;
};

OpfSolution solve_baseline(const NetworkModel& model, const GridState& state,
                           const SolverOptions& opts = {});

/// Exhaustive search over a uniform grid on the action box, scoring each
/// point with the exact power flow and rejecting band violations.
OpfSolution grid_search_oracle(const NetworkModel& model, const GridState& state,
                               int points_per_axis);

struct ExactnessReport {
  std::vector<double> slacks;
  double max_abs_slack = 0.0;
  bool exact = false;
};

ExactnessReport exactness_check(const OpfSolution& sol, double exact_tol = 1e-6);

}  // namespace voltcraft
