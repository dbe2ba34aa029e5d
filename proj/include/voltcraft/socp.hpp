#pragma once

#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace voltcraft {

/// Cone program in the standard form
///
///   minimize    c'x
///   subject to  A x = b
///               G x + s = h,   s in K
///
/// where K is the product of the nonnegative orthant of dimension
/// `nonneg` (first rows of G) followed by second-order cones
/// { (t, u) : t >= |u| } of the listed dimensions.
struct ConeProgram {
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  Eigen::SparseMatrix<double> G;
  Eigen::VectorXd h;
  int nonneg = 0;
  std::vector<int> soc_dims;
};

struct ConeSolverOptions {
  double feas_tol = 1e-8;
  /// Absolute duality-gap target in units of the normalized objective; the
  /// solver keeps iterating toward it while progress is possible.
  double gap_tol = 1e-11;
  /// Gap level at which a stalled run still counts as optimal.
  double accept_gap_tol = 1e-8;
  int max_iter = 80;
  double step_fraction = 0.99;
};

enum class ConeStatus { Optimal, MaxIterations, Stalled, Numerical };

struct ConeSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd z;
  Eigen::VectorXd s;
  ConeStatus status = ConeStatus::Numerical;
  int iterations = 0;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double primal_residual = 0.0;  // scaled infinity norms
  double dual_residual = 0.0;
  double gap = 0.0;  // s'z, original units
};

/// Primal-dual path-following method with Nesterov-Todd scaling and
/// Mehrotra predictor-corrector steps.
ConeSolution solve_cone_program(const ConeProgram& prog, const ConeSolverOptions& opts = {});

}  // namespace voltcraft
