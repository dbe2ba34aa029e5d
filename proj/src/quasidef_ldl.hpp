#pragma once

#include <vector>

#include <Eigen/Sparse>

namespace voltcraft::detail {

/// Sparse LDL' for symmetric quasi-definite matrices. Pivots whose sign
/// disagrees with the expected inertia (or that are too small) are replaced
/// by +/- `dynamic_reg`, so the factorization never breaks down; callers
/// recover accuracy with iterative refinement on the unmodified matrix.
class QuasiDefiniteLdl {
 public:
  /// `signs[i]` is +1 for rows of the positive block and -1 otherwise.
  /// `pattern` is the full symmetric matrix whose pattern stays fixed.
  void analyze(const Eigen::SparseMatrix<double>& pattern, std::vector<int> signs);

  /// Numeric factorization of a matrix with the analyzed pattern (full
  /// storage; only the upper triangle after permutation is read).
  void factorize(const Eigen::SparseMatrix<double>& mat);

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

  int regularized_pivots() const noexcept { return regularized_; }

  double pivot_tol = 1e-13;
  double dynamic_reg = 1e-7;

 private:
  int n_ = 0;
  std::vector<int> new_of_old_;
  std::vector<int> old_of_new_;
  std::vector<int> signs_;  // in permuted order
  // Upper triangle of the permuted matrix, CSC.
  std::vector<int> ap_, ai_;
  std::vector<double> ax_;
  std::vector<int> src_;  // ax_[k] = mat.valuePtr()[src_[k]]
  std::vector<int> etree_, lnz_, lp_, li_;
  std::vector<double> lx_, d_, dinv_;
  int regularized_ = 0;
};

}  // namespace voltcraft::detail
