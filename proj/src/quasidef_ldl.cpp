#include "quasidef_ldl.hpp"

#include <cmath>

#include <Eigen/OrderingMethods>

#include "voltcraft/error.hpp"

namespace voltcraft::detail {

void QuasiDefiniteLdl::analyze(const Eigen::SparseMatrix<double>& pattern, std::vector<int> signs) {
  n_ = static_cast<int>(pattern.rows());
  if (pattern.cols() != n_ || static_cast<int>(signs.size()) != n_)
    fail(ErrorCode::DimensionMismatch, "LDL pattern and sign vector disagree");

  Eigen::AMDOrdering<int> amd;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
  amd(pattern, perm);
  old_of_new_.assign(perm.indices().data(), perm.indices().data() + n_);
  new_of_old_.assign(n_, 0);
  for (int k = 0; k < n_; ++k) new_of_old_[old_of_new_[k]] = k;
  signs_.resize(n_);
  for (int k = 0; k < n_; ++k) signs_[k] = signs[old_of_new_[k]];

  // Upper triangle of P K P' in CSC, remembering where each value comes from.
  std::vector<int> count(n_ + 1, 0);
  for (int j = 0; j < n_; ++j)
    for (int p = pattern.outerIndexPtr()[j]; p < pattern.outerIndexPtr()[j + 1]; ++p) {
      const int i = pattern.innerIndexPtr()[p];
      const int ni = new_of_old_[i], nj = new_of_old_[j];
      if (ni <= nj) ++count[nj + 1];
    }
  ap_.assign(n_ + 1, 0);
  for (int j = 0; j < n_; ++j) ap_[j + 1] = ap_[j] + count[j + 1];
  ai_.assign(ap_[n_], 0);
  src_.assign(ap_[n_], 0);
  std::vector<int> next(ap_.begin(), ap_.end() - 1);
  for (int j = 0; j < n_; ++j)
    for (int p = pattern.outerIndexPtr()[j]; p < pattern.outerIndexPtr()[j + 1]; ++p) {
      const int i = pattern.innerIndexPtr()[p];
      const int ni = new_of_old_[i], nj = new_of_old_[j];
      if (ni > nj) continue;
      ai_[next[nj]] = ni;
      src_[next[nj]] = p;
      ++next[nj];
    }
  ax_.assign(ap_[n_], 0.0);

  // Elimination tree and column counts of L.
  std::vector<int> work(n_, 0);
  etree_.assign(n_, -1);
  lnz_.assign(n_, 0);
  for (int j = 0; j < n_; ++j) {
    work[j] = j;
    for (int p = ap_[j]; p < ap_[j + 1]; ++p) {
      int i = ai_[p];
      while (work[i] != j) {
        if (etree_[i] == -1) etree_[i] = j;
        ++lnz_[i];
        work[i] = j;
        i = etree_[i];
      }
    }
  }
  lp_.assign(n_ + 1, 0);
  for (int i = 0; i < n_; ++i) lp_[i + 1] = lp_[i] + lnz_[i];
  li_.assign(lp_[n_], 0);
  lx_.assign(lp_[n_], 0.0);
  d_.assign(n_, 0.0);
  dinv_.assign(n_, 0.0);
}

void QuasiDefiniteLdl::factorize(const Eigen::SparseMatrix<double>& mat) {
  if (mat.rows() != n_ || mat.nonZeros() != static_cast<Eigen::Index>(
                                                 mat.outerIndexPtr()[n_] - mat.outerIndexPtr()[0]))
    fail(ErrorCode::DimensionMismatch, "LDL matrix does not match the analyzed pattern");
  const double* vals = mat.valuePtr();
  for (std::size_t k = 0; k < ax_.size(); ++k) ax_[k] = vals[src_[k]];

  regularized_ = 0;
  auto settle = [&](int k) {
    if (!(signs_[k] * d_[k] > pivot_tol)) {
      d_[k] = signs_[k] * dynamic_reg;
      ++regularized_;
    }
    dinv_[k] = 1.0 / d_[k];
  };

  std::vector<char> marked(n_, 0);
  std::vector<double> y(n_, 0.0);
  std::vector<int> next_in_col(lp_.begin(), lp_.end() - 1);
  std::vector<int> pattern_idx(n_), stack(n_);

  for (int k = 0; k < n_; ++k) {
    d_[k] = 0.0;
    int nnz_y = 0;
    for (int p = ap_[k]; p < ap_[k + 1]; ++p) {
      const int b = ai_[p];
      if (b == k) {
        d_[k] = ax_[p];
        continue;
      }
      y[b] = ax_[p];
      if (marked[b]) continue;
      // Walk up the elimination tree to collect the reach of column b.
      int top = 0;
      int i = b;
      while (i != -1 && i < k && !marked[i]) {
        marked[i] = 1;
        stack[top++] = i;
        i = etree_[i];
      }
      while (top > 0) pattern_idx[nnz_y++] = stack[--top];
    }
    for (int t = nnz_y - 1; t >= 0; --t) {
      const int c = pattern_idx[t];
      const double yc = y[c];
      const int end = next_in_col[c];
      for (int j = lp_[c]; j < end; ++j) y[li_[j]] -= lx_[j] * yc;
      li_[end] = k;
      lx_[end] = yc * dinv_[c];
      d_[k] -= yc * lx_[end];
      ++next_in_col[c];
      y[c] = 0.0;
      marked[c] = 0;
    }
    settle(k);
  }
}

Eigen::VectorXd QuasiDefiniteLdl::solve(const Eigen::VectorXd& rhs) const {
  Eigen::VectorXd x(n_);
  for (int k = 0; k < n_; ++k) x[k] = rhs[old_of_new_[k]];
  for (int i = 0; i < n_; ++i)
    for (int j = lp_[i]; j < lp_[i + 1]; ++j) x[li_[j]] -= lx_[j] * x[i];
  for (int i = 0; i < n_; ++i) x[i] *= dinv_[i];
  for (int i = n_ - 1; i >= 0; --i)
    for (int j = lp_[i]; j < lp_[i + 1]; ++j) x[i] -= lx_[j] * x[li_[j]];
  Eigen::VectorXd out(n_);
  for (int k = 0; k < n_; ++k) out[old_of_new_[k]] = x[k];
  return out;
}

}  // namespace voltcraft::detail
