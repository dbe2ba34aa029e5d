#include "voltcraft/socp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "quasidef_ldl.hpp"
#include "voltcraft/error.hpp"

namespace voltcraft {

namespace {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

/// Block layout of the cone K.
struct ConeLayout {
  int nonneg = 0;
  std::vector<int> dims;
  std::vector<int> offsets;  // start row of each SOC block
  int size = 0;

  explicit ConeLayout(const ConeProgram& prog) : nonneg(prog.nonneg), dims(prog.soc_dims) {
    int off = nonneg;
    for (int d : dims) {
      offsets.push_back(off);
      off += d;
    }
    size = off;
  }
  int degree() const { return nonneg + static_cast<int>(dims.size()); }
};

/// Nesterov-Todd scaling W with W z = W^{-1} s = lambda.
struct Scaling {
  VectorXd d;  // orthant part: W = diag(d)
  std::vector<double> eta;
  std::vector<VectorXd> w;  // normalized hyperbolic vector per cone
};

double soc_det(const VectorXd& u, int off, int dim) {
  const double t = u[off];
  const double nrm = u.segment(off + 1, dim - 1).norm();
  return (t - nrm) * (t + nrm);
}

Scaling compute_scaling(const ConeLayout& K, const VectorXd& s, const VectorXd& z) {
  Scaling W;
  W.d.resize(K.nonneg);
  for (int i = 0; i < K.nonneg; ++i) W.d[i] = std::sqrt(s[i] / z[i]);
  for (std::size_t k = 0; k < K.dims.size(); ++k) {
    const int off = K.offsets[k];
    const int dim = K.dims[k];
    const double sn = std::sqrt(soc_det(s, off, dim));
    const double zn = std::sqrt(soc_det(z, off, dim));
    const VectorXd sb = s.segment(off, dim) / sn;
    const VectorXd zb = z.segment(off, dim) / zn;
    const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
    VectorXd w(dim);
    w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
    w.tail(dim - 1) = (sb.tail(dim - 1) - zb.tail(dim - 1)) / (2.0 * gamma);
    W.eta.push_back(std::sqrt(sn / zn));
    W.w.push_back(std::move(w));
  }
  return W;
}

// W v (inverse=false) or W^{-1} v (inverse=true).
VectorXd apply_scaling(const ConeLayout& K, const Scaling& W, const VectorXd& v, bool inverse) {
  VectorXd out(v.size());
  for (int i = 0; i < K.nonneg; ++i) out[i] = inverse ? v[i] / W.d[i] : v[i] * W.d[i];
  for (std::size_t k = 0; k < K.dims.size(); ++k) {
    const int off = K.offsets[k];
    const int dim = K.dims[k];
    const VectorXd& w = W.w[k];
    const double w0 = w[0];
    const auto w1 = w.tail(dim - 1);
    const double v0 = v[off];
    const auto v1 = v.segment(off + 1, dim - 1);
    const double wv = w1.dot(v1);
    const double sign = inverse ? -1.0 : 1.0;
    const double scale = inverse ? 1.0 / W.eta[k] : W.eta[k];
    out[off] = scale * (w0 * v0 + sign * wv);
    out.segment(off + 1, dim - 1) = scale * (sign * v0 * w1 + v1 + (wv / (1.0 + w0)) * w1);
  }
  return out;
}

Eigen::MatrixXd soc_scaling_squared(const Scaling& W, std::size_t k) {
  const VectorXd& w = W.w[k];
  const int dim = static_cast<int>(w.size());
  Eigen::MatrixXd M(dim, dim);
  M(0, 0) = w[0];
  M.block(0, 1, 1, dim - 1) = w.tail(dim - 1).transpose();
  M.block(1, 0, dim - 1, 1) = w.tail(dim - 1);
  M.block(1, 1, dim - 1, dim - 1) =
      Eigen::MatrixXd::Identity(dim - 1, dim - 1) +
      w.tail(dim - 1) * w.tail(dim - 1).transpose() / (1.0 + w[0]);
  M *= W.eta[k];
  return M * M;
}

VectorXd jordan_product(const ConeLayout& K, const VectorXd& u, const VectorXd& v) {
  VectorXd out(u.size());
  for (int i = 0; i < K.nonneg; ++i) out[i] = u[i] * v[i];
  for (std::size_t k = 0; k < K.dims.size(); ++k) {
    const int off = K.offsets[k];
    const int dim = K.dims[k];
    out[off] = u.segment(off, dim).dot(v.segment(off, dim));
    out.segment(off + 1, dim - 1) =
        u[off] * v.segment(off + 1, dim - 1) + v[off] * u.segment(off + 1, dim - 1);
  }
  return out;
}

// x such that lambda o x = d.
VectorXd jordan_divide(const ConeLayout& K, const VectorXd& lambda, const VectorXd& d) {
  VectorXd out(d.size());
  for (int i = 0; i < K.nonneg; ++i) out[i] = d[i] / lambda[i];
  for (std::size_t k = 0; k < K.dims.size(); ++k) {
    const int off = K.offsets[k];
    const int dim = K.dims[k];
    const double l0 = lambda[off];
    const auto l1 = lambda.segment(off + 1, dim - 1);
    const double det = soc_det(lambda, off, dim);
    const double x0 = (l0 * d[off] - l1.dot(d.segment(off + 1, dim - 1))) / det;
    out[off] = x0;
    out.segment(off + 1, dim - 1) = (d.segment(off + 1, dim - 1) - x0 * l1) / l0;
  }
  return out;
}

VectorXd identity_element(const ConeLayout& K) {
  VectorXd e = VectorXd::Zero(K.size);
  e.head(K.nonneg).setOnes();
  for (int off : K.offsets) e[off] = 1.0;
  return e;
}

// Smallest eigenvalue of u with respect to K.
double min_eigenvalue(const ConeLayout& K, const VectorXd& u) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < K.nonneg; ++i) m = std::min(m, u[i]);
  for (std::size_t k = 0; k < K.dims.size(); ++k) {
    const int off = K.offsets[k];
    m = std::min(m, u[off] - u.segment(off + 1, K.dims[k] - 1).norm());
  }
  return m;
}

// Largest alpha with lambda + alpha * du in K, for lambda in int K.
double max_step(const ConeLayout& K, const VectorXd& lambda, const VectorXd& du) {
  double alpha = std::numeric_limits<double>::infinity();
  for (int i = 0; i < K.nonneg; ++i)
    if (du[i] < 0.0) alpha = std::min(alpha, -lambda[i] / du[i]);
  for (std::size_t k = 0; k < K.dims.size(); ++k) {
    const int off = K.offsets[k];
    const int dim = K.dims[k];
    const double a = du[off] * du[off] - du.segment(off + 1, dim - 1).squaredNorm();
    const double b = 2.0 * (lambda[off] * du[off] - lambda.segment(off + 1, dim - 1).dot(du.segment(off + 1, dim - 1)));
    const double c = soc_det(lambda, off, dim);
    double root = std::numeric_limits<double>::infinity();
    if (a == 0.0) {
      if (b < 0.0) root = -c / b;
    } else {
      const double disc = b * b - 4.0 * a * c;
      if (disc >= 0.0) {
        const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
        for (double r : {q / a, q != 0.0 ? c / q : std::numeric_limits<double>::infinity()})
          if (r > 0.0) root = std::min(root, r);
      }
    }
    // Guard against leaving through the apex when a < 0 but both roots
    // were rounded away.
    if (lambda[off] + root * du[off] < 0.0 && du[off] < 0.0) root = std::min(root, -lambda[off] / du[off]);
    alpha = std::min(alpha, root);
  }
  return alpha;
}

class KktSolver {
 public:
  KktSolver(const SpMat& A, const SpMat& G, const ConeLayout& K)
      : A_(A), G_(G), K_(K), n_(static_cast<int>(std::max(A.cols(), G.cols()))),
        p_(static_cast<int>(A.rows())), m_(static_cast<int>(G.rows())) {
    for (int j = 0; j < A_.outerSize(); ++j)
      for (SpMat::InnerIterator it(A_, j); it; ++it) {
        base_.emplace_back(n_ + it.row(), it.col(), it.value());
        base_.emplace_back(it.col(), n_ + it.row(), it.value());
      }
    for (int j = 0; j < G_.outerSize(); ++j)
      for (SpMat::InnerIterator it(G_, j); it; ++it) {
        base_.emplace_back(n_ + p_ + it.row(), it.col(), it.value());
        base_.emplace_back(it.col(), n_ + p_ + it.row(), it.value());
      }
  }

  /// Rebuild and factor with the (2,2) cone block -W^2 (identity when W is
  /// null). The factored matrix carries a small static regularization that
  /// makes it quasi-definite; solve() refines against the exact matrix.
  void factor(const Scaling* W) {
    std::vector<Eigen::Triplet<double>> trip = base_;
    const int zoff = n_ + p_;
    for (int i = 0; i < K_.nonneg; ++i) {
      const double d = W ? W->d[i] : 1.0;
      trip.emplace_back(zoff + i, zoff + i, -d * d);
    }
    for (std::size_t k = 0; k < K_.dims.size(); ++k) {
      const int off = zoff + K_.offsets[k];
      const int dim = K_.dims[k];
      if (W) {
        const Eigen::MatrixXd W2 = soc_scaling_squared(*W, k);
        for (int r = 0; r < dim; ++r)
          for (int c = 0; c < dim; ++c) trip.emplace_back(off + r, off + c, -W2(r, c));
      } else {
        // Keep the block dense so the symbolic analysis stays valid.
        for (int r = 0; r < dim; ++r)
          for (int c = 0; c < dim; ++c) trip.emplace_back(off + r, off + c, r == c ? -1.0 : 0.0);
      }
    }
    const int dim = n_ + p_ + m_;
    K_mat_.resize(dim, dim);
    K_mat_.setFromTriplets(trip.begin(), trip.end());
    K_mat_.makeCompressed();

    for (int i = 0; i < dim; ++i) trip.emplace_back(i, i, i < n_ ? kRegularization : -kRegularization);
    SpMat reg(dim, dim);
    reg.setFromTriplets(trip.begin(), trip.end());
    reg.makeCompressed();
    if (!analyzed_) {
      std::vector<int> signs(dim, -1);
      std::fill(signs.begin(), signs.begin() + n_, 1);
      ldl_.analyze(reg, std::move(signs));
      analyzed_ = true;
    }
    ldl_.factorize(reg);
  }

  /// Solves K [x; y; z] = [bx; by; bz] by refinement on the regularized
  /// factorization.
  void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& x, VectorXd& y,
             VectorXd& z) const {
    VectorXd rhs(n_ + p_ + m_);
    rhs << bx, by, bz;
    VectorXd sol = ldl_.solve(rhs);
    const double target = 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
    double prev = std::numeric_limits<double>::infinity();
    for (int round = 0; round < kMaxRefinement; ++round) {
      const VectorXd r = rhs - K_mat_ * sol;
      const double err = r.lpNorm<Eigen::Infinity>();
      if (err <= target || err >= prev) break;
      prev = err;
      sol += ldl_.solve(r);
    }
    if (!sol.allFinite()) fail(ErrorCode::Numerical, "non-finite Newton direction");
    x = sol.head(n_);
    y = sol.segment(n_, p_);
    z = sol.tail(m_);
  }

 private:
  const SpMat& A_;
  const SpMat& G_;
  const ConeLayout& K_;
  int n_, p_, m_;
  std::vector<Eigen::Triplet<double>> base_;
  static constexpr double kRegularization = 1e-9;
  static constexpr int kMaxRefinement = 10;
  SpMat K_mat_;
  detail::QuasiDefiniteLdl ldl_;
  bool analyzed_ = false;
};

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

}  // namespace

ConeSolution solve_cone_program(const ConeProgram& prog, const ConeSolverOptions& opts) {
  const ConeLayout K(prog);
  const int n = static_cast<int>(prog.c.size());
  if (prog.G.rows() != K.size || prog.h.size() != K.size || prog.G.cols() != n ||
      prog.A.rows() != prog.b.size() || (prog.A.rows() > 0 && prog.A.cols() != n))
    fail(ErrorCode::DimensionMismatch, "cone program dimensions are inconsistent");
  for (int d : prog.soc_dims)
    if (d < 2) fail(ErrorCode::InvalidArgument, "second-order cones need dimension >= 2");

  SpMat A = prog.A;
  if (A.rows() == 0) A.resize(0, n);

  // Normalize the cost so dual variables are O(1).
  const double cscale = std::max(inf_norm(prog.c), 1e-300);
  const VectorXd c = prog.c / cscale;
  const VectorXd& b = prog.b;
  const VectorXd& h = prog.h;
  const double bnorm = 1.0 + inf_norm(b);
  const double hnorm = 1.0 + inf_norm(h);
  const double cnorm = 1.0 + inf_norm(c);

  KktSolver kkt(A, prog.G, K);
  const VectorXd e = identity_element(K);

  ConeSolution sol;
  VectorXd x, y, z, s, tmp_x, tmp_y, tmp_z;

  kkt.factor(nullptr);
  kkt.solve(VectorXd::Zero(n), b, h, x, tmp_y, tmp_z);
  s = -tmp_z;
  kkt.solve(-c, VectorXd::Zero(A.rows()), VectorXd::Zero(K.size), tmp_x, y, z);
  {
    const double ts = min_eigenvalue(K, s);
    if (ts <= 1e-8 * std::max(1.0, s.norm())) s += (1.0 - ts) * e;
    const double tz = min_eigenvalue(K, z);
    if (tz <= 1e-8 * std::max(1.0, z.norm())) z += (1.0 - tz) * e;
  }

  const double degree = K.degree();
  double pres = 0.0, dres = 0.0, gap = 0.0;
  auto residuals = [&](VectorXd& rx, VectorXd& ry, VectorXd& rz) {
    rx = A.transpose() * y + prog.G.transpose() * z + c;
    ry = A * x - b;
    rz = prog.G * x + s - h;
    pres = std::max(inf_norm(ry) / bnorm, inf_norm(rz) / hnorm);
    dres = inf_norm(rx) / cnorm;
    gap = s.dot(z);
  };

  // Best feasible iterate seen so far; near the boundary the Newton systems
  // lose accuracy and later iterates can drift.
  struct Snapshot {
    VectorXd x, y, z, s;
    double pres, dres, gap;
    int iter;
  };
  std::optional<Snapshot> best;
  auto remember = [&](int iter) {
    if (pres > opts.feas_tol || dres > opts.feas_tol || gap < 0.0) return;
    if (best && gap >= best->gap) return;
    best = Snapshot{x, y, z, s, pres, dres, gap, iter};
  };

  sol.status = ConeStatus::MaxIterations;
  VectorXd rx, ry, rz;
  for (int iter = 0; iter <= opts.max_iter; ++iter) {
    residuals(rx, ry, rz);
    sol.iterations = iter;
    remember(iter);
    if (pres <= opts.feas_tol && dres <= opts.feas_tol && gap <= opts.gap_tol) {
      sol.status = ConeStatus::Optimal;
      break;
    }
    if (iter == opts.max_iter) break;
    if (best && pres > opts.feas_tol && best->gap <= opts.accept_gap_tol) {
      sol.status = ConeStatus::Stalled;
      break;
    }

    const Scaling W = compute_scaling(K, s, z);
    const VectorXd lambda = apply_scaling(K, W, z, false);
    const double mu = gap / degree;

    VectorXd dx, dy, dz, ds;
    auto newton = [&](const VectorXd& target) {
      // target is the right-hand side of lambda o (W dz + W^{-1} ds).
      const VectorXd q = jordan_divide(K, lambda, target);
      kkt.solve(-rx, -ry, -rz - apply_scaling(K, W, q, false), dx, dy, dz);
      ds = apply_scaling(K, W, q - apply_scaling(K, W, dz, false), false);
    };
    auto step_to_boundary = [&]() {
      const double as = max_step(K, lambda, apply_scaling(K, W, ds, true));
      const double az = max_step(K, lambda, apply_scaling(K, W, dz, false));
      return std::min(as, az);
    };

    double alpha = 0.0;
    try {
      kkt.factor(&W);
      const VectorXd lambda_sq = jordan_product(K, lambda, lambda);
      newton(-lambda_sq);
      const double alpha_aff = std::min(1.0, step_to_boundary());
      const double sigma = std::pow(std::max(0.0, 1.0 - alpha_aff), 3.0);

      const VectorXd ds_scaled = apply_scaling(K, W, ds, true);
      const VectorXd dz_scaled = apply_scaling(K, W, dz, false);
      newton(-lambda_sq - jordan_product(K, ds_scaled, dz_scaled) + sigma * mu * e);
      alpha = std::min(1.0, opts.step_fraction * step_to_boundary());
    } catch (const Error& err) {
      if (err.code() != ErrorCode::Numerical) throw;
      sol.status = ConeStatus::Numerical;
      break;
    }
    if (!(alpha > 1e-12)) {
      sol.status = ConeStatus::Stalled;
      break;
    }
    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    if (!x.allFinite() || !z.allFinite() || !s.allFinite()) {
      sol.status = ConeStatus::Numerical;
      break;
    }
  }
  if (sol.status != ConeStatus::Optimal) {
    residuals(rx, ry, rz);
    remember(sol.iterations);
    if (best && best->gap <= opts.accept_gap_tol) {
      x = best->x;
      y = best->y;
      z = best->z;
      s = best->s;
      pres = best->pres;
      dres = best->dres;
      gap = best->gap;
      sol.status = ConeStatus::Optimal;
    }
  }

  sol.x = x;
  sol.y = y * cscale;
  sol.z = z * cscale;
  sol.s = s;
  sol.primal_residual = pres;
  sol.dual_residual = dres;
  sol.gap = gap * cscale;
  sol.primal_objective = prog.c.dot(x);
  sol.dual_objective = -(b.dot(sol.y) + h.dot(sol.z));
  return sol;
}

}  // namespace voltcraft
