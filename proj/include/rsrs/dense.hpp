#pragma once

// Dense building blocks: orthonormal bases, nullspaces, right pseudo-inverses,
// interpolative decompositions, pivoted LU and block elimination operators.

#include "rsrs/common.hpp"
#include "rsrs/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace rsrs {

/// Singular values at or below this fraction of the largest are treated as zero
/// by orthonormal_columns, nullspace_basis and right_pseudoinverse.
inline constexpr double kRankCutoff = 1e-13;

namespace detail {

inline Index numerical_rank(const Vector& sigma) {
  if (sigma.size() == 0 || sigma(0) == 0.0) return 0;
  const double cut = kRankCutoff * sigma(0);
  Index r = 0;
  while (r < sigma.size() && sigma(r) > cut) ++r;
  return r;
}

}  // namespace detail

/// Orthonormal basis for range(M); the column count is the numerical rank.
inline Matrix orthonormal_columns(const Matrix& m) {
  if (m.cols() == 0 || m.rows() == 0) return Matrix(m.rows(), 0);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
  const Index r = detail::numerical_rank(svd.singularValues());
  return svd.matrixU().leftCols(r);
}

/// Orthonormal basis for the nullspace of a wide (or square) matrix.
/// Throws if the nullspace is trivial.
inline Matrix nullspace_basis(const Matrix& m) {
  const Index c = m.cols();
  if (m.rows() == 0) return Matrix::Identity(c, c);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const Index r = detail::numerical_rank(svd.singularValues());
  if (r >= c) {
    std::ostringstream os;
    os << "nullspace_basis: " << m.rows() << "x" << c << " matrix has full column rank";
    throw Error(os.str());
  }
  return svd.matrixV().rightCols(c - r);
}

/// Right pseudo-inverse M^+ with M M^+ = I for a full-row-rank matrix.
inline Matrix right_pseudoinverse(const Matrix& m) {
  require_shape(m.rows() <= m.cols(), "right_pseudoinverse: matrix must be wide or square");
  if (m.rows() == 0) return Matrix(m.cols(), 0);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  if (!(smin > kRankCutoff * smax)) {
    std::ostringstream os;
    os << "right_pseudoinverse: " << m.rows() << "x" << m.cols()
       << " matrix is numerically row-rank deficient (condition number "
       << (smin > 0 ? smax / smin : std::numeric_limits<double>::infinity()) << ")";
    throw Error(os.str());
  }
  return svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

/// Interpolative decomposition. For a column ID, positions `skel` and `resid`
/// index columns of the input and M(:, resid) ~= M(:, skel) * T. For a row ID
/// they index rows and M(resid, :) ~= T * M(skel, :).
struct IdResult {
  IndexVector skel;
  IndexVector resid;
  Matrix T;
  Index rank = 0;
  /// False when the rank was capped at kmax before the tolerance was met.
  bool tolerance_reached = true;
};

/// Column ID by column-pivoted Householder QR, stopped at the first k whose
/// (k+1)-th pivot (the largest remaining column norm) is <= atol, or at kmax.
/// The residual ||M(:,resid) - M(:,skel) T||_F equals the Frobenius norm of the
/// trailing block, so it is bounded by sqrt(n - k) * atol.
inline IdResult column_id(const Matrix& m, double atol, Index kmax) {
  require_shape(atol >= 0.0, "column_id: atol must be nonnegative");
  const Index rows = m.rows();
  const Index cols = m.cols();
  const Index cap = std::min({std::max<Index>(kmax, 0), rows, cols});

  Matrix r = m;
  IndexVector perm(static_cast<std::size_t>(cols));
  std::iota(perm.begin(), perm.end(), Index{0});
  Vector work(cols);

  IdResult id;
  Index k = 0;
  while (true) {
    if (k == cols) break;
    Index best = k;
    double best_norm2 = -1.0;
    for (Index j = k; j < cols; ++j) {
      const double nrm2 = r.col(j).tail(rows - k).squaredNorm();
      if (nrm2 > best_norm2) {
        best_norm2 = nrm2;
        best = j;
      }
    }
    if (std::sqrt(best_norm2) <= atol) break;
    if (k == cap) {
      id.tolerance_reached = false;
      break;
    }
    if (best != k) {
      r.col(k).swap(r.col(best));
      std::swap(perm[k], perm[best]);
    }
    double tau = 0.0;
    double beta = 0.0;
    auto tail = r.col(k).tail(rows - k);
    tail.makeHouseholderInPlace(tau, beta);
    const Vector essential = tail.tail(rows - k - 1);
    tail(0) = beta;
    tail.tail(rows - k - 1).setZero();
    if (k + 1 < cols) {
      r.block(k, k + 1, rows - k, cols - k - 1)
          .applyHouseholderOnTheLeft(essential, tau, work.data());
    }
    ++k;
  }

  id.rank = k;
  id.skel.assign(perm.begin(), perm.begin() + k);
  id.resid.assign(perm.begin() + k, perm.end());
  id.T = r.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(r.block(0, k, k, cols - k));
  return id;
}

/// Row ID, computed as the column ID of the transpose.
inline IdResult row_id(const Matrix& m, double atol, Index kmax) {
  IdResult id = column_id(m.transpose(), atol, kmax);
  id.T.transposeInPlace();
  return id;
}

/// Row-pivoted LU: row i of P*M is row perm[i] of M, and P*M = L*U with L unit
/// lower triangular; both factors share `lu`.
struct LuFactors {
  Matrix lu;
  IndexVector perm;

  Index size() const { return lu.rows(); }
};

inline LuFactors lu_factor(const Matrix& m) {
  require_shape(m.rows() == m.cols(), "lu_factor: matrix must be square");
  const Index n = m.rows();
  LuFactors f{m, IndexVector(static_cast<std::size_t>(n))};
  std::iota(f.perm.begin(), f.perm.end(), Index{0});
  const double scale = n > 0 ? m.cwiseAbs().maxCoeff() : 0.0;
  const double tiny = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * scale;
  Matrix& a = f.lu;
  for (Index k = 0; k < n; ++k) {
    Index piv = k;
    a.col(k).tail(n - k).cwiseAbs().maxCoeff(&piv);
    piv += k;
    const double pv = a(piv, k);
    if (!(std::abs(pv) > tiny)) {
      std::ostringstream os;
      os << "lu_factor: singular pivot at index " << k << " (|pivot| = " << std::abs(pv) << ")";
      throw SingularError(os.str(), k);
    }
    if (piv != k) {
      a.row(k).swap(a.row(piv));
      std::swap(f.perm[k], f.perm[piv]);
    }
    const Index rest = n - k - 1;
    if (rest == 0) continue;
    a.col(k).tail(rest) /= pv;
    a.bottomRightCorner(rest, rest).noalias() -= a.col(k).tail(rest) * a.row(k).tail(rest);
  }
  return f;
}

/// Solves M X = B (or M^T X = B). Each column is processed independently with
/// the same operation sequence.
inline Matrix lu_solve(const LuFactors& f, const Matrix& b, bool transposed = false) {
  const Index n = f.size();
  require_shape(b.rows() == n, "lu_solve: right-hand side has wrong row count");
  const Matrix& a = f.lu;
  Matrix x(n, b.cols());
  Vector v(n);
  for (Index c = 0; c < b.cols(); ++c) {
    if (!transposed) {
      for (Index i = 0; i < n; ++i) v(i) = b(f.perm[i], c);
      for (Index j = 0; j < n; ++j) {
        const double vj = v(j);
        for (Index i = j + 1; i < n; ++i) v(i) -= a(i, j) * vj;
      }
      for (Index j = n - 1; j >= 0; --j) {
        v(j) /= a(j, j);
        const double vj = v(j);
        for (Index i = 0; i < j; ++i) v(i) -= a(i, j) * vj;
      }
      x.col(c) = v;
    } else {
      v = b.col(c);
      for (Index j = 0; j < n; ++j) {
        double s = v(j);
        for (Index i = 0; i < j; ++i) s -= a(i, j) * v(i);
        v(j) = s / a(j, j);
      }
      for (Index j = n - 1; j >= 0; --j) {
        double s = v(j);
        for (Index i = j + 1; i < n; ++i) s -= a(i, j) * v(i);
        v(j) = s;
      }
      for (Index i = 0; i < n; ++i) x(f.perm[i], c) = v(i);
    }
  }
  return x;
}

/// Multiplies by the factored matrix, M X (or M^T X), without reassembling M.
inline Matrix lu_apply(const LuFactors& f, const Matrix& x, bool transposed = false) {
  const Index n = f.size();
  require_shape(x.rows() == n, "lu_apply: wrong row count");
  const auto lower = f.lu.triangularView<Eigen::UnitLower>();
  const auto upper = f.lu.triangularView<Eigen::Upper>();
  Matrix out(n, x.cols());
  if (!transposed) {
    Matrix ux = upper * x;
    const Matrix y = lower * ux;
    for (Index i = 0; i < n; ++i) out.row(f.perm[i]) = y.row(i);
  } else {
    Matrix y(n, x.cols());
    for (Index i = 0; i < n; ++i) y.row(i) = x.row(f.perm[i]);
    Matrix ly = lower.transpose() * y;
    out = upper.transpose() * ly;
  }
  return out;
}

/// In-place X <- e X, e^-1 X, e^T X or e^-T X for the elimination matrix e that
/// is the identity except for `block` in the (rows, cols) position. Touches only
/// rows `rows` (forward) or rows `cols` (adjoint) of X. Index sets must be
/// disjoint, so the inverse is the same matrix with the block negated.
inline void elim_inplace(const Matrix& block, const IndexVector& rows, const IndexVector& cols,
                         Matrix& x, bool inverse = false, bool adjoint = false) {
  if (block.size() == 0 || x.cols() == 0) return;
  const double sign = inverse ? -1.0 : 1.0;
  if (!adjoint) {
    const Matrix delta = block * x(cols, Eigen::all);
    x(rows, Eigen::all) += sign * delta;
  } else {
    const Matrix delta = block.transpose() * x(rows, Eigen::all);
    x(cols, Eigen::all) += sign * delta;
  }
}

/// Owning form of an elimination matrix.
struct ElimOp {
  Matrix block;
  IndexVector rows;
  IndexVector cols;

  std::size_t stored_scalars() const { return static_cast<std::size_t>(block.size()); }

  void apply(Matrix& x, bool inverse = false, bool adjoint = false) const {
    elim_inplace(block, rows, cols, x, inverse, adjoint);
  }
};

/// Checked, value-returning form of ElimOp::apply.
inline Matrix elim_apply(const Matrix& t, std::span<const Index> rows, std::span<const Index> cols,
                         const Matrix& x, bool inverse = false, bool adjoint = false) {
  require_shape(t.rows() == static_cast<Index>(rows.size()) &&
                    t.cols() == static_cast<Index>(cols.size()),
                "elim_apply: block shape does not match index sets");
  std::vector<char> seen(static_cast<std::size_t>(x.rows()), 0);
  for (Index i : rows) {
    require_shape(i >= 0 && i < x.rows(), "elim_apply: row index out of range");
    seen[static_cast<std::size_t>(i)] = 1;
  }
  for (Index j : cols) {
    require_shape(j >= 0 && j < x.rows(), "elim_apply: column index out of range");
    require_shape(!seen[static_cast<std::size_t>(j)], "elim_apply: index sets overlap");
  }
  ElimOp op{t, IndexVector(rows.begin(), rows.end()), IndexVector(cols.begin(), cols.end())};
  Matrix out = x;
  op.apply(out, inverse, adjoint);
  return out;
}

using OperatorCallback = std::function<Vector(const Vector&)>;

/// Power iteration on A^* A. Returns max_k ||A v_k|| over unit iterates, a lower
/// bound on ||A||_2 that cannot decrease with more iterations. Values of iters
/// below 2 are raised to 2.
inline double spectral_norm_estimate(const OperatorCallback& apply,
                                     const OperatorCallback& apply_adjoint, Index n, int iters,
                                     std::uint64_t seed) {
  if (n == 0) return 0.0;
  iters = std::max(iters, 2);
  Vector v = draw_gaussian(n, 1, seed, 0x70).col(0);
  v /= v.norm();
  double estimate = 0.0;
  for (int it = 0; it < iters; ++it) {
    const Vector w = apply(v);
    estimate = std::max(estimate, w.norm());
    const Vector u = apply_adjoint(w);
    const double nu = u.norm();
    if (!(nu > 0.0)) break;
    v = u / nu;
  }
  return estimate;
}

}  // namespace rsrs
