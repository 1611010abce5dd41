#pragma once

// Black-box operators. Every oracle exposes apply and apply_adjoint on blocks
// of vectors; some additionally expose entries, point geometry, or the radial
// kernel they were built from.

#include "rsrs/binary.hpp"
#include "rsrs/common.hpp"
#include "rsrs/dense.hpp"
#include "rsrs/geometry.hpp"
#include "rsrs/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <tuple>

namespace rsrs {

namespace detail {

/// Dot product with a fixed summation order that depends only on n.
inline double dot_fixed(const double* a, const double* b, Index n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  Index k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

/// out(i, j) = dot(row i of a row-major panel, x(:, j)) for a panel of rows.
inline void panel_times(const double* panel, Index panel_rows, Index n, const Matrix& x,
                        Index row0, Matrix& out) {
  for (Index j = 0; j < x.cols(); ++j) {
    const double* xj = x.col(j).data();
    for (Index i = 0; i < panel_rows; ++i) out(row0 + i, j) = dot_fixed(panel + i * n, xj, n);
  }
}

inline constexpr Index kPanelRows = 32;

}  // namespace detail

class LinearOracle {
 public:
  virtual ~LinearOracle() = default;

  virtual Index size() const = 0;
  virtual Matrix apply(const Matrix& x) const = 0;
  virtual Matrix apply_adjoint(const Matrix& x) const = 0;

  virtual bool has_entries() const { return false; }
  virtual double entry(Index /*i*/, Index /*j*/) const {
    throw UnsupportedOracleError("oracle does not provide entry access");
  }
  virtual Matrix entries(std::span<const Index> rows, std::span<const Index> cols) const {
    Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (Index j = 0; j < out.cols(); ++j)
      for (Index i = 0; i < out.rows(); ++i) out(i, j) = entry(rows[i], cols[j]);
    return out;
  }

  virtual const PointSet* points() const { return nullptr; }

  /// Kernels of the form k(x, y) = g(|x - y|) can report g for proxy compression.
  virtual bool has_radial_kernel() const { return false; }
  virtual double radial_kernel(double /*r*/) const {
    throw UnsupportedOracleError("oracle does not provide a radial kernel");
  }
};

/// Explicit square matrix.
class DenseOracle final : public LinearOracle {
 public:
  explicit DenseOracle(Matrix m) : m_(std::move(m)), row_major_(m_) {
    require_shape(m_.rows() == m_.cols(), "dense_oracle: matrix must be square");
  }

  Index size() const override { return m_.rows(); }

  Matrix apply(const Matrix& x) const override {
    require_shape(x.rows() == size(), "DenseOracle::apply: wrong row count");
    Matrix out(size(), x.cols());
    for (Index r0 = 0; r0 < size(); r0 += detail::kPanelRows) {
      const Index rows = std::min(detail::kPanelRows, size() - r0);
      detail::panel_times(row_major_.data() + r0 * size(), rows, size(), x, r0, out);
    }
    return out;
  }

  Matrix apply_adjoint(const Matrix& x) const override {
    require_shape(x.rows() == size(), "DenseOracle::apply_adjoint: wrong row count");
    Matrix out(size(), x.cols());
    for (Index r0 = 0; r0 < size(); r0 += detail::kPanelRows) {
      const Index rows = std::min(detail::kPanelRows, size() - r0);
      detail::panel_times(m_.data() + r0 * size(), rows, size(), x, r0, out);
    }
    return out;
  }

  bool has_entries() const override { return true; }
  double entry(Index i, Index j) const override { return m_(i, j); }
  Matrix entries(std::span<const Index> rows, std::span<const Index> cols) const override {
    return gather(m_, rows, cols);
  }

  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major_;
};

inline std::unique_ptr<DenseOracle> dense_oracle(Matrix m) {
  return std::make_unique<DenseOracle>(std::move(m));
}

/// A(i, j) = log|x_i - x_j| off the diagonal and A(i, i) = diag_shift. Entries
/// are evaluated on the fly one row panel at a time; apply and apply_adjoint
/// share the same code path since the kernel is symmetric.
class KernelOracle final : public LinearOracle {
 public:
  KernelOracle(PointSet points, double diag_shift)
      : points_(std::move(points)), diag_shift_(diag_shift) {
    check_distinct();
  }

  Index size() const override { return points_.size(); }
  Matrix apply(const Matrix& x) const override { return multiply(x); }
  Matrix apply_adjoint(const Matrix& x) const override { return multiply(x); }

  bool has_entries() const override { return true; }
  double entry(Index i, Index j) const override {
    if (i == j) return diag_shift_;
    return 0.5 * std::log((points_.coords.col(i) - points_.coords.col(j)).squaredNorm());
  }

  const PointSet* points() const override { return &points_; }
  bool has_radial_kernel() const override { return true; }
  double radial_kernel(double r) const override { return std::log(r); }

  double diag_shift() const { return diag_shift_; }

 private:
  Matrix multiply(const Matrix& x) const {
    require_shape(x.rows() == size(), "KernelOracle: wrong row count");
    const Index n = size();
    Matrix out(n, x.cols());
    std::vector<double> panel(static_cast<std::size_t>(detail::kPanelRows * n));
    for (Index r0 = 0; r0 < n; r0 += detail::kPanelRows) {
      const Index rows = std::min(detail::kPanelRows, n - r0);
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < n; ++j) panel[static_cast<std::size_t>(i * n + j)] = entry(r0 + i, j);
      detail::panel_times(panel.data(), rows, n, x, r0, out);
    }
    return out;
  }

  void check_distinct() const {
    const Index n = points_.size();
    IndexVector order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    const Matrix& c = points_.coords;
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      for (Index d = 0; d < c.rows(); ++d)
        if (c(d, a) != c(d, b)) return c(d, a) < c(d, b);
      return a < b;
    });
    for (std::size_t k = 1; k < order.size(); ++k)
      if (c.col(order[k]) == c.col(order[k - 1])) {
        std::ostringstream os;
        os << "kernel_oracle: points " << order[k - 1] << " and " << order[k] << " coincide";
        throw Error(os.str());
      }
  }

  PointSet points_;
  double diag_shift_;
};

inline std::unique_ptr<KernelOracle> kernel_oracle(PointSet points, double diag_shift = 0.0) {
  return std::make_unique<KernelOracle>(std::move(points), diag_shift);
}

/// Compressed sparse row matrix with sorted column indices per row.
struct SparseMatrixCsr {
  Index rows = 0;
  Index cols = 0;
  IndexVector row_ptr{0};
  IndexVector col_idx;
  std::vector<double> values;

  /// Duplicate (i, j) entries are summed.
  static SparseMatrixCsr from_triplets(Index rows, Index cols,
                                       std::vector<std::tuple<Index, Index, double>> triplets) {
    std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
      return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });
    SparseMatrixCsr s;
    s.rows = rows;
    s.cols = cols;
    s.row_ptr.assign(static_cast<std::size_t>(rows + 1), 0);
    Index last_i = -1, last_j = -1;
    for (const auto& [i, j, v] : triplets) {
      require_shape(i >= 0 && i < rows && j >= 0 && j < cols, "SparseMatrixCsr: index out of range");
      if (i == last_i && j == last_j) {
        s.values.back() += v;
        continue;
      }
      last_i = i;
      last_j = j;
      s.col_idx.push_back(j);
      s.values.push_back(v);
      ++s.row_ptr[static_cast<std::size_t>(i + 1)];
    }
    for (Index i = 0; i < rows; ++i)
      s.row_ptr[static_cast<std::size_t>(i + 1)] += s.row_ptr[static_cast<std::size_t>(i)];
    return s;
  }

  Vector multiply(const Vector& x) const {
    Vector y = Vector::Zero(rows);
    for (Index i = 0; i < rows; ++i) {
      double s = 0.0;
      for (Index k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
        s += values[static_cast<std::size_t>(k)] * x(col_idx[static_cast<std::size_t>(k)]);
      y(i) = s;
    }
    return y;
  }

  Vector multiply_transpose(const Vector& x) const {
    Vector y = Vector::Zero(cols);
    for (Index i = 0; i < rows; ++i)
      for (Index k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
        y(col_idx[static_cast<std::size_t>(k)]) += values[static_cast<std::size_t>(k)] * x(i);
    return y;
  }

  Matrix to_dense() const {
    Matrix d = Matrix::Zero(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i + 1)]; ++k)
        d(i, col_idx[static_cast<std::size_t>(k)]) += values[static_cast<std::size_t>(k)];
    return d;
  }
};

/// Banded Cholesky factor of an SPD matrix with half-bandwidth `band`.
/// Row i of `l` holds L(i, i - band .. i).
class BandCholesky {
 public:
  BandCholesky(const SparseMatrixCsr& a, Index band) : n_(a.rows), band_(band), l_(a.rows, band + 1) {
    require_shape(a.rows == a.cols, "BandCholesky: matrix must be square");
    l_.setZero();
    for (Index i = 0; i < n_; ++i)
      for (Index k = a.row_ptr[static_cast<std::size_t>(i)]; k < a.row_ptr[static_cast<std::size_t>(i + 1)]; ++k) {
        const Index j = a.col_idx[static_cast<std::size_t>(k)];
        if (j > i) continue;
        require_shape(i - j <= band_, "BandCholesky: entry outside the band");
        l_(i, band_ - (i - j)) += a.values[static_cast<std::size_t>(k)];
      }
    for (Index i = 0; i < n_; ++i) {
      for (Index j = std::max<Index>(0, i - band_); j <= i; ++j) {
        double s = at(i, j);
        for (Index k = std::max<Index>(0, i - band_); k < j; ++k) s -= at(i, k) * at(j, k);
        if (j == i) {
          if (!(s > 0.0)) {
            std::ostringstream os;
            os << "BandCholesky: factorization failed at pivot " << i;
            throw SingularError(os.str(), i);
          }
          ref(i, i) = std::sqrt(s);
        } else {
          ref(i, j) = s / at(j, j);
        }
      }
    }
  }

  Vector solve(Vector b) const {
    for (Index i = 0; i < n_; ++i) {
      double s = b(i);
      for (Index k = std::max<Index>(0, i - band_); k < i; ++k) s -= at(i, k) * b(k);
      b(i) = s / at(i, i);
    }
    for (Index i = n_ - 1; i >= 0; --i) {
      b(i) /= at(i, i);
      const double bi = b(i);
      for (Index k = std::max<Index>(0, i - band_); k < i; ++k) b(k) -= at(i, k) * bi;
    }
    return b;
  }

 private:
  double at(Index i, Index j) const { return l_(i, band_ - (i - j)); }
  double& ref(Index i, Index j) { return l_(i, band_ - (i - j)); }

  Index n_;
  Index band_;
  Matrix l_;
};

/// Schur complement T11 = A11 - A12 A22^{-1} A21 of the 5-point Laplacian on an
/// n x n interior grid with Dirichlet boundary. Block 1 is grid column 0 (the
/// interface, n unknowns); block 2 is grid columns 1..b (the adjacent slab
/// interior, n*b unknowns). The stencil is unscaled: 4 on the diagonal, -1 to
/// each grid neighbor.
class SchurSlabOracle final : public LinearOracle {
 public:
  SchurSlabOracle(Index n, Index b) : n_(n), b_(b) {
    if (n < 3) throw Error("schur_slab_oracle: n must be at least 3");
    if (b < 1 || b >= n) throw Error("schur_slab_oracle: slab width must satisfy 1 <= b < n");
    using Triplets = std::vector<std::tuple<Index, Index, double>>;
    Triplets t11, t12, t21, t22;
    // Unknown (ix, iy) of block 2 has local index (ix - 1) * n + iy.
    for (Index iy = 0; iy < n; ++iy) {
      t11.emplace_back(iy, iy, 4.0);
      if (iy > 0) t11.emplace_back(iy, iy - 1, -1.0);
      if (iy + 1 < n) t11.emplace_back(iy, iy + 1, -1.0);
      t12.emplace_back(iy, iy, -1.0);
      t21.emplace_back(iy, iy, -1.0);
    }
    const Index m2 = n * b;
    for (Index ix = 1; ix <= b; ++ix)
      for (Index iy = 0; iy < n; ++iy) {
        const Index k = (ix - 1) * n + iy;
        t22.emplace_back(k, k, 4.0);
        if (iy > 0) t22.emplace_back(k, k - 1, -1.0);
        if (iy + 1 < n) t22.emplace_back(k, k + 1, -1.0);
        if (ix > 1) t22.emplace_back(k, k - n, -1.0);
        if (ix < b) t22.emplace_back(k, k + n, -1.0);
      }
    a11_ = SparseMatrixCsr::from_triplets(n, n, std::move(t11));
    a12_ = SparseMatrixCsr::from_triplets(n, m2, std::move(t12));
    a21_ = SparseMatrixCsr::from_triplets(m2, n, std::move(t21));
    a22_ = SparseMatrixCsr::from_triplets(m2, m2, std::move(t22));
    chol_ = std::make_unique<BandCholesky>(a22_, n);

    Matrix coords(1, n);
    for (Index j = 0; j < n; ++j) coords(0, j) = static_cast<double>(j + 1) / static_cast<double>(n + 1);
    points_ = PointSet::from_coords(std::move(coords),
                                    std::make_pair(Vector::Zero(1), Vector::Ones(1)));
  }

  Index size() const override { return n_; }

  Matrix apply(const Matrix& x) const override {
    require_shape(x.rows() == n_, "SchurSlabOracle::apply: wrong row count");
    Matrix out(n_, x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      const Vector xj = x.col(j);
      const Vector w = chol_->solve(a21_.multiply(xj));
      out.col(j) = a11_.multiply(xj) - a12_.multiply(w);
    }
    return out;
  }

  Matrix apply_adjoint(const Matrix& x) const override {
    require_shape(x.rows() == n_, "SchurSlabOracle::apply_adjoint: wrong row count");
    Matrix out(n_, x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      const Vector xj = x.col(j);
      const Vector w = chol_->solve(a12_.multiply_transpose(xj));
      out.col(j) = a11_.multiply_transpose(xj) - a21_.multiply_transpose(w);
    }
    return out;
  }

  const PointSet* points() const override { return &points_; }

  const SparseMatrixCsr& a11() const { return a11_; }
  const SparseMatrixCsr& a12() const { return a12_; }
  const SparseMatrixCsr& a21() const { return a21_; }
  const SparseMatrixCsr& a22() const { return a22_; }

 private:
  Index n_;
  Index b_;
  SparseMatrixCsr a11_, a12_, a21_, a22_;
  std::unique_ptr<BandCholesky> chol_;
  PointSet points_;
};

inline std::unique_ptr<SchurSlabOracle> schur_slab_oracle(Index n, Index b) {
  return std::make_unique<SchurSlabOracle>(n, b);
}

struct SelftestReport {
  bool passed = false;
  double linearity_residual = 0.0;
  double adjoint_residual = 0.0;
  int probes = 0;
};

/// Probes linearity and adjoint consistency with seeded random blocks. Both
/// residuals are relative and must be <= 1e-12 to pass.
inline SelftestReport oracle_selftest(const LinearOracle& o, std::uint64_t seed, int probes = 10) {
  const Index n = o.size();
  SelftestReport rep;
  rep.probes = probes;
  const double alpha = 0.7;
  const Matrix x = draw_gaussian(n, 2, seed, 0x51);
  const Matrix y = draw_gaussian(n, 2, seed, 0x52);
  const Matrix ax = o.apply(x);
  const Matrix ay = o.apply(y);
  const Matrix combo = o.apply(alpha * x + y);
  rep.linearity_residual =
      (combo - alpha * ax - ay).norm() / (alpha * ax.norm() + ay.norm() + 1e-300);

  const Matrix u = draw_gaussian(n, probes, seed, 0x53);
  const Matrix v = draw_gaussian(n, probes, seed, 0x54);
  const Matrix au = o.apply(u);
  const Matrix atv = o.apply_adjoint(v);
  double worst = 0.0;
  for (int k = 0; k < probes; ++k) {
    const double lhs = au.col(k).dot(v.col(k));
    const double rhs = u.col(k).dot(atv.col(k));
    const double scale = au.col(k).norm() * v.col(k).norm() + u.col(k).norm() * atv.col(k).norm();
    worst = std::max(worst, std::abs(lhs - rhs) / (scale + 1e-300));
  }
  rep.adjoint_residual = worst;
  rep.passed = rep.linearity_residual <= 1e-12 && rep.adjoint_residual <= 1e-12;
  return rep;
}

/// DMAT file: "DMAT", u32 rows, u32 cols, u32 reserved (0), then rows*cols
/// little-endian f64 values in column-major order.
inline void write_dmat(const std::string& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_dmat: cannot open " + path);
  binary::put_magic(os, "DMAT");
  binary::put_u32(os, static_cast<std::uint32_t>(m.rows()));
  binary::put_u32(os, static_cast<std::uint32_t>(m.cols()));
  binary::put_u32(os, 0);
  binary::put_matrix_data(os, m);
  if (!os) throw Error("write_dmat: write failed for " + path);
}

inline Matrix read_dmat(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("read_dmat: cannot open " + path);
  binary::expect_magic(is, "DMAT");
  const Index rows = binary::get_u32(is);
  const Index cols = binary::get_u32(is);
  binary::get_u32(is);
  return binary::get_matrix_data(is, rows, cols);
}

}  // namespace rsrs
