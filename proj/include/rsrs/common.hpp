#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsrs {

/// Dense storage is Eigen's default column-major layout throughout.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Ordered list of zero-based indices. Whether the entries refer to global
/// unknowns or to positions inside a block depends on context.
using IndexVector = std::vector<Index>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Thrown by lu_factor when a pivot vanishes.
class SingularError : public Error {
 public:
  SingularError(const std::string& what, Index pivot) : Error(what), pivot_(pivot) {}
  Index pivot() const { return pivot_; }

 private:
  Index pivot_;
};

/// Not enough random samples to nullify or extract a block.
class InsufficientSamplesError : public Error {
 public:
  InsufficientSamplesError(const std::string& what, Index deficit)
      : Error(what), deficit_(deficit) {}
  Index deficit() const { return deficit_; }

 private:
  Index deficit_;
};

class UnsupportedOracleError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

/// Gathers rows `rows` of `m` into a new matrix.
inline Matrix gather_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (Index i = 0; i < out.rows(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

inline Matrix gather(const Matrix& m, std::span<const Index> rows, std::span<const Index> cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (Index j = 0; j < out.cols(); ++j)
    for (Index i = 0; i < out.rows(); ++i) out(i, j) = m(rows[i], cols[j]);
  return out;
}

inline IndexVector concat(std::span<const Index> a, std::span<const Index> b) {
  IndexVector out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline IndexVector select(std::span<const Index> from, std::span<const Index> positions) {
  IndexVector out;
  out.reserve(positions.size());
  for (Index p : positions) out.push_back(from[p]);
  return out;
}

}  // namespace rsrs
