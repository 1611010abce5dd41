#pragma once

// Random sketches Y = A Omega, Z = A^T Psi and the operations that keep them
// consistent with the partially eliminated operator A_g = V^-1 A_{g-1} W^-1:
//   Omega <- W Omega,  Y <- V^-1 Y,  Psi <- V^T Psi,  Z <- W^-T Z.

#include "rsrs/common.hpp"
#include "rsrs/dense.hpp"
#include "rsrs/factorization.hpp"
#include "rsrs/geometry.hpp"
#include "rsrs/oracle.hpp"
#include "rsrs/random.hpp"
#include "rsrs/skeleton.hpp"

#include <sstream>

namespace rsrs {

enum class Side { Forward, Adjoint };

inline constexpr std::uint64_t kOmegaStream = 1;
inline constexpr std::uint64_t kPsiStream = 2;

struct SketchSet {
  Index p = 0;
  Matrix omega;
  Matrix psi;
  Matrix y;
  Matrix z;
  std::uint64_t seed = 0;
  std::uint64_t generation = 0;

  Index n() const { return omega.rows(); }
  const Matrix& test(Side side) const { return side == Side::Forward ? omega : psi; }
  const Matrix& sample(Side side) const { return side == Side::Forward ? y : z; }
};

inline SketchSet build_sketches(const LinearOracle& o, Index p, std::uint64_t seed) {
  const Index n = o.size();
  if (p < 1 || p > n) {
    std::ostringstream os;
    os << "build_sketches: sample count p=" << p << " must satisfy 1 <= p <= N=" << n;
    throw Error(os.str());
  }
  SketchSet s;
  s.p = p;
  s.seed = seed;
  s.omega = draw_gaussian(n, p, seed, kOmegaStream);
  s.psi = draw_gaussian(n, p, seed, kPsiStream);
  s.y = o.apply(s.omega);
  s.z = o.apply_adjoint(s.psi);
  require_shape(s.y.rows() == n && s.y.cols() == p && s.z.rows() == n && s.z.cols() == p,
                "build_sketches: oracle returned a block of the wrong shape");
  return s;
}

struct NullifiedSample {
  Index box = 0;
  Side side = Side::Forward;
  IndexVector rows;  // active indices of the box, in order
  Matrix sample;     // |rows| x width
  Matrix null_basis; // p x width, the columns actually used
  Index width = 0;
};

/// Sample of the current operator's coupling from box b to everything outside
/// b and its neighbors: Y(active(b), :) * null(Omega(active(b and neighbors), :)),
/// keeping the leading width_cap columns.
inline NullifiedSample nullified_sample(const SketchSet& s, const BoxTree& tree, Index b, Side side,
                                        Index width_cap) {
  NullifiedSample ns;
  ns.box = b;
  ns.side = side;
  ns.rows = tree.box(b).active_indices;
  const IndexVector c = concat(ns.rows, near_active(tree, b));
  const Index deficit = static_cast<Index>(c.size()) + 1 - s.p;
  if (deficit > 0) {
    std::ostringstream os;
    os << "nullified_sample: box " << b << " (level " << tree.box(b).level << ") has "
       << c.size() << " active rows in its neighborhood but only p=" << s.p
       << " samples; short by " << deficit;
    throw InsufficientSamplesError(os.str(), deficit);
  }
  const Matrix basis = nullspace_basis(gather_rows(s.test(side), c));
  ns.width = std::min<Index>(basis.cols(), std::max<Index>(width_cap, 0));
  ns.null_basis = basis.leftCols(ns.width);
  ns.sample = gather_rows(s.sample(side), ns.rows) * ns.null_basis;
  return ns;
}

struct ExtractDiagnostics {
  /// ||Omega_C Omega_C^+ - I||_F for the pseudo-inverse used.
  double pinv_residual = 0.0;
  bool ill_conditioned = false;
};

/// Forward: A_g(target_rows, source_cols) = Y(target_rows,:) Omega(source_cols,:)^+.
/// Adjoint: A_g(source_cols, target_rows), recovered from Z and Psi. Valid when
/// the relevant rows (columns) of A_g vanish outside source_cols.
inline Matrix extract_block(const SketchSet& s, const IndexVector& target_rows,
                            const IndexVector& source_cols, Side side, Index oversampling = 10,
                            ExtractDiagnostics* diag = nullptr) {
  const Index deficit = static_cast<Index>(source_cols.size()) + oversampling - s.p;
  if (deficit > 0) {
    std::ostringstream os;
    os << "extract_block: " << source_cols.size() << " source indices plus oversampling "
       << oversampling << " exceed p=" << s.p << "; short by " << deficit;
    throw InsufficientSamplesError(os.str(), deficit);
  }
  const Matrix test = gather_rows(s.test(side), source_cols);
  const Matrix pinv = right_pseudoinverse(test);
  if (diag) {
    diag->pinv_residual =
        (test * pinv - Matrix::Identity(test.rows(), test.rows())).norm();
    diag->ill_conditioned = diag->pinv_residual > 1e-8;
  }
  const Matrix block = gather_rows(s.sample(side), target_rows) * pinv;
  return side == Side::Forward ? block : Matrix(block.transpose());
}

/// Applies one elimination A_{g+1} = V^-1 A_g W^-1 with V = elim(v) and W = elim(w).
inline void update_sketches(SketchSet& s, const ElimOp& v, const ElimOp& w) {
  v.apply(s.y, true, false);
  v.apply(s.psi, false, true);
  w.apply(s.omega, false, false);
  w.apply(s.z, true, true);
  ++s.generation;
}

/// Applies a whole step, V = E L and W = U F.
inline void update_sketches_elim(SketchSet& s, const EliminationStep& step) {
  step.apply_v(s.y, true, false);
  step.apply_v(s.psi, false, true);
  step.apply_w(s.omega, false, false);
  step.apply_w(s.z, true, true);
  ++s.generation;
}

/// For each step of a processed level, samples the coupling of its residual
/// indices I_r to every other index, nullifying only the I_r rows of the test
/// matrix, and returns ||sample||_F / sqrt(width) for both sides.
inline std::vector<CouplingEstimate> coupling_residual_estimate(
    const SketchSet& s, std::span<const EliminationStep> steps) {
  std::vector<CouplingEstimate> out;
  for (const EliminationStep& st : steps) {
    CouplingEstimate ce;
    ce.box = st.box;
    const Index deficit = static_cast<Index>(st.I_r.size()) + 1 - s.p;
    if (deficit > 0) {
      std::ostringstream os;
      os << "coupling_residual_estimate: box " << st.box << " has " << st.I_r.size()
         << " residual indices but only p=" << s.p << " samples";
      throw InsufficientSamplesError(os.str(), deficit);
    }
    for (Side side : {Side::Forward, Side::Adjoint}) {
      const Matrix basis = nullspace_basis(gather_rows(s.test(side), st.I_r));
      const Matrix sample = gather_rows(s.sample(side), st.I_r) * basis;
      const double est =
          basis.cols() > 0 ? sample.norm() / std::sqrt(static_cast<double>(basis.cols())) : 0.0;
      (side == Side::Forward ? ce.forward : ce.adjoint) = est;
    }
    out.push_back(ce);
  }
  return out;
}

}  // namespace rsrs
