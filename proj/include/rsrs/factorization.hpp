#pragma once

// Elimination steps and the multilevel factorization
//   K = V_1 ... V_q * D * W_q ... W_1,   V_i = E_i L_i,   W_i = U_i F_i,
// where D is block diagonal with blocks X_rr (one per step) and the final
// skeleton block A_S.
//
//   E = elim(T_rs, I_r, I_s)           F = elim(T_sr, I_s, I_r)
//   L = elim(G_left, left_rows, I_r)   U = elim(G_right, I_r, right_cols)

#include "rsrs/common.hpp"
#include "rsrs/dense.hpp"

#include <cmath>
#include <map>

namespace rsrs {

struct EliminationStep {
  Index box = 0;
  int level = 0;
  IndexVector I_r;
  IndexVector I_s;
  Matrix T_rs;  // |I_r| x |I_s|
  Matrix T_sr;  // |I_s| x |I_r|
  IndexVector left_rows;
  Matrix G_left;  // |left_rows| x |I_r|
  IndexVector right_cols;
  Matrix G_right;  // |I_r| x |right_cols|
  LuFactors Xrr;

  // Diagnostics; not persisted.
  bool tolerance_reached = true;
  double xrr_discrepancy = 0.0;

  std::size_t stored_scalars() const {
    return static_cast<std::size_t>(T_rs.size() + T_sr.size() + G_left.size() + G_right.size() +
                                    Xrr.lu.size());
  }

  /// V = E L applied (or inverted / transposed) in place.
  void apply_v(Matrix& x, bool inverse, bool adjoint) const {
    // V x = E(L x); V^-1 x = L^-1(E^-1 x); V^T x = L^T(E^T x); V^-T x = E^-T(L^-T x).
    const bool e_first = inverse != adjoint;
    if (e_first) {
      elim_inplace(T_rs, I_r, I_s, x, inverse, adjoint);
      elim_inplace(G_left, left_rows, I_r, x, inverse, adjoint);
    } else {
      elim_inplace(G_left, left_rows, I_r, x, inverse, adjoint);
      elim_inplace(T_rs, I_r, I_s, x, inverse, adjoint);
    }
  }

  /// W = U F applied (or inverted / transposed) in place.
  void apply_w(Matrix& x, bool inverse, bool adjoint) const {
    // W x = U(F x); W^-1 x = F^-1(U^-1 x); W^T x = F^T(U^T x); W^-T x = U^-T(F^-T x).
    const bool f_first = inverse == adjoint;
    if (f_first) {
      elim_inplace(T_sr, I_s, I_r, x, inverse, adjoint);
      elim_inplace(G_right, I_r, right_cols, x, inverse, adjoint);
    } else {
      elim_inplace(G_right, I_r, right_cols, x, inverse, adjoint);
      elim_inplace(T_sr, I_s, I_r, x, inverse, adjoint);
    }
  }
};

/// atol(level) = atol_leaf * growth^(depth - level).
struct ToleranceSchedule {
  double atol_leaf = 1e-8;
  double growth = 2.0;
  Index kmax = 0;  // 0 means "use the leaf capacity"

  double atol(int level, int depth) const {
    return atol_leaf * std::pow(growth, static_cast<double>(depth - level));
  }
};

struct CouplingEstimate {
  Index box = 0;
  double forward = 0.0;
  double adjoint = 0.0;
};

struct LevelSummary {
  int level = 0;
  double atol = 0.0;
  Index boxes = 0;
  Index min_rank = 0;
  Index max_rank = 0;
  double mean_rank = 0.0;
  Index untruncated = 0;  // boxes whose ID stopped at kmax before reaching atol
  double max_coupling = 0.0;
  double seconds = 0.0;
};

struct SkelFactorization {
  Index n = 0;
  std::vector<EliminationStep> steps;
  IndexVector S;
  LuFactors S_lu;

  // Diagnostics; not persisted.
  Index p = 0;
  std::vector<LevelSummary> levels;
  /// Skeleton size per processed box, keyed by box id (boxes with nothing to
  /// eliminate included).
  std::map<Index, Index> box_ranks;
  double t_factor = 0.0;
};

inline std::size_t factor_memory(const SkelFactorization& f) {
  std::size_t total = static_cast<std::size_t>(f.S_lu.lu.size());
  for (const auto& s : f.steps) total += s.stored_scalars();
  return total;
}

namespace detail {

inline void apply_diagonal(const SkelFactorization& f, Matrix& x, bool inverse, bool adjoint) {
  auto one = [&](const IndexVector& idx, const LuFactors& lu) {
    if (idx.empty()) return;
    const Matrix xi = x(idx, Eigen::all);
    x(idx, Eigen::all) = inverse ? lu_solve(lu, xi, adjoint) : lu_apply(lu, xi, adjoint);
  };
  for (const auto& s : f.steps) one(s.I_r, s.Xrr);
  one(f.S, f.S_lu);
}

}  // namespace detail

/// K X (or K^T X).
inline Matrix factor_apply(const SkelFactorization& f, const Matrix& x, bool adjoint = false) {
  require_shape(x.rows() == f.n, "factor_apply: wrong row count");
  Matrix y = x;
  const auto q = f.steps.size();
  if (!adjoint) {
    for (std::size_t i = 0; i < q; ++i) f.steps[i].apply_w(y, false, false);
    detail::apply_diagonal(f, y, false, false);
    for (std::size_t i = q; i-- > 0;) f.steps[i].apply_v(y, false, false);
  } else {
    for (std::size_t i = 0; i < q; ++i) f.steps[i].apply_v(y, false, true);
    detail::apply_diagonal(f, y, false, true);
    for (std::size_t i = q; i-- > 0;) f.steps[i].apply_w(y, false, true);
  }
  return y;
}

/// K^-1 B (or K^-T B).
inline Matrix factor_solve(const SkelFactorization& f, const Matrix& b, bool adjoint = false) {
  require_shape(b.rows() == f.n, "factor_solve: wrong row count");
  Matrix y = b;
  const auto q = f.steps.size();
  if (!adjoint) {
    for (std::size_t i = 0; i < q; ++i) f.steps[i].apply_v(y, true, false);
    detail::apply_diagonal(f, y, true, false);
    for (std::size_t i = q; i-- > 0;) f.steps[i].apply_w(y, true, false);
  } else {
    for (std::size_t i = 0; i < q; ++i) f.steps[i].apply_w(y, true, true);
    detail::apply_diagonal(f, y, true, true);
    for (std::size_t i = q; i-- > 0;) f.steps[i].apply_v(y, true, true);
  }
  return y;
}

struct FactorReport {
  Index n = 0;
  Index p = 0;
  std::size_t memory = 0;
  std::size_t steps = 0;
  Index final_skeleton = 0;
  double t_factor = 0.0;
  std::vector<LevelSummary> levels;
};

inline FactorReport factor_report(const SkelFactorization& f) {
  return FactorReport{f.n,  f.p, factor_memory(f), f.steps.size(), static_cast<Index>(f.S.size()),
                      f.t_factor, f.levels};
}

}  // namespace rsrs
