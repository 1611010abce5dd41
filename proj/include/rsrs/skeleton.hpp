#pragma once

// Pieces shared by the black-box and the proxy-based skeletonization drivers:
// skeleton selection, completion of an elimination step from the extracted
// near-field blocks, and the upward level sweep.

#include "rsrs/common.hpp"
#include "rsrs/dense.hpp"
#include "rsrs/factorization.hpp"
#include "rsrs/geometry.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>
#include <sstream>

namespace rsrs {

/// Couplings whose rows (columns) of the extracted near-field block are below
/// this fraction of max|X_rr| are not stored.
inline constexpr double kDropTolerance = 1e-13;

/// Active indices of b's neighbors other than b (ascending box id).
inline IndexVector near_active(const BoxTree& tree, Index b) {
  IndexVector out;
  for (Index nb : tree.neighbors(b)) {
    if (nb == b) continue;
    const IndexVector& a = tree.box(nb).active_indices;
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

namespace detail {

/// Reorders a row ID so that skeleton and residual positions ascend.
inline void sort_id(IndexVector& skel, IndexVector& resid, Matrix& t) {
  auto order = [](const IndexVector& v) {
    IndexVector o(v.size());
    std::iota(o.begin(), o.end(), Index{0});
    std::sort(o.begin(), o.end(), [&](Index a, Index b) { return v[a] < v[b]; });
    return o;
  };
  const IndexVector os = order(skel), orr = order(resid);
  t = gather(t, orr, os);
  skel = select(skel, os);
  resid = select(resid, orr);
}

/// Keeps the positions whose row of `m` has an entry above `tol`.
inline IndexVector significant_rows(const Matrix& m, double tol) {
  IndexVector keep;
  for (Index i = 0; i < m.rows(); ++i)
    if (m.cols() > 0 && m.row(i).cwiseAbs().maxCoeff() > tol) keep.push_back(i);
  return keep;
}

/// Splits `act` into skeleton and residual indices with one row ID of
/// [row_side, col_side], where row_side stands in for A(act, far) and
/// col_side for A(far, act)^T. The shared T gives T_rs = T and T_sr = T^T.
/// Returns false when nothing is left to eliminate.
inline bool choose_skeleton(EliminationStep& step, const IndexVector& act, const Matrix& row_side,
                            const Matrix& col_side, double atol, Index kmax) {
  Matrix stacked(static_cast<Index>(act.size()), row_side.cols() + col_side.cols());
  stacked << row_side, col_side;
  const IdResult id = row_id(stacked, atol, kmax);
  step.tolerance_reached = id.tolerance_reached;
  IndexVector skel = id.skel, resid = id.resid;
  Matrix t = id.T;
  sort_id(skel, resid, t);
  step.I_s = select(act, skel);
  step.I_r = select(act, resid);
  if (step.I_r.empty()) return false;
  step.T_rs = t;
  step.T_sr = t.transpose();
  return true;
}

/// Given the blocks of the current operator after the E/F update, with
/// others = [I_s, near], factors X_rr and forms G_left = X_{o,r} X_rr^-1 and
/// G_right = X_rr^-1 X_{r,o}. Negligible rows/columns are not stored.
inline void complete_elimination(EliminationStep& step, const Matrix& x_rr, const Matrix& x_ro,
                                 const Matrix& x_or, const IndexVector& others) {
  try {
    step.Xrr = lu_factor(x_rr);
  } catch (const SingularError& e) {
    std::ostringstream os;
    os << "box " << step.box << " (level " << step.level
       << "): X_rr is numerically singular: " << e.what();
    throw SingularError(os.str(), e.pivot());
  }
  const double drop = kDropTolerance * x_rr.cwiseAbs().maxCoeff();
  const IndexVector keep_left = significant_rows(x_or, drop);
  const IndexVector keep_right = significant_rows(x_ro.transpose(), drop);
  step.left_rows = select(others, keep_left);
  step.right_cols = select(others, keep_right);
  // G_left = X_or X_rr^-1 = (X_rr^-T X_or^T)^T.
  step.G_left = lu_solve(step.Xrr, gather_rows(x_or, keep_left).transpose(), true).transpose();
  step.G_right = lu_solve(step.Xrr, x_ro(Eigen::all, keep_right));
}

/// Upward sweep from the leaves to `termination_level`. box_fn(b, atol, kmax)
/// processes one box and returns its step; level_fn(summary, first_step)
/// can add per-level diagnostics. Fills f.steps, f.levels, f.box_ranks and
/// f.S (the actives of the coarsest processed level, or of the leaves).
template <class BoxFn, class LevelFn>
void sweep_levels(BoxTree& tree, const ToleranceSchedule& sched, int termination_level,
                  SkelFactorization& f, BoxFn&& box_fn, LevelFn&& level_fn) {
  const Index kmax = sched.kmax > 0 ? sched.kmax : tree.leaf_capacity();
  tree.reset_active();
  const int depth = tree.depth();
  const int stop = std::max(termination_level, 0);
  int top = depth;
  for (int level = depth; level >= stop; --level) {
    const auto tl = std::chrono::steady_clock::now();
    if (level < depth)
      for (Index b : tree.level_order(level)) tree.merged_active_indices(b);
    LevelSummary sum;
    sum.level = level;
    sum.atol = sched.atol(level, depth);
    sum.min_rank = std::numeric_limits<Index>::max();
    const std::size_t first = f.steps.size();
    Index rank_total = 0;
    for (Index b : tree.level_order(level)) {
      EliminationStep st = box_fn(b, sum.atol, kmax);
      const Index rank = static_cast<Index>(tree.box(b).active_indices.size());
      f.box_ranks[b] = rank;
      ++sum.boxes;
      rank_total += rank;
      sum.min_rank = std::min(sum.min_rank, rank);
      sum.max_rank = std::max(sum.max_rank, rank);
      if (!st.tolerance_reached) ++sum.untruncated;
      if (!st.I_r.empty()) f.steps.push_back(std::move(st));
    }
    if (sum.boxes == 0) sum.min_rank = 0;
    sum.mean_rank =
        sum.boxes ? static_cast<double>(rank_total) / static_cast<double>(sum.boxes) : 0.0;
    level_fn(sum, first);
    sum.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - tl).count();
    f.levels.push_back(sum);
    top = level;
  }
  f.S.clear();
  for (Index b : tree.level_order(top)) {
    const IndexVector& a = tree.box(b).active_indices;
    f.S.insert(f.S.end(), a.begin(), a.end());
  }
}

inline void factor_final_block(SkelFactorization& f, const Matrix& a_s) {
  if (f.S.empty()) return;
  try {
    f.S_lu = lu_factor(a_s);
  } catch (const SingularError& e) {
    throw SingularError(std::string("final skeleton block: ") + e.what(), e.pivot());
  }
}

}  // namespace detail
}  // namespace rsrs
