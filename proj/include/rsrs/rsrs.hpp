#pragma once

// Black-box strong recursive skeletonization driven purely by sketches.

#include "rsrs/common.hpp"
#include "rsrs/dense.hpp"
#include "rsrs/factorization.hpp"
#include "rsrs/geometry.hpp"
#include "rsrs/oracle.hpp"
#include "rsrs/skeleton.hpp"
#include "rsrs/sketch.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <sstream>

namespace rsrs {

class FinalSkeletonTooLargeError : public InsufficientSamplesError {
 public:
  using InsufficientSamplesError::InsufficientSamplesError;
};

struct StepOptions {
  Index oversampling = 10;
};

/// One black-box strong skeletonization step for box b. Updates the sketches
/// and the box's active set in place. The returned step has empty I_r when the
/// box has nothing to eliminate.
inline EliminationStep skeletonize_box_blackbox(SketchSet& s, BoxTree& tree, Index b, double atol,
                                                Index kmax, const StepOptions& opt = {}) {
  TreeBox& bx = tree.box(b);
  EliminationStep step;
  step.box = b;
  step.level = bx.level;
  const IndexVector act = bx.active_indices;
  if (act.empty()) {
    bx.processed = true;
    return step;
  }
  const IndexVector near = near_active(tree, b);

  const NullifiedSample fwd = nullified_sample(s, tree, b, Side::Forward, kmax);
  const NullifiedSample adj = nullified_sample(s, tree, b, Side::Adjoint, kmax);
  if (!detail::choose_skeleton(step, act, fwd.sample, adj.sample, atol, kmax)) {
    bx.processed = true;
    return step;
  }

  // E and F: afterwards the I_r rows/columns couple only to the near field.
  update_sketches(s, ElimOp{step.T_rs, step.I_r, step.I_s}, ElimOp{step.T_sr, step.I_s, step.I_r});

  const IndexVector others = concat(step.I_s, near);
  const IndexVector cprime = concat(step.I_r, others);
  const Matrix xf = extract_block(s, step.I_r, cprime, Side::Forward, opt.oversampling);
  const Matrix xa = extract_block(s, step.I_r, cprime, Side::Adjoint, opt.oversampling);
  const Index r = static_cast<Index>(step.I_r.size());
  const Index o = static_cast<Index>(others.size());
  const Matrix x_rr = xf.leftCols(r);
  const double xrr_norm = x_rr.norm();
  step.xrr_discrepancy = xrr_norm > 0 ? (x_rr - xa.topRows(r)).norm() / xrr_norm : 0.0;
  detail::complete_elimination(step, x_rr, xf.rightCols(o), xa.bottomRows(o), others);

  // L and U: decouple I_r from the skeleton and the near field.
  update_sketches(s, ElimOp{step.G_left, step.left_rows, step.I_r},
                  ElimOp{step.G_right, step.I_r, step.right_cols});

  bx.active_indices = step.I_s;
  bx.processed = true;
  return step;
}

struct RsrsOptions {
  int termination_level = 2;
  Index oversampling = 10;
  bool estimate_coupling = true;
  /// Called after each box step that eliminated something, with the sketches
  /// already updated.
  std::function<void(const EliminationStep&, const SketchSet&)> on_step;
};

/// p = max over finest-level boxes of |active(b and neighbors)| + kmax + oversampling.
inline Index auto_sample_count(const BoxTree& tree, Index kmax, Index oversampling) {
  Index worst = 0;
  for (Index b : tree.level_order(tree.depth())) {
    Index c = 0;
    for (Index nb : tree.neighbors(b)) c += static_cast<Index>(tree.box(nb).point_indices.size());
    worst = std::max(worst, c);
  }
  return worst + kmax + oversampling;
}

/// Runs the multilevel factorization on generation-0 sketches. The sketches
/// end up describing the fully eliminated operator.
inline SkelFactorization rsrs_factor_sketches(SketchSet& s, BoxTree& tree,
                                              const ToleranceSchedule& sched,
                                              const RsrsOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  SkelFactorization f;
  f.n = s.n();
  f.p = s.p;
  require_shape(tree.num_points() == f.n, "rsrs_factor: tree and operator sizes differ");

  auto box_fn = [&](Index b, double atol, Index kmax) {
    try {
      EliminationStep st =
          skeletonize_box_blackbox(s, tree, b, atol, kmax, StepOptions{opt.oversampling});
      if (opt.on_step && !st.I_r.empty()) opt.on_step(st, s);
      return st;
    } catch (const InsufficientSamplesError& e) {
      std::ostringstream os;
      os << "level " << tree.box(b).level << ", box " << b << ": " << e.what();
      throw InsufficientSamplesError(os.str(), e.deficit());
    }
  };
  auto level_fn = [&](LevelSummary& sum, std::size_t first) {
    if (!opt.estimate_coupling) return;
    const auto est =
        coupling_residual_estimate(s, std::span<const EliminationStep>(f.steps).subspan(first));
    for (const auto& e : est) sum.max_coupling = std::max({sum.max_coupling, e.forward, e.adjoint});
  };
  detail::sweep_levels(tree, sched, opt.termination_level, f, box_fn, level_fn);

  const Index deficit = static_cast<Index>(f.S.size()) + opt.oversampling - s.p;
  if (deficit > 0) {
    std::ostringstream os;
    os << "final skeleton has " << f.S.size() << " indices, which needs p >= "
       << f.S.size() + opt.oversampling << " (have " << s.p
       << "); use a deeper tree or more samples";
    throw FinalSkeletonTooLargeError(os.str(), deficit);
  }
  if (!f.S.empty())
    detail::factor_final_block(f, extract_block(s, f.S, f.S, Side::Forward, opt.oversampling));
  f.t_factor = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return f;
}

/// Draws sketches of o (not timed) and factorizes.
inline SkelFactorization rsrs_factor(const LinearOracle& o, BoxTree& tree, Index p,
                                     const ToleranceSchedule& sched, std::uint64_t seed,
                                     const RsrsOptions& opt = {}) {
  SketchSet s = build_sketches(o, p, seed);
  return rsrs_factor_sketches(s, tree, sched, opt);
}

}  // namespace rsrs
