#pragma once

// Strong recursive skeletonization with entry access. Far-field kernel
// interactions of a box are represented by a ring (sphere) of proxy points;
// Schur-complement modifications produced by earlier eliminations are stored
// explicitly as a sparse correction Delta to the kernel matrix. When no more
// than n_proxy far indices remain active, the explicit far block is used.

#include "rsrs/common.hpp"
#include "rsrs/dense.hpp"
#include "rsrs/factorization.hpp"
#include "rsrs/geometry.hpp"
#include "rsrs/oracle.hpp"
#include "rsrs/skeleton.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace rsrs {

struct ProxyOptions {
  double radius_factor = 1.5;  // times the box circumradius
  Index n_proxy = 64;
  int termination_level = 2;
};

/// n points on the circle (dim <= 2, 1D points embedded at y = 0) or an
/// evenly spread Fibonacci sphere (dim 3), stored one per column in dim
/// max(dim, 2).
inline Matrix proxy_points(const Vector& center, double radius, Index n) {
  const Index dim = center.size();
  const Index out_dim = std::max<Index>(dim, 2);
  Matrix pts = Matrix::Zero(out_dim, n);
  for (Index j = 0; j < n; ++j) {
    if (dim <= 2) {
      const double t = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      pts(0, j) = radius * std::cos(t);
      pts(1, j) = radius * std::sin(t);
    } else {
      const double z = 1.0 - (2.0 * static_cast<double>(j) + 1.0) / static_cast<double>(n);
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = static_cast<double>(j) * std::numbers::pi * (3.0 - std::sqrt(5.0));
      pts(0, j) = radius * rho * std::cos(phi);
      pts(1, j) = radius * rho * std::sin(phi);
      pts(2, j) = radius * z;
    }
    pts.col(j).head(dim) += center;
  }
  return pts;
}

namespace detail {

/// Sparse additive correction to the kernel matrix, indexed both ways.
class SparseCorrection {
 public:
  explicit SparseCorrection(Index n)
      : rows_(static_cast<std::size_t>(n)), cols_(static_cast<std::size_t>(n)) {}

  double at(Index i, Index j) const {
    const auto& r = rows_[static_cast<std::size_t>(i)];
    const auto it = r.find(j);
    return it == r.end() ? 0.0 : it->second;
  }
  void add(Index i, Index j, double v) {
    rows_[static_cast<std::size_t>(i)][j] += v;
    cols_[static_cast<std::size_t>(j)][i] += v;
  }
  void forget(Index i) {
    rows_[static_cast<std::size_t>(i)].clear();
    cols_[static_cast<std::size_t>(i)].clear();
  }
  const std::unordered_map<Index, double>& row(Index i) const {
    return rows_[static_cast<std::size_t>(i)];
  }
  const std::unordered_map<Index, double>& col(Index j) const {
    return cols_[static_cast<std::size_t>(j)];
  }

  Matrix block(const IndexVector& r, const IndexVector& c) const {
    Matrix out(static_cast<Index>(r.size()), static_cast<Index>(c.size()));
    for (Index a = 0; a < out.rows(); ++a)
      for (Index b = 0; b < out.cols(); ++b) out(a, b) = at(r[a], c[b]);
    return out;
  }

 private:
  std::vector<std::unordered_map<Index, double>> rows_;
  std::vector<std::unordered_map<Index, double>> cols_;
};

/// Active indices outside `local` that appear in the correction rows (or
/// columns, when `by_column`) of `act`, ascending.
inline IndexVector correction_partners(const SparseCorrection& d, const IndexVector& act,
                                       const std::vector<char>& is_active,
                                       const std::vector<char>& is_local, bool by_column) {
  IndexVector out;
  for (Index i : act)
    for (const auto& [j, v] : by_column ? d.col(i) : d.row(i))
      if (v != 0.0 && is_active[static_cast<std::size_t>(j)] &&
          !is_local[static_cast<std::size_t>(j)])
        out.push_back(j);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

/// Entry-access SRS with proxy compression of the far field.
inline SkelFactorization srs_factor_proxy(const LinearOracle& o, BoxTree& tree,
                                          const ToleranceSchedule& sched,
                                          const ProxyOptions& opt = {}) {
  const PointSet* pts = o.points();
  if (!o.has_entries() || pts == nullptr || !o.has_radial_kernel())
    throw UnsupportedOracleError(
        "srs_factor_proxy: the oracle must provide entries, points and a radial kernel");
  if (opt.n_proxy < 1 || !(opt.radius_factor > 0))
    throw Error("srs_factor_proxy: n_proxy must be positive and radius_factor > 0");
  const auto t0 = std::chrono::steady_clock::now();
  const Index n = o.size();
  require_shape(tree.num_points() == n && pts->size() == n,
                "srs_factor_proxy: tree, points and operator sizes differ");

  SkelFactorization f;
  f.n = n;
  detail::SparseCorrection delta(n);
  std::vector<char> is_active(static_cast<std::size_t>(n), 1);
  std::vector<char> is_local(static_cast<std::size_t>(n), 0);

  auto current = [&](const IndexVector& r, const IndexVector& c) {
    return Matrix(o.entries(r, c) + delta.block(r, c));
  };

  auto box_fn = [&](Index b, double atol, Index kmax) {
    TreeBox& bx = tree.box(b);
    EliminationStep step;
    step.box = b;
    step.level = bx.level;
    const IndexVector act = bx.active_indices;
    bx.processed = true;
    if (act.empty()) return step;
    const IndexVector near = near_active(tree, b);
    for (Index i : act) is_local[static_cast<std::size_t>(i)] = 1;
    for (Index i : near) is_local[static_cast<std::size_t>(i)] = 1;

    IndexVector far;
    for (Index fb : tree.far_field(b)) {
      const IndexVector& a = tree.box(fb).active_indices;
      far.insert(far.end(), a.begin(), a.end());
    }

    const Index na = static_cast<Index>(act.size());
    Matrix row_side, col_side;
    if (static_cast<Index>(far.size()) <= opt.n_proxy) {
      // Few far indices left: the explicit block is smaller than a ring.
      row_side = current(act, far);
      col_side = current(far, act).transpose();
    } else {
      const double radius = opt.radius_factor * bx.halfwidth.norm();
      const Matrix ring = proxy_points(bx.center, radius, opt.n_proxy);
      const double scale =
          std::sqrt(static_cast<double>(far.size()) / static_cast<double>(opt.n_proxy));
      Matrix kp(na, opt.n_proxy);
      for (Index a = 0; a < na; ++a) {
        Vector x = Vector::Zero(ring.rows());
        x.head(pts->dim) = pts->coords.col(act[a]);
        for (Index j = 0; j < opt.n_proxy; ++j)
          kp(a, j) = scale * o.radial_kernel((ring.col(j) - x).norm());
      }
      const IndexVector far_rows =
          detail::correction_partners(delta, act, is_active, is_local, false);
      const IndexVector far_cols =
          detail::correction_partners(delta, act, is_active, is_local, true);
      row_side.resize(na, kp.cols() + static_cast<Index>(far_rows.size()));
      row_side << kp, delta.block(act, far_rows);
      col_side.resize(na, kp.cols() + static_cast<Index>(far_cols.size()));
      col_side << kp, delta.block(far_cols, act).transpose();
    }

    for (Index i : act) is_local[static_cast<std::size_t>(i)] = 0;
    for (Index i : near) is_local[static_cast<std::size_t>(i)] = 0;

    if (!detail::choose_skeleton(step, act, row_side, col_side, atol, kmax)) return step;

    const IndexVector others = concat(step.I_s, near);
    const IndexVector cprime = concat(step.I_r, others);
    const Index r = static_cast<Index>(step.I_r.size());
    const Index s = static_cast<Index>(step.I_s.size());
    const Index no = static_cast<Index>(others.size());
    Matrix bl = current(cprime, cprime);
    // Rows r -= T_rs rows s, then columns r -= columns s T_sr.
    bl.topRows(r) -= step.T_rs * bl.middleRows(r, s);
    bl.leftCols(r) -= bl.middleCols(r, s) * step.T_sr;
    const Matrix x_ro = bl.topRightCorner(r, no);
    const Matrix x_or = bl.bottomLeftCorner(no, r);
    detail::complete_elimination(step, bl.topLeftCorner(r, r), x_ro, x_or, others);

    // Schur complement on the kept part of the [I_s, near] block.
    const IndexVector keep_cols = [&] {
      IndexVector pos;
      std::size_t k = 0;
      for (Index j = 0; j < no && k < step.right_cols.size(); ++j)
        if (others[j] == step.right_cols[k]) {
          pos.push_back(j);
          ++k;
        }
      return pos;
    }();
    const Matrix upd = step.G_left * x_ro(Eigen::all, keep_cols);
    for (Index a = 0; a < upd.rows(); ++a)
      for (Index c = 0; c < upd.cols(); ++c)
        if (upd(a, c) != 0.0) delta.add(step.left_rows[a], step.right_cols[c], -upd(a, c));

    for (Index i : step.I_r) {
      is_active[static_cast<std::size_t>(i)] = 0;
      delta.forget(i);
    }
    bx.active_indices = step.I_s;
    return step;
  };
  detail::sweep_levels(tree, sched, opt.termination_level, f, box_fn,
                       [](LevelSummary&, std::size_t) {});

  if (!f.S.empty()) detail::factor_final_block(f, current(f.S, f.S));
  f.t_factor = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return f;
}

}  // namespace rsrs
