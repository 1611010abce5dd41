#pragma once

// Point sets and the uniform 2^d-ary box tree used to order the factorization.

#include "rsrs/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <sstream>

namespace rsrs {

/// N points in dim dimensions, one point per column of `coords`, with an
/// axis-aligned bounding box that the tree subdivides.
struct PointSet {
  int dim = 1;
  Matrix coords;
  Vector lo;
  Vector hi;

  Index size() const { return coords.cols(); }

  /// Builds a point set. Without an explicit box, the tight bounding box is
  /// used, padded so that every axis has positive extent.
  static PointSet from_coords(Matrix coords, std::optional<std::pair<Vector, Vector>> box = {}) {
    PointSet ps;
    ps.dim = static_cast<int>(coords.rows());
    if (ps.dim < 1 || ps.dim > 3) throw Error("PointSet: dimension must be 1, 2 or 3");
    if (!coords.allFinite()) throw Error("PointSet: coordinates must be finite");
    if (box) {
      ps.lo = box->first;
      ps.hi = box->second;
      require_shape(ps.lo.size() == ps.dim && ps.hi.size() == ps.dim,
                    "PointSet: bounding box dimension mismatch");
      for (Index j = 0; j < coords.cols(); ++j)
        for (int a = 0; a < ps.dim; ++a)
          if (coords(a, j) < ps.lo(a) || coords(a, j) > ps.hi(a))
            throw Error("PointSet: point outside the given bounding box");
    } else if (coords.cols() > 0) {
      ps.lo = coords.rowwise().minCoeff();
      ps.hi = coords.rowwise().maxCoeff();
      for (int a = 0; a < ps.dim; ++a) {
        const double pad = 1e-9 * std::max(1.0, ps.hi(a) - ps.lo(a));
        ps.lo(a) -= pad;
        ps.hi(a) += pad;
      }
    } else {
      ps.lo = Vector::Zero(ps.dim);
      ps.hi = Vector::Ones(ps.dim);
    }
    ps.coords = std::move(coords);
    return ps;
  }
};

struct TreeBox {
  Index id = 0;
  int level = 0;
  Index parent = 0;  // 0 for the root
  std::vector<Index> children;
  std::array<Index, 3> cell{0, 0, 0};
  Vector center;
  Vector halfwidth;
  IndexVector point_indices;
  /// Indices still coupled to the rest of the problem. Starts equal to
  /// point_indices; the factorization shrinks it to the box's skeleton.
  IndexVector active_indices;
  bool processed = false;

  bool empty() const { return point_indices.empty(); }
};

/// Uniform tree: every leaf sits at depth `depth`. Box ids are level-ordered
/// with the root at 1 and the 2^dim children of a box numbered contiguously, so
/// in one dimension the children of b are 2b and 2b+1.
class BoxTree {
 public:
  int dim() const { return dim_; }
  Index leaf_capacity() const { return leaf_capacity_; }
  int depth() const { return depth_; }
  Index num_points() const { return num_points_; }

  Index level_begin(int level) const {
    Index first = 1;
    for (int l = 0; l < level; ++l) first += boxes_per_level(l);
    return first;
  }
  Index boxes_per_level(int level) const { return Index{1} << (dim_ * level); }
  Index num_boxes() const { return static_cast<Index>(boxes_.size()); }

  const TreeBox& box(Index id) const { return boxes_.at(static_cast<std::size_t>(id - 1)); }
  TreeBox& box(Index id) { return boxes_.at(static_cast<std::size_t>(id - 1)); }

  /// Id of the box at `level` occupying integer cell `cell`.
  Index box_at(int level, const std::array<Index, 3>& cell) const {
    Index local = 0;
    for (int bit = level - 1; bit >= 0; --bit)
      for (int a = dim_ - 1; a >= 0; --a) local = (local << 1) | ((cell[a] >> bit) & 1);
    return level_begin(level) + local;
  }

  /// Same-level nonempty boxes whose closed boxes touch b, plus b itself,
  /// ascending. On a uniform grid this is "cell offsets all within one".
  IndexVector neighbors(Index b) const {
    const TreeBox& bx = box(b);
    const Index side = Index{1} << bx.level;
    IndexVector out;
    std::array<Index, 3> off{-1, -1, -1};
    for (int a = dim_; a < 3; ++a) off[a] = 0;
    while (true) {
      std::array<Index, 3> c = bx.cell;
      bool inside = true;
      for (int a = 0; a < dim_; ++a) {
        c[a] += off[a];
        inside = inside && c[a] >= 0 && c[a] < side;
      }
      if (inside) {
        const Index id = box_at(bx.level, c);
        if (id == b || !box(id).empty()) out.push_back(id);
      }
      int a = 0;
      while (a < dim_ && off[a] == 1) off[a++] = -1;
      if (a == dim_) break;
      ++off[a];
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Same-level nonempty boxes that are not neighbors of b, ascending.
  IndexVector far_field(Index b) const {
    const IndexVector near = neighbors(b);
    const int level = box(b).level;
    IndexVector out;
    const Index first = level_begin(level);
    for (Index id = first; id < first + boxes_per_level(level); ++id) {
      if (box(id).empty()) continue;
      if (!std::binary_search(near.begin(), near.end(), id)) out.push_back(id);
    }
    return out;
  }

  /// Nonempty boxes of a level in ascending id order.
  IndexVector level_order(int level) const {
    require_shape(level >= 0 && level <= depth_, "level_order: level out of range");
    IndexVector out;
    const Index first = level_begin(level);
    for (Index id = first; id < first + boxes_per_level(level); ++id)
      if (!box(id).empty()) out.push_back(id);
    return out;
  }

  /// Concatenates the children's active indices (child order) and installs the
  /// result as the parent's active set. Every nonempty child must be processed.
  const IndexVector& merged_active_indices(Index parent) {
    TreeBox& p = box(parent);
    IndexVector merged;
    for (Index c : p.children) {
      const TreeBox& child = box(c);
      if (child.empty()) continue;
      if (!child.processed) {
        std::ostringstream os;
        os << "merged_active_indices: child box " << c << " of box " << parent
           << " has not been processed";
        throw Error(os.str());
      }
      merged.insert(merged.end(), child.active_indices.begin(), child.active_indices.end());
    }
    p.active_indices = std::move(merged);
    return p.active_indices;
  }

  /// Restores every box's active set to its point set and clears processed flags.
  void reset_active() {
    for (TreeBox& b : boxes_) {
      b.active_indices = b.point_indices;
      b.processed = false;
    }
  }

  friend BoxTree build_tree(const PointSet& points, Index m);

 private:
  int dim_ = 1;
  Index leaf_capacity_ = 1;
  int depth_ = 0;
  Index num_points_ = 0;
  std::vector<TreeBox> boxes_;
};

namespace detail {

inline std::array<Index, 3> leaf_cell(const PointSet& ps, Index j, int level) {
  std::array<Index, 3> c{0, 0, 0};
  const Index side = Index{1} << level;
  for (int a = 0; a < ps.dim; ++a) {
    const double t = (ps.coords(a, j) - ps.lo(a)) / (ps.hi(a) - ps.lo(a));
    Index k = static_cast<Index>(std::floor(t * static_cast<double>(side)));
    c[a] = std::clamp<Index>(k, 0, side - 1);
  }
  return c;
}

inline int max_depth_for(int dim) { return dim == 1 ? 24 : (dim == 2 ? 12 : 8); }

}  // namespace detail

/// Geometric bisection down to the smallest common depth at which no leaf
/// holds more than m points. Empty boxes are kept.
inline BoxTree build_tree(const PointSet& points, Index m) {
  if (points.size() == 0) throw Error("build_tree: point set is empty");
  if (m < 1) throw Error("build_tree: leaf capacity must be at least 1");
  const int d = points.dim;
  const Index n = points.size();

  BoxTree tree;
  tree.dim_ = d;
  tree.leaf_capacity_ = m;
  tree.num_points_ = n;

  int depth = 0;
  for (;; ++depth) {
    if (depth > detail::max_depth_for(d))
      throw Error("build_tree: points cannot be separated (duplicate points?)");
    tree.depth_ = depth;
    std::vector<Index> counts(static_cast<std::size_t>(tree.boxes_per_level(depth)), 0);
    Index worst = 0;
    for (Index j = 0; j < n; ++j) {
      const Index id = tree.box_at(depth, detail::leaf_cell(points, j, depth));
      const Index local = id - tree.level_begin(depth);
      worst = std::max(worst, ++counts[static_cast<std::size_t>(local)]);
    }
    if (worst <= m) break;
  }

  const Index total = tree.level_begin(depth + 1) - 1;
  tree.boxes_.resize(static_cast<std::size_t>(total));
  const Vector extent = points.hi - points.lo;
  for (int level = 0; level <= depth; ++level) {
    const Index first = tree.level_begin(level);
    const Index side = Index{1} << level;
    for (Index local = 0; local < tree.boxes_per_level(level); ++local) {
      TreeBox& b = tree.boxes_[static_cast<std::size_t>(first + local - 1)];
      b.id = first + local;
      b.level = level;
      // Decode the interleaved child bits back into integer cell coordinates.
      std::array<Index, 3> cell{0, 0, 0};
      Index q = local;
      for (int bit = 0; bit < level; ++bit)
        for (int a = 0; a < d; ++a) {
          cell[a] |= (q & 1) << bit;
          q >>= 1;
        }
      b.cell = cell;
      b.center.resize(d);
      b.halfwidth.resize(d);
      for (int a = 0; a < d; ++a) {
        const double w = extent(a) / static_cast<double>(side);
        b.halfwidth(a) = 0.5 * w;
        b.center(a) = points.lo(a) + (static_cast<double>(cell[a]) + 0.5) * w;
      }
      if (level > 0) {
        const Index parent_local = local >> d;
        b.parent = tree.level_begin(level - 1) + parent_local;
      }
      if (level < depth) {
        const Index child_first = tree.level_begin(level + 1) + (local << d);
        for (Index c = 0; c < (Index{1} << d); ++c) b.children.push_back(child_first + c);
      }
    }
  }

  for (Index j = 0; j < n; ++j) {
    const Index id = tree.box_at(depth, detail::leaf_cell(points, j, depth));
    tree.box(id).point_indices.push_back(j);
  }
  for (int level = depth - 1; level >= 0; --level) {
    const Index first = tree.level_begin(level);
    for (Index id = first; id < first + tree.boxes_per_level(level); ++id) {
      TreeBox& b = tree.box(id);
      for (Index c : b.children) {
        const IndexVector& pts = tree.box(c).point_indices;
        b.point_indices.insert(b.point_indices.end(), pts.begin(), pts.end());
      }
    }
  }
  tree.reset_active();
  return tree;
}

}  // namespace rsrs
