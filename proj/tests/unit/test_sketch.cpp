#include "test_helpers.hpp"

using namespace rsrs;
using rsrs::testing::gaussian;

TEST(DrawGaussian, Deterministic) {
  EXPECT_EQ(draw_gaussian(40, 7, 11, 3), draw_gaussian(40, 7, 11, 3));
  EXPECT_NE(draw_gaussian(40, 7, 11, 3), draw_gaussian(40, 7, 12, 3));
}

TEST(DrawGaussian, MomentsOfManyDraws) {
  const Matrix g = draw_gaussian(100000, 1, 5, 1);
  const double mean = g.mean();
  const double var = (g.array() - mean).square().sum() / static_cast<double>(g.size() - 1);
  EXPECT_LT(std::abs(mean), 0.02);
  EXPECT_LT(std::abs(var - 1.0), 0.05);
}

TEST(DrawGaussian, StreamsUncorrelated) {
  const Matrix a = draw_gaussian(5000, 4, 9, kOmegaStream);
  const Matrix b = draw_gaussian(5000, 4, 9, kPsiStream);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) {
      const double c = a.col(i).dot(b.col(j)) / (a.col(i).norm() * b.col(j).norm());
      EXPECT_LT(std::abs(c), 0.05);
    }
}

TEST(BuildSketches, DefinitionalOnDenseOracle) {
  const Matrix m = gaussian(32, 32, 1);
  const auto o = dense_oracle(m);
  const SketchSet s = build_sketches(*o, 8, 3);
  EXPECT_EQ(s.y, o->apply(s.omega));
  EXPECT_EQ(s.z, o->apply_adjoint(s.psi));
  EXPECT_LE((s.y - m * s.omega).norm(), 1e-13 * s.y.norm());
  EXPECT_EQ(s.generation, 0u);
}

TEST(BuildSketches, FullSampleCountDeterminesOperator) {
  const Matrix m = gaussian(24, 24, 2);
  const SketchSet s = build_sketches(*dense_oracle(m), 24, 4);
  EXPECT_LE(rsrs::testing::rel(s.y * s.omega.inverse(), m), 1e-10);
}

TEST(BuildSketches, ZeroOperatorAndBadP) {
  const auto z = dense_oracle(Matrix::Zero(10, 10));
  const SketchSet s = build_sketches(*z, 4, 1);
  EXPECT_EQ(s.y.norm(), 0.0);
  EXPECT_EQ(s.z.norm(), 0.0);
  EXPECT_THROW(build_sketches(*z, 11, 1), Error);
  EXPECT_THROW(build_sketches(*z, 0, 1), Error);
}

TEST(NullifiedSample, ThreeLeavesPlusRankSuffice) {
  // Leaf size 64, target far-field rank 20: p = 3 * 64 + 20 samples.
  const auto o = rsrs::testing::line_kernel(1024);
  BoxTree tree = build_tree(*o->points(), 64);
  tree.reset_active();
  const SketchSet s = build_sketches(*o, 3 * 64 + 20, 1);
  const Index b = tree.level_order(tree.depth())[5];
  const NullifiedSample ns = nullified_sample(s, tree, b, Side::Forward, 20);
  EXPECT_EQ(ns.width, 20);
  EXPECT_EQ(ns.sample.rows(), 64);
}

TEST(NullifiedSample, VanishesWithoutFarField) {
  // Block tridiagonal over leaves: nothing outside the neighbors.
  const Index n = 128, m = 16;
  Matrix a = Matrix::Zero(n, n);
  const Matrix g = gaussian(n, n, 3);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (std::abs(i / m - j / m) <= 1) a(i, j) = g(i, j);
  BoxTree tree = build_tree(rsrs::testing::line_points(n), m);
  tree.reset_active();
  const SketchSet s = build_sketches(*dense_oracle(a), 60, 2);
  for (Index b : tree.level_order(tree.depth()))
    for (Side side : {Side::Forward, Side::Adjoint}) {
      const NullifiedSample ns = nullified_sample(s, tree, b, side, 100);
      EXPECT_LE(ns.sample.norm(), 1e-12 * s.sample(side).norm());
    }
}

TEST(NullifiedSample, EqualsExplicitFarFieldProduct) {
  const Index n = 512;
  const auto o = rsrs::testing::line_kernel(n);
  const Matrix a = rsrs::testing::dense_of(*o);
  BoxTree tree = build_tree(*o->points(), 32);
  tree.reset_active();
  const SketchSet s = build_sketches(*o, 3 * 32 + 40, 5);
  const Index b = tree.level_order(tree.depth())[7];
  IndexVector far;
  for (Index f : tree.far_field(b))
    far.insert(far.end(), tree.box(f).point_indices.begin(), tree.box(f).point_indices.end());
  const NullifiedSample ns = nullified_sample(s, tree, b, Side::Forward, 1000);
  const Matrix expect = a(tree.box(b).active_indices, far) * s.omega(far, Eigen::all) * ns.null_basis;
  EXPECT_LE((ns.sample - expect).norm(), 1e-11 * expect.norm());
  // Structured test matrix has zero rows on the box and its neighbors.
  const IndexVector c = concat(tree.box(b).active_indices, near_active(tree, b));
  EXPECT_LE((s.omega(c, Eigen::all) * ns.null_basis).norm(), 1e-12 * s.omega.norm());
}

TEST(NullifiedSample, InsufficientSamplesReportsDeficit) {
  const auto o = rsrs::testing::line_kernel(256);
  BoxTree tree = build_tree(*o->points(), 32);
  tree.reset_active();
  const SketchSet s = build_sketches(*o, 90, 1);
  const Index b = tree.level_order(tree.depth())[3];
  try {
    nullified_sample(s, tree, b, Side::Forward, 10);
    FAIL() << "expected insufficient samples";
  } catch (const InsufficientSamplesError& e) {
    EXPECT_EQ(e.deficit(), 96 + 1 - 90);
  }
}

TEST(ExtractBlock, BlockTridiagonalRecovery) {
  const Index nb = 8, bs = 16, n = nb * bs;
  Matrix a = Matrix::Zero(n, n);
  const Matrix g = gaussian(n, n, 6);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (std::abs(i / bs - j / bs) <= 1) a(i, j) = g(i, j);
  const SketchSet s = build_sketches(*dense_oracle(a), 3 * bs + 8, 7);
  auto range = [&](Index lo, Index hi) {
    IndexVector v;
    for (Index i = lo * bs; i < hi * bs; ++i) v.push_back(i);
    return v;
  };
  for (Index k = 0; k < nb; ++k) {
    const IndexVector rows = range(k, k + 1);
    const IndexVector cols = range(std::max<Index>(k - 1, 0), std::min(k + 2, nb));
    const Matrix fwd = extract_block(s, rows, cols, Side::Forward, 8);
    EXPECT_LE(rsrs::testing::rel(fwd, a(rows, cols)), 1e-10);
    const Matrix adj = extract_block(s, rows, cols, Side::Adjoint, 8);
    EXPECT_LE(rsrs::testing::rel(adj, a(cols, rows)), 1e-10);
  }
}

TEST(ExtractBlock, DiagonalBlock) {
  const Vector d = Vector::LinSpaced(40, 1, 40);
  const SketchSet s = build_sketches(*dense_oracle(d.asDiagonal()), 20, 8);
  IndexVector idx;
  for (Index i = 10; i < 20; ++i) idx.push_back(i);
  const Matrix blk = extract_block(s, idx, idx, Side::Forward);
  EXPECT_LE((blk - Matrix(d.segment(10, 10).asDiagonal())).norm(), 1e-12 * d.norm());
}

TEST(ExtractBlock, LeakErrorScalesWithPseudoinverse) {
  const Index n = 64;
  const Vector d = Vector::LinSpaced(n, 1, 2);
  IndexVector idx;
  for (Index i = 0; i < 16; ++i) idx.push_back(i);
  for (double eps : {1e-6, 1e-3}) {
    Matrix a = d.asDiagonal();
    a.block(0, 40, 16, 10) += eps * gaussian(16, 10, 9) / std::sqrt(160.0);  // ||leak||_F ~ eps
    const SketchSet s = build_sketches(*dense_oracle(a), 30, 10);
    ExtractDiagnostics diag;
    const Matrix blk = extract_block(s, idx, idx, Side::Forward, 10, &diag);
    EXPECT_FALSE(diag.ill_conditioned);
    const double pinv_norm = right_pseudoinverse(s.omega(idx, Eigen::all)).norm();
    const double err = (blk - a(idx, idx)).norm();
    const double bound = eps * s.omega(Eigen::seq(40, 49), Eigen::all).norm() * pinv_norm;
    EXPECT_LE(err, 3 * bound) << "eps " << eps;
    EXPECT_GT(err, 1e-3 * bound);
  }
}

TEST(ExtractBlock, InsufficientSamples) {
  const SketchSet s = build_sketches(*dense_oracle(Matrix::Identity(30, 30)), 12, 1);
  IndexVector idx{0, 1, 2, 3, 4};
  EXPECT_THROW(extract_block(s, idx, idx, Side::Forward, 10), InsufficientSamplesError);
}

namespace {

EliminationStep random_step(Index n, std::uint64_t seed) {
  // Disjoint r, s, and two extra indices for L/U.
  EliminationStep st;
  st.I_r = {3, 7, 1};
  st.I_s = {0, 5};
  st.T_rs = gaussian(3, 2, seed);
  st.T_sr = gaussian(2, 3, seed + 1);
  st.left_rows = {0, 5, 11, n - 1};
  st.G_left = gaussian(4, 3, seed + 2);
  st.right_cols = {5, 9, 0};
  st.G_right = gaussian(3, 3, seed + 3);
  return st;
}

}  // namespace

TEST(UpdateSketches, IdentityStepLeavesSketchesUnchanged) {
  const SketchSet s0 = build_sketches(*dense_oracle(gaussian(20, 20, 1)), 6, 2);
  SketchSet s = s0;
  EliminationStep st;
  st.I_r = {1, 2};
  st.I_s = {3};
  st.T_rs = Matrix::Zero(2, 1);
  st.T_sr = Matrix::Zero(1, 2);
  update_sketches_elim(s, st);
  EXPECT_EQ(s.y, s0.y);
  EXPECT_EQ(s.omega, s0.omega);
  EXPECT_EQ(s.z, s0.z);
  EXPECT_EQ(s.psi, s0.psi);
  EXPECT_EQ(s.generation, 1u);
}

TEST(UpdateSketches, OneStepMatchesExplicitOperator) {
  const Index n = 48;
  const Matrix a = gaussian(n, n, 3);
  SketchSet s = build_sketches(*dense_oracle(a), 12, 4);
  const EliminationStep st = random_step(n, 5);
  update_sketches_elim(s, st);
  const auto [v, w] = rsrs::testing::step_matrices(st, n);
  const Matrix ag = v.inverse() * a * w.inverse();
  EXPECT_LE((s.y - ag * s.omega).norm(), 1e-12 * ag.norm() * s.omega.norm());
  EXPECT_LE((s.z - ag.transpose() * s.psi).norm(), 1e-12 * ag.norm() * s.psi.norm());
}

TEST(UpdateSketches, TwoStepsCompose) {
  const Index n = 48;
  const Matrix a = gaussian(n, n, 6);
  SketchSet s = build_sketches(*dense_oracle(a), 12, 7);
  const EliminationStep s1 = random_step(n, 8);
  EliminationStep s2 = random_step(n, 12);
  s2.I_r = {20, 21};
  s2.I_s = {22, 30, 31};
  s2.T_rs = gaussian(2, 3, 13);
  s2.T_sr = gaussian(3, 2, 14);
  s2.left_rows = {22, 40};
  s2.G_left = gaussian(2, 2, 15);
  s2.right_cols = {30};
  s2.G_right = gaussian(2, 1, 16);
  update_sketches_elim(s, s1);
  update_sketches_elim(s, s2);
  const auto [v1, w1] = rsrs::testing::step_matrices(s1, n);
  const auto [v2, w2] = rsrs::testing::step_matrices(s2, n);
  const Matrix ag = v2.inverse() * v1.inverse() * a * w1.inverse() * w2.inverse();
  EXPECT_LE((s.y - ag * s.omega).norm(), 1e-12 * ag.norm() * s.omega.norm());
  EXPECT_LE((s.z - ag.transpose() * s.psi).norm(), 1e-12 * ag.norm() * s.psi.norm());
  EXPECT_EQ(s.generation, 2u);
}

TEST(CouplingEstimate, BlockDiagonalIsZero) {
  Matrix a = Matrix::Zero(60, 60);
  a.block(0, 0, 20, 20) = gaussian(20, 20, 1);
  a.block(20, 20, 40, 40) = gaussian(40, 40, 2);
  const SketchSet s = build_sketches(*dense_oracle(a), 30, 3);
  EliminationStep st;
  // Rows 0..19 couple only among themselves.
  for (Index i = 0; i < 20; ++i) st.I_r.push_back(i);
  const EliminationStep steps[] = {st};
  const auto est = coupling_residual_estimate(s, steps);
  ASSERT_EQ(est.size(), 1u);
  EXPECT_LE(est[0].forward, 1e-12 * a.norm());
  EXPECT_LE(est[0].adjoint, 1e-12 * a.norm());
}

TEST(CouplingEstimate, PlantedCouplingWithinFactorThree) {
  const Index n = 80;
  EliminationStep st;
  for (Index i = 0; i < 10; ++i) st.I_r.push_back(i);
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Matrix a = gaussian(n, n, 100 + seed);
    a.block(0, 10, 10, n - 10).setZero();
    a.block(10, 0, n - 10, 10).setZero();
    Matrix c = gaussian(10, n - 10, 200 + seed);
    c *= 1e-3 / c.norm();
    a.block(0, 10, 10, n - 10) = c;
    a.block(10, 0, n - 10, 10) = c.transpose();
    const SketchSet s = build_sketches(*dense_oracle(a), 40, seed);
    const EliminationStep steps[] = {st};
    const auto est = coupling_residual_estimate(s, steps);
    for (double e : {est[0].forward, est[0].adjoint})
      if (e >= 1e-3 / 3 && e <= 3e-3) ++ok;
  }
  EXPECT_EQ(ok, 40);
}

TEST(CouplingEstimate, DecreasesAsToleranceTightens) {
  const auto o = rsrs::testing::line_kernel(512);
  double prev = std::numeric_limits<double>::infinity();
  for (double atol : {1e-3, 1e-5, 1e-7, 1e-9}) {
    BoxTree tree = build_tree(*o->points(), 32);
    const SkelFactorization f = rsrs_factor(*o, tree, 138, ToleranceSchedule{atol, 1.0, 32}, 2);
    const double leaf = f.levels.front().max_coupling;
    EXPECT_LT(leaf, prev) << "atol " << atol;
    prev = leaf;
  }
}
