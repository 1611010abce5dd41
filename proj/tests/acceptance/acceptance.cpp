// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "rsrs/all.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace rsrs;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream note;
  void need(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      note << " [failed: " << what << "]";
    }
  }
};

Matrix gaussian(Index r, Index c, std::uint64_t seed) { return draw_gaussian(r, c, seed, 77); }

PointSet line_points(Index n) {
  Matrix x(1, n);
  for (Index i = 0; i < n; ++i) x(0, i) = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  return PointSet::from_coords(x, std::make_pair(Vector::Zero(1), Vector::Ones(1)));
}

Matrix dense_of(const LinearOracle& o) { return o.apply(Matrix::Identity(o.size(), o.size())); }

double rel(const Matrix& a, const Matrix& b) {
  const double nb = b.norm();
  return nb > 0 ? (a - b).norm() / nb : (a - b).norm();
}

Matrix elim_matrix(const Matrix& block, const IndexVector& rows, const IndexVector& cols, Index n) {
  Matrix e = Matrix::Identity(n, n);
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b)
      e(rows[a], cols[b]) = block(static_cast<Index>(a), static_cast<Index>(b));
  return e;
}

std::pair<Matrix, Matrix> step_matrices(const EliminationStep& s, Index n) {
  return {elim_matrix(s.T_rs, s.I_r, s.I_s, n) * elim_matrix(s.G_left, s.left_rows, s.I_r, n),
          elim_matrix(s.G_right, s.I_r, s.right_cols, n) * elim_matrix(s.T_sr, s.I_s, s.I_r, n)};
}

double leakage(const Matrix& a, const IndexVector& r) {
  std::vector<char> in(static_cast<std::size_t>(a.rows()), 0);
  for (Index i : r) in[static_cast<std::size_t>(i)] = 1;
  IndexVector rest;
  for (Index i = 0; i < a.rows(); ++i)
    if (!in[static_cast<std::size_t>(i)]) rest.push_back(i);
  return std::hypot(a(r, rest).norm(), a(rest, r).norm());
}

IndexVector far_indices(const BoxTree& t, Index b) {
  IndexVector far;
  for (Index f : t.far_field(b))
    far.insert(far.end(), t.box(f).active_indices.begin(), t.box(f).active_indices.end());
  return far;
}

ExperimentConfig log1d(Index n, double atol) {
  ExperimentConfig c;
  c.problem.type = "log-kernel-1d";
  c.problem.N = n;
  c.leaf_size = 32;
  c.atol_leaf = atol;
  c.growth = 1.0;
  c.seed = 11;
  return c;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------------------

void sketch_machinery(Outcome& out) {
  const Index n = 256, m = 16;
  const Matrix a = gaussian(n, n, 1);
  const auto o = dense_oracle(a);
  BoxTree tree = build_tree(line_points(n), m);
  tree.reset_active();
  const SketchSet s = build_sketches(*o, 3 * m + 24, 2);
  double worst_null = 0, worst_sample = 0;
  for (Index b : tree.level_order(tree.depth())) {
    for (Side side : {Side::Forward, Side::Adjoint}) {
      const NullifiedSample ns = nullified_sample(s, tree, b, side, 1000);
      const IndexVector c = concat(tree.box(b).active_indices, near_active(tree, b));
      const Matrix& t = s.test(side);
      worst_null = std::max(worst_null, (t(c, Eigen::all) * ns.null_basis).norm() / t.norm());
      const IndexVector far = far_indices(tree, b);
      const Matrix blk = side == Side::Forward ? Matrix(a(ns.rows, far))
                                               : Matrix(a(far, ns.rows).transpose());
      const Matrix expect = blk * t(far, Eigen::all) * ns.null_basis;
      worst_sample = std::max(worst_sample, rel(ns.sample, expect));
    }
  }
  // Block-tridiagonal operator: every admissible (near) block is recoverable.
  const Index nb = n / m;
  Matrix bt = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (std::abs(i / m - j / m) <= 1) bt(i, j) = a(i, j);
  const SketchSet sb = build_sketches(*dense_oracle(bt), 3 * m + 10, 3);
  double worst_extract = 0;
  for (Index k = 0; k < nb; ++k) {
    IndexVector rows, cols;
    for (Index i = k * m; i < (k + 1) * m; ++i) rows.push_back(i);
    for (Index i = std::max<Index>(k - 1, 0) * m; i < std::min(k + 2, nb) * m; ++i) cols.push_back(i);
    worst_extract = std::max(worst_extract,
                             rel(extract_block(sb, rows, cols, Side::Forward), bt(rows, cols)));
    worst_extract = std::max(worst_extract,
                             rel(extract_block(sb, rows, cols, Side::Adjoint), bt(cols, rows)));
  }
  out.note << "nullified rows " << fmt(worst_null) << ", nullified sample " << fmt(worst_sample)
           << ", extraction " << fmt(worst_extract);
  out.need(worst_null <= 1e-12, "nullification");
  out.need(worst_sample <= 1e-12, "nullified sample");
  out.need(worst_extract <= 1e-10, "extraction");
}

void sketch_consistency(Outcome& out) {
  const Index n = 128;
  const auto kern = kernel_oracle(line_points(n), std::log(0.5 / static_cast<double>(n)) - 1.0);
  const Matrix base = dense_of(*kern);
  const Matrix xs = line_points(n).coords;
  Matrix mod(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) mod(i, j) = 1.0 + 0.3 * (xs(0, i) - 2.0 * xs(0, j));
  double worst = 0, worst_leak = 0;
  int steps = 0;
  const double atol = 1e-9;
  for (const Matrix& a : {base, Matrix(base.cwiseProduct(mod))}) {
    const auto o = dense_oracle(a);
    BoxTree tree = build_tree(line_points(n), 8);
    Matrix ag = a;
    RsrsOptions opt;
    const ToleranceSchedule sched{atol, 1.0, 16};
    opt.on_step = [&](const EliminationStep& st, const SketchSet& s) {
      const auto [v, w] = step_matrices(st, n);
      ag = v.inverse() * ag * w.inverse();
      const double sc = ag.norm();
      worst = std::max(worst, (s.y - ag * s.omega).norm() / (sc * s.omega.norm()));
      worst = std::max(worst, (s.z - ag.transpose() * s.psi).norm() / (sc * s.psi.norm()));
      worst_leak = std::max(worst_leak, leakage(ag, st.I_r));
      ++steps;
    };
    rsrs_factor(*o, tree, 110, sched, 9, opt);
  }
  out.note << steps << " steps, consistency " << fmt(worst) << ", decoupling "
           << fmt(worst_leak);
  out.need(steps > 16, "too few steps");
  out.need(worst <= 1e-11, "consistency");
  out.need(worst_leak <= 10 * atol, "decoupling");
}

void weak_admissibility(Outcome& out) {
  Matrix x(1, 128);
  for (Index i = 0; i < 20; ++i) x(0, i) = 0.01 + 0.1 * static_cast<double>(i) / 20.0;
  for (Index i = 0; i < 108; ++i) x(0, 20 + i) = 0.5 + 0.49 * static_cast<double>(i) / 107.0;
  const PointSet ps = PointSet::from_coords(x, std::make_pair(Vector::Zero(1), Vector::Ones(1)));
  const auto o = kernel_oracle(ps, -3.0);
  const Matrix a = dense_of(*o);
  BoxTree tree = build_tree(ps, 32);
  tree.reset_active();
  const Index b = tree.level_order(tree.depth()).front();
  out.need(near_active(tree, b).empty(), "near field not empty");
  const IndexVector act = tree.box(b).active_indices;
  const IndexVector far = far_indices(tree, b);
  SketchSet s = build_sketches(*o, 60, 3);
  const SketchSet s0 = s;
  const double atol = 1e-8;
  const EliminationStep st = skeletonize_box_blackbox(s, tree, b, atol, 32);

  const Matrix nf = nullspace_basis(s0.omega(act, Eigen::all));
  const Matrix na = nullspace_basis(s0.psi(act, Eigen::all));
  const Index w = std::min<Index>(32, nf.cols());
  Matrix stacked(static_cast<Index>(act.size()), 2 * w);
  stacked << a(act, far) * s0.omega(far, Eigen::all) * nf.leftCols(w),
      a(far, act).transpose() * s0.psi(far, Eigen::all) * na.leftCols(w);
  const IdResult id = row_id(stacked, atol, 32);
  std::set<Index> skel;
  for (Index k : id.skel) skel.insert(act[k]);
  const bool same = std::set<Index>(st.I_s.begin(), st.I_s.end()) == skel;
  const double res = std::max((a(st.I_r, far) - st.T_rs * a(st.I_s, far)).norm(),
                              (a(far, st.I_r) - a(far, st.I_s) * st.T_sr).norm());
  const auto [v, wm] = step_matrices(st, 128);
  const double leak = leakage(v.inverse() * a * wm.inverse(), st.I_r);
  out.note << "skeleton " << st.I_s.size() << "/" << act.size()
           << (same ? " identical" : " differs") << ", reconstruction " << fmt(res)
           << ", decoupling " << fmt(leak);
  out.need(same, "skeleton sets");
  out.need(res <= 10 * atol, "reconstruction");
  out.need(leak <= 10 * atol, "decoupling");
}

struct SweepPoint {
  Index n = 0;
  Index p = 0;
  double t = 0;
  std::size_t mem = 0;
  double errsolve = 0;
  std::string status = "ok";
};

std::vector<SweepPoint> sweep(double atol) {
  std::vector<SweepPoint> rows;
  for (Index n : {512, 1024, 2048, 4096}) {
    SweepPoint r;
    r.n = n;
    try {
      const ExperimentConfig c = log1d(n, atol);
      const Problem prob = make_problem(c);
      RunResult run = run_factorization(c, prob);
      // Best of two for the timing; the factorization itself is deterministic.
      r.t = std::min(run.t_factor, run_factorization(c, prob).t_factor);
      r.p = run.p;
      r.mem = factor_memory(run.f);
      r.errsolve = verify_factorization(*prob.oracle, run.f, c.power_iterations, c.seed).errsolve_est;
    } catch (const std::exception& e) {
      r.status = e.what();
    }
    rows.push_back(r);
  }
  return rows;
}

void end_to_end(Outcome& out, const std::vector<std::pair<double, std::vector<SweepPoint>>>& all) {
  for (const auto& [atol, rows] : all) {
    double lo = 1e300, hi = 0;
    out.note << "atol " << fmt(atol) << ": errsolve";
    for (const SweepPoint& r : rows) {
      out.note << " " << fmt(r.errsolve);
      out.need(r.status == "ok", "N=" + std::to_string(r.n) + " " + r.status);
      out.need(r.errsolve <= 100 * atol, "N=" + std::to_string(r.n) + " above 100*atol");
      lo = std::min(lo, r.errsolve);
      hi = std::max(hi, r.errsolve);
    }
    out.note << " (spread x" << fmt(lo > 0 ? hi / lo : 0) << "); ";
    out.need(hi <= 10 * lo, "growth above x10");
  }
}

void sample_count(Outcome& out, const std::vector<std::pair<double, std::vector<SweepPoint>>>& all) {
  for (const auto& [atol, rows] : all) {
    std::set<Index> ps;
    for (const SweepPoint& r : rows) {
      ps.insert(r.p);
      out.need(r.status == "ok", "N=" + std::to_string(r.n) + " did not succeed");
    }
    out.note << "atol " << fmt(atol) << ": p =";
    for (Index p : ps) out.note << " " << p;
    out.note << "; ";
    out.need(ps.size() == 1, "p varies with N");
  }
}

void scaling(Outcome& out, const std::vector<std::pair<double, std::vector<SweepPoint>>>& all) {
  for (const auto& [atol, rows] : all) {
    out.note << "atol " << fmt(atol) << ":";
    for (std::size_t i = rows.size() - 2; i < rows.size(); ++i) {
      const double tr = rows[i].t / rows[i - 1].t;
      const double mr = static_cast<double>(rows[i].mem) / static_cast<double>(rows[i - 1].mem);
      out.note << " " << rows[i].n << "/" << rows[i - 1].n << " t x" << fmt(tr) << " mem x"
               << fmt(mr);
      out.need(tr <= 2.8, "time ratio at N=" + std::to_string(rows[i].n));
      out.need(mr <= 2.6, "memory ratio at N=" + std::to_string(rows[i].n));
    }
    out.note << "; ";
  }
}

void schur_slab(Outcome& out) {
  double worst = 0;
  for (Index n = 3; n <= 16; ++n)
    for (Index b = 1; b < n && b <= 5; ++b) {
      const auto o = schur_slab_oracle(n, b);
      const Matrix a22 = o->a22().to_dense();
      const Matrix t11 =
          o->a11().to_dense() - o->a12().to_dense() * a22.inverse() * o->a21().to_dense();
      worst = std::max(worst, rel(dense_of(*o), t11));
    }
  ExperimentConfig c;
  c.problem.type = "schur-slab-2d";
  c.problem.n = 64;
  c.problem.b = 10;
  c.leaf_size = 8;
  c.atol_leaf = 1e-5;
  c.growth = 1.0;
  c.seed = 1;
  const Problem prob = make_problem(c);
  const RunResult r = run_factorization(c, prob);
  const double es =
      verify_factorization(*prob.oracle, r.f, c.power_iterations, c.seed).errsolve_est;
  out.note << "apply vs dense " << fmt(worst) << ", n=64 b=10 errsolve " << fmt(es);
  out.need(worst <= 1e-12, "oracle apply");
  out.need(es <= 1e-3, "errsolve");
}

void round_trips(Outcome& out) {
  const ExperimentConfig c = log1d(1024, 1e-8);
  const Problem prob = make_problem(c);
  const RunResult r1 = run_factorization(c, prob);
  const RunResult r2 = run_factorization(c, prob);
  const Matrix x = gaussian(1024, 8, 5);
  const double rt = std::max({(factor_solve(r1.f, factor_apply(r1.f, x)) - x).norm(),
                              (factor_apply(r1.f, factor_solve(r1.f, x)) - x).norm(),
                              (factor_solve(r1.f, factor_apply(r1.f, x, true), true) - x).norm()}) /
                    x.norm();
  const std::string path =
      (std::filesystem::temp_directory_path() / "rsrs_acceptance.bin").string();
  save_factorization(path, r1.f);
  const SkelFactorization g = load_factorization(path);
  std::remove(path.c_str());
  std::ostringstream a, b, d;
  write_factorization(a, r1.f);
  write_factorization(b, g);
  write_factorization(d, r2.f);
  out.note << "solve(apply) " << fmt(rt) << ", container " << a.str().size() << " bytes";
  out.need(rt <= 1e-11, "solve/apply identity");
  out.need(a.str() == b.str(), "save/load not bit-exact");
  out.need(a.str() == d.str(), "repeat run differs");
}

void proxy_agreement(Outcome& out) {
  for (double atol : {1e-4, 1e-8}) {
    ExperimentConfig c = log1d(1024, atol);
    const Problem prob = make_problem(c);
    const RunResult rr = run_factorization(c, prob);
    c.method = "srs-proxy";
    c.radius_factor = 2.5;
    const RunResult rp = run_factorization(c, prob);
    const double er =
        verify_factorization(*prob.oracle, rr.f, c.power_iterations, c.seed).errsolve_est;
    const double ep =
        verify_factorization(*prob.oracle, rp.f, c.power_iterations, c.seed).errsolve_est;
    double worst = 1;
    bool same_boxes = rr.f.box_ranks.size() == rp.f.box_ranks.size();
    for (const auto& [b, k] : rr.f.box_ranks) {
      const auto it = rp.f.box_ranks.find(b);
      if (it == rp.f.box_ranks.end()) {
        same_boxes = false;
        continue;
      }
      const Index lo = std::min(k, it->second), hi = std::max(k, it->second);
      worst = std::max(worst, lo > 0 ? static_cast<double>(hi) / static_cast<double>(lo)
                                     : (hi > 0 ? 1e300 : 1.0));
    }
    out.note << "atol " << fmt(atol) << ": errsolve rsrs " << fmt(er) << " proxy " << fmt(ep)
             << ", worst rank ratio " << fmt(worst) << "; ";
    out.need(er <= 100 * atol, "rsrs errsolve");
    out.need(ep <= 100 * atol, "proxy errsolve");
    out.need(same_boxes, "different box sets");
    out.need(worst <= 2.0, "rank ratio");
  }
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int k, const std::string& name, double limit, const std::function<void(Outcome&)>& fn) {
    Outcome out;
    const auto t0 = Clock::now();
    try {
      fn(out);
    } catch (const std::exception& e) {
      out.pass = false;
      out.note << " [exception: " << e.what() << "]";
    }
    const double t = seconds_since(t0);
    if (limit > 0 && t > limit) {
      out.pass = false;
      out.note << " [runtime above " << limit << " s]";
    }
    if (!out.pass) ++failures;
    std::cout << "criterion " << k << " " << (out.pass ? "PASS" : "FAIL") << " " << name << ": "
              << out.note.str() << " (" << fmt(t) << " s)" << std::endl;
  };

  report(1, "sketch machinery exactness", 10, sketch_machinery);
  report(2, "sketch consistency", 30, sketch_consistency);
  report(3, "weak-admissibility equivalence", 0, weak_admissibility);

  std::vector<std::pair<double, std::vector<SweepPoint>>> all;
  const auto t0 = Clock::now();
  for (double atol : {1e-4, 1e-8}) all.emplace_back(atol, sweep(atol));
  const double t_sweep = seconds_since(t0);
  report(4, "end-to-end accuracy", 0, [&](Outcome& o) {
    end_to_end(o, all);
    o.note << "sweep " << fmt(t_sweep) << " s";
    o.need(t_sweep < 300, "runtime above 300 s");
  });
  report(5, "sample-count independence", 0, [&](Outcome& o) { sample_count(o, all); });
  report(6, "near-linear scaling", 0, [&](Outcome& o) { scaling(o, all); });
  report(7, "Schur-complement oracle", 120, schur_slab);
  report(8, "round-trips", 0, round_trips);
  report(9, "proxy baseline agreement", 0, proxy_agreement);

  std::cout << (failures == 0 ? "all criteria PASS" : std::to_string(failures) + " criteria FAIL")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
