#pragma once

// Experiment descriptions (JSON), problem construction, verification metrics
// and benchmark rows shared by the command-line tool and the acceptance suite.

#include "rsrs/factorization.hpp"
#include "rsrs/geometry.hpp"
#include "rsrs/io.hpp"
#include "rsrs/oracle.hpp"
#include "rsrs/proxy.hpp"
#include "rsrs/random.hpp"
#include "rsrs/rsrs.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

namespace rsrs {

using nlohmann::json;

/// Invalid or missing configuration field.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error("config field '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ProblemSpec {
  std::string type = "log-kernel-1d";  // log-kernel-1d | log-kernel-2d | schur-slab-2d | dense-file
  Index N = 0;                         // kernel problems
  Index n = 0;                         // schur-slab-2d grid side
  Index b = 0;                         // schur-slab-2d slab width
  std::string path;                    // dense-file
  std::uint64_t geometry_seed = 0;
  std::optional<double> diag_shift;    // empty means "auto"
  bool operator==(const ProblemSpec&) const = default;
};

struct ExperimentConfig {
  ProblemSpec problem;
  Index leaf_size = 32;
  std::optional<int> dim;  // must match the problem when given
  std::string method = "rsrs";  // rsrs | srs-proxy
  std::optional<Index> p;       // empty means "auto"
  Index kmax = 0;               // 0: leaf size
  Index oversampling = 10;
  double atol_leaf = 1e-8;
  double growth = 2.0;
  int termination_level = 2;
  double radius_factor = 1.5;
  Index n_proxy = 64;
  std::uint64_t seed = 0;
  int power_iterations = 20;
  int probes = 10;
  std::vector<Index> sweep_N;
  bool include_sketch_time = false;

  Index effective_kmax() const { return kmax > 0 ? kmax : leaf_size; }
  ToleranceSchedule schedule() const { return ToleranceSchedule{atol_leaf, growth, effective_kmax()}; }
  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline const json& member(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + key, "is required");
  return j.at(key);
}

template <class T>
T number(const json& v, const std::string& field) {
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(field, "must be an integer");
    return v.get<T>();
  } else {
    if (!v.is_number()) throw ConfigError(field, "must be a number");
    return v.get<T>();
  }
}

inline Index count(const json& v, const std::string& field, Index min = 1) {
  const auto x = number<std::int64_t>(v, field);
  if (x < min) throw ConfigError(field, "must be at least " + std::to_string(min));
  return static_cast<Index>(x);
}

template <class T>
void optional_field(const json& obj, const char* key, const std::string& prefix, T& out) {
  if (obj.is_object() && obj.contains(key)) out = number<T>(obj.at(key), prefix + key);
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using detail::count;
  using detail::member;
  if (!j.is_object()) throw ConfigError("(root)", "must be a JSON object");
  ExperimentConfig c;

  const json& pr = member(j, "problem", "");
  if (!pr.is_object()) throw ConfigError("problem", "must be an object");
  const json& type = member(pr, "type", "problem.");
  if (!type.is_string()) throw ConfigError("problem.type", "must be a string");
  c.problem.type = type.get<std::string>();
  const std::string& t = c.problem.type;
  if (t == "log-kernel-1d" || t == "log-kernel-2d") {
    c.problem.N = count(member(pr, "N", "problem."), "problem.N");
  } else if (t == "schur-slab-2d") {
    c.problem.n = count(member(pr, "n", "problem."), "problem.n", 3);
    c.problem.b = count(member(pr, "b", "problem."), "problem.b");
    if (c.problem.b >= c.problem.n) throw ConfigError("problem.b", "must be smaller than problem.n");
  } else if (t == "dense-file") {
    const json& p = member(pr, "path", "problem.");
    if (!p.is_string()) throw ConfigError("problem.path", "must be a string");
    c.problem.path = p.get<std::string>();
  } else {
    throw ConfigError("problem.type",
                      "unknown type '" + t +
                          "' (log-kernel-1d, log-kernel-2d, schur-slab-2d, dense-file)");
  }
  if (pr.contains("geometry_seed"))
    c.problem.geometry_seed = static_cast<std::uint64_t>(
        count(pr.at("geometry_seed"), "problem.geometry_seed", 0));
  if (pr.contains("diag_shift")) {
    const json& d = pr.at("diag_shift");
    if (d.is_string()) {
      if (d.get<std::string>() != "auto") throw ConfigError("problem.diag_shift", "must be a number or \"auto\"");
    } else {
      c.problem.diag_shift = detail::number<double>(d, "problem.diag_shift");
    }
  }

  if (j.contains("tree")) {
    const json& tr = j.at("tree");
    if (tr.contains("leaf_size")) c.leaf_size = count(tr.at("leaf_size"), "tree.leaf_size");
    if (tr.contains("dim")) {
      const Index d = count(tr.at("dim"), "tree.dim");
      if (d > 3) throw ConfigError("tree.dim", "must be 1, 2 or 3");
      c.dim = static_cast<int>(d);
    }
  }
  if (j.contains("method")) {
    const json& m = j.at("method");
    if (!m.is_string() || (m.get<std::string>() != "rsrs" && m.get<std::string>() != "srs-proxy"))
      throw ConfigError("method", "must be \"rsrs\" or \"srs-proxy\"");
    c.method = m.get<std::string>();
  }
  if (j.contains("sampling")) {
    const json& s = j.at("sampling");
    if (s.contains("p")) {
      const json& p = s.at("p");
      if (p.is_string()) {
        if (p.get<std::string>() != "auto") throw ConfigError("sampling.p", "must be an integer or \"auto\"");
      } else {
        c.p = count(p, "sampling.p");
      }
    }
    if (s.contains("kmax")) c.kmax = count(s.at("kmax"), "sampling.kmax", 0);
    if (s.contains("oversampling")) c.oversampling = count(s.at("oversampling"), "sampling.oversampling", 0);
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    detail::optional_field(s, "atol_leaf", "schedule.", c.atol_leaf);
    detail::optional_field(s, "growth", "schedule.", c.growth);
    if (!(c.atol_leaf >= 0)) throw ConfigError("schedule.atol_leaf", "must be nonnegative");
    if (!(c.growth >= 1)) throw ConfigError("schedule.growth", "must be at least 1");
    if (s.contains("termination_level"))
      c.termination_level = static_cast<int>(count(s.at("termination_level"), "schedule.termination_level", 0));
  }
  if (j.contains("proxy")) {
    const json& s = j.at("proxy");
    detail::optional_field(s, "radius_factor", "proxy.", c.radius_factor);
    if (!(c.radius_factor > 0)) throw ConfigError("proxy.radius_factor", "must be positive");
    if (s.contains("n_proxy")) c.n_proxy = count(s.at("n_proxy"), "proxy.n_proxy");
  }
  if (j.contains("seed")) c.seed = static_cast<std::uint64_t>(count(j.at("seed"), "seed", 0));
  if (j.contains("verify")) {
    const json& v = j.at("verify");
    if (v.contains("power_iterations"))
      c.power_iterations = static_cast<int>(count(v.at("power_iterations"), "verify.power_iterations", 2));
    if (v.contains("probes")) c.probes = static_cast<int>(count(v.at("probes"), "verify.probes"));
  }
  if (j.contains("sweep")) {
    const json& n = member(j.at("sweep"), "N", "sweep.");
    if (!n.is_array()) throw ConfigError("sweep.N", "must be an array");
    for (const json& x : n) c.sweep_N.push_back(count(x, "sweep.N[]"));
  }
  if (j.contains("timing")) {
    const json& tm = j.at("timing");
    if (tm.contains("include_sketch")) {
      if (!tm.at("include_sketch").is_boolean()) throw ConfigError("timing.include_sketch", "must be a boolean");
      c.include_sketch_time = tm.at("include_sketch").get<bool>();
    }
  }
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  json pr = {{"type", c.problem.type}, {"geometry_seed", c.problem.geometry_seed}};
  if (c.problem.type == "schur-slab-2d") {
    pr["n"] = c.problem.n;
    pr["b"] = c.problem.b;
  } else if (c.problem.type == "dense-file") {
    pr["path"] = c.problem.path;
  } else {
    pr["N"] = c.problem.N;
  }
  pr["diag_shift"] = c.problem.diag_shift ? json(*c.problem.diag_shift) : json("auto");
  json tree = {{"leaf_size", c.leaf_size}};
  if (c.dim) tree["dim"] = *c.dim;
  json j = {
      {"problem", pr},
      {"tree", tree},
      {"method", c.method},
      {"sampling",
       {{"p", c.p ? json(*c.p) : json("auto")}, {"kmax", c.kmax}, {"oversampling", c.oversampling}}},
      {"schedule",
       {{"atol_leaf", c.atol_leaf}, {"growth", c.growth}, {"termination_level", c.termination_level}}},
      {"proxy", {{"radius_factor", c.radius_factor}, {"n_proxy", c.n_proxy}}},
      {"seed", c.seed},
      {"verify", {{"power_iterations", c.power_iterations}, {"probes", c.probes}}},
      {"timing", {{"include_sketch", c.include_sketch_time}}},
  };
  if (!c.sweep_N.empty()) j["sweep"] = {{"N", c.sweep_N}};
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("(file)", "cannot open " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("(file)", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Copy of c with the problem size replaced by N (grid side for the slab).
inline ExperimentConfig with_size(ExperimentConfig c, Index N) {
  if (c.problem.type == "schur-slab-2d")
    c.problem.n = N;
  else
    c.problem.N = N;
  return c;
}

/// An operator together with the geometry the tree is built on.
struct Problem {
  std::unique_ptr<LinearOracle> oracle;
  PointSet points;
};

/// Cell average of log|x| over a unit square centred at the origin.
inline constexpr double kLogCellMean2d = -1.06117542688252;

inline Problem make_problem(const ExperimentConfig& c) {
  const ProblemSpec& s = c.problem;
  Problem out;
  if (s.type == "log-kernel-1d") {
    const Index n = s.N;
    Matrix x(1, n);
    for (Index i = 0; i < n; ++i) x(0, i) = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    out.points = PointSet::from_coords(x, std::make_pair(Vector::Zero(1), Vector::Ones(1)));
    // Cell average of log|x| over a cell of width h.
    const double h = 1.0 / static_cast<double>(n);
    out.oracle = kernel_oracle(out.points, s.diag_shift.value_or(std::log(h / 2) - 1));
  } else if (s.type == "log-kernel-2d") {
    const Index n = s.N;
    Matrix x = draw_gaussian(2, n, s.geometry_seed, 0x90);
    // Uniform in the unit square through the normal CDF.
    x = x.unaryExpr([](double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); });
    out.points = PointSet::from_coords(x, std::make_pair(Vector::Zero(2), Vector::Ones(2)));
    const double h = 1.0 / std::sqrt(static_cast<double>(n));
    out.oracle = kernel_oracle(out.points, s.diag_shift.value_or(std::log(h) + kLogCellMean2d));
  } else if (s.type == "schur-slab-2d") {
    auto o = schur_slab_oracle(s.n, s.b);
    out.points = *o->points();
    out.oracle = std::move(o);
  } else if (s.type == "dense-file") {
    Matrix m = read_dmat(s.path);
    if (m.rows() != m.cols()) throw Error("dense-file: matrix must be square");
    const Index n = m.rows();
    Matrix x(1, n);
    for (Index i = 0; i < n; ++i) x(0, i) = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    out.points = PointSet::from_coords(x, std::make_pair(Vector::Zero(1), Vector::Ones(1)));
    out.oracle = dense_oracle(std::move(m));
  } else {
    throw ConfigError("problem.type", "unknown type '" + s.type + "'");
  }
  if (c.dim && *c.dim != out.points.dim)
    throw ConfigError("tree.dim", "does not match the problem dimension " +
                                      std::to_string(out.points.dim));
  return out;
}

struct RunResult {
  SkelFactorization f;
  Index p = 0;
  double t_sketch = 0.0;
  double t_factor = 0.0;  // reported time (sketch drawing included if requested)
};

inline RunResult run_factorization(const ExperimentConfig& c, const Problem& prob) {
  BoxTree tree = build_tree(prob.points, c.leaf_size);
  RunResult r;
  if (c.method == "srs-proxy") {
    r.f = srs_factor_proxy(*prob.oracle, tree, c.schedule(),
                           ProxyOptions{c.radius_factor, c.n_proxy, c.termination_level});
    r.t_factor = r.f.t_factor;
    return r;
  }
  r.p = c.p.value_or(auto_sample_count(tree, c.effective_kmax(), c.oversampling));
  r.p = std::min(r.p, prob.oracle->size());
  const auto t0 = std::chrono::steady_clock::now();
  SketchSet s = build_sketches(*prob.oracle, r.p, c.seed);
  r.t_sketch = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RsrsOptions opt;
  opt.termination_level = c.termination_level;
  opt.oversampling = c.oversampling;
  r.f = rsrs_factor_sketches(s, tree, c.schedule(), opt);
  r.t_factor = r.f.t_factor + (c.include_sketch_time ? r.t_sketch : 0.0);
  return r;
}

struct VerifyMetrics {
  double norm_a = 0.0;
  double relerr_est = 0.0;    // ||A - K|| / ||A||
  double errsolve_est = 0.0;  // ||I - K^-1 A||
};

inline VerifyMetrics verify_factorization(const LinearOracle& o, const SkelFactorization& f,
                                          int iters, std::uint64_t seed) {
  if (f.n != o.size()) {
    std::ostringstream os;
    os << "factorization has dimension " << f.n << " but the operator has " << o.size();
    throw ShapeError(os.str());
  }
  const Index n = o.size();
  auto col = [](const Vector& v) { return Matrix(v); };
  VerifyMetrics m;
  m.norm_a = spectral_norm_estimate([&](const Vector& v) { return Vector(o.apply(col(v))); },
                                    [&](const Vector& v) { return Vector(o.apply_adjoint(col(v))); },
                                    n, iters, seed);
  const double diff = spectral_norm_estimate(
      [&](const Vector& v) { return Vector(o.apply(col(v)) - factor_apply(f, col(v))); },
      [&](const Vector& v) {
        return Vector(o.apply_adjoint(col(v)) - factor_apply(f, col(v), true));
      },
      n, iters, seed + 1);
  m.relerr_est = m.norm_a > 0 ? diff / m.norm_a : diff;
  m.errsolve_est = spectral_norm_estimate(
      [&](const Vector& v) { return Vector(v - factor_solve(f, o.apply(col(v)))); },
      [&](const Vector& v) { return Vector(v - o.apply_adjoint(factor_solve(f, col(v), true))); },
      n, iters, seed + 2);
  return m;
}

struct BenchRow {
  Index N = 0;
  Index m = 0;
  Index p = 0;
  double atol = 0.0;
  double t_factor_s = 0.0;
  std::size_t memory_scalars = 0;
  double relerr_est = 0.0;
  double errsolve_est = 0.0;
  std::string status = "ok";
};

inline const char* kBenchHeader =
    "N,m,p,atol,t_factor_s,memory_scalars,relerr_est,errsolve_est,status";

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

inline std::string to_csv(const BenchRow& r) {
  std::ostringstream os;
  os.precision(6);
  os << r.N << ',' << r.m << ',' << r.p << ',' << r.atol << ',' << r.t_factor_s << ','
     << r.memory_scalars << ',' << r.relerr_est << ',' << r.errsolve_est << ','
     << csv_field(r.status);
  return os.str();
}

/// Factor and verify one configuration; failures become a row with a status.
inline BenchRow bench_one(const ExperimentConfig& c) {
  BenchRow row;
  row.N = c.problem.type == "schur-slab-2d" ? c.problem.n : c.problem.N;
  row.m = c.leaf_size;
  row.atol = c.atol_leaf;
  try {
    const Problem prob = make_problem(c);
    row.N = prob.oracle->size();
    const RunResult r = run_factorization(c, prob);
    row.p = r.p;
    row.t_factor_s = r.t_factor;
    row.memory_scalars = factor_memory(r.f);
    const VerifyMetrics vm = verify_factorization(*prob.oracle, r.f, c.power_iterations, c.seed);
    row.relerr_est = vm.relerr_est;
    row.errsolve_est = vm.errsolve_est;
  } catch (const std::exception& e) {
    row.status = std::string("error: ") + e.what();
  }
  return row;
}

/// One-line machine-readable summary of a factorization.
inline json factor_stats(const ExperimentConfig& c, const RunResult& r) {
  const FactorReport rep = factor_report(r.f);
  json levels = json::array();
  for (const LevelSummary& l : rep.levels)
    levels.push_back({{"level", l.level},
                      {"atol", l.atol},
                      {"boxes", l.boxes},
                      {"min_rank", l.min_rank},
                      {"max_rank", l.max_rank},
                      {"mean_rank", l.mean_rank},
                      {"untruncated", l.untruncated},
                      {"max_coupling", l.max_coupling},
                      {"seconds", l.seconds}});
  return {{"N", rep.n},
          {"method", c.method},
          {"m", c.leaf_size},
          {"p", r.p},
          {"atol", c.atol_leaf},
          {"t_factor_s", r.t_factor},
          {"t_sketch_s", r.t_sketch},
          {"memory_scalars", rep.memory},
          {"steps", rep.steps},
          {"final_skeleton", rep.final_skeleton},
          {"levels", levels}};
}

}  // namespace rsrs
