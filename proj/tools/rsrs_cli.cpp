// rsrs: factor, verify, bench and selftest verbs over JSON experiment configs.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

#include "rsrs/all.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using rsrs::json;

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const rsrs::InsufficientSamplesError*>(&e)) return "insufficient_samples";
  if (dynamic_cast<const rsrs::SingularError*>(&e)) return "singular";
  if (dynamic_cast<const rsrs::UnsupportedOracleError*>(&e)) return "unsupported_oracle";
  if (dynamic_cast<const rsrs::FormatError*>(&e)) return "format";
  if (dynamic_cast<const rsrs::ShapeError*>(&e)) return "shape";
  return "runtime";
}

struct Args {
  std::string config;
  std::string out;
  std::string csv;
  std::string factorization;
  std::optional<std::uint64_t> seed;
};

rsrs::ExperimentConfig load(const Args& a) {
  rsrs::ExperimentConfig c = rsrs::load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  return c;
}

int cmd_factor(const Args& a) {
  const rsrs::ExperimentConfig c = load(a);
  const rsrs::Problem prob = rsrs::make_problem(c);
  const rsrs::RunResult r = rsrs::run_factorization(c, prob);
  if (!a.out.empty()) rsrs::save_factorization(a.out, r.f);
  std::cout << rsrs::factor_stats(c, r).dump() << "\n";
  return 0;
}

int cmd_verify(const Args& a) {
  const rsrs::ExperimentConfig c = load(a);
  const rsrs::Problem prob = rsrs::make_problem(c);
  const rsrs::SkelFactorization f = rsrs::load_factorization(a.factorization);
  const rsrs::VerifyMetrics m =
      rsrs::verify_factorization(*prob.oracle, f, c.power_iterations, c.seed);
  std::cout << json{{"N", f.n},
                    {"norm_a_est", m.norm_a},
                    {"relerr_est", m.relerr_est},
                    {"errsolve_est", m.errsolve_est},
                    {"memory_scalars", rsrs::factor_memory(f)}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_bench(const Args& a) {
  const rsrs::ExperimentConfig c = load(a);
  std::ofstream file;
  if (!a.csv.empty()) {
    file.open(a.csv);
    if (!file) throw rsrs::Error("cannot open " + a.csv + " for writing");
  }
  std::ostream& os = a.csv.empty() ? std::cout : file;
  os << rsrs::kBenchHeader << "\n" << std::flush;
  for (rsrs::Index n : c.sweep_N) {
    os << rsrs::to_csv(rsrs::bench_one(rsrs::with_size(c, n))) << "\n" << std::flush;
  }
  return 0;
}

int cmd_selftest(const Args& a) {
  const rsrs::ExperimentConfig c = load(a);
  const rsrs::Problem prob = rsrs::make_problem(c);
  const rsrs::SelftestReport r = rsrs::oracle_selftest(*prob.oracle, c.seed, c.probes);
  std::cout << json{{"passed", r.passed},
                    {"linearity_residual", r.linearity_residual},
                    {"adjoint_residual", r.adjoint_residual},
                    {"probes", r.probes}}
                   .dump()
            << "\n";
  return r.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomized strong recursive skeletonization"};
  app.require_subcommand(1);
  Args a;
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "JSON experiment description")->required();
    sub->add_option("--seed", seed, "overrides the config seed")->each([&](const std::string&) {
      a.seed = seed;
    });
  };
  CLI::App* factor = app.add_subcommand("factor", "factorize and print a stats record");
  common(factor);
  factor->add_option("--out", a.out, "write the factorization container here");
  CLI::App* verify = app.add_subcommand("verify", "estimate relerr and errsolve");
  common(verify);
  verify->add_option("--factorization", a.factorization, "factorization container")->required();
  CLI::App* bench = app.add_subcommand("bench", "factor and verify over sweep.N, emit CSV");
  common(bench);
  bench->add_option("--csv", a.csv, "CSV output path (default stdout)");
  CLI::App* selftest = app.add_subcommand("selftest", "linearity and adjoint probes");
  common(selftest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*factor) return cmd_factor(a);
    if (*verify) return cmd_verify(a);
    if (*bench) return cmd_bench(a);
    return cmd_selftest(a);
  } catch (const rsrs::ConfigError& e) {
    std::cerr << json{{"error", "config"}, {"field", e.field()}, {"message", e.what()}}.dump()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}
