#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "msr/harness.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using msr::harness::Options;

// Flags shared by every subcommand; --set gives every config key a CLI twin.
struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  long long seed = -1;
  std::string out;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "config file ([section] key = value)");
  cmd->add_option("--set", args.overrides, "override key=value (repeatable)");
  cmd->add_option("--seed", args.seed, "RNG seed");
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--threads", args.threads, "worker threads (default $MSR_THREADS)");
}

Options build_options(const CommonArgs& args) {
  Options opts;
  if (!args.config.empty()) opts = msr::harness::load_config_file(args.config);
  for (const std::string& ov : args.overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + ov + "'");
    opts.set(ov.substr(0, eq), ov.substr(eq + 1));
  }
  if (args.seed >= 0) opts.set("seed", std::to_string(args.seed));
  if (!args.out.empty()) opts.set("out", args.out);

  int threads = args.threads;
  if (threads <= 0) {
    if (const char* env = std::getenv("MSR_THREADS")) threads = std::atoi(env);
  }
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif
  return opts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-segment reconstruction toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, solve_args, sweep_args, eval_args;

  auto* gen = app.add_subcommand("generate", "synthesize a measurement set");
  add_common(gen, gen_args);
  std::string sig_kind, pmf_kind;
  int gen_d = 0, gen_m = 0, gen_n = 0;
  std::string gen_snr;
  gen->add_option("--signal", sig_kind, "sine|triangle|random-gaussian|from-file:<path>");
  gen->add_option("--pmf", pmf_kind, "uniform|one-hot|random-dirichlet|bimodal|from-file:<path>");
  gen->add_option("--d", gen_d, "signal length");
  gen->add_option("--m", gen_m, "segment length");
  gen->add_option("--N", gen_n, "number of measurements");
  gen->add_option("--snr", gen_snr, "target SNR (number or 'inf')");

  auto* solve = app.add_subcommand("solve", "run a solver over n_inits initializations");
  add_common(solve, solve_args);
  std::string solver, mode, measurements, x_true, p_true;
  int n_inits = 0;
  solve->add_option("--solver", solver, "gan|em|sif");
  solve->add_option("--mode", mode, "joint|known-pmf|fixed-uniform-pmf (gan only)");
  solve->add_option("--measurements", measurements, "measurement file");
  solve->add_option("--x-true", x_true, "ground-truth signal .dat (diagnostics)");
  solve->add_option("--p-true", p_true, "ground-truth PMF .dat (diagnostics)");
  solve->add_option("--n-inits", n_inits, "independent initializations");

  auto* sweep = app.add_subcommand("sweep", "sweep segment length or SNR");
  add_common(sweep, sweep_args);
  std::string sweep_kind, sweep_values, sweep_solvers;
  sweep->add_option("--kind", sweep_kind, "m|snr");
  sweep->add_option("--values", sweep_values, "comma-separated grid (log10 SNR for snr sweeps)");
  sweep->add_option("--solvers", sweep_solvers, "comma-separated solver list");

  auto* eval = app.add_subcommand("eval", "evaluate a run directory against ground truth");
  add_common(eval, eval_args);
  std::string eval_run, eval_x, eval_p;
  eval->add_option("--run", eval_run, "run directory with x_hat.dat/p_hat.dat");
  eval->add_option("--x-true", eval_x, "ground-truth signal .dat");
  eval->add_option("--p-true", eval_p, "ground-truth PMF .dat");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  auto split_file_kind = [](Options& opts, const std::string& spec,
                            const std::string& kind_key, const std::string& file_key) {
    if (spec.empty()) return;
    if (spec.rfind("from-file:", 0) == 0) {
      opts.set(kind_key, "from-file");
      opts.set(file_key, spec.substr(10));
    } else {
      opts.set(kind_key, spec);
    }
  };

  try {
    if (gen->parsed()) {
      Options opts = build_options(gen_args);
      split_file_kind(opts, sig_kind, "signal.kind", "signal.file");
      split_file_kind(opts, pmf_kind, "pmf.kind", "pmf.file");
      if (gen_d > 0) opts.set("signal.d", std::to_string(gen_d));
      if (gen_m > 0) opts.set("data.m", std::to_string(gen_m));
      if (gen_n > 0) opts.set("data.N", std::to_string(gen_n));
      if (!gen_snr.empty()) opts.set("data.snr", gen_snr);
      return msr::harness::cmd_generate(opts);
    }
    if (solve->parsed()) {
      Options opts = build_options(solve_args);
      if (!solver.empty()) opts.set("solver", solver);
      if (!mode.empty()) opts.set("mode", mode);
      if (!measurements.empty()) opts.set("measurements", measurements);
      if (!x_true.empty()) opts.set("x_true", x_true);
      if (!p_true.empty()) opts.set("p_true", p_true);
      if (n_inits > 0) opts.set("n_inits", std::to_string(n_inits));
      return msr::harness::cmd_solve(opts);
    }
    if (sweep->parsed()) {
      Options opts = build_options(sweep_args);
      if (!sweep_kind.empty()) opts.set("sweep.kind", sweep_kind);
      if (!sweep_values.empty()) opts.set("sweep.values", sweep_values);
      if (!sweep_solvers.empty()) opts.set("sweep.solvers", sweep_solvers);
      return msr::harness::cmd_sweep(opts);
    }
    if (eval->parsed()) {
      Options opts = build_options(eval_args);
      if (!eval_run.empty()) opts.set("run", eval_run);
      if (!eval_x.empty()) opts.set("x_true", eval_x);
      if (!eval_p.empty()) opts.set("p_true", eval_p);
      return msr::harness::cmd_eval(opts);
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return 2;
  }
  return 1;
}
