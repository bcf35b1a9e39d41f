#include "msr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "msr/em_solver.hpp"
#include "msr/gan_trainer.hpp"
#include "msr/io.hpp"
#include "msr/metrics.hpp"
#include "msr/moment_solver.hpp"

namespace msr::harness {

namespace fs = std::filesystem;

std::string Options::get_str(const std::string& key, const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

int Options::get_int(const std::string& key, int def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : std::stoi(it->second);
}

std::uint64_t Options::get_u64(const std::string& key, std::uint64_t def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : std::stoull(it->second);
}

double Options::get_double(const std::string& key, double def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : io::parse_double(it->second);
}

std::vector<double> Options::get_list(const std::string& key) const {
  std::vector<double> out;
  auto it = kv_.find(key);
  if (it == kv_.end()) return out;
  std::stringstream ss(it->second);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(io::parse_double(cell));
  return out;
}

Options load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config file not found: " + path);
  Options opts;
  std::string line, section;
  while (std::getline(f, line)) {
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = strip(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: bad line '" + line + "'");
    std::string key = strip(line.substr(0, eq));
    std::string val = strip(line.substr(eq + 1));
    opts.set(section.empty() ? key : section + "." + key, val);
  }
  return opts;
}

Signal make_signal(const std::string& kind, int d, std::uint64_t seed,
                   const std::string& file) {
  if (kind == "from-file") {
    if (file.empty()) throw std::invalid_argument("signal from-file needs a path");
    return Signal(io::read_dat(file));
  }
  if (d < 1) throw std::invalid_argument("signal: d must be >= 1");
  Vec v(d);
  if (kind == "sine") {
    for (int n = 0; n < d; ++n) v[n] = std::sin(2.0 * std::numbers::pi * n / d);
  } else if (kind == "triangle") {
    for (int n = 0; n < d; ++n) v[n] = 1.0 - std::abs(2.0 * n / d - 1.0);
  } else if (kind == "random-gaussian") {
    Rng rng = Rng::stream(seed, "signal");
    double mx = 0.0;
    for (int n = 0; n < d; ++n) {
      v[n] = rng.normal();
      mx = std::max(mx, std::abs(v[n]));
    }
    for (double& x : v) x /= mx;
  } else {
    throw std::invalid_argument("unknown signal kind: " + kind);
  }
  return Signal(std::move(v));
}

Vec make_pmf(const std::string& kind, int d, std::uint64_t seed, const Options& opts) {
  if (kind == "from-file") {
    Vec p = io::read_dat(opts.get_str("pmf.file"));
    double z = 0.0;
    for (double v : p) z += v;
    for (double& v : p) v /= z;
    return p;
  }
  Vec p(d, 0.0);
  if (kind == "uniform") {
    std::fill(p.begin(), p.end(), 1.0 / d);
  } else if (kind == "one-hot") {
    // tiny floor keeps logits finite
    std::fill(p.begin(), p.end(), 1e-12);
    p[opts.get_int("pmf.index", 0) % d] = 1.0;
    double z = 0.0;
    for (double v : p) z += v;
    for (double& v : p) v /= z;
  } else if (kind == "random-dirichlet") {
    Rng rng = Rng::stream(seed, "pmf");
    const double alpha = opts.get_double("pmf.alpha", 1.0);
    double z = 0.0;
    for (int s = 0; s < d; ++s) {
      // Gamma(alpha) via Marsaglia-Tsang (alpha boosted below 1)
      double a = alpha < 1 ? alpha + 1 : alpha;
      double dd = a - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * dd), g;
      for (;;) {
        double x = rng.normal(), vv = std::pow(1.0 + c * x, 3);
        if (vv <= 0) continue;
        double u = rng.uniform01();
        if (std::log(u) < 0.5 * x * x + dd - dd * vv + dd * std::log(vv)) {
          g = dd * vv;
          break;
        }
      }
      if (alpha < 1) g *= std::pow(rng.uniform01(), 1.0 / alpha);
      p[s] = std::max(g, 1e-12);
      z += p[s];
    }
    for (double& v : p) v /= z;
  } else if (kind == "bimodal") {
    const double mu1 = opts.get_double("pmf.mu1", d / 4.0);
    const double mu2 = opts.get_double("pmf.mu2", 3.0 * d / 4.0);
    const double s1 = opts.get_double("pmf.s1", d / 6.0);
    const double s2 = opts.get_double("pmf.s2", d / 5.0);
    const double w = opts.get_double("pmf.w", 0.55);
    double z = 0.0;
    for (int s = 0; s < d; ++s) {
      auto wrapped = [d](double a, double mu) {
        double dist = std::abs(a - mu);
        return std::min(dist, d - dist);
      };
      double d1 = wrapped(s, mu1), d2 = wrapped(s, mu2);
      p[s] = w * std::exp(-0.5 * d1 * d1 / (s1 * s1)) +
             (1.0 - w) * std::exp(-0.5 * d2 * d2 / (s2 * s2));
      z += p[s];
    }
    for (double& v : p) v /= z;
  } else {
    throw std::invalid_argument("unknown pmf kind: " + kind);
  }
  return p;
}

namespace {

struct Truth {
  bool present = false;
  Signal x;
  Vec p;
};

struct InitResult {
  double rel_error = std::numeric_limits<double>::quiet_NaN();
  double tv = std::numeric_limits<double>::quiet_NaN();
  double wallclock_s = 0.0;
  bool failed = false;
};

GanConfig gan_config_from(const Options& opts, const MeasurementSet& ms,
                          std::uint64_t seed) {
  GanConfig cfg;
  cfg.B = opts.get_int("gan.B", cfg.B);
  cfg.n_disc = opts.get_int("gan.n_disc", cfg.n_disc);
  cfg.lambda = opts.get_double("gan.lambda", cfg.lambda);
  cfg.tau = opts.get_double("gan.tau", cfg.tau);
  cfg.alpha_phi = opts.get_double("gan.alpha_phi", cfg.alpha_phi);
  cfg.alpha_x = opts.get_double("gan.alpha_x", cfg.alpha_x);
  cfg.alpha_p = opts.get_double("gan.alpha_p", cfg.alpha_p);
  cfg.decay_factor = opts.get_double("gan.decay_factor", cfg.decay_factor);
  cfg.decay_every_phi = opts.get_int("gan.decay_every_phi", cfg.decay_every_phi);
  cfg.decay_every_x = opts.get_int("gan.decay_every_x", cfg.decay_every_x);
  cfg.decay_every_p = opts.get_int("gan.decay_every_p", cfg.decay_every_p);
  cfg.momentum = opts.get_double("gan.momentum", cfg.momentum);
  cfg.total_iters = opts.get_int("gan.total_iters", cfg.total_iters);
  cfg.ell = opts.get_int("gan.ell", cfg.ell);
  cfg.eval_every = opts.get_int("gan.eval_every", cfg.eval_every);
  cfg.x_init_std = opts.get_double("gan.x_init_std", cfg.x_init_std);
  cfg.mode = gan_mode_from_string(opts.get_str("mode", "joint"));
  cfg.sigma = ms.sigma;
  cfg.seed = seed;
  return cfg;
}

void write_kv_for(const std::string& dir, const Options& opts, const char* solver,
                  std::uint64_t seed) {
  io::KvMap kv{{"solver", solver}, {"seed", std::to_string(seed)}};
  for (const auto& [k, v] : opts.all()) kv.emplace_back(k, v);
  io::write_kv(dir + "/config.used", kv);
}

InitResult run_one_init(const std::string& solver, const Options& opts,
                        const MeasurementSet& ms, std::uint64_t seed,
                        const std::string& dir, const Truth& truth) {
  fs::create_directories(dir);
  InitResult out;
  const auto t0 = std::chrono::steady_clock::now();

  if (solver == "gan") {
    GanConfig cfg = gan_config_from(opts, ms, seed);
    GroundTruth gt;
    const GroundTruth* gt_ptr = nullptr;
    if (truth.present) {
      gt.x = truth.x;
      gt.p = truth.p;
      gt_ptr = &gt;
    }
    const Vec* known = nullptr;
    if (cfg.mode == GanMode::KnownPmf) {
      if (!truth.present)
        throw std::invalid_argument("known-pmf mode requires --p-true ground truth");
      known = &truth.p;
    }
    TrainResult res = train(cfg, ms, known, gt_ptr);
    write_run_outputs(dir, cfg, res);
    {
      std::ofstream cu(dir + "/config.used", std::ios::app);
      for (const auto& [k, v] : opts.all()) cu << k << "=" << v << "\n";
    }
    if (truth.present) {
      out.rel_error = rel_error(truth.x, res.x_hat).first;
      out.tv = tv_distance(truth.p, res.p_hat.probs()).first;
    }
  } else if (solver == "em") {
    Rng rng = Rng::stream(seed, "init");
    Signal x0;
    x0.values.assign(ms.d, 0.0);
    const double std0 = opts.get_double("gan.x_init_std", 1.0);
    for (double& v : x0.values) v = std0 * rng.normal();
    EmOptions eopts;
    eopts.max_iters = opts.get_int("em.max_iters", eopts.max_iters);
    eopts.tol = opts.get_double("em.tol", eopts.tol);
    eopts.sigma_floor = opts.get_double("em.sigma_floor", eopts.sigma_floor);
    EmResult res = run_em(ms, x0, SegmentPmf::uniform(ms.d), ms.sigma, eopts);
    write_kv_for(dir, opts, "em", seed);
    io::write_dat(dir + "/x_hat.dat", res.x_hat.values);
    io::write_dat(dir + "/p_hat.dat", res.p_hat.probs());
    std::ofstream tr(dir + "/ll_trace.csv");
    tr << "iter,log_likelihood\n";
    for (size_t i = 0; i < res.ll_trace.size(); ++i)
      tr << i << "," << io::format_double(res.ll_trace[i]) << "\n";
    if (truth.present) {
      out.rel_error = rel_error(truth.x, res.x_hat).first;
      out.tv = tv_distance(truth.p, res.p_hat.probs()).first;
    }
  } else if (solver == "sif") {
    Rng rng = Rng::stream(seed, "init");
    Signal x0;
    x0.values.assign(ms.d, 0.0);
    const double std0 = opts.get_double("gan.x_init_std", 1.0);
    for (double& v : x0.values) v = std0 * rng.normal();
    SifOptions sopts;
    sopts.weights = MomentWeights::scaled(ms.m());
    if (opts.has("sif.w1")) sopts.weights.w1 = opts.get_double("sif.w1", 1.0);
    if (opts.has("sif.w2")) sopts.weights.w2 = opts.get_double("sif.w2", 1.0);
    if (opts.has("sif.w3")) sopts.weights.w3 = opts.get_double("sif.w3", 1.0);
    sopts.max_iters = opts.get_int("sif.max_iters", sopts.max_iters);
    sopts.grad_tol = opts.get_double("sif.grad_tol", sopts.grad_tol);
    SifResult res = run_sif(ms, x0, SegmentPmf::uniform(ms.d), ms.sigma, sopts);
    write_kv_for(dir, opts, "sif", seed);
    io::write_dat(dir + "/x_hat.dat", res.x_hat.values);
    io::write_dat(dir + "/p_hat.dat", res.p_hat.probs());
    std::ofstream tr(dir + "/loss_trace.csv");
    tr << "iter,loss\n";
    for (size_t i = 0; i < res.loss_trace.size(); ++i)
      tr << i << "," << io::format_double(res.loss_trace[i]) << "\n";
    if (truth.present) {
      out.rel_error = rel_error(truth.x, res.x_hat).first;
      out.tv = tv_distance(truth.p, res.p_hat.probs()).first;
    }
  } else {
    throw std::invalid_argument("unknown solver: " + solver);
  }
  out.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

Truth load_truth(const Options& opts) {
  Truth t;
  if (opts.has("x_true") && opts.has("p_true")) {
    t.x = Signal(io::read_dat(opts.get_str("x_true")));
    t.p = io::read_dat(opts.get_str("p_true"));
    t.present = true;
  }
  return t;
}

std::string csv_cell(double v) {
  return std::isfinite(v) ? io::format_double(v) : std::string();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int cmd_generate(const Options& opts) {
  const std::string out = opts.get_str("out");
  if (out.empty()) throw std::invalid_argument("generate: --out is required");
  const int d = opts.get_int("signal.d", 64);
  const int m = opts.get_int("data.m", 24);
  const int N = opts.get_int("data.N", 30000);
  const std::uint64_t seed = opts.get_u64("seed", 0);
  if (m < 1 || m > d) throw std::invalid_argument("generate: need 1 <= m <= d");

  Signal x = make_signal(opts.get_str("signal.kind", "sine"), d, seed,
                         opts.get_str("signal.file"));
  Vec p = make_pmf(opts.get_str("pmf.kind", "uniform"), x.d(), seed, opts);
  SegmentPmf pmf = SegmentPmf::from_probs(p);

  double sigma = opts.get_double("data.sigma", -1.0);
  const double snr = opts.get_double("data.snr",
                                     std::numeric_limits<double>::infinity());
  if (sigma < 0) sigma = sigma_from_snr(x, pmf, m, snr);

  MeasurementSet ms = synthesize(x, pmf, m, sigma, N, seed);
  ms.snr = snr;

  fs::create_directories(out);
  write_measurements(out + "/measurements.txt", ms);
  io::write_dat(out + "/x_true.dat", x.values);
  io::write_dat(out + "/p_true.dat", p);
  write_kv_for(out, opts, "generate", seed);
  const double realized = snr_of(ms, x, pmf);
  std::printf("wrote %d measurements (d=%d m=%d sigma=%s), realized SNR=%s\n", N, d, m,
              io::format_double(sigma).c_str(), io::format_double(realized).c_str());
  return 0;
}

int cmd_solve(const Options& opts) {
  const std::string out = opts.get_str("out");
  const std::string data = opts.get_str("measurements");
  if (out.empty() || data.empty())
    throw std::invalid_argument("solve: --out and --measurements are required");
  MeasurementSet ms = read_measurements(data);
  const Truth truth = load_truth(opts);
  const std::string solver = opts.get_str("solver", "gan");
  const int n_inits = opts.get_int("n_inits", 10);
  const std::uint64_t seed = opts.get_u64("seed", 0);

  fs::create_directories(out);
  std::ofstream summary(out + "/summary.csv");
  summary << "init,rel_error,tv,wallclock_s\n";
  int failures = 0;
  for (int i = 0; i < n_inits; ++i) {
    InitResult r;
    try {
      r = run_one_init(solver, opts, ms, seed + i, out + "/init_" + std::to_string(i), truth);
    } catch (const std::invalid_argument&) {
      throw;  // configuration problems abort the whole command
    } catch (const std::exception& e) {
      std::fprintf(stderr, "init %d failed: %s\n", i, e.what());
      r.failed = true;
      ++failures;
    }
    summary << i << "," << csv_cell(r.rel_error) << "," << csv_cell(r.tv) << ","
            << io::format_double(r.wallclock_s) << "\n";
  }
  summary.close();
  return failures == n_inits ? 2 : 0;
}

int cmd_sweep(const Options& opts) {
  const std::string out = opts.get_str("out");
  if (out.empty()) throw std::invalid_argument("sweep: --out is required");
  const std::string kind = opts.get_str("sweep.kind", "m");
  if (kind != "m" && kind != "snr")
    throw std::invalid_argument("sweep: kind must be 'm' or 'snr'");
  const std::vector<double> values = opts.get_list("sweep.values");
  if (values.empty()) throw std::invalid_argument("sweep: sweep.values is required");
  std::vector<std::string> solvers;
  {
    std::stringstream ss(opts.get_str("sweep.solvers", "gan,em,sif"));
    std::string cell;
    while (std::getline(ss, cell, ',')) solvers.push_back(cell);
  }
  const int d = opts.get_int("signal.d", 60);
  const int n_inits = opts.get_int("n_inits", 10);
  const std::uint64_t seed = opts.get_u64("seed", 0);

  Signal x = make_signal(opts.get_str("signal.kind", "random-gaussian"), d, seed,
                         opts.get_str("signal.file"));
  Vec p = make_pmf(opts.get_str("pmf.kind", "uniform"), x.d(), seed, opts);
  SegmentPmf pmf = SegmentPmf::from_probs(p);
  Truth truth;
  truth.present = true;
  truth.x = x;
  truth.p = p;

  fs::create_directories(out);
  io::write_dat(out + "/x_true.dat", x.values);
  io::write_dat(out + "/p_true.dat", p);

  struct Row {
    double point;
    std::string solver;
    int init;
    double rel_error, tv, wall;
  };
  std::vector<Row> rows;

  for (size_t pi = 0; pi < values.size(); ++pi) {
    const double val = values[pi];
    std::ostringstream pname;
    pname << "point_" << kind << "_" << val;
    const std::string pdir = out + "/" + pname.str();
    const std::string marker = pdir + "/point.done";
    const std::string pcsv = pdir + "/point.csv";

    if (fs::exists(marker)) {
      // resume: re-read completed point instead of recomputing it
      std::ifstream f(pcsv);
      std::string line;
      std::getline(f, line);
      while (std::getline(f, line)) {
        std::stringstream ss(line);
        Row r;
        std::string cell;
        std::getline(ss, cell, ',');
        r.point = io::parse_double(cell);
        std::getline(ss, r.solver, ',');
        std::getline(ss, cell, ',');
        r.init = std::stoi(cell);
        std::getline(ss, cell, ',');
        r.rel_error = cell.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : io::parse_double(cell);
        std::getline(ss, cell, ',');
        r.tv = cell.empty() ? std::numeric_limits<double>::quiet_NaN()
                            : io::parse_double(cell);
        std::getline(ss, cell, ',');
        r.wall = cell.empty() ? 0.0 : io::parse_double(cell);
        rows.push_back(r);
      }
      continue;
    }

    int m;
    double sigma;
    if (kind == "m") {
      m = static_cast<int>(val);
      sigma = opts.get_double("data.sigma", 0.01);
    } else {
      m = opts.get_int("data.m", 18);
      sigma = sigma_from_snr(x, pmf, m, std::pow(10.0, val));
    }
    if (m < 1 || m > d) throw std::invalid_argument("sweep: m out of range");
    const int N = opts.get_int("data.N", 20000);
    MeasurementSet ms = synthesize(x, pmf, m, sigma, N, seed + 7919 * (pi + 1));
    ms.snr = snr_of(ms, x, pmf);

    fs::create_directories(pdir);
    std::ofstream pf(pcsv);
    pf << "point,solver,init,rel_error,tv,wallclock_s\n";
    for (const std::string& solver : solvers) {
      for (int i = 0; i < n_inits; ++i) {
        InitResult r;
        try {
          r = run_one_init(solver, opts, ms, seed + i,
                           pdir + "/" + solver + "_init_" + std::to_string(i), truth);
        } catch (const std::exception& e) {
          std::fprintf(stderr, "sweep point %s solver %s init %d failed: %s\n",
                       pname.str().c_str(), solver.c_str(), i, e.what());
          r.failed = true;
        }
        pf << io::format_double(val) << "," << solver << "," << i << ","
           << csv_cell(r.rel_error) << "," << csv_cell(r.tv) << ","
           << io::format_double(r.wallclock_s) << "\n";
        rows.push_back({val, solver, i, r.rel_error, r.tv, r.wallclock_s});
      }
    }
    pf.close();
    std::ofstream(marker) << "done\n";
  }

  std::ofstream sf(out + "/sweep.csv");
  sf << "point,solver,init,rel_error,tv,wallclock_s\n";
  for (const Row& r : rows)
    sf << io::format_double(r.point) << "," << r.solver << "," << r.init << ","
       << csv_cell(r.rel_error) << "," << csv_cell(r.tv) << ","
       << io::format_double(r.wall) << "\n";

  // per-solver curves: success rate for m sweeps, median rel-error for SNR sweeps
  for (const std::string& solver : solvers) {
    std::ofstream cf(out + "/sweep_" + solver + ".dat");
    cf << "x,y\n";
    for (double val : values) {
      std::vector<double> errs;
      for (const Row& r : rows)
        if (r.solver == solver && r.point == val)
          errs.push_back(std::isfinite(r.rel_error)
                             ? r.rel_error
                             : std::numeric_limits<double>::infinity());
      double y = kind == "m" ? success_rate(errs) : median(errs);
      cf << io::format_double(val) << "," << io::format_double(y) << "\n";
    }
  }
  return 0;
}

int cmd_eval(const Options& opts) {
  const std::string run = opts.get_str("run");
  if (run.empty()) throw std::invalid_argument("eval: --run is required");
  if (!opts.has("x_true") || !opts.has("p_true"))
    throw std::invalid_argument("eval: --x-true and --p-true are required");
  Signal x_true(io::read_dat(opts.get_str("x_true")));
  Vec p_true = io::read_dat(opts.get_str("p_true"));
  Signal x_hat(io::read_dat(run + "/x_hat.dat"));
  Vec p_hat = io::read_dat(run + "/p_hat.dat");
  EvalReport r = evaluate(x_true, p_true, x_hat, p_hat);
  std::ofstream f(run + "/eval.csv");
  f << "rel_error,tv,aligning_shift_x,aligning_shift_p,tv_at_signal_shift\n";
  f << io::format_double(r.rel_error) << "," << io::format_double(r.tv) << ","
    << r.aligning_shift_x << "," << r.aligning_shift_p << ","
    << io::format_double(r.tv_at_signal_shift) << "\n";
  std::printf("rel_error=%s tv=%s shift_x=%d shift_p=%d\n",
              io::format_double(r.rel_error).c_str(), io::format_double(r.tv).c_str(),
              r.aligning_shift_x, r.aligning_shift_p);
  return 0;
}

}  // namespace msr::harness
