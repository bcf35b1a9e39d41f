#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "msr/gan_trainer.hpp"
#include "msr/metrics.hpp"

using namespace msr;

namespace {

CriticParams random_eval_critic(int ell, int m, Rng& rng, double scale = 0.6) {
  CriticParams p = init_critic(ell, m, rng);
  for (double& v : p.W1.a) v = scale * rng.normal();
  for (double& v : p.W2.a) v = scale * rng.normal();
  for (double& v : p.w3.a) v = scale * rng.normal();
  for (double& v : p.b1) v = 0.1 * rng.normal();
  for (double& v : p.b2) v = 0.1 * rng.normal();
  p.use_identity_normalization();
  return p;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("generator_loss gradients match finite differences") {
  Rng rng(71);
  int instances = 0;
  for (int trial = 0; trial < 8; ++trial) {
    int d = 5 + rng.uniform_int(4);
    int m = 3 + rng.uniform_int(d - 3);
    int B = 4;
    double tau = 0.5;
    CriticParams critic = random_eval_critic(10, m, rng);

    Vec xv(d), lv(d);
    for (double& v : xv) v = rng.normal();
    for (double& v : lv) v = 0.5 * rng.normal();
    Signal x(xv);
    SegmentPmf p(lv);

    Mat g(B, d);
    for (double& v : g.a) v = gumbel_sample(rng);
    Mat q = gumbel_softmax_from_noise(p, tau, g);
    Mat eps(B, m);
    for (double& v : eps.a) v = 0.1 * rng.normal();

    GenEval ev = generator_loss(critic, x, q, &eps, tau);
    double h = 1e-6;

    for (int i = 0; i < d; ++i) {
      Signal xp = x, xm = x;
      xp.values[i] += h;
      xm.values[i] -= h;
      double fd = (generator_loss(critic, xp, q, &eps, tau).loss -
                   generator_loss(critic, xm, q, &eps, tau).loss) / (2 * h);
      CHECK(ev.grad_x[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));

      // logits gradient: reparameterize q through the frozen Gumbel noise
      SegmentPmf pp = p, pm = p;
      pp.logits[i] += h;
      pm.logits[i] -= h;
      Mat qp = gumbel_softmax_from_noise(pp, tau, g);
      Mat qm = gumbel_softmax_from_noise(pm, tau, g);
      fd = (generator_loss(critic, x, qp, &eps, tau).loss -
            generator_loss(critic, x, qm, &eps, tau).loss) / (2 * h);
      CHECK(ev.grad_logits[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
      instances += 2;
    }
  }
  CHECK(instances > 50);
}

TEST_CASE("noiseless generator path equals the explicit zero-noise path") {
  Rng rng(81);
  int d = 8, m = 5, B = 6;
  CriticParams critic = random_eval_critic(12, m, rng);
  Vec xv(d), lv(d);
  for (double& v : xv) v = rng.normal();
  for (double& v : lv) v = 0.3 * rng.normal();
  Signal x(xv);
  Mat g(B, d);
  for (double& v : g.a) v = gumbel_sample(rng);
  Mat q = gumbel_softmax_from_noise(SegmentPmf(lv), 0.5, g);

  Mat zero_eps(B, m);
  GenEval fast = generator_loss(critic, x, q, nullptr, 0.5);
  GenEval slow = generator_loss(critic, x, q, &zero_eps, 0.5);
  CHECK(fast.loss == doctest::Approx(slow.loss).epsilon(1e-13));
  for (int i = 0; i < d; ++i) {
    CHECK(fast.grad_x[i] == doctest::Approx(slow.grad_x[i]).epsilon(1e-12));
    CHECK(fast.grad_logits[i] == doctest::Approx(slow.grad_logits[i]).epsilon(1e-12));
  }
}

TEST_CASE("config validation rejects bad settings") {
  GanConfig cfg;
  cfg.B = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = GanConfig{};
  cfg.ell = 3;  // ell must be even for the ell/2 layer
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = GanConfig{};
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_NOTHROW(GanConfig{}.validate());
}

TEST_CASE("gan mode names round-trip") {
  for (GanMode m : {GanMode::Joint, GanMode::KnownPmf, GanMode::FixedUniformPmf})
    CHECK(gan_mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(gan_mode_from_string("nonsense"), std::invalid_argument);
}

TEST_CASE("critic_step consumes real rows without replacement per epoch") {
  Rng rng(91);
  int d = 8, m = 5, N = 64;
  Vec xv(d);
  for (double& v : xv) v = rng.normal();
  MeasurementSet ms = synthesize(Signal(xv), SegmentPmf::uniform(d), m, 0.1, N, 3);
  GanConfig cfg;
  cfg.B = 16;
  cfg.ell = 8;
  cfg.seed = 11;
  cfg.total_iters = 10;
  TrainerState st = init_trainer(cfg, ms);
  // one epoch = N/B = 4 critic steps; the shuffled permutation must be a
  // permutation and the cursor must wrap with a reshuffle
  std::vector<int> seen = st.perm;
  std::sort(seen.begin(), seen.end());
  for (int i = 0; i < N; ++i) CHECK(seen[i] == i);
  for (int k = 0; k < 4; ++k) critic_step(st);
  CHECK(st.cursor % N == 0);
}

TEST_CASE("training is deterministic in the seed") {
  Rng rng(101);
  int d = 8, m = 5;
  Vec xv(d);
  for (double& v : xv) v = rng.normal();
  Signal x(xv);
  MeasurementSet ms = synthesize(x, SegmentPmf::uniform(d), m, 0.05, 256, 17);

  GanConfig cfg;
  cfg.B = 32;
  cfg.ell = 12;
  cfg.total_iters = 25;
  cfg.eval_every = 10;
  cfg.seed = 5;
  cfg.mode = GanMode::Joint;

  TrainResult a = train(cfg, ms);
  TrainResult b = train(cfg, ms);
  CHECK(a.x_hat.values == b.x_hat.values);
  CHECK(a.p_hat.logits == b.p_hat.logits);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].critic_loss == b.history[i].critic_loss);
    CHECK(a.history[i].gen_loss == b.history[i].gen_loss);
  }

  cfg.seed = 6;
  TrainResult c = train(cfg, ms);
  CHECK(a.x_hat.values != c.x_hat.values);
}

TEST_CASE("lr schedule decays at the configured intervals") {
  Rng rng(111);
  Vec xv(6, 1.0);
  MeasurementSet ms = synthesize(Signal(xv), SegmentPmf::uniform(6), 4, 0.1, 64, 1);
  GanConfig cfg;
  cfg.B = 16;
  cfg.ell = 8;
  cfg.decay_every_phi = 4;
  cfg.decay_every_x = 4;
  cfg.decay_every_p = 6;
  TrainerState st = init_trainer(cfg, ms);
  double phi0 = st.lr_phi, x0 = st.lr_x, p0 = st.lr_p;
  for (st.iteration = 1; st.iteration <= 12; ++st.iteration) lr_schedule(st);
  CHECK(st.lr_phi == doctest::Approx(phi0 * std::pow(cfg.decay_factor, 3)).epsilon(1e-12));
  CHECK(st.lr_x == doctest::Approx(x0 * std::pow(cfg.decay_factor, 3)).epsilon(1e-12));
  CHECK(st.lr_p == doctest::Approx(p0 * std::pow(cfg.decay_factor, 2)).epsilon(1e-12));
}

TEST_CASE("run outputs are byte-identical across same-seed reruns") {
  namespace fs = std::filesystem;
  Rng rng(121);
  int d = 8, m = 5;
  Vec xv(d);
  for (double& v : xv) v = rng.normal();
  MeasurementSet ms = synthesize(Signal(xv), SegmentPmf::uniform(d), m, 0.05, 128, 5);

  GanConfig cfg;
  cfg.B = 16;
  cfg.ell = 8;
  cfg.total_iters = 12;
  cfg.eval_every = 4;
  cfg.seed = 7;

  fs::path base = fs::temp_directory_path() / "msr_test_trainer";
  fs::remove_all(base);
  for (int run = 0; run < 2; ++run) {
    fs::path dir = base / ("run" + std::to_string(run));
    fs::create_directories(dir);
    TrainResult r = train(cfg, ms);
    write_run_outputs(dir.string(), cfg, r);
  }
  for (const char* f : {"history.csv", "x_hat.dat", "p_hat.dat", "config.used"})
    CHECK(slurp((base / "run0" / f).string()) == slurp((base / "run1" / f).string()));
  fs::remove_all(base);
}

TEST_CASE("known-pmf training shrinks the reconstruction error on a small instance") {
  // Desk-scale smoke run: d=16 noiseless sine, modest critic and batch.
  int d = 16, m = 10;
  Vec xv(d);
  for (int n = 0; n < d; ++n) xv[n] = std::sin(2 * 3.141592653589793 * n / d);
  Signal x(xv);
  Vec p_true(d, 1.0 / d);
  MeasurementSet ms = synthesize(x, SegmentPmf::uniform(d), m, 0.0, 4000, 42);

  GanConfig cfg;
  cfg.B = 64;
  cfg.ell = 32;
  cfg.total_iters = 3000;
  cfg.eval_every = 250;
  cfg.seed = 3;
  cfg.mode = GanMode::KnownPmf;
  cfg.lambda = 0.1;
  cfg.alpha_phi = 1e-3;
  cfg.alpha_x = 3e-4;

  GroundTruth gt{x, p_true};
  TrainResult r = train(cfg, ms, &p_true, &gt);
  auto [err, s] = rel_error(x, r.x_hat);
  // rel_error/tv are only populated on the eval grid; find the first eval row.
  double first = std::numeric_limits<double>::quiet_NaN();
  for (const HistoryRow& row : r.history)
    if (std::isfinite(row.rel_error)) { first = row.rel_error; break; }
  CHECK(err < 0.05);
  CHECK(err < first);
}
