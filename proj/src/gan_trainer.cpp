#include "msr/gan_trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "msr/io.hpp"
#include "msr/metrics.hpp"

namespace msr {

std::string to_string(GanMode mode) {
  switch (mode) {
    case GanMode::Joint: return "joint";
    case GanMode::KnownPmf: return "known-pmf";
    case GanMode::FixedUniformPmf: return "fixed-uniform-pmf";
  }
  return "joint";
}

GanMode gan_mode_from_string(const std::string& s) {
  if (s == "joint") return GanMode::Joint;
  if (s == "known-pmf") return GanMode::KnownPmf;
  if (s == "fixed-uniform-pmf") return GanMode::FixedUniformPmf;
  throw std::invalid_argument("unknown GAN mode: " + s);
}

void GanConfig::validate() const {
  if (B < 1) throw std::invalid_argument("GanConfig: B must be >= 1");
  if (n_disc < 1) throw std::invalid_argument("GanConfig: n_disc must be >= 1");
  if (!(alpha_phi > 0) || !(alpha_x > 0) || !(alpha_p > 0))
    throw std::invalid_argument("GanConfig: learning rates must be positive");
  if (!(decay_factor > 0) || decay_factor > 1)
    throw std::invalid_argument("GanConfig: decay_factor must be in (0, 1]");
  if (!(tau > 0)) throw std::invalid_argument("GanConfig: tau must be positive");
  if (ell < 2 || ell % 2 != 0) throw std::invalid_argument("GanConfig: ell must be even");
  if (total_iters < 1) throw std::invalid_argument("GanConfig: total_iters must be >= 1");
}

namespace {

Mat next_real_batch(TrainerState& st) {
  const int N = st.data->n(), B = st.cfg.B, m = st.data->m();
  if (st.cursor + B > static_cast<size_t>(N)) {
    st.rng_shuffle.shuffle(st.perm);
    st.cursor = 0;
  }
  Mat X(B, m);
  for (int b = 0; b < B; ++b) {
    const double* src = st.data->data.row(st.perm[st.cursor + b]);
    std::copy(src, src + m, X.row(b));
  }
  st.cursor += B;
  return X;
}

void apply_momentum_ascent(CriticParams& p, CriticGrads& mom, const CriticGrads& g,
                           double beta, double lr) {
  // v = beta v + g; theta += lr v
  auto upd = [beta, lr](Vec& v, const Vec& grad, Vec& theta) {
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = beta * v[i] + grad[i];
      theta[i] += lr * v[i];
    }
  };
  upd(mom.W1.a, g.W1.a, p.W1.a);
  upd(mom.W2.a, g.W2.a, p.W2.a);
  upd(mom.w3.a, g.w3.a, p.w3.a);
  upd(mom.b1, g.b1, p.b1);
  upd(mom.b2, g.b2, p.b2);
  mom.b3 = beta * mom.b3 + g.b3;
  p.b3 += lr * mom.b3;
}

}  // namespace

TrainerState init_trainer(const GanConfig& cfg, const MeasurementSet& ms) {
  cfg.validate();
  if (ms.n() < cfg.B)
    throw std::invalid_argument("init_trainer: need at least B real measurements");
  TrainerState st;
  st.cfg = cfg;
  st.data = &ms;
  st.sigma = cfg.sigma >= 0 ? cfg.sigma : ms.sigma;

  st.rng_shuffle = Rng::stream(cfg.seed, "shuffle");
  st.rng_noise = Rng::stream(cfg.seed, "noise");
  st.rng_gumbel = Rng::stream(cfg.seed, "gumbel");
  st.rng_interp = Rng::stream(cfg.seed, "interp");
  st.rng_loc = Rng::stream(cfg.seed, "locations");
  Rng rng_init = Rng::stream(cfg.seed, "init");

  st.x_est.values.assign(ms.d, 0.0);
  for (double& v : st.x_est.values) v = cfg.x_init_std * rng_init.normal();
  st.pmf_est = SegmentPmf::uniform(ms.d);
  st.critic = init_critic(cfg.ell, ms.m(), rng_init);
  st.phi_momentum.init(ms.m(), cfg.ell);
  st.x_momentum.assign(ms.d, 0.0);
  st.lr_phi = cfg.alpha_phi;
  st.lr_x = cfg.alpha_x;
  st.lr_p = cfg.alpha_p;
  st.perm.resize(ms.n());
  for (int i = 0; i < ms.n(); ++i) st.perm[i] = i;
  st.cursor = st.perm.size();  // force a shuffle on the first batch
  return st;
}

double critic_step(TrainerState& st) {
  const int B = st.cfg.B, m = st.data->m(), d = st.data->d;
  Mat X_real = next_real_batch(st);

  Mat X_sim(B, m);
  for (int b = 0; b < B; ++b) {
    const int s = sample_location(st.pmf_est, st.rng_loc);
    double* row = X_sim.row(b);
    for (int n = 0; n < m; ++n) row[n] = st.x_est.values[(n + s) % d];
    if (st.sigma > 0)
      for (int n = 0; n < m; ++n) row[n] += st.sigma * st.rng_noise.normal();
  }
  Mat X_int(B, m);
  for (int b = 0; b < B; ++b) {
    const double alpha = st.rng_interp.uniform01();
    const double* r = X_real.row(b);
    const double* s = X_sim.row(b);
    double* t = X_int.row(b);
    for (int n = 0; n < m; ++n) t[n] = alpha * r[n] + (1.0 - alpha) * s[n];
  }

  CriticTape tape_real, tape_sim;
  forward_batch(st.critic, std::move(X_real), tape_real);
  forward_batch(st.critic, std::move(X_sim), tape_sim);

  Vec up_pos(B, 1.0), up_neg(B, -1.0);
  CriticGrads grads = grad_params(st.critic, tape_real, up_pos);
  grads.add_scaled(grad_params(st.critic, tape_sim, up_neg), 1.0);
  CriticGrads gp_grads;
  const double gp = gradient_penalty(st.critic, X_int, gp_grads);
  grads.add_scaled(gp_grads, -st.cfg.lambda);

  double loss = -st.cfg.lambda * gp;
  for (int b = 0; b < B; ++b) loss += tape_real.scores[b] - tape_sim.scores[b];
  if (!std::isfinite(loss))
    throw std::runtime_error("critic_step: non-finite loss at iteration " +
                             std::to_string(st.iteration));

  clip_grad_norm(grads, 1.0);
  apply_momentum_ascent(st.critic, st.phi_momentum, grads, st.cfg.momentum, st.lr_phi);
  spectral_normalize(st.critic, 1);
  return loss;
}

GenEval generator_loss(const CriticParams& critic, const Signal& x, const Mat& q,
                       const Mat* eps, double tau) {
  const int B = q.rows, d = q.cols, m = critic.m;
  GenEval out;
  out.grad_x.assign(d, 0.0);
  out.grad_logits.assign(d, 0.0);

  if (eps == nullptr) {
    // Noiseless generator: all batch elements share the d clean segments, so
    // one critic pass over the d shifts covers the whole B x d sum.
    Mat A(d, m);
    for (int s = 0; s < d; ++s)
      for (int n = 0; n < m; ++n) A(s, n) = x.values[(n + s) % d];
    CriticTape tape;
    forward_batch(critic, std::move(A), tape);
    Mat G = grad_input_batch(critic, tape);

    Vec q_tot(d, 0.0);
    for (int b = 0; b < B; ++b) {
      const double* qr = q.row(b);
      double qd = 0.0;
      for (int s = 0; s < d; ++s) qd += qr[s] * tape.scores[s];
      out.loss -= qd;
      for (int s = 0; s < d; ++s) {
        q_tot[s] += qr[s];
        out.grad_logits[s] -= qr[s] * (tape.scores[s] - qd) / tau;
      }
    }
    for (int s = 0; s < d; ++s) {
      const double* gr = G.row(s);
      const double c = -q_tot[s];
      for (int i = 0; i < m; ++i) out.grad_x[(i + s) % d] += c * gr[i];
    }
    return out;
  }

  Mat X(B * d, m);
  for (int b = 0; b < B; ++b) {
    const double* e = eps->row(b);
    for (int s = 0; s < d; ++s) {
      double* row = X.row(b * d + s);
      for (int n = 0; n < m; ++n) row[n] = x.values[(n + s) % d] + e[n];
    }
  }
  CriticTape tape;
  forward_batch(critic, std::move(X), tape);
  Mat G = grad_input_batch(critic, tape);

  for (int b = 0; b < B; ++b) {
    const double* qr = q.row(b);
    const double* sc = tape.scores.data() + static_cast<size_t>(b) * d;
    double qd = 0.0;
    for (int s = 0; s < d; ++s) qd += qr[s] * sc[s];
    out.loss -= qd;
    for (int s = 0; s < d; ++s) {
      out.grad_logits[s] -= qr[s] * (sc[s] - qd) / tau;
      const double* gr = G.row(b * d + s);
      const double c = -qr[s];
      for (int i = 0; i < m; ++i) out.grad_x[(i + s) % d] += c * gr[i];
    }
  }
  return out;
}

double generator_step(TrainerState& st) {
  const int B = st.cfg.B, m = st.data->m(), d = st.data->d;
  SoftAssignment sa = gumbel_softmax(st.pmf_est, st.cfg.tau, B, st.rng_gumbel);

  GenEval ev;
  if (st.sigma == 0.0) {
    ev = generator_loss(st.critic, st.x_est, sa.q, nullptr, st.cfg.tau);
  } else {
    Mat eps(B, m);
    for (double& v : eps.a) v = st.sigma * st.rng_noise.normal();
    ev = generator_loss(st.critic, st.x_est, sa.q, &eps, st.cfg.tau);
  }

  if (!std::isfinite(ev.loss))
    throw std::runtime_error("generator_step: non-finite loss at iteration " +
                             std::to_string(st.iteration));

  for (int n = 0; n < d; ++n) {
    st.x_momentum[n] = st.cfg.momentum * st.x_momentum[n] + ev.grad_x[n];
    st.x_est.values[n] -= st.lr_x * st.x_momentum[n];
  }
  if (st.cfg.mode == GanMode::Joint) {
    const double gnorm = norm2(ev.grad_logits);
    if (gnorm > 0)
      for (int n = 0; n < d; ++n)
        st.pmf_est.logits[n] -= st.lr_p * ev.grad_logits[n] / gnorm;
  }
  return ev.loss;
}

void lr_schedule(TrainerState& st) {
  const int t = st.iteration;
  if (t > 0 && t % st.cfg.decay_every_phi == 0) st.lr_phi *= st.cfg.decay_factor;
  if (t > 0 && t % st.cfg.decay_every_x == 0) st.lr_x *= st.cfg.decay_factor;
  if (t > 0 && t % st.cfg.decay_every_p == 0) st.lr_p *= st.cfg.decay_factor;
}

TrainResult train(const GanConfig& cfg, const MeasurementSet& ms, const Vec* known_pmf,
                  const GroundTruth* truth,
                  const std::function<void(const HistoryRow&)>& on_eval) {
  TrainerState st = init_trainer(cfg, ms);
  if (cfg.mode == GanMode::KnownPmf) {
    if (!known_pmf) throw std::invalid_argument("train: KnownPmf mode needs the true PMF");
    st.pmf_est = SegmentPmf::from_probs(*known_pmf);
  }

  TrainResult res;
  res.history.reserve(cfg.total_iters);
  for (int it = 1; it <= cfg.total_iters; ++it) {
    st.iteration = it;
    double closs = 0.0;
    for (int t = 0; t < cfg.n_disc; ++t) closs = critic_step(st);
    double gloss = generator_step(st);
    lr_schedule(st);

    HistoryRow row;
    row.iter = it;
    row.critic_loss = closs;
    row.gen_loss = gloss;
    if (truth && (it % cfg.eval_every == 0 || it == cfg.total_iters)) {
      row.rel_error = rel_error(truth->x, st.x_est).first;
      row.tv = tv_distance(truth->p, st.pmf_est.probs()).first;
      if (on_eval) on_eval(row);
    }
    res.history.push_back(row);
  }
  res.x_hat = st.x_est;
  res.p_hat = st.pmf_est;
  res.critic = st.critic;
  return res;
}

void write_run_outputs(const std::string& dir, const GanConfig& cfg,
                       const TrainResult& result) {
  std::filesystem::create_directories(dir);
  io::write_kv(dir + "/config.used",
               {{"solver", "gan"},
                {"mode", to_string(cfg.mode)},
                {"B", std::to_string(cfg.B)},
                {"n_disc", std::to_string(cfg.n_disc)},
                {"lambda", io::format_double(cfg.lambda)},
                {"tau", io::format_double(cfg.tau)},
                {"alpha_phi", io::format_double(cfg.alpha_phi)},
                {"alpha_x", io::format_double(cfg.alpha_x)},
                {"alpha_p", io::format_double(cfg.alpha_p)},
                {"decay_factor", io::format_double(cfg.decay_factor)},
                {"decay_every_phi", std::to_string(cfg.decay_every_phi)},
                {"decay_every_x", std::to_string(cfg.decay_every_x)},
                {"decay_every_p", std::to_string(cfg.decay_every_p)},
                {"momentum", io::format_double(cfg.momentum)},
                {"total_iters", std::to_string(cfg.total_iters)},
                {"ell", std::to_string(cfg.ell)},
                {"eval_every", std::to_string(cfg.eval_every)},
                {"x_init_std", io::format_double(cfg.x_init_std)},
                {"sigma", io::format_double(cfg.sigma)},
                {"seed", std::to_string(cfg.seed)}});
  std::ofstream h(dir + "/history.csv");
  h << "iter,critic_loss,gen_loss,rel_error,tv\n";
  for (const auto& row : result.history) {
    h << row.iter << "," << io::format_double(row.critic_loss) << ","
      << io::format_double(row.gen_loss) << ",";
    if (std::isfinite(row.rel_error)) h << io::format_double(row.rel_error);
    h << ",";
    if (std::isfinite(row.tv)) h << io::format_double(row.tv);
    h << "\n";
  }
  io::write_dat(dir + "/x_hat.dat", result.x_hat.values);
  io::write_dat(dir + "/p_hat.dat", result.p_hat.probs());
  save_critic(dir, result.critic, cfg.total_iters);
}

}  // namespace msr
