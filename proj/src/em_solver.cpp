#include "msr/em_solver.hpp"

#include <cmath>
#include <tuple>
#include <numbers>
#include <stdexcept>

namespace msr {

std::pair<Posterior, double> e_step(const MeasurementSet& ms, const Signal& x,
                                    const SegmentPmf& p, double sigma_eff, Exec mode) {
  if (!(sigma_eff > 0)) throw std::invalid_argument("e_step: sigma_eff must be positive");
  const int N = ms.n(), m = ms.m(), d = x.d();
  const double inv2s2 = 1.0 / (2.0 * sigma_eff * sigma_eff);
  const Vec lp = p.log_probs();

  // ||xi - M_s x||^2 = ||xi||^2 - 2 <xi, a_s> + ||a_s||^2
  Mat A(d, m);
  Vec a2(d);
  for (int s = 0; s < d; ++s) {
    double* r = A.row(s);
    double sq = 0.0;
    for (int n = 0; n < m; ++n) {
      r[n] = x.values[(n + s) % d];
      sq += r[n] * r[n];
    }
    a2[s] = sq;
  }
  Mat ip;
  matmul_nt(ip, ms.data, A, mode);  // N x d

  Posterior post;
  post.w = Mat(N, d);
  double ll = 0.0;
  for (int j = 0; j < N; ++j) {
    const double* xi = ms.data.row(j);
    double xi2 = dot({xi, static_cast<size_t>(m)}, {xi, static_cast<size_t>(m)});
    double* wr = post.w.row(j);
    const double* ipr = ip.row(j);
    double mx = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < d; ++s) {
      wr[s] = lp[s] - (xi2 - 2.0 * ipr[s] + a2[s]) * inv2s2;
      mx = std::max(mx, wr[s]);
    }
    double z = 0.0;
    for (int s = 0; s < d; ++s) {
      wr[s] = std::exp(wr[s] - mx);
      z += wr[s];
    }
    for (int s = 0; s < d; ++s) wr[s] /= z;
    ll += mx + std::log(z);
  }
  ll += N * (-0.5 * m * std::log(2.0 * std::numbers::pi * sigma_eff * sigma_eff));
  return {std::move(post), ll};
}

std::pair<Signal, SegmentPmf> m_step(const MeasurementSet& ms, const Posterior& post,
                                     const Signal& x_prev, Exec mode) {
  const int N = ms.n(), m = ms.m(), d = x_prev.d();
  if (post.w.rows != N || post.w.cols != d)
    throw std::invalid_argument("m_step: posterior shape mismatch");

  Vec ws(d, 0.0);  // total responsibility per shift
  for (int j = 0; j < N; ++j) {
    const double* wr = post.w.row(j);
    for (int s = 0; s < d; ++s) ws[s] += wr[s];
  }
  Vec p_new(d);
  for (int s = 0; s < d; ++s) p_new[s] = ws[s] / N;

  // S[s,i] = sum_j w[j,s] xi_j[i]; scatter both S and the coverage weights.
  Mat S;
  matmul_tn(S, post.w, ms.data, mode);
  Vec num(d, 0.0), den(d, 0.0);
  for (int s = 0; s < d; ++s) {
    const double* sr = S.row(s);
    for (int i = 0; i < m; ++i) {
      const int n = (i + s) % d;
      num[n] += sr[i];
      den[n] += ws[s];
    }
  }
  Signal x_new = x_prev;
  for (int n = 0; n < d; ++n)
    if (den[n] > 0) x_new.values[n] = num[n] / den[n];

  // Guard against exactly-zero responsibilities before taking logits.
  for (double& v : p_new) v = std::max(v, 1e-300);
  double z = 0.0;
  for (double v : p_new) z += v;
  for (double& v : p_new) v /= z;
  return {std::move(x_new), SegmentPmf::from_probs(p_new)};
}

EmResult run_em(const MeasurementSet& ms, const Signal& x0, const SegmentPmf& p0,
                double sigma, const EmOptions& opts) {
  const double sigma_eff = std::max(sigma, opts.sigma_floor);
  EmResult res;
  res.x_hat = x0;
  res.p_hat = p0;
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iters; ++it) {
    auto [post, ll] = e_step(ms, res.x_hat, res.p_hat, sigma_eff);
    if (!std::isfinite(ll))
      throw std::runtime_error("run_em: log-likelihood became non-finite at iteration " +
                               std::to_string(it));
    res.ll_trace.push_back(ll);
    std::tie(res.x_hat, res.p_hat) = m_step(ms, post, res.x_hat);
    if (it > 0 && std::abs(ll - prev_ll) < opts.tol * std::abs(ll)) {
      res.converged = true;
      break;
    }
    prev_ll = ll;
  }
  return res;
}

}  // namespace msr
