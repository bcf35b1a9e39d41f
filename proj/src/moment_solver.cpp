#include "msr/moment_solver.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msr {

MomentSet empirical_moments(const MeasurementSet& ms, Exec mode) {
  const int N = ms.n(), m = ms.m();
  MomentSet out;
  out.m = m;
  out.N_used = N;
  out.M1.assign(m, 0.0);
  out.M2 = Mat(m, m);
  out.M3.assign(static_cast<size_t>(m) * m * m, 0.0);
  for (int j = 0; j < N; ++j) {
    const double* xi = ms.data.row(j);
    for (int i = 0; i < m; ++i) out.M1[i] += xi[i];
  }
  matmul_tn(out.M2, ms.data, ms.data, mode);
  // third moment: accumulate j in fixed order per (i,k,l)
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (mode == Exec::Parallel)
#endif
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < N; ++j) {
      const double* xi = ms.data.row(j);
      const double xii = xi[i];
      for (int k = 0; k < m; ++k) {
        const double c = xii * xi[k];
        double* dst = &out.m3(i, k, 0);
        for (int l = 0; l < m; ++l) dst[l] += c * xi[l];
      }
    }
  }
  const double invN = 1.0 / N;
  for (double& v : out.M1) v *= invN;
  for (double& v : out.M2.a) v *= invN;
  for (double& v : out.M3) v *= invN;
  return out;
}

MomentSet analytic_moments(const Signal& x, const SegmentPmf& p, int m, double sigma) {
  const int d = x.d();
  const Vec probs = p.probs();
  MomentSet out;
  out.m = m;
  out.M1.assign(m, 0.0);
  out.M2 = Mat(m, m);
  out.M3.assign(static_cast<size_t>(m) * m * m, 0.0);
  Vec a(m);
  for (int s = 0; s < d; ++s) {
    const double ps = probs[s];
    for (int n = 0; n < m; ++n) a[n] = x.values[(n + s) % d];
    for (int i = 0; i < m; ++i) {
      out.M1[i] += ps * a[i];
      for (int k = 0; k < m; ++k) {
        out.M2(i, k) += ps * a[i] * a[k];
        const double c = ps * a[i] * a[k];
        double* dst = &out.m3(i, k, 0);
        for (int l = 0; l < m; ++l) dst[l] += c * a[l];
      }
    }
  }
  const double s2 = sigma * sigma;
  if (s2 > 0) {
    for (int i = 0; i < m; ++i) out.M2(i, i) += s2;
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < m; ++k) {
        out.m3(i, k, k) += s2 * out.M1[i];
        out.m3(k, i, k) += s2 * out.M1[i];
        out.m3(k, k, i) += s2 * out.M1[i];
      }
  }
  return out;
}

MomentLoss moment_loss(const Signal& x, const SegmentPmf& p, const MomentSet& target,
                       const MomentWeights& w, double sigma) {
  const int d = x.d(), m = target.m;
  const Vec probs = p.probs();
  const MomentSet mdl = analytic_moments(x, p, m, sigma);

  MomentLoss out;
  out.grad_x.assign(d, 0.0);
  out.grad_logits.assign(d, 0.0);

  // Residual-weighted adjoints. G3 stays symmetric because both moment sets
  // are; the sigma^2 delta terms of dM3 fold into an effective G1.
  Vec G1(m);
  Mat G2(m, m);
  Vec G3(static_cast<size_t>(m) * m * m);
  double value = 0.0;
  for (int i = 0; i < m; ++i) {
    const double r = mdl.M1[i] - target.M1[i];
    value += w.w1 * r * r;
    G1[i] = 2.0 * w.w1 * r;
  }
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < m; ++k) {
      const double r = mdl.M2(i, k) - target.M2(i, k);
      value += w.w2 * r * r;
      G2(i, k) = 2.0 * w.w2 * r;
    }
  for (size_t t = 0; t < G3.size(); ++t) {
    const double r = mdl.M3[t] - target.M3[t];
    value += w.w3 * r * r;
    G3[t] = 2.0 * w.w3 * r;
  }
  out.value = value;

  const double s2 = sigma * sigma;
  Vec G1eff = G1;
  if (s2 > 0) {
    for (int i = 0; i < m; ++i) {
      double tr = 0.0;
      for (int l = 0; l < m; ++l) tr += G3[(static_cast<size_t>(i) * m + l) * m + l];
      G1eff[i] += 3.0 * s2 * tr;
    }
  }

  Vec a(m), ga(m), c_s(d);
  for (int s = 0; s < d; ++s) {
    for (int n = 0; n < m; ++n) a[n] = x.values[(n + s) % d];
    // directional terms shared by the p- and x-gradients
    double c1 = dot(G1eff, a);
    double c2 = 0.0, c3 = 0.0;
    for (int i = 0; i < m; ++i) {
      double g2a = 0.0;
      const double* g2r = G2.row(i);
      for (int k = 0; k < m; ++k) g2a += g2r[k] * a[k];
      c2 += a[i] * g2a;
      double ti = 0.0;
      for (int k = 0; k < m; ++k) {
        const double* g3r = &G3[(static_cast<size_t>(i) * m + k) * m];
        double acc = 0.0;
        for (int l = 0; l < m; ++l) acc += g3r[l] * a[l];
        ti += a[k] * acc;
      }
      c3 += a[i] * ti;
      ga[i] = G1eff[i] + 2.0 * g2a + 3.0 * ti;
    }
    c_s[s] = c1 + c2 + c3;
    const double ps = probs[s];
    for (int i = 0; i < m; ++i) out.grad_x[(i + s) % d] += ps * ga[i];
  }
  double cbar = 0.0;
  for (int s = 0; s < d; ++s) cbar += c_s[s] * probs[s];
  for (int i = 0; i < d; ++i) out.grad_logits[i] = probs[i] * (c_s[i] - cbar);
  return out;
}

SifResult run_sif(const MeasurementSet& ms, const Signal& x0, const SegmentPmf& p0,
                  double sigma, const SifOptions& opts) {
  const int d = x0.d();
  const MomentSet target = empirical_moments(ms);

  SifResult res;
  res.x_hat = x0;
  res.p_hat = p0;

  MomentLoss cur = moment_loss(res.x_hat, res.p_hat, target, opts.weights, sigma);
  res.loss_trace.push_back(cur.value);
  double step = opts.init_step;
  for (int it = 0; it < opts.max_iters; ++it) {
    double g2 = dot(cur.grad_x, cur.grad_x) + dot(cur.grad_logits, cur.grad_logits);
    if (std::sqrt(g2) < opts.grad_tol) {
      res.converged = true;
      break;
    }
    // Armijo backtracking from twice the last accepted step.
    step = std::min(step * 2.0, 1e6);
    bool accepted = false;
    while (step >= 1e-16) {
      Signal x_try = res.x_hat;
      SegmentPmf p_try = res.p_hat;
      for (int n = 0; n < d; ++n) x_try.values[n] -= step * cur.grad_x[n];
      for (int n = 0; n < d; ++n) p_try.logits[n] -= step * cur.grad_logits[n];
      MomentLoss trial = moment_loss(x_try, p_try, target, opts.weights, sigma);
      if (trial.value <= cur.value - opts.armijo_c * step * g2) {
        res.x_hat = std::move(x_try);
        res.p_hat = std::move(p_try);
        cur = std::move(trial);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.line_search_failed = true;
      break;
    }
    res.loss_trace.push_back(cur.value);
  }
  return res;
}

}  // namespace msr
