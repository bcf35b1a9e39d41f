#pragma once

#include "msr/forward_model.hpp"
#include "msr/linalg.hpp"

namespace msr {

// E-step responsibilities: w[j,s] = P(s_j = s | xi_j, x, p).
struct Posterior {
  Mat w;  // N x d, rows on the simplex
};

struct EmResult {
  Signal x_hat;
  SegmentPmf p_hat;
  Vec ll_trace;
  bool converged = false;
};

struct EmOptions {
  int max_iters = 5000;
  double tol = 1e-8;           // relative log-likelihood change
  double sigma_floor = 1e-3;   // effective sigma for noiseless data
};

// Responsibilities and marginal log-likelihood (normalization constant included).
std::pair<Posterior, double> e_step(const MeasurementSet& ms, const Signal& x,
                                    const SegmentPmf& p, double sigma_eff,
                                    Exec mode = Exec::Parallel);

// Responsibility-weighted location PMF and per-position weighted average of
// the covering measurement entries. Zero-coverage positions keep x_prev.
std::pair<Signal, SegmentPmf> m_step(const MeasurementSet& ms, const Posterior& post,
                                     const Signal& x_prev, Exec mode = Exec::Parallel);

EmResult run_em(const MeasurementSet& ms, const Signal& x0, const SegmentPmf& p0,
                double sigma, const EmOptions& opts = {});

}  // namespace msr
