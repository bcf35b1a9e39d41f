#pragma once

#include "msr/forward_model.hpp"
#include "msr/linalg.hpp"
#include "msr/rng.hpp"

namespace msr {

// B relaxed one-hot rows over the d segment locations.
struct SoftAssignment {
  Mat q;        // B x d, rows on the simplex
  Mat gumbels;  // B x d noise that produced q (kept for replay in tests)
  double tau = 0.5;
};

// g = -log(-log(u)); u clamped to [1e-12, 1-1e-12] before the double log.
double gumbel_from_uniform(double u);

// Gumbel(0,1) draw via the inverse-CDF transform.
double gumbel_sample(Rng& rng);

// Rows b: q[s] = softmax_s((g[b,s] + logits[s]) / tau). Working on logits
// directly keeps the computation finite for arbitrarily small probabilities;
// the log-partition constant cancels in the softmax.
SoftAssignment gumbel_softmax(const SegmentPmf& p, double tau, int B, Rng& rng);

// Same relaxation with caller-supplied noise (frozen-noise gradient checks).
Mat gumbel_softmax_from_noise(const SegmentPmf& p, double tau, const Mat& g);

// d x d Jacobian dq/dlogits of one row: dq_s/dtheta_i = q_s (delta_si - q_i) / tau.
// Rows sum to zero since q lives on the simplex.
Mat gumbel_softmax_backward(const Vec& q_row, double tau);

}  // namespace msr
