#include "msr/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace msr {

double gumbel_from_uniform(double u) {
  u = std::clamp(u, 1e-12, 1.0 - 1e-12);
  return -std::log(-std::log(u));
}

double gumbel_sample(Rng& rng) { return gumbel_from_uniform(rng.uniform01()); }

SoftAssignment gumbel_softmax(const SegmentPmf& p, double tau, int B, Rng& rng) {
  if (!(tau > 0)) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  if (B < 1) throw std::invalid_argument("gumbel_softmax: B must be >= 1");
  SoftAssignment out;
  out.tau = tau;
  out.gumbels = Mat(B, p.d());
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < p.d(); ++s) out.gumbels(b, s) = gumbel_sample(rng);
  out.q = gumbel_softmax_from_noise(p, tau, out.gumbels);
  return out;
}

Mat gumbel_softmax_from_noise(const SegmentPmf& p, double tau, const Mat& g) {
  if (!(tau > 0)) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  const int B = g.rows, d = p.d();
  Mat q(B, d);
  for (int b = 0; b < B; ++b) {
    const double* grow = g.row(b);
    double* qrow = q.row(b);
    double mx = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < d; ++s) {
      qrow[s] = (grow[s] + p.logits[s]) / tau;
      mx = std::max(mx, qrow[s]);
    }
    double z = 0.0;
    for (int s = 0; s < d; ++s) {
      qrow[s] = std::exp(qrow[s] - mx);
      z += qrow[s];
    }
    for (int s = 0; s < d; ++s) qrow[s] /= z;
  }
  return q;
}

Mat gumbel_softmax_backward(const Vec& q_row, double tau) {
  const int d = static_cast<int>(q_row.size());
  Mat J(d, d);
  for (int s = 0; s < d; ++s)
    for (int i = 0; i < d; ++i)
      J(s, i) = q_row[s] * ((s == i ? 1.0 : 0.0) - q_row[i]) / tau;
  return J;
}

}  // namespace msr
