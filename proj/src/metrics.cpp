#include "msr/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace msr {

namespace {

double l1_shift_dist(const Vec& a, const Vec& b, int s) {
  const int d = static_cast<int>(a.size());
  double l1 = 0.0;
  for (int n = 0; n < d; ++n) l1 += std::abs(a[n] - b[(n + s) % d]);
  return l1;
}

void check_simplex(const Vec& p, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (v < -1e-6) throw std::invalid_argument(std::string(what) + ": negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument(std::string(what) + ": does not sum to 1");
}

}  // namespace

std::pair<double, int> rel_error(const Signal& x_true, const Signal& x_hat) {
  const int d = x_true.d();
  if (x_hat.d() != d) throw std::invalid_argument("rel_error: length mismatch");
  const double denom = dot(x_true.values, x_true.values);
  if (!(denom > 0)) throw std::invalid_argument("rel_error: zero-norm reference");
  double best = std::numeric_limits<double>::infinity();
  int best_s = 0;
  for (int s = 0; s < d; ++s) {
    double e = 0.0;
    for (int n = 0; n < d; ++n) {
      const double diff = x_true.values[n] - x_hat.values[(n + s) % d];
      e += diff * diff;
    }
    if (e < best) {
      best = e;
      best_s = s;
    }
  }
  return {best / denom, best_s};
}

std::pair<double, int> tv_distance(const Vec& p_true, const Vec& p_hat) {
  if (p_true.size() != p_hat.size()) throw std::invalid_argument("tv_distance: length mismatch");
  check_simplex(p_true, "tv_distance: p_true");
  check_simplex(p_hat, "tv_distance: p_hat");
  const int d = static_cast<int>(p_true.size());
  double best = std::numeric_limits<double>::infinity();
  int best_s = 0;
  for (int s = 0; s < d; ++s) {
    double l1 = l1_shift_dist(p_true, p_hat, s);
    if (l1 < best) {
      best = l1;
      best_s = s;
    }
  }
  return {0.5 * best, best_s};
}

double snr_of(const MeasurementSet& ms, const Signal& x, const SegmentPmf& p) {
  if (ms.sigma == 0.0) return std::numeric_limits<double>::infinity();
  return clean_variance(x, p, ms.m()) / (ms.sigma * ms.sigma);
}

double success_rate(const std::vector<double>& rel_errors, double threshold) {
  if (rel_errors.empty()) throw std::invalid_argument("success_rate: empty list");
  int ok = 0;
  for (double e : rel_errors)
    if (e < threshold) ++ok;
  return static_cast<double>(ok) / static_cast<double>(rel_errors.size());
}

EvalReport evaluate(const Signal& x_true, const Vec& p_true, const Signal& x_hat,
                    const Vec& p_hat) {
  EvalReport r;
  auto [re, sx] = rel_error(x_true, x_hat);
  auto [tv, sp] = tv_distance(p_true, p_hat);
  r.rel_error = re;
  r.aligning_shift_x = sx;
  r.tv = tv;
  r.aligning_shift_p = sp;
  r.tv_at_signal_shift = 0.5 * l1_shift_dist(p_true, p_hat, sx);
  return r;
}

}  // namespace msr
