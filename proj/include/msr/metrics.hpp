#pragma once

#include "msr/forward_model.hpp"
#include "msr/linalg.hpp"

namespace msr {

struct EvalReport {
  double rel_error = 0.0;
  double tv = 0.0;
  int aligning_shift_x = 0;
  int aligning_shift_p = 0;
  // Diagnostics: TV evaluated with the PMF forced to the signal's aligning
  // shift instead of its own minimizer.
  double tv_at_signal_shift = 0.0;
};

// min_s ||x - R_s x_hat||^2 / ||x||^2 and the minimizing shift.
std::pair<double, int> rel_error(const Signal& x_true, const Signal& x_hat);

// 0.5 * min_s ||p - R_s p_hat||_1 on probability vectors.
std::pair<double, int> tv_distance(const Vec& p_true, const Vec& p_hat);

// V_clean(x, p, m) / sigma^2; +inf when sigma = 0.
double snr_of(const MeasurementSet& ms, const Signal& x, const SegmentPmf& p);

// Fraction of entries strictly below the threshold.
double success_rate(const std::vector<double>& rel_errors, double threshold = 0.02);

EvalReport evaluate(const Signal& x_true, const Vec& p_true, const Signal& x_hat,
                    const Vec& p_hat);

}  // namespace msr
