#pragma once

#include "msr/forward_model.hpp"
#include "msr/linalg.hpp"

namespace msr {

// Shift-invariant features: moments of the observations up to third order.
struct MomentSet {
  Vec M1;   // m
  Mat M2;   // m x m
  Vec M3;   // m^3, row-major [i*m*m + k*m + l]
  int m = 0;
  int N_used = 0;

  double& m3(int i, int k, int l) { return M3[(static_cast<size_t>(i) * m + k) * m + l]; }
  double m3(int i, int k, int l) const { return M3[(static_cast<size_t>(i) * m + k) * m + l]; }
};

struct MomentWeights {
  double w1 = 1.0, w2 = 1.0, w3 = 1.0;
  static MomentWeights scaled(int m) {
    return {1.0, 1.0 / m, 1.0 / (static_cast<double>(m) * m)};
  }
};

struct MomentLoss {
  double value = 0.0;
  Vec grad_x;       // d
  Vec grad_logits;  // d
};

struct SifOptions {
  MomentWeights weights;
  int max_iters = 20000;
  double grad_tol = 1e-10;
  double armijo_c = 1e-4;
  double init_step = 1.0;
};

struct SifResult {
  Signal x_hat;
  SegmentPmf p_hat;
  Vec loss_trace;
  bool line_search_failed = false;
  bool converged = false;
};

// Single-pass sample moments of the measurement rows.
MomentSet empirical_moments(const MeasurementSet& ms, Exec mode = Exec::Parallel);

// Model moments under (x, p) with Gaussian-noise bias terms.
MomentSet analytic_moments(const Signal& x, const SegmentPmf& p, int m, double sigma);

// Weighted squared moment discrepancy and its exact gradients in x and logits.
MomentLoss moment_loss(const Signal& x, const SegmentPmf& p, const MomentSet& target,
                       const MomentWeights& w, double sigma);

// Gradient descent with Armijo backtracking on the moment discrepancy.
SifResult run_sif(const MeasurementSet& ms, const Signal& x0, const SegmentPmf& p0,
                  double sigma, const SifOptions& opts = {});

}  // namespace msr
