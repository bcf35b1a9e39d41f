#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msr/linalg.hpp"
#include "msr/rng.hpp"

namespace msr {

// The unknown d-length real sequence.
struct Signal {
  Vec values;

  Signal() = default;
  explicit Signal(Vec v) : values(std::move(v)) {}

  int d() const { return static_cast<int>(values.size()); }
};

// Categorical distribution over the d segment start locations, stored as
// logits so every gradient step stays on the simplex.
struct SegmentPmf {
  Vec logits;

  SegmentPmf() = default;
  explicit SegmentPmf(Vec l) : logits(std::move(l)) {}

  static SegmentPmf uniform(int d) { return SegmentPmf(Vec(d, 0.0)); }
  static SegmentPmf from_probs(const Vec& probs);

  int d() const { return static_cast<int>(logits.size()); }
  Vec probs() const;       // softmax(logits)
  Vec log_probs() const;   // logits - logsumexp(logits)
};

// N noisy segments of length m plus generation metadata. True locations are
// kept for diagnostics only; solvers must not read them.
class MeasurementSet {
 public:
  Mat data;              // N x m
  int d = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double snr = 0.0;      // requested SNR (inf for noiseless), informational

  int n() const { return data.rows; }
  int m() const { return data.cols; }

  bool has_true_locations() const { return !true_locations_.empty(); }
  const std::vector<int>& diagnostic_true_locations() const { return true_locations_; }
  void set_true_locations(std::vector<int> locs) { true_locations_ = std::move(locs); }

 private:
  std::vector<int> true_locations_;
};

// (M_s x)[n] = x[(n+s) mod d]
Vec mask(const Signal& x, int s, int m);

// Adjoint of the cyclic mask: scatter y back to length-d coordinates.
Vec mask_adjoint(std::span<const double> y, int s, int d);

// Gumbel-Max draw from p: argmax_s(g_s + log p[s]).
int sample_location(const SegmentPmf& p, Rng& rng);

// Expected pooled variance of clean segment entries under (x, p).
double clean_variance(const Signal& x, const SegmentPmf& p, int m);

// sigma = sqrt(V_clean / snr); snr = inf gives sigma = 0.
double sigma_from_snr(const Signal& x, const SegmentPmf& p, int m, double snr);

MeasurementSet synthesize(const Signal& x, const SegmentPmf& p, int m,
                          double sigma, int N, std::uint64_t seed);

// UTF-8 text format: "# key=value" header lines, then N comma-separated rows.
// True locations, when present, go to the "<path>.loc" sidecar.
void write_measurements(const std::string& path, const MeasurementSet& ms);
MeasurementSet read_measurements(const std::string& path);

}  // namespace msr
