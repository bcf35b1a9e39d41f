#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "msr/critic.hpp"
#include "msr/forward_model.hpp"
#include "msr/relaxation.hpp"

namespace msr {

enum class GanMode { Joint, KnownPmf, FixedUniformPmf };

std::string to_string(GanMode mode);
GanMode gan_mode_from_string(const std::string& s);

struct GanConfig {
  int B = 200;
  int n_disc = 4;
  double lambda = 10.0;
  double tau = 0.5;
  double alpha_phi = 3e-3;
  double alpha_x = 3e-5;
  double alpha_p = 2e-3;
  double decay_factor = 0.9;
  int decay_every_phi = 2000;
  int decay_every_x = 2000;
  int decay_every_p = 3000;
  double momentum = 0.9;
  int total_iters = 30000;
  int ell = 100;
  int eval_every = 500;
  double x_init_std = 1.0;
  GanMode mode = GanMode::Joint;
  std::uint64_t seed = 0;
  // Generator noise level; taken from the measurement metadata when negative.
  double sigma = -1.0;

  void validate() const;
};

struct HistoryRow {
  int iter = 0;
  double critic_loss = 0.0;
  double gen_loss = 0.0;
  // NaN when no ground truth was supplied or off the eval grid.
  double rel_error = std::numeric_limits<double>::quiet_NaN();
  double tv = std::numeric_limits<double>::quiet_NaN();
};

struct TrainerState {
  GanConfig cfg;
  Signal x_est;
  SegmentPmf pmf_est;
  CriticParams critic;
  CriticGrads phi_momentum;
  Vec x_momentum;
  int iteration = 0;
  double lr_phi = 0.0, lr_x = 0.0, lr_p = 0.0;
  double sigma = 0.0;

  Rng rng_shuffle{0}, rng_noise{0}, rng_gumbel{0}, rng_interp{0}, rng_loc{0};

  // epoch-shuffled traversal of the real rows
  std::vector<int> perm;
  size_t cursor = 0;
  const MeasurementSet* data = nullptr;
};

struct GroundTruth {
  Signal x;
  Vec p;
};

struct TrainResult {
  Signal x_hat;
  SegmentPmf p_hat;
  std::vector<HistoryRow> history;
  CriticParams critic;
};

TrainerState init_trainer(const GanConfig& cfg, const MeasurementSet& ms);

// One critic ascent step on sum_b D(real) - D(sim) - lambda * GP(interp).
double critic_step(TrainerState& st);

// Relaxed generator loss L = -sum_b sum_s q[b,s] D(M_s x + eps_b) and its
// exact gradients in x and the PMF logits. eps may be null for the noiseless
// case, where all batch elements share the same d clean segments.
struct GenEval {
  double loss = 0.0;
  Vec grad_x;
  Vec grad_logits;
};
GenEval generator_loss(const CriticParams& critic, const Signal& x, const Mat& q,
                       const Mat* eps, double tau);

// One generator descent step on the Gumbel-Softmax-relaxed loss; updates
// x always and the PMF logits only in Joint mode.
double generator_step(TrainerState& st);

void lr_schedule(TrainerState& st);

// Full training loop: n_disc critic steps + 1 generator step per iteration.
// `known_pmf` supplies the true PMF for KnownPmf mode; `truth` enables the
// rel-error / TV diagnostics every eval_every iterations.
TrainResult train(const GanConfig& cfg, const MeasurementSet& ms,
                  const Vec* known_pmf = nullptr, const GroundTruth* truth = nullptr,
                  const std::function<void(const HistoryRow&)>& on_eval = nullptr);

// Run-directory emission: config.used, history.csv, x_hat.dat, p_hat.dat,
// critic checkpoint.
void write_run_outputs(const std::string& dir, const GanConfig& cfg,
                       const TrainResult& result);

}  // namespace msr
