#pragma once

#include <cstdint>
#include <string>

#include "msr/linalg.hpp"
#include "msr/rng.hpp"

namespace msr {

// 3-layer fully connected ReLU critic: m -> ell -> ell/2 -> 1.
// Raw weights are kept alongside their spectrally normalized copies; the
// forward pass always uses the normalized weights, and parameter gradients
// are taken with the power-iteration singular value held constant.
struct CriticParams {
  int m = 0, ell = 0;

  Mat W1, W2, w3;  // raw weights (w3 stored as 1 x ell/2)
  Vec b1, b2;
  double b3 = 0.0;

  Vec u1, u2, u3;               // power-iteration left singular vectors
  double s1 = 1, s2 = 1, s3 = 1;  // current spectral norm estimates
  Mat Wt1, Wt2, wt3;            // normalized weights, refreshed by spectral_normalize

  std::uint64_t stamp = 0;  // bumped whenever the effective weights change

  // Test hook: treat the raw weights as already normalized (sigma = 1).
  void use_identity_normalization() {
    Wt1 = W1;
    Wt2 = W2;
    wt3 = w3;
    s1 = s2 = s3 = 1.0;
  }
};

// Forward-pass bookkeeping for one batch (ReLU masks double as activations).
struct CriticTape {
  Mat X;        // n x m inputs
  Mat H1, H2;   // post-ReLU activations
  Vec scores;
  std::uint64_t params_stamp = 0;  // guards against stale tapes
};

struct CriticGrads {
  Mat W1, W2, w3;
  Vec b1, b2;
  double b3 = 0.0;

  void init(int m, int ell) {
    W1 = Mat(ell, m);
    W2 = Mat(ell / 2, ell);
    w3 = Mat(1, ell / 2);
    b1.assign(ell, 0.0);
    b2.assign(ell / 2, 0.0);
    b3 = 0.0;
  }
  void add_scaled(const CriticGrads& g, double c);
  double global_norm() const;
};

// Weights ~ N(0, 0.01^2), biases zero, u vectors random unit norm.
CriticParams init_critic(int ell, int m, Rng& rng);

// One power-iteration step per weight matrix, then refresh normalized copies.
void spectral_normalize(CriticParams& params, int power_iters = 1);

// Batched forward through the normalized network. Scores returned in the tape.
void forward_batch(const CriticParams& params, Mat X, CriticTape& tape,
                   Exec mode = Exec::Parallel);
double forward(const CriticParams& params, std::span<const double> xi);

// Reverse-mode gradients of sum_b upstream[b] * score_b w.r.t. raw parameters.
CriticGrads grad_params(const CriticParams& params, const CriticTape& tape,
                        const Vec& upstream, Exec mode = Exec::Parallel);

// Per-row input gradients grad_xi D(xi), n x m.
Mat grad_input_batch(const CriticParams& params, const CriticTape& tape,
                     Exec mode = Exec::Parallel);

// Gradient penalty sum_b (||grad_xi D(xi_b)|| - 1)^2 over an interpolated
// batch, with its exact parameter gradient via a closed-form second backward
// pass (ReLU curvature is zero almost everywhere, masks held fixed).
double gradient_penalty(const CriticParams& params, const Mat& X_int,
                        CriticGrads& grads_out, Exec mode = Exec::Parallel);

// Scale all gradients by max_norm/||g|| when the global L2 norm exceeds it.
double clip_grad_norm(CriticGrads& grads, double max_norm = 1.0);

// Checkpoint: one text matrix file per tensor plus a critic.meta key=value file.
void save_critic(const std::string& dir, const CriticParams& params, int iteration);
CriticParams load_critic(const std::string& dir);

}  // namespace msr
