#include "msr/critic.hpp"

#include <cmath>
#include <stdexcept>

#include "msr/io.hpp"

namespace msr {

namespace {

void colsum(const Mat& M, Vec& out) {
  out.assign(M.cols, 0.0);
  for (int i = 0; i < M.rows; ++i) {
    const double* r = M.row(i);
    for (int j = 0; j < M.cols; ++j) out[j] += r[j];
  }
}

// One power-iteration step on W; sigma estimate guarded against zero weights.
void power_step(const Mat& W, Vec& u, double& sigma) {
  const int r = W.rows, c = W.cols;
  Vec v(c, 0.0);
  for (int i = 0; i < r; ++i) {
    const double* row = W.row(i);
    for (int j = 0; j < c; ++j) v[j] += row[j] * u[i];
  }
  double vn = norm2(v);
  if (vn < 1e-30) {
    sigma = 1.0;
    return;
  }
  for (double& x : v) x /= vn;
  Vec w(r, 0.0);
  for (int i = 0; i < r; ++i) w[i] = dot({W.row(i), static_cast<size_t>(c)}, v);
  double wn = norm2(w);
  if (wn < 1e-30) {
    sigma = 1.0;
    return;
  }
  sigma = wn;
  for (int i = 0; i < r; ++i) u[i] = w[i] / wn;
}

void scaled_copy(const Mat& W, double sigma, Mat& out) {
  out = W;
  if (sigma != 1.0) scale(out.a, 1.0 / sigma);
}

}  // namespace

void CriticGrads::add_scaled(const CriticGrads& g, double c) {
  axpy(c, g.W1.a, W1.a);
  axpy(c, g.W2.a, W2.a);
  axpy(c, g.w3.a, w3.a);
  axpy(c, g.b1, b1);
  axpy(c, g.b2, b2);
  b3 += c * g.b3;
}

double CriticGrads::global_norm() const {
  double s = dot(W1.a, W1.a) + dot(W2.a, W2.a) + dot(w3.a, w3.a) +
             dot(b1, b1) + dot(b2, b2) + b3 * b3;
  return std::sqrt(s);
}

CriticParams init_critic(int ell, int m, Rng& rng) {
  if (ell < 2 || ell % 2 != 0) throw std::invalid_argument("init_critic: ell must be even and >= 2");
  if (m < 1) throw std::invalid_argument("init_critic: m must be >= 1");
  CriticParams p;
  p.m = m;
  p.ell = ell;
  p.W1 = Mat(ell, m);
  p.W2 = Mat(ell / 2, ell);
  p.w3 = Mat(1, ell / 2);
  p.b1.assign(ell, 0.0);
  p.b2.assign(ell / 2, 0.0);
  for (double& w : p.W1.a) w = 0.01 * rng.normal();
  for (double& w : p.W2.a) w = 0.01 * rng.normal();
  for (double& w : p.w3.a) w = 0.01 * rng.normal();
  auto random_unit = [&rng](int n) {
    Vec u(n);
    double nn = 0.0;
    do {
      for (double& x : u) x = rng.normal();
      nn = norm2(u);
    } while (nn < 1e-12);
    for (double& x : u) x /= nn;
    return u;
  };
  p.u1 = random_unit(ell);
  p.u2 = random_unit(ell / 2);
  p.u3 = random_unit(1);
  spectral_normalize(p, 5);  // warm-start the singular value estimates
  return p;
}

void spectral_normalize(CriticParams& params, int power_iters) {
  for (int it = 0; it < power_iters; ++it) {
    power_step(params.W1, params.u1, params.s1);
    power_step(params.W2, params.u2, params.s2);
    power_step(params.w3, params.u3, params.s3);
  }
  scaled_copy(params.W1, params.s1, params.Wt1);
  scaled_copy(params.W2, params.s2, params.Wt2);
  scaled_copy(params.w3, params.s3, params.wt3);
  ++params.stamp;
}

void forward_batch(const CriticParams& params, Mat X, CriticTape& tape, Exec mode) {
  if (X.cols != params.m) throw std::invalid_argument("forward_batch: input length mismatch");
  const int n = X.rows;
  tape.X = std::move(X);
  matmul_nt(tape.H1, tape.X, params.Wt1, mode);
  for (int i = 0; i < n; ++i) {
    double* r = tape.H1.row(i);
    for (int j = 0; j < params.ell; ++j) {
      r[j] += params.b1[j];
      if (r[j] < 0) r[j] = 0;
    }
  }
  matmul_nt(tape.H2, tape.H1, params.Wt2, mode);
  const int h = params.ell / 2;
  tape.scores.assign(n, params.b3);
  for (int i = 0; i < n; ++i) {
    double* r = tape.H2.row(i);
    double s = 0.0;
    for (int j = 0; j < h; ++j) {
      r[j] += params.b2[j];
      if (r[j] < 0) r[j] = 0;
      s += r[j] * params.wt3.a[j];
    }
    tape.scores[i] += s;
  }
  tape.params_stamp = params.stamp;
}

double forward(const CriticParams& params, std::span<const double> xi) {
  Mat X(1, params.m);
  std::copy(xi.begin(), xi.end(), X.row(0));
  CriticTape tape;
  forward_batch(params, std::move(X), tape, Exec::Serial);
  return tape.scores[0];
}

CriticGrads grad_params(const CriticParams& params, const CriticTape& tape,
                        const Vec& upstream, Exec mode) {
  if (tape.params_stamp != params.stamp)
    throw std::logic_error("grad_params: tape is stale (parameters changed since forward)");
  const int n = tape.X.rows, h = params.ell / 2;
  if (static_cast<int>(upstream.size()) != n)
    throw std::invalid_argument("grad_params: upstream size mismatch");
  CriticGrads g;
  g.init(params.m, params.ell);

  // delta2 = (upstream * wt3) masked by layer-2 activity
  Mat delta2(n, h);
  for (int i = 0; i < n; ++i) {
    const double* h2 = tape.H2.row(i);
    double* d2 = delta2.row(i);
    const double u = upstream[i];
    for (int j = 0; j < h; ++j) d2[j] = h2[j] > 0 ? u * params.wt3.a[j] : 0.0;
    g.b3 += u;
    for (int j = 0; j < h; ++j) g.w3.a[j] += u * h2[j];
  }
  matmul_tn(g.W2, delta2, tape.H1, mode);
  colsum(delta2, g.b2);

  Mat delta1;
  matmul(delta1, delta2, params.Wt2, mode);
  for (int i = 0; i < n; ++i) {
    const double* h1 = tape.H1.row(i);
    double* d1 = delta1.row(i);
    for (int j = 0; j < params.ell; ++j)
      if (h1[j] <= 0) d1[j] = 0.0;
  }
  matmul_tn(g.W1, delta1, tape.X, mode);
  colsum(delta1, g.b1);

  // chain through the constant 1/sigma normalization
  scale(g.W1.a, 1.0 / params.s1);
  scale(g.W2.a, 1.0 / params.s2);
  scale(g.w3.a, 1.0 / params.s3);
  return g;
}

Mat grad_input_batch(const CriticParams& params, const CriticTape& tape, Exec mode) {
  if (tape.params_stamp != params.stamp)
    throw std::logic_error("grad_input_batch: tape is stale");
  const int n = tape.X.rows, h = params.ell / 2;
  Mat P(n, h);  // rows: wt3 masked by layer-2 activity
  for (int i = 0; i < n; ++i) {
    const double* h2 = tape.H2.row(i);
    double* pr = P.row(i);
    for (int j = 0; j < h; ++j) pr[j] = h2[j] > 0 ? params.wt3.a[j] : 0.0;
  }
  Mat U1;
  matmul(U1, P, params.Wt2, mode);
  for (int i = 0; i < n; ++i) {
    const double* h1 = tape.H1.row(i);
    double* u = U1.row(i);
    for (int j = 0; j < params.ell; ++j)
      if (h1[j] <= 0) u[j] = 0.0;
  }
  Mat G;
  matmul(G, U1, params.Wt1, mode);
  return G;
}

double gradient_penalty(const CriticParams& params, const Mat& X_int,
                        CriticGrads& grads_out, Exec mode) {
  const int n = X_int.rows, h = params.ell / 2, m = params.m;
  CriticTape tape;
  forward_batch(params, X_int, tape, mode);

  Mat P(n, h);
  for (int i = 0; i < n; ++i) {
    const double* h2 = tape.H2.row(i);
    double* pr = P.row(i);
    for (int j = 0; j < h; ++j) pr[j] = h2[j] > 0 ? params.wt3.a[j] : 0.0;
  }
  Mat U1;
  matmul(U1, P, params.Wt2, mode);
  for (int i = 0; i < n; ++i) {
    const double* h1 = tape.H1.row(i);
    double* u = U1.row(i);
    for (int j = 0; j < params.ell; ++j)
      if (h1[j] <= 0) u[j] = 0.0;
  }
  Mat G;
  matmul(G, U1, params.Wt1, mode);

  // gp = sum_b (||g_b|| - 1)^2; V holds the upstream input-gradient direction
  // 2(||g||-1)/||g|| * g (zero subgradient at the norm's origin).
  double gp = 0.0;
  Mat V(n, m);
  for (int i = 0; i < n; ++i) {
    const double* grow = G.row(i);
    double ng = norm2({grow, static_cast<size_t>(m)});
    gp += (ng - 1.0) * (ng - 1.0);
    double coef = ng > 0 ? 2.0 * (ng - 1.0) / ng : 0.0;
    double* v = V.row(i);
    for (int j = 0; j < m; ++j) v[j] = coef * grow[j];
  }

  // Second backward pass with the ReLU masks held fixed: d(v^T g)/dW.
  grads_out.init(m, params.ell);
  Mat A;
  matmul_nt(A, V, params.Wt1, mode);  // n x ell
  for (int i = 0; i < n; ++i) {
    const double* h1 = tape.H1.row(i);
    double* a = A.row(i);
    for (int j = 0; j < params.ell; ++j)
      if (h1[j] <= 0) a[j] = 0.0;
  }
  Mat C;
  matmul_nt(C, A, params.Wt2, mode);  // n x h
  for (int i = 0; i < n; ++i) {
    const double* h2 = tape.H2.row(i);
    const double* c = C.row(i);
    for (int j = 0; j < h; ++j)
      if (h2[j] > 0) grads_out.w3.a[j] += c[j];
  }
  matmul_tn(grads_out.W2, P, A, mode);   // sum_b (r2 o wt3) a1^T
  matmul_tn(grads_out.W1, U1, V, mode);  // sum_b u1 v^T
  scale(grads_out.W1.a, 1.0 / params.s1);
  scale(grads_out.W2.a, 1.0 / params.s2);
  scale(grads_out.w3.a, 1.0 / params.s3);
  return gp;
}

double clip_grad_norm(CriticGrads& grads, double max_norm) {
  double g = grads.global_norm();
  if (g > max_norm && g > 0) {
    const double c = max_norm / g;
    scale(grads.W1.a, c);
    scale(grads.W2.a, c);
    scale(grads.w3.a, c);
    scale(grads.b1, c);
    scale(grads.b2, c);
    grads.b3 *= c;
  }
  return g;
}

void save_critic(const std::string& dir, const CriticParams& p, int iteration) {
  io::write_matrix(dir + "/critic_W1.mat", p.W1);
  io::write_matrix(dir + "/critic_W2.mat", p.W2);
  io::write_matrix(dir + "/critic_w3.mat", p.w3);
  Mat b1(1, p.ell), b2(1, p.ell / 2), b3(1, 1);
  std::copy(p.b1.begin(), p.b1.end(), b1.row(0));
  std::copy(p.b2.begin(), p.b2.end(), b2.row(0));
  b3(0, 0) = p.b3;
  io::write_matrix(dir + "/critic_b1.mat", b1);
  io::write_matrix(dir + "/critic_b2.mat", b2);
  io::write_matrix(dir + "/critic_b3.mat", b3);
  Mat u1(1, p.ell), u2(1, p.ell / 2), u3(1, 1);
  std::copy(p.u1.begin(), p.u1.end(), u1.row(0));
  std::copy(p.u2.begin(), p.u2.end(), u2.row(0));
  u3(0, 0) = p.u3[0];
  io::write_matrix(dir + "/critic_u1.mat", u1);
  io::write_matrix(dir + "/critic_u2.mat", u2);
  io::write_matrix(dir + "/critic_u3.mat", u3);
  io::write_kv(dir + "/critic.meta", {{"ell", std::to_string(p.ell)},
                                      {"m", std::to_string(p.m)},
                                      {"iteration", std::to_string(iteration)},
                                      {"s1", io::format_double(p.s1)},
                                      {"s2", io::format_double(p.s2)},
                                      {"s3", io::format_double(p.s3)}});
}

CriticParams load_critic(const std::string& dir) {
  auto meta = io::read_kv(dir + "/critic.meta");
  CriticParams p;
  p.ell = std::stoi(meta.at("ell"));
  p.m = std::stoi(meta.at("m"));
  p.W1 = io::read_matrix(dir + "/critic_W1.mat");
  p.W2 = io::read_matrix(dir + "/critic_W2.mat");
  p.w3 = io::read_matrix(dir + "/critic_w3.mat");
  Mat b1 = io::read_matrix(dir + "/critic_b1.mat");
  Mat b2 = io::read_matrix(dir + "/critic_b2.mat");
  Mat b3 = io::read_matrix(dir + "/critic_b3.mat");
  p.b1.assign(b1.row(0), b1.row(0) + b1.cols);
  p.b2.assign(b2.row(0), b2.row(0) + b2.cols);
  p.b3 = b3(0, 0);
  Mat u1 = io::read_matrix(dir + "/critic_u1.mat");
  Mat u2 = io::read_matrix(dir + "/critic_u2.mat");
  Mat u3 = io::read_matrix(dir + "/critic_u3.mat");
  p.u1.assign(u1.row(0), u1.row(0) + u1.cols);
  p.u2.assign(u2.row(0), u2.row(0) + u2.cols);
  p.u3.assign(u3.row(0), u3.row(0) + u3.cols);
  // Restore the exact normalized state; no extra power steps on load.
  p.s1 = io::parse_double(meta.at("s1"));
  p.s2 = io::parse_double(meta.at("s2"));
  p.s3 = io::parse_double(meta.at("s3"));
  scaled_copy(p.W1, p.s1, p.Wt1);
  scaled_copy(p.W2, p.s2, p.Wt2);
  scaled_copy(p.w3, p.s3, p.wt3);
  ++p.stamp;
  return p;
}

}  // namespace msr
