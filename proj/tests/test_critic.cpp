#include "doctest.h"

#include <filesystem>

#include "msr/critic.hpp"
#include "msr/rng.hpp"

using namespace msr;

namespace {

// Largest singular value via the Jacobi eigenvalue method on A^T A.
// Independent of the power iteration inside spectral_normalize.
double svd_max_oracle(const Mat& A) {
  int n = A.cols;
  Mat S(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int k = 0; k < A.rows; ++k) s += A(k, i) * A(k, j);
      S(i, j) = s;
    }
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += S(p, q) * S(p, q);
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(S(p, q)) < 1e-30) continue;
        double theta = (S(q, q) - S(p, p)) / (2 * S(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1));
        double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (int k = 0; k < n; ++k) {
          double skp = S(k, p), skq = S(k, q);
          S(k, p) = c * skp - s * skq;
          S(k, q) = s * skp + c * skq;
        }
        for (int k = 0; k < n; ++k) {
          double spk = S(p, k), sqk = S(q, k);
          S(p, k) = c * spk - s * sqk;
          S(q, k) = s * spk + c * sqk;
        }
      }
  }
  double lam = 0;
  for (int i = 0; i < n; ++i) lam = std::max(lam, S(i, i));
  return std::sqrt(std::max(lam, 0.0));
}

CriticParams random_critic(int ell, int m, Rng& rng, double scale) {
  CriticParams p = init_critic(ell, m, rng);
  for (double& v : p.W1.a) v = scale * rng.normal();
  for (double& v : p.W2.a) v = scale * rng.normal();
  for (double& v : p.w3.a) v = scale * rng.normal();
  for (double& v : p.b1) v = 0.1 * rng.normal();
  for (double& v : p.b2) v = 0.1 * rng.normal();
  p.b3 = 0.1 * rng.normal();
  p.use_identity_normalization();
  return p;
}

Mat random_batch(int n, int m, Rng& rng) {
  Mat X(n, m);
  for (double& v : X.a) v = rng.normal();
  return X;
}

struct FlatView {
  // Order: W1, b1, W2, b2, w3, b3
  static int size(const CriticParams& p) {
    return static_cast<int>(p.W1.a.size() + p.b1.size() + p.W2.a.size() +
                            p.b2.size() + p.w3.a.size() + 1);
  }
  static double get(const CriticParams& p, int i) {
    size_t k = static_cast<size_t>(i);
    if (k < p.W1.a.size()) return p.W1.a[k];
    k -= p.W1.a.size();
    if (k < p.b1.size()) return p.b1[k];
    k -= p.b1.size();
    if (k < p.W2.a.size()) return p.W2.a[k];
    k -= p.W2.a.size();
    if (k < p.b2.size()) return p.b2[k];
    k -= p.b2.size();
    if (k < p.w3.a.size()) return p.w3.a[k];
    return p.b3;
  }
  static void add(CriticParams& p, int i, double h) {
    size_t k = static_cast<size_t>(i);
    if (k < p.W1.a.size()) { p.W1.a[k] += h; return; }
    k -= p.W1.a.size();
    if (k < p.b1.size()) { p.b1[k] += h; return; }
    k -= p.b1.size();
    if (k < p.W2.a.size()) { p.W2.a[k] += h; return; }
    k -= p.W2.a.size();
    if (k < p.b2.size()) { p.b2[k] += h; return; }
    k -= p.b2.size();
    if (k < p.w3.a.size()) { p.w3.a[k] += h; return; }
    p.b3 += h;
  }
  static double grad_at(const CriticGrads& g, int i) {
    size_t k = static_cast<size_t>(i);
    if (k < g.W1.a.size()) return g.W1.a[k];
    k -= g.W1.a.size();
    if (k < g.b1.size()) return g.b1[k];
    k -= g.b1.size();
    if (k < g.W2.a.size()) return g.W2.a[k];
    k -= g.W2.a.size();
    if (k < g.b2.size()) return g.b2[k];
    k -= g.b2.size();
    if (k < g.w3.a.size()) return g.w3.a[k];
    return g.b3;
  }
};

}  // namespace

TEST_CASE("init_critic has the documented shapes and statistics") {
  Rng rng(1);
  CriticParams p = init_critic(100, 24, rng);
  CHECK(p.W1.rows == 100);
  CHECK(p.W1.cols == 24);
  CHECK(p.W2.rows == 50);
  CHECK(p.W2.cols == 100);
  CHECK(p.w3.rows == 1);
  CHECK(p.w3.cols == 50);
  for (double b : p.b1) CHECK(b == 0.0);
  for (double b : p.b2) CHECK(b == 0.0);
  CHECK(p.b3 == 0.0);
  double s2 = 0;
  for (double v : p.W1.a) s2 += v * v;
  // sample std close to the 0.01 init scale
  CHECK(std::sqrt(s2 / p.W1.a.size()) == doctest::Approx(0.01).epsilon(0.1));
}

TEST_CASE("spectral_normalize converges to the Jacobi SVD oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    CriticParams p = init_critic(40, 12, rng);
    for (double& v : p.W1.a) v = rng.normal();
    for (double& v : p.W2.a) v = rng.normal();
    for (double& v : p.w3.a) v = rng.normal();
    spectral_normalize(p, 3000);
    CHECK(p.s1 == doctest::Approx(svd_max_oracle(p.W1)).epsilon(1e-8));
    CHECK(p.s2 == doctest::Approx(svd_max_oracle(p.W2)).epsilon(1e-8));
    CHECK(p.s3 == doctest::Approx(svd_max_oracle(p.w3)).epsilon(1e-8));
    CHECK(svd_max_oracle(p.Wt1) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(svd_max_oracle(p.Wt2) == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("forward matches a hand-rolled 3-layer evaluation") {
  Rng rng(17);
  int m = 6, ell = 8;
  CriticParams p = random_critic(ell, m, rng, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    Vec xi(m);
    for (double& v : xi) v = rng.normal();
    Vec h1(ell);
    for (int i = 0; i < ell; ++i) {
      double s = p.b1[i];
      for (int j = 0; j < m; ++j) s += p.Wt1(i, j) * xi[j];
      h1[i] = std::max(s, 0.0);
    }
    Vec h2(ell / 2);
    for (int i = 0; i < ell / 2; ++i) {
      double s = p.b2[i];
      for (int j = 0; j < ell; ++j) s += p.Wt2(i, j) * h1[j];
      h2[i] = std::max(s, 0.0);
    }
    double out = p.b3;
    for (int j = 0; j < ell / 2; ++j) out += p.wt3(0, j) * h2[j];
    CHECK(forward(p, xi) == doctest::Approx(out).epsilon(1e-13));
  }
  // batched path agrees with single-row path
  Mat X = random_batch(9, m, rng);
  CriticTape tape;
  forward_batch(p, X, tape);
  for (int b = 0; b < 9; ++b) {
    Vec row(X.row(b), X.row(b) + m);
    CHECK(tape.scores[b] == doctest::Approx(forward(p, row)).epsilon(1e-13));
  }
}

TEST_CASE("grad_params matches finite differences") {
  Rng rng(23);
  int m = 5, ell = 6, n = 4;
  int instances = 0;
  for (int trial = 0; trial < 12; ++trial) {
    CriticParams p = random_critic(ell, m, rng, 0.6);
    Mat X = random_batch(n, m, rng);
    Vec upstream(n);
    for (double& v : upstream) v = rng.normal();

    CriticTape tape;
    forward_batch(p, X, tape);
    CriticGrads g = grad_params(p, tape, upstream);

    double h = 1e-6;
    int P = FlatView::size(p);
    for (int i = 0; i < P; ++i) {
      CriticParams pp = p, pm = p;
      FlatView::add(pp, i, h);
      FlatView::add(pm, i, -h);
      pp.use_identity_normalization();
      pm.use_identity_normalization();
      double fp = 0, fm = 0;
      for (int b = 0; b < n; ++b) {
        Vec row(X.row(b), X.row(b) + m);
        fp += upstream[b] * forward(pp, row);
        fm += upstream[b] * forward(pm, row);
      }
      double fd = (fp - fm) / (2 * h);
      CHECK(FlatView::grad_at(g, i) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
      ++instances;
    }
  }
  CHECK(instances > 50);
}

TEST_CASE("grad_input_batch matches finite differences") {
  Rng rng(29);
  int m = 7, ell = 10, n = 5;
  CriticParams p = random_critic(ell, m, rng, 0.6);
  for (int trial = 0; trial < 10; ++trial) {
    Mat X = random_batch(n, m, rng);
    CriticTape tape;
    forward_batch(p, X, tape);
    Mat G = grad_input_batch(p, tape);
    double h = 1e-6;
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < m; ++i) {
        Vec xp(X.row(b), X.row(b) + m), xm = xp;
        xp[i] += h;
        xm[i] -= h;
        double fd = (forward(p, xp) - forward(p, xm)) / (2 * h);
        CHECK(G(b, i) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
      }
  }
}

TEST_CASE("raw-parameter gradients are effective gradients over sigma") {
  Rng rng(31);
  int m = 6, ell = 8, n = 5;
  CriticParams p = init_critic(ell, m, rng);
  for (double& v : p.W1.a) v = 0.4 * rng.normal();
  for (double& v : p.W2.a) v = 0.4 * rng.normal();
  for (double& v : p.w3.a) v = 0.4 * rng.normal();
  spectral_normalize(p, 100);

  // Same effective network with identity normalization on the raw slots.
  CriticParams q = p;
  q.W1 = p.Wt1;
  q.W2 = p.Wt2;
  q.w3 = p.wt3;
  q.use_identity_normalization();

  Mat X = random_batch(n, m, rng);
  Vec upstream(n, 1.0);
  CriticTape tp, tq;
  forward_batch(p, X, tp);
  forward_batch(q, X, tq);
  for (int b = 0; b < n; ++b)
    CHECK(tp.scores[b] == doctest::Approx(tq.scores[b]).epsilon(1e-12));

  CriticGrads gp = grad_params(p, tp, upstream);
  CriticGrads gq = grad_params(q, tq, upstream);
  for (size_t i = 0; i < gp.W1.a.size(); ++i)
    CHECK(gp.W1.a[i] == doctest::Approx(gq.W1.a[i] / p.s1).epsilon(1e-10));
  for (size_t i = 0; i < gp.W2.a.size(); ++i)
    CHECK(gp.W2.a[i] == doctest::Approx(gq.W2.a[i] / p.s2).epsilon(1e-10));
  for (size_t i = 0; i < gp.w3.a.size(); ++i)
    CHECK(gp.w3.a[i] == doctest::Approx(gq.w3.a[i] / p.s3).epsilon(1e-10));
  for (size_t i = 0; i < gp.b1.size(); ++i)
    CHECK(gp.b1[i] == doctest::Approx(gq.b1[i]).epsilon(1e-10));
}

TEST_CASE("gradient_penalty value and gradient match finite differences") {
  Rng rng(37);
  int m = 5, ell = 6, n = 3;
  int instances = 0;
  for (int trial = 0; trial < 10; ++trial) {
    CriticParams p = random_critic(ell, m, rng, 0.6);
    Mat X = random_batch(n, m, rng);

    CriticGrads g;
    double gp = gradient_penalty(p, X, g);

    // value oracle from grad_input_batch
    CriticTape tape;
    forward_batch(p, X, tape);
    Mat G = grad_input_batch(p, tape);
    double want = 0;
    for (int b = 0; b < n; ++b) {
      double nrm = norm2(std::span<const double>(G.row(b), static_cast<size_t>(m)));
      want += (nrm - 1) * (nrm - 1);
    }
    CHECK(gp == doctest::Approx(want).epsilon(1e-12));

    double h = 1e-6;
    int P = FlatView::size(p);
    for (int i = 0; i < P; ++i) {
      CriticParams pp = p, pm = p;
      FlatView::add(pp, i, h);
      FlatView::add(pm, i, -h);
      pp.use_identity_normalization();
      pm.use_identity_normalization();
      CriticGrads scratch;
      double fp = gradient_penalty(pp, X, scratch);
      double fm = gradient_penalty(pm, X, scratch);
      double fd = (fp - fm) / (2 * h);
      CHECK(FlatView::grad_at(g, i) == doctest::Approx(fd).epsilon(5e-5).scale(1.0));
      ++instances;
    }
  }
  CHECK(instances > 50);
}

TEST_CASE("clip_grad_norm rescales only above the threshold") {
  CriticGrads g;
  g.init(4, 4);
  g.W1(0, 0) = 3.0;
  g.W1(1, 1) = 4.0;
  CHECK(g.global_norm() == doctest::Approx(5.0));
  double n = clip_grad_norm(g, 1.0);
  CHECK(n == doctest::Approx(5.0));
  CHECK(g.global_norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.W1(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  double n2 = clip_grad_norm(g, 1.0);
  CHECK(n2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.W1(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("stale tapes are rejected") {
  Rng rng(2);
  CriticParams p = init_critic(8, 4, rng);
  Mat X = random_batch(3, 4, rng);
  CriticTape tape;
  forward_batch(p, X, tape);
  spectral_normalize(p, 1);  // bumps the stamp
  Vec upstream(3, 1.0);
  CHECK_THROWS_AS(grad_params(p, tape, upstream), std::logic_error);
}

TEST_CASE("critic checkpoints round-trip") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "msr_test_critic";
  fs::create_directories(dir);
  Rng rng(41);
  CriticParams p = init_critic(12, 5, rng);
  spectral_normalize(p, 3);
  save_critic(dir.string(), p, 777);
  CriticParams q = load_critic(dir.string());
  CHECK(q.m == p.m);
  CHECK(q.ell == p.ell);
  CHECK(q.W1.a == p.W1.a);
  CHECK(q.W2.a == p.W2.a);
  CHECK(q.w3.a == p.w3.a);
  CHECK(q.b1 == p.b1);
  CHECK(q.b2 == p.b2);
  CHECK(q.b3 == p.b3);
  CHECK(q.u1 == p.u1);
  Rng probe(3);
  Vec xi(5);
  for (double& v : xi) v = probe.normal();
  CHECK(forward(q, xi) == forward(p, xi));
  fs::remove_all(dir);
}
