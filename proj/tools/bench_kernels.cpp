// Compares the serial reference kernels against the OpenMP variants on the
// matrix shapes the trainer actually produces, and times a full critic
// forward/backward cycle.
#include <chrono>
#include <cstdio>

#include "msr/critic.hpp"
#include "msr/linalg.hpp"
#include "msr/rng.hpp"

using namespace msr;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void fill(Mat& m, Rng& rng) {
  for (double& v : m.a) v = rng.normal();
}

void bench_matmul(const char* name, int n, int k, int p, int reps) {
  Rng rng(7);
  Mat A(n, k), B(k, p), C;
  fill(A, rng);
  fill(B, rng);
  double t0 = now_s();
  for (int r = 0; r < reps; ++r) matmul(C, A, B, Exec::Serial);
  double serial = now_s() - t0;
  t0 = now_s();
  for (int r = 0; r < reps; ++r) matmul(C, A, B, Exec::Parallel);
  double parallel = now_s() - t0;
  const double gf = 2.0 * n * k * p * reps / 1e9;
  std::printf("%-24s %5dx%-4dx%-4d serial %7.2f GFLOPS  parallel %7.2f GFLOPS  speedup %.2fx\n",
              name, n, k, p, gf / serial, gf / parallel, serial / parallel);
}

}  // namespace

int main() {
  // generator-step shapes (B=200, d=64, m=24, ell=100)
  bench_matmul("gen layer1", 12800, 24, 100, 20);
  bench_matmul("gen layer2", 12800, 100, 50, 20);
  bench_matmul("gen input-grad", 12800, 100, 24, 20);
  // critic-step shapes
  bench_matmul("critic layer1", 400, 24, 100, 200);
  bench_matmul("critic layer2", 400, 100, 50, 200);

  Rng rng(11);
  CriticParams params = init_critic(100, 24, rng);
  Mat X(12800, 24);
  fill(X, rng);
  for (Exec mode : {Exec::Serial, Exec::Parallel}) {
    CriticTape tape;
    double t0 = now_s();
    const int reps = 20;
    for (int r = 0; r < reps; ++r) {
      forward_batch(params, X, tape, mode);
      Mat G = grad_input_batch(params, tape, mode);
    }
    double dt = (now_s() - t0) / reps;
    std::printf("critic fwd+input-grad (12800x24, ell=100), %s: %.1f ms\n",
                mode == Exec::Serial ? "serial" : "parallel", dt * 1e3);
  }
  return 0;
}
