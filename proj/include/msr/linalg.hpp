#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace msr {

using Vec = std::vector<double>;

// Dense row-major matrix.
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

// Kernel execution mode. The parallel kernels compute every output element
// with the same accumulation order as the serial ones, so the two variants
// agree bitwise for any thread count.
enum class Exec { Serial, Parallel };

// C = A * B            (A: n x k, B: k x p)
void matmul(Mat& C, const Mat& A, const Mat& B, Exec mode = Exec::Parallel);
// C = A * B^T          (A: n x k, B: p x k)
void matmul_nt(Mat& C, const Mat& A, const Mat& B, Exec mode = Exec::Parallel);
// C = A^T * B          (A: n x k, B: n x p, C: k x p)
void matmul_tn(Mat& C, const Mat& A, const Mat& B, Exec mode = Exec::Parallel);

inline double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(std::span<double> x, double alpha) {
  for (double& v : x) v *= alpha;
}

}  // namespace msr
