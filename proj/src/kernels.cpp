#include "msr/linalg.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msr {

namespace {

// ikj loop: C[i,:] accumulates rank-1 slices in increasing k order.
void matmul_rows(double* C, const double* A, const double* B, int n, int k,
                 int p, int i0, int i1) {
  for (int i = i0; i < i1; ++i) {
    double* c = C + static_cast<size_t>(i) * p;
    for (int j = 0; j < p; ++j) c[j] = 0.0;
    const double* arow = A + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* b = B + static_cast<size_t>(kk) * p;
      for (int j = 0; j < p; ++j) c[j] += av * b[j];
    }
  }
}

void matmul_nt_rows(double* C, const double* A, const double* B, int n, int k,
                    int p, int i0, int i1) {
  for (int i = i0; i < i1; ++i) {
    const double* arow = A + static_cast<size_t>(i) * k;
    double* c = C + static_cast<size_t>(i) * p;
    for (int j = 0; j < p; ++j) {
      const double* brow = B + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      c[j] = s;
    }
  }
}

// C = A^T B, parallel over rows of C; n is traversed in increasing order per
// element, tiled so the active slices of A and B stay in cache.
void matmul_tn_rows(double* C, const double* A, const double* B, int n, int k,
                    int p, int i0, int i1) {
  constexpr int kTile = 256;
  for (int i = i0; i < i1; ++i) {
    double* c = C + static_cast<size_t>(i) * p;
    for (int j = 0; j < p; ++j) c[j] = 0.0;
  }
  for (int n0 = 0; n0 < n; n0 += kTile) {
    const int n1 = std::min(n, n0 + kTile);
    for (int i = i0; i < i1; ++i) {
      double* c = C + static_cast<size_t>(i) * p;
      for (int nn = n0; nn < n1; ++nn) {
        const double av = A[static_cast<size_t>(nn) * k + i];
        const double* b = B + static_cast<size_t>(nn) * p;
        for (int j = 0; j < p; ++j) c[j] += av * b[j];
      }
    }
  }
}

template <typename Body>
void run_over_rows(int nrows, Exec mode, Body body) {
  if (mode == Exec::Serial) {
    body(0, nrows);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel
  {
    const int nt = omp_get_num_threads();
    const int t = omp_get_thread_num();
    const int chunk = (nrows + nt - 1) / nt;
    const int i0 = std::min(nrows, t * chunk);
    const int i1 = std::min(nrows, i0 + chunk);
    if (i0 < i1) body(i0, i1);
  }
#else
  body(0, nrows);
#endif
}

}  // namespace

void matmul(Mat& C, const Mat& A, const Mat& B, Exec mode) {
  assert(A.cols == B.rows);
  C = Mat(A.rows, B.cols);
  run_over_rows(A.rows, mode, [&](int i0, int i1) {
    matmul_rows(C.a.data(), A.a.data(), B.a.data(), A.rows, A.cols, B.cols, i0, i1);
  });
}

void matmul_nt(Mat& C, const Mat& A, const Mat& B, Exec mode) {
  assert(A.cols == B.cols);
  C = Mat(A.rows, B.rows);
  run_over_rows(A.rows, mode, [&](int i0, int i1) {
    matmul_nt_rows(C.a.data(), A.a.data(), B.a.data(), A.rows, A.cols, B.rows, i0, i1);
  });
}

void matmul_tn(Mat& C, const Mat& A, const Mat& B, Exec mode) {
  assert(A.rows == B.rows);
  C = Mat(A.cols, B.cols);
  run_over_rows(A.cols, mode, [&](int i0, int i1) {
    matmul_tn_rows(C.a.data(), A.a.data(), B.a.data(), A.rows, A.cols, B.cols, i0, i1);
  });
}

}  // namespace msr
