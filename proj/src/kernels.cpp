#include "urs/kernels.hpp"

#include <omp.h>

#include <stdexcept>

namespace urs::kernels {

namespace {

template <class T>
void prepare(Mat<T>& c, int rows, int cols, bool accumulate) {
  if (accumulate) {
    if (c.rows != rows || c.cols != cols) throw std::invalid_argument("gemm: accumulator shape mismatch");
  } else {
    c.resize(rows, cols);
  }
}

template <class T>
inline void row_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, int i) {
  const int k = a.cols, n = b.cols;
  T* __restrict ci = c.row(i);
  const T* ai = a.row(i);
  for (int p = 0; p < k; ++p) {
    const T s = ai[p];
    if (s == T(0)) continue;
    const T* __restrict bp = b.row(p);
    for (int j = 0; j < n; ++j) ci[j] += s * bp[j];
  }
}

template <class T>
inline void row_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, int i) {
  const int k = a.cols, n = b.rows;
  T* __restrict ci = c.row(i);
  const T* __restrict ai = a.row(i);
  for (int j = 0; j < n; ++j) {
    const T* __restrict bj = b.row(j);
    T acc = T(0);
#pragma omp simd reduction(+ : acc)
    for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
    ci[j] += acc;
  }
}

template <class T>
inline void row_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, int i) {
  const int k = a.rows, n = b.cols;
  T* __restrict ci = c.row(i);
  for (int p = 0; p < k; ++p) {
    const T s = a(p, i);
    if (s == T(0)) continue;
    const T* __restrict bp = b.row(p);
    for (int j = 0; j < n; ++j) ci[j] += s * bp[j];
  }
}

template <class T>
void check_inner(int lhs, int rhs) {
  if (lhs != rhs) throw std::invalid_argument("gemm: inner dimensions disagree");
}

bool use_parallel(long long work) {
  return work >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
}

}  // namespace

namespace serial {

template <class T>
void gemm_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate) {
  check_inner<T>(a.cols, b.rows);
  prepare(c, a.rows, b.cols, accumulate);
  for (int i = 0; i < a.rows; ++i) row_nn(a, b, c, i);
}

template <class T>
void gemm_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate) {
  check_inner<T>(a.cols, b.cols);
  prepare(c, a.rows, b.rows, accumulate);
  for (int i = 0; i < a.rows; ++i) row_nt(a, b, c, i);
}

template <class T>
void gemm_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate) {
  check_inner<T>(a.rows, b.rows);
  prepare(c, a.cols, b.cols, accumulate);
  for (int i = 0; i < a.cols; ++i) row_tn(a, b, c, i);
}

}  // namespace serial

namespace parallel {

template <class T>
void gemm_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate) {
  check_inner<T>(a.cols, b.rows);
  prepare(c, a.rows, b.cols, accumulate);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) row_nn(a, b, c, i);
}

template <class T>
void gemm_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate) {
  check_inner<T>(a.cols, b.cols);
  prepare(c, a.rows, b.rows, accumulate);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) row_nt(a, b, c, i);
}

template <class T>
void gemm_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate) {
  check_inner<T>(a.rows, b.rows);
  prepare(c, a.cols, b.cols, accumulate);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.cols; ++i) row_tn(a, b, c, i);
}

}  // namespace parallel

template <class T>
void gemm_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate) {
  if (use_parallel(1LL * a.rows * a.cols * b.cols)) parallel::gemm_nn(a, b, c, accumulate);
  else serial::gemm_nn(a, b, c, accumulate);
}

template <class T>
void gemm_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate) {
  if (use_parallel(1LL * a.rows * a.cols * b.rows)) parallel::gemm_nt(a, b, c, accumulate);
  else serial::gemm_nt(a, b, c, accumulate);
}

template <class T>
void gemm_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate) {
  if (use_parallel(1LL * a.rows * a.cols * b.cols)) parallel::gemm_tn(a, b, c, accumulate);
  else serial::gemm_tn(a, b, c, accumulate);
}

#define URS_INSTANTIATE(T)                                                     \
  template void serial::gemm_nn<T>(const Mat<T>&, const Mat<T>&, Mat<T>&, bool);   \
  template void serial::gemm_nt<T>(const Mat<T>&, const Mat<T>&, Mat<T>&, bool);   \
  template void serial::gemm_tn<T>(const Mat<T>&, const Mat<T>&, Mat<T>&, bool);   \
  template void parallel::gemm_nn<T>(const Mat<T>&, const Mat<T>&, Mat<T>&, bool); \
  template void parallel::gemm_nt<T>(const Mat<T>&, const Mat<T>&, Mat<T>&, bool); \
  template void parallel::gemm_tn<T>(const Mat<T>&, const Mat<T>&, Mat<T>&, bool); \
  template void gemm_nn<T>(const Mat<T>&, const Mat<T>&, Mat<T>&, bool);           \
  template void gemm_nt<T>(const Mat<T>&, const Mat<T>&, Mat<T>&, bool);           \
  template void gemm_tn<T>(const Mat<T>&, const Mat<T>&, Mat<T>&, bool);

URS_INSTANTIATE(float)
URS_INSTANTIATE(double)

#undef URS_INSTANTIATE

}  // namespace urs::kernels
