#pragma once

#include "urs/tensor.hpp"

// Dense kernels behind the autodiff tape. Each routine has a straight serial
// reference and an OpenMP row-parallel version; the dispatching entry points
// pick the parallel path only for large problems outside an enclosing
// parallel region.
namespace urs::kernels {

namespace serial {
// C (+)= A * B      A: m x k, B: k x n
template <class T> void gemm_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate);
// C (+)= A * B^T    A: m x k, B: n x k
template <class T> void gemm_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate);
// C (+)= A^T * B    A: k x m, B: k x n
template <class T> void gemm_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate);
}  // namespace serial

namespace parallel {
template <class T> void gemm_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate);
template <class T> void gemm_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate);
template <class T> void gemm_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate);
}  // namespace parallel

template <class T> void gemm_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate);
template <class T> void gemm_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate);
template <class T> void gemm_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c, bool accumulate);

// Work (multiply-adds) above which the dispatcher goes parallel.
inline constexpr long long kParallelThreshold = 1LL << 18;

}  // namespace urs::kernels
