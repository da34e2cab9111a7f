#pragma once

#include <cstddef>

// Double-precision inner-loop kernels. Scalar reference implementations are
// always compiled; an AVX2+FMA variant is selected once at startup when the
// CPU supports it. Set RSG_SIMD=scalar in the environment to force the
// reference path.
namespace rsg::kernels {

double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double* y, double alpha, const double* x, std::size_t n);

#if defined(__x86_64__) || defined(_M_X64)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double* y, double alpha, const double* x, std::size_t n);
#endif

// Dispatched entry points.
double dot(const double* a, const double* b, std::size_t n);
// y[i] += alpha * x[i]
void axpy(double* y, double alpha, const double* x, std::size_t n);

// Name of the backend currently in use ("scalar" or "avx2").
const char* active_backend();

}  // namespace rsg::kernels
