#include "rsg/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace rsg::kernels {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double* y, double alpha, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

namespace {

using DotFn = double (*)(const double*, const double*, std::size_t);
using AxpyFn = void (*)(double*, double, const double*, std::size_t);

struct Dispatch {
    DotFn dot = dot_scalar;
    AxpyFn axpy = axpy_scalar;
    const char* name = "scalar";
};

Dispatch select() {
    Dispatch d;
    const char* force = std::getenv("RSG_SIMD");
    if (force != nullptr && std::strcmp(force, "scalar") == 0) return d;
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        d.dot = dot_avx2;
        d.axpy = axpy_avx2;
        d.name = "avx2";
    }
#endif
    return d;
}

const Dispatch& dispatch() {
    static const Dispatch d = select();
    return d;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
    return dispatch().dot(a, b, n);
}

void axpy(double* y, double alpha, const double* x, std::size_t n) {
    dispatch().axpy(y, alpha, x, n);
}

const char* active_backend() { return dispatch().name; }

}  // namespace rsg::kernels
