#include "rdn/kernels.hpp"

#include "rdn/errors.hpp"

namespace rdn::kernels {

namespace {

using DotFn = double (*)(const double*, const double*, std::size_t);
using AxpyFn = void (*)(double*, const double*, double, std::size_t);
using SqDistFn = double (*)(const double*, const double*, std::size_t);

struct Table {
  DotFn dot;
  AxpyFn axpy;
  SqDistFn squared_distance;
  Backend backend;
};

Table pick_default() {
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_supported()) {
    return {avx2::dot, avx2::axpy, avx2::squared_distance, Backend::kAvx2};
  }
#endif
  return {scalar::dot, scalar::axpy, scalar::squared_distance,
          Backend::kScalar};
}

Table& table() {
  static Table t = pick_default();
  return t;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

void set_backend(Backend b) {
  if (b == Backend::kScalar) {
    table() = {scalar::dot, scalar::axpy, scalar::squared_distance,
               Backend::kScalar};
    return;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_supported()) {
    table() = {avx2::dot, avx2::axpy, avx2::squared_distance, Backend::kAvx2};
    return;
  }
#endif
  throw ContractViolation("avx2 backend requested on unsupported CPU");
}

Backend active_backend() { return table().backend; }

double dot(const double* a, const double* b, std::size_t n) {
  return table().dot(a, b, n);
}

void axpy(double* y, const double* x, double alpha, std::size_t n) {
  table().axpy(y, x, alpha, n);
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  return table().squared_distance(a, b, n);
}

}  // namespace rdn::kernels
