#pragma once

#include <cstddef>

// Hot inner loops shared by the convolution, matching and mining code.
// Scalar reference kernels always exist; an AVX2 variant is selected at
// runtime when the CPU supports it. The two variants agree to rounding
// (different accumulation order), and are equivalence-tested.
namespace rdn::kernels {

enum class Backend { kScalar, kAvx2 };

// Reference implementations, always available.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double* y, const double* x, double alpha, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double* y, const double* x, double alpha, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
}  // namespace avx2
#endif

// Dispatched entry points.
double dot(const double* a, const double* b, std::size_t n);
void axpy(double* y, const double* x, double alpha, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);

Backend active_backend();
bool avx2_supported();
// Test hook; selecting kAvx2 on a CPU without it is an error.
void set_backend(Backend b);

}  // namespace rdn::kernels
