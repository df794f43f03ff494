#pragma once

// Numeric inner loops. Each kernel has a portable scalar reference in
// reference.hpp; float kernels additionally have an AVX2/FMA variant that is
// chosen at runtime when the CPU supports it. Double always runs the reference.

#include <cstddef>
#include <string_view>

namespace stonefuse::kernels {

enum class Isa { scalar, avx2 };

// True when this binary carries the AVX2 variants and the CPU can run them.
bool avx2_available();

// Currently dispatched ISA. Defaults to the best available; the environment
// variable STONEFUSE_ISA=scalar forces the reference path.
Isa active_isa();
void set_isa(Isa isa);
std::string_view isa_name(Isa isa);

// C = alpha * op(A) * op(B) + beta * C, row-major. op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

// y += alpha * x
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);

template <typename T>
T dot(std::size_t n, const T* x, const T* y);

template <typename T>
T squared_distance(std::size_t n, const T* x, const T* y);

// One Adam step over a contiguous parameter block. bias_c1 = 1 - beta1^t and
// bias_c2 = 1 - beta2^t are precomputed by the caller.
template <typename T>
void adam_step(std::size_t n, T* param, const T* grad, T* m, T* v, T lr, T beta1, T beta2, T eps,
               T bias_c1, T bias_c2);

}  // namespace stonefuse::kernels
