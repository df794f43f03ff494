#pragma once

#include <cstddef>

// AVX2/FMA float kernels. Only call through the dispatcher in kernels.hpp;
// these symbols execute illegal instructions on CPUs without AVX2.
namespace stonefuse::kernels::avx2 {

bool compiled();

// C += alpha * op(A) * op(B), row-major; beta is applied by the caller.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc);
void axpy(std::size_t n, float alpha, const float* x, float* y);
float dot(std::size_t n, const float* x, const float* y);
float squared_distance(std::size_t n, const float* x, const float* y);
void adam_step(std::size_t n, float* param, const float* grad, float* m, float* v, float lr,
               float beta1, float beta2, float eps, float bias_c1, float bias_c2);

}  // namespace stonefuse::kernels::avx2
