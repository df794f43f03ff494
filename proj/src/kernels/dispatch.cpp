#include <atomic>
#include <cstdlib>
#include <cstring>

#include "stonefuse/kernels/avx2.hpp"
#include "stonefuse/kernels/kernels.hpp"
#include "stonefuse/kernels/reference.hpp"

namespace stonefuse::kernels {
namespace {

bool detect_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    if (!avx2::compiled()) return false;
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa initial_isa() {
    if (const char* env = std::getenv("STONEFUSE_ISA"); env && std::strcmp(env, "scalar") == 0) {
        return Isa::scalar;
    }
    return detect_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& isa_slot() {
    static std::atomic<Isa> slot{initial_isa()};
    return slot;
}

constexpr std::size_t kSmallGemm = 4096;

bool use_avx2() { return isa_slot().load(std::memory_order_relaxed) == Isa::avx2; }

}  // namespace

bool avx2_available() { return detect_avx2(); }

Isa active_isa() { return isa_slot().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
    if (isa == Isa::avx2 && !avx2_available()) isa = Isa::scalar;
    isa_slot().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

template <>
void gemm<float>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 float alpha, const float* a, std::size_t lda, const float* b, std::size_t ldb,
                 float beta, float* c, std::size_t ldc) {
    // Packing overhead dominates tiny products (attention MLPs).
    if (!use_avx2() || m * n * k < kSmallGemm) {
        reference::gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
        return;
    }
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        if (beta == 0.0f) {
            std::memset(crow, 0, n * sizeof(float));
        } else if (beta != 1.0f) {
            for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
        }
    }
    if (k == 0 || alpha == 0.0f) return;
    avx2::gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, c, ldc);
}

template <>
void gemm<double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                  double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
                  double beta, double* c, std::size_t ldc) {
    reference::gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <>
void axpy<float>(std::size_t n, float alpha, const float* x, float* y) {
    use_avx2() ? avx2::axpy(n, alpha, x, y) : reference::axpy(n, alpha, x, y);
}

template <>
void axpy<double>(std::size_t n, double alpha, const double* x, double* y) {
    reference::axpy(n, alpha, x, y);
}

template <>
float dot<float>(std::size_t n, const float* x, const float* y) {
    return use_avx2() ? avx2::dot(n, x, y) : reference::dot(n, x, y);
}

template <>
double dot<double>(std::size_t n, const double* x, const double* y) {
    return reference::dot(n, x, y);
}

template <>
float squared_distance<float>(std::size_t n, const float* x, const float* y) {
    return use_avx2() ? avx2::squared_distance(n, x, y) : reference::squared_distance(n, x, y);
}

template <>
double squared_distance<double>(std::size_t n, const double* x, const double* y) {
    return reference::squared_distance(n, x, y);
}

template <>
void adam_step<float>(std::size_t n, float* param, const float* grad, float* m, float* v, float lr,
                      float beta1, float beta2, float eps, float bias_c1, float bias_c2) {
    if (use_avx2()) {
        avx2::adam_step(n, param, grad, m, v, lr, beta1, beta2, eps, bias_c1, bias_c2);
    } else {
        reference::adam_step(n, param, grad, m, v, lr, beta1, beta2, eps, bias_c1, bias_c2);
    }
}

template <>
void adam_step<double>(std::size_t n, double* param, const double* grad, double* m, double* v,
                       double lr, double beta1, double beta2, double eps, double bias_c1,
                       double bias_c2) {
    reference::adam_step(n, param, grad, m, v, lr, beta1, beta2, eps, bias_c1, bias_c2);
}

}  // namespace stonefuse::kernels
