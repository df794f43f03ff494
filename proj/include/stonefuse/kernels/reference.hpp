#pragma once

#include <cmath>
#include <cstddef>

namespace stonefuse::kernels::reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * ldc;
        if (beta == T{0}) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = T{0};
        } else if (beta != T{1}) {
            for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
        }
        for (std::size_t p = 0; p < k; ++p) {
            const T av = alpha * (trans_a ? a[p * lda + i] : a[i * lda + p]);
            if (av == T{0}) continue;
            if (!trans_b) {
                const T* brow = b + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
            }
        }
    }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
    T acc{0};
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

template <typename T>
T squared_distance(std::size_t n, const T* x, const T* y) {
    T acc{0};
    for (std::size_t i = 0; i < n; ++i) {
        const T d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

template <typename T>
void adam_step(std::size_t n, T* param, const T* grad, T* m, T* v, T lr, T beta1, T beta2, T eps,
               T bias_c1, T bias_c2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T{1} - beta1) * grad[i];
        v[i] = beta2 * v[i] + (T{1} - beta2) * grad[i] * grad[i];
        const T mhat = m[i] / bias_c1;
        const T vhat = v[i] / bias_c2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace stonefuse::kernels::reference
