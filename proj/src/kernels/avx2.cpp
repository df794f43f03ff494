#include "stonefuse/kernels/avx2.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <new>

namespace stonefuse::kernels::avx2 {
namespace {

constexpr std::size_t kBlockK = 256;
constexpr std::size_t kBlockM = 96;
constexpr std::size_t kBlockN = 1024;
constexpr std::size_t kRows = 6;
constexpr std::size_t kCols = 16;

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
}

// op(A)[i0.., p0..] into kRows-wide panels: dst[panel][p][r], zero padded.
void pack_a(bool trans, const float* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, float* dst) {
    for (std::size_t ir = 0; ir < mc; ir += kRows) {
        const std::size_t rows = std::min(kRows, mc - ir);
        float* panel = dst + ir * kc;
        if (trans) {
            for (std::size_t p = 0; p < kc; ++p) {
                const float* src = a + (p0 + p) * lda + i0 + ir;
                std::size_t r = 0;
                for (; r < rows; ++r) panel[p * kRows + r] = src[r];
                for (; r < kRows; ++r) panel[p * kRows + r] = 0.0f;
            }
        } else {
            for (std::size_t r = 0; r < kRows; ++r) {
                if (r >= rows) {
                    for (std::size_t p = 0; p < kc; ++p) panel[p * kRows + r] = 0.0f;
                    continue;
                }
                const float* src = a + (i0 + ir + r) * lda + p0;
                for (std::size_t p = 0; p < kc; ++p) panel[p * kRows + r] = src[p];
            }
        }
    }
}

// op(B)[p0.., j0..] into kCols-wide panels: dst[panel][p][c], zero padded.
void pack_b(bool trans, const float* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, float* dst) {
    for (std::size_t jr = 0; jr < nc; jr += kCols) {
        const std::size_t cols = std::min(kCols, nc - jr);
        float* panel = dst + jr * kc;
        if (trans) {
            for (std::size_t c = 0; c < kCols; ++c) {
                if (c >= cols) {
                    for (std::size_t p = 0; p < kc; ++p) panel[p * kCols + c] = 0.0f;
                    continue;
                }
                const float* src = b + (j0 + jr + c) * ldb + p0;
                for (std::size_t p = 0; p < kc; ++p) panel[p * kCols + c] = src[p];
            }
        } else if (cols == kCols) {
            for (std::size_t p = 0; p < kc; ++p) {
                const float* src = b + (p0 + p) * ldb + j0 + jr;
                _mm256_storeu_ps(panel + p * kCols, _mm256_loadu_ps(src));
                _mm256_storeu_ps(panel + p * kCols + 8, _mm256_loadu_ps(src + 8));
            }
        } else {
            for (std::size_t p = 0; p < kc; ++p) {
                const float* src = b + (p0 + p) * ldb + j0 + jr;
                std::size_t c = 0;
                for (; c < cols; ++c) panel[p * kCols + c] = src[c];
                for (; c < kCols; ++c) panel[p * kCols + c] = 0.0f;
            }
        }
    }
}

// C[rows x cols] += alpha * Apanel * Bpanel over kc steps.
void micro_kernel(std::size_t kc, float alpha, const float* ap, const float* bp, float* c,
                  std::size_t ldc, std::size_t rows, std::size_t cols) {
    __m256 acc0[kRows];
    __m256 acc1[kRows];
    for (std::size_t r = 0; r < kRows; ++r) {
        acc0[r] = _mm256_setzero_ps();
        acc1[r] = _mm256_setzero_ps();
    }
    for (std::size_t p = 0; p < kc; ++p) {
        const __m256 b0 = _mm256_load_ps(bp + p * kCols);
        const __m256 b1 = _mm256_load_ps(bp + p * kCols + 8);
        const float* a = ap + p * kRows;
        for (std::size_t r = 0; r < kRows; ++r) {
            const __m256 av = _mm256_broadcast_ss(a + r);
            acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
            acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
        }
    }
    const __m256 va = _mm256_set1_ps(alpha);
    if (rows == kRows && cols == kCols) {
        for (std::size_t r = 0; r < kRows; ++r) {
            float* crow = c + r * ldc;
            _mm256_storeu_ps(crow, _mm256_fmadd_ps(va, acc0[r], _mm256_loadu_ps(crow)));
            _mm256_storeu_ps(crow + 8, _mm256_fmadd_ps(va, acc1[r], _mm256_loadu_ps(crow + 8)));
        }
        return;
    }
    alignas(32) float tile[kRows * kCols];
    for (std::size_t r = 0; r < kRows; ++r) {
        _mm256_store_ps(tile + r * kCols, _mm256_mul_ps(va, acc0[r]));
        _mm256_store_ps(tile + r * kCols + 8, _mm256_mul_ps(va, acc1[r]));
    }
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += tile[r * kCols + j];
    }
}

struct AlignedBuffer {
    float* data = nullptr;
    std::size_t capacity = 0;
    ~AlignedBuffer() { std::free(data); }
    float* get(std::size_t n) {
        if (n > capacity) {
            std::free(data);
            capacity = (n + 15) / 16 * 16;
            data = static_cast<float*>(std::aligned_alloc(64, capacity * sizeof(float)));
            if (!data) throw std::bad_alloc();
        }
        return data;
    }
};

}  // namespace

bool compiled() { return true; }

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc) {
    thread_local AlignedBuffer abuf;
    thread_local AlignedBuffer bbuf;
    const std::size_t nc_max = std::min(kBlockN, (n + kCols - 1) / kCols * kCols);
    const std::size_t mc_max = std::min(kBlockM, (m + kRows - 1) / kRows * kRows);
    const std::size_t kc_max = std::min(kBlockK, k);
    float* bp = bbuf.get(kc_max * nc_max);
    float* ap = abuf.get(kc_max * mc_max);
    for (std::size_t jc = 0; jc < n; jc += kBlockN) {
        const std::size_t nc = std::min(kBlockN, n - jc);
        for (std::size_t pc = 0; pc < k; pc += kBlockK) {
            const std::size_t kc = std::min(kBlockK, k - pc);
            pack_b(trans_b, b, ldb, pc, kc, jc, nc, bp);
            for (std::size_t ic = 0; ic < m; ic += kBlockM) {
                const std::size_t mc = std::min(kBlockM, m - ic);
                pack_a(trans_a, a, lda, ic, mc, pc, kc, ap);
                for (std::size_t jr = 0; jr < nc; jr += kCols) {
                    const std::size_t cols = std::min(kCols, nc - jr);
                    for (std::size_t ir = 0; ir < mc; ir += kRows) {
                        const std::size_t rows = std::min(kRows, mc - ir);
                        micro_kernel(kc, alpha, ap + ir * kc, bp + jr * kc, c + (ic + ir) * ldc + jc + jr, ldc,
                                     rows, cols);
                    }
                }
            }
        }
    }
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

float dot(std::size_t n, const float* x, const float* y) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
    float s = hsum(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

float squared_distance(std::size_t n, const float* x, const float* y) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
        acc = _mm256_fmadd_ps(d, d, acc);
    }
    float s = hsum(acc);
    for (; i < n; ++i) {
        const float d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

void adam_step(std::size_t n, float* param, const float* grad, float* m, float* v, float lr,
               float beta1, float beta2, float eps, float bias_c1, float bias_c2) {
    const __m256 vb1 = _mm256_set1_ps(beta1);
    const __m256 vb2 = _mm256_set1_ps(beta2);
    const __m256 vb1c = _mm256_set1_ps(1.0f - beta1);
    const __m256 vb2c = _mm256_set1_ps(1.0f - beta2);
    const __m256 vc1 = _mm256_set1_ps(bias_c1);
    const __m256 vc2 = _mm256_set1_ps(bias_c2);
    const __m256 vlr = _mm256_set1_ps(lr);
    const __m256 veps = _mm256_set1_ps(eps);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 g = _mm256_loadu_ps(grad + i);
        __m256 mv = _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(vb1c, g));
        __m256 vv = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)),
                                  _mm256_mul_ps(_mm256_mul_ps(vb2c, g), g));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        const __m256 mhat = _mm256_div_ps(mv, vc1);
        const __m256 vhat = _mm256_div_ps(vv, vc2);
        const __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), _mm256_add_ps(_mm256_sqrt_ps(vhat), veps));
        _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), step));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * grad[i] * grad[i];
        param[i] -= lr * (m[i] / bias_c1) / (std::sqrt(v[i] / bias_c2) + eps);
    }
}

}  // namespace stonefuse::kernels::avx2

#else

namespace stonefuse::kernels::avx2 {

bool compiled() { return false; }
void gemm(bool, bool, std::size_t, std::size_t, std::size_t, float, const float*, std::size_t,
          const float*, std::size_t, float*, std::size_t) {}
void axpy(std::size_t, float, const float*, float*) {}
float dot(std::size_t, const float*, const float*) { return 0.0f; }
float squared_distance(std::size_t, const float*, const float*) { return 0.0f; }
void adam_step(std::size_t, float*, const float*, float*, float*, float, float, float, float, float,
               float) {}

}  // namespace stonefuse::kernels::avx2

#endif
