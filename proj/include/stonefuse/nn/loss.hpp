#pragma once

#include <cstddef>
#include <vector>

#include "stonefuse/core/tensor.hpp"

namespace stonefuse::nn {

template <typename T>
struct LossResult {
    T loss{};           // mean over the batch
    Tensor<T> grad;     // d loss / d logits
    std::size_t correct = 0;
};

// Softmax cross-entropy on (N, K) logits.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

// Row-wise softmax of (N, K) logits.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

}  // namespace stonefuse::nn
