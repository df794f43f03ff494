#include <cmath>
#include <limits>

#include "stonefuse/kernels/kernels.hpp"
#include "stonefuse/nn/adam.hpp"
#include "stonefuse/nn/loss.hpp"

namespace stonefuse::nn {

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    require_rank(logits.shape(), 2, "softmax");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor<T> p(logits.shape());
    for (std::size_t r = 0; r < n; ++r) {
        const T* row = logits.data() + r * k;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, row[j]);
        T sum{0};
        for (std::size_t j = 0; j < k; ++j) {
            p[r * k + j] = std::exp(row[j] - mx);
            sum += p[r * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) p[r * k + j] /= sum;
    }
    return p;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
    require_rank(logits.shape(), 2, "argmax_rows");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        const T* row = logits.data() + r * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (row[j] > row[best]) best = j;
        }
        out[r] = static_cast<int>(best);
    }
    return out;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    require_rank(logits.shape(), 2, "softmax_cross_entropy");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) throw ShapeError("softmax_cross_entropy: label count mismatch");
    LossResult<T> out;
    out.grad = softmax(logits);
    const auto pred = argmax_rows(logits);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= k) throw ShapeError("softmax_cross_entropy: label out of range");
        const T* row = logits.data() + r * k;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, row[j]);
        T lse{0};
        for (std::size_t j = 0; j < k; ++j) lse += std::exp(row[j] - mx);
        total += static_cast<double>(std::log(lse) + mx - row[y]);
        out.grad[r * k + static_cast<std::size_t>(y)] -= T{1};
        if (pred[r] == y) ++out.correct;
    }
    const T inv_n = T{1} / static_cast<T>(n);
    for (auto& g : out.grad.vec()) g *= inv_n;
    out.loss = static_cast<T>(total / static_cast<double>(n));
    return out;
}

template <typename T>
Adam<T>::Adam(std::vector<ParamRef<T>> params, AdamOptions opts) : opts_(opts) {
    for (auto& ref : params) {
        if (!ref.param->trainable) continue;
        m_.emplace_back(ref.param->value.shape());
        v_.emplace_back(ref.param->value.shape());
        params_.push_back(std::move(ref));
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& ref : params_) ref.param->zero_grad();
}

template <typename T>
void Adam<T>::step() {
    ++t_;
    const T b1 = static_cast<T>(opts_.beta1);
    const T b2 = static_cast<T>(opts_.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(opts_.beta1, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(opts_.beta2, static_cast<double>(t_)));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i].param;
        kernels::adam_step<T>(p.value.size(), p.value.data(), p.grad.data(), m_[i].data(), v_[i].data(),
                              static_cast<T>(opts_.learning_rate), b1, b2, static_cast<T>(opts_.eps), c1, c2);
    }
}

template Tensor<float> softmax<float>(const Tensor<float>&);
template Tensor<double> softmax<double>(const Tensor<double>&);
template std::vector<int> argmax_rows<float>(const Tensor<float>&);
template std::vector<int> argmax_rows<double>(const Tensor<double>&);
template LossResult<float> softmax_cross_entropy<float>(const Tensor<float>&, const std::vector<int>&);
template LossResult<double> softmax_cross_entropy<double>(const Tensor<double>&, const std::vector<int>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace stonefuse::nn
