#pragma once

#include <cstddef>
#include <vector>

#include "stonefuse/nn/layer.hpp"

namespace stonefuse::nn {

// Weight initializers draw from the supplied generator in a fixed order.
template <typename T>
void init_uniform(Tensor<T>& t, T bound, Rng& rng);
template <typename T>
void init_normal(Tensor<T>& t, T stddev, Rng& rng);

struct Conv2dOptions {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool bias = false;
};

// 2-D convolution via im2col + GEMM over the whole batch.
template <typename T>
class Conv2d final : public Layer<T> {
public:
    explicit Conv2d(const Conv2dOptions& opts);

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string_view kind() const override { return "conv2d"; }
    void collect_parameters(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
    void clear_cache() override;

    const Conv2dOptions& options() const noexcept { return opts_; }
    Parameter<T>& weight() noexcept { return weight_; }
    Parameter<T>& bias() noexcept { return bias_; }
    std::size_t output_size(std::size_t in) const;

private:
    Conv2dOptions opts_;
    Parameter<T> weight_;  // out x in x k x k
    Parameter<T> bias_;    // out (empty when disabled)
    Shape in_shape_;
    std::vector<T> cols_;  // (in*k*k) x (B*Ho*Wo)
};

// Batch normalization over axis 1 of an (N, C, ...) tensor.
template <typename T>
class BatchNorm final : public Layer<T> {
public:
    explicit BatchNorm(std::size_t channels, T momentum = T(0.1), T eps = T(1e-5));

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string_view kind() const override { return "batchnorm"; }
    void collect_parameters(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) override;
    void clear_cache() override;

    Parameter<T>& gamma() noexcept { return gamma_; }
    Parameter<T>& beta() noexcept { return beta_; }
    Tensor<T>& running_mean() noexcept { return running_mean_; }
    Tensor<T>& running_var() noexcept { return running_var_; }

private:
    std::size_t channels_;
    T momentum_;
    T eps_;
    Parameter<T> gamma_;
    Parameter<T> beta_;
    Tensor<T> running_mean_;
    Tensor<T> running_var_;
    void stats_rows(const Tensor<T>& x, std::vector<T>& mean, std::vector<T>& var, std::vector<T>& unbiased) const;

    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

template <typename T>
class ReLU final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string_view kind() const override { return "relu"; }
    void clear_cache() override { mask_.clear(); }

private:
    std::vector<T> mask_;  // 1 where the input was positive
};

// Inverted dropout; identity in eval mode.
template <typename T>
class Dropout final : public Layer<T> {
public:
    explicit Dropout(double probability, std::uint64_t seed = 0);

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string_view kind() const override { return "dropout"; }
    void clear_cache() override { scale_.clear(); }

    void reseed(std::uint64_t seed) { rng_.seed(seed); }
    double probability() const noexcept { return p_; }

private:
    double p_;
    SplitMix64 rng_;
    std::vector<T> scale_;
};

// y = x W^T + b on (N, in) inputs.
template <typename T>
class Linear final : public Layer<T> {
public:
    Linear(std::size_t in_features, std::size_t out_features);

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string_view kind() const override { return "linear"; }
    void collect_parameters(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
    void clear_cache() override { input_ = Tensor<T>(); }

    Parameter<T>& weight() noexcept { return weight_; }
    Parameter<T>& bias() noexcept { return bias_; }
    std::size_t in_features() const noexcept { return in_; }
    std::size_t out_features() const noexcept { return out_; }

private:
    std::size_t in_;
    std::size_t out_;
    Parameter<T> weight_;  // out x in
    Parameter<T> bias_;
    Tensor<T> input_;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
public:
    MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t padding);

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string_view kind() const override { return "maxpool2d"; }
    void clear_cache() override { argmax_.clear(); }

private:
    std::size_t kernel_;
    std::size_t stride_;
    std::size_t padding_;
    Shape in_shape_;
    std::vector<std::size_t> argmax_;
};

// Non-overlapping average pooling with kernel == stride.
template <typename T>
class AvgPool2d final : public Layer<T> {
public:
    explicit AvgPool2d(std::size_t factor);

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string_view kind() const override { return "avgpool2d"; }

    std::size_t factor() const noexcept { return factor_; }

private:
    std::size_t factor_;
    Shape in_shape_;
};

// (N, C, H, W) -> (N, C)
template <typename T>
class GlobalAvgPool final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string_view kind() const override { return "global_avgpool"; }

private:
    Shape in_shape_;
};

}  // namespace stonefuse::nn
