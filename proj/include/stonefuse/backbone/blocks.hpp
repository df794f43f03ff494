#pragma once

#include <memory>

#include "stonefuse/attention/cbam.hpp"
#include "stonefuse/nn/layers.hpp"

namespace stonefuse::backbone {

struct BlockOptions {
    std::size_t in_channels = 0;
    std::size_t width = 0;  // bottleneck inner width / conv block output channels
    std::size_t stride = 1;
    bool attention = false;
    attention::CbamOptions cbam;  // channels filled in by the block
};

// Residual block whose branch ends in an optional CBAM stage applied before
// the skip sum: y = relu(cbam(branch(x)) + shortcut(x)).
template <typename T>
class ResidualBlock : public nn::Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect_parameters(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) override;
    void collect_buffers(const std::string& prefix, std::vector<nn::BufferRef<T>>& out) override;
    void for_each_child(const std::function<void(const nn::Layer<T>&)>& fn) const override;
    void clear_cache() override;

    attention::CbamBlock<T>* cbam() noexcept { return cbam_.get(); }
    std::size_t out_channels() const noexcept { return out_channels_; }

protected:
    void finish(const BlockOptions& opts, std::size_t out_channels, Rng& rng);

    nn::Sequential<T> branch_;
    std::unique_ptr<attention::CbamBlock<T>> cbam_;
    std::unique_ptr<nn::Sequential<T>> downsample_;
    nn::ReLU<T> out_relu_;
    std::size_t out_channels_ = 0;
};

// 1x1 -> 3x3(stride) -> 1x1(x4) bottleneck.
template <typename T>
class Bottleneck final : public ResidualBlock<T> {
public:
    static constexpr std::size_t kExpansion = 4;
    Bottleneck(const BlockOptions& opts, Rng& rng);
    std::string_view kind() const override { return "bottleneck"; }
};

// Single 3x3(stride) conv + BN branch; the tiny backbone's unit.
template <typename T>
class ConvBlock final : public ResidualBlock<T> {
public:
    ConvBlock(const BlockOptions& opts, Rng& rng);
    std::string_view kind() const override { return "conv_block"; }
};

}  // namespace stonefuse::backbone
