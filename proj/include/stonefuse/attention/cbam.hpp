#pragma once

#include <cstddef>
#include <memory>

#include "stonefuse/core/rng.hpp"
#include "stonefuse/nn/layers.hpp"

namespace stonefuse::attention {

// Shared two-layer bottleneck MLP applied to the average- and max-pooled
// channel descriptors. The hidden layer has no bias; `bias` is added once to
// the summed branch outputs before the sigmoid.
template <typename T>
struct ChannelAttentionParams {
    Tensor<T> reduce;  // (C/r) x C
    Tensor<T> expand;  // C x (C/r)
    Tensor<T> bias;    // C
    std::size_t reduction = 16;

    std::size_t channels() const { return reduce.rank() == 2 ? reduce.dim(1) : 0; }
    void validate() const;
};

// k x k convolution over the stacked [channel-mean; channel-max] maps, same padding.
template <typename T>
struct SpatialAttentionParams {
    Tensor<T> kernel;  // 1 x 2 x k x k
    T bias{};

    std::size_t kernel_size() const { return kernel.rank() == 4 ? kernel.dim(3) : 0; }
    void validate() const;
};

struct CbamOptions {
    std::size_t channels = 0;
    std::size_t reduction = 16;
    std::size_t spatial_kernel = 7;
};

// Channel gates in (0,1). Accepts (C,H,W) -> (C) or (B,C,H,W) -> (B,C).
template <typename T>
Tensor<T> channel_attention(const Tensor<T>& features, const ChannelAttentionParams<T>& params);

// Spatial gate map in (0,1). Accepts (C,H,W) -> (1,H,W) or (B,C,H,W) -> (B,1,H,W).
template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& features, const SpatialAttentionParams<T>& params);

// Negative-control switch for gradient verification: corrupts one backward rule.
enum class BackwardFault { none, spatial_gate };

// Channel attention followed by spatial attention, each applied as a
// multiplicative gate: F' = F * Mc(F), F'' = F' * Ms(F').
template <typename T>
class CbamBlock final : public nn::Layer<T> {
public:
    CbamBlock(const CbamOptions& opts, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    std::string_view kind() const override { return "cbam"; }
    void collect_parameters(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) override;
    void clear_cache() override;

    const CbamOptions& options() const noexcept { return opts_; }
    std::size_t hidden() const noexcept { return hidden_; }

    ChannelAttentionParams<T> channel_params() const;
    SpatialAttentionParams<T> spatial_params() const;
    void set_channel_params(const ChannelAttentionParams<T>& p);
    void set_spatial_params(const SpatialAttentionParams<T>& p);

    // Gates from the most recent forward: (B,C) and (B,1,H,W).
    const Tensor<T>& last_channel_gate() const noexcept { return channel_gate_; }
    const Tensor<T>& last_spatial_gate() const noexcept { return spatial_gate_; }

    void set_backward_fault(BackwardFault fault) noexcept { fault_ = fault; }

private:
    CbamOptions opts_;
    std::size_t hidden_;
    nn::Parameter<T> reduce_;
    nn::Parameter<T> expand_;
    nn::Parameter<T> channel_bias_;
    std::unique_ptr<nn::Conv2d<T>> spatial_conv_;
    BackwardFault fault_ = BackwardFault::none;

    // forward cache
    Tensor<T> input_;
    Tensor<T> avg_, max_;             // (B,C)
    std::vector<std::size_t> max_at_;  // spatial argmax per (b,c)
    Tensor<T> hidden_avg_, hidden_max_;  // (B,Cr) post-rectifier
    Tensor<T> channel_gate_;          // (B,C)
    Tensor<T> gated_;                 // F'
    std::vector<std::size_t> chan_max_at_;  // channel argmax per (b,pixel)
    Tensor<T> spatial_gate_;          // (B,1,H,W)
};

// Inference-mode application of a block.
template <typename T>
Tensor<T> cbam_forward(const Tensor<T>& features, CbamBlock<T>& block);

}  // namespace stonefuse::attention
