#include "stonefuse/attention/cbam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stonefuse/kernels/kernels.hpp"

namespace stonefuse::attention {
namespace {

template <typename T>
T sigmoid(T z) {
    return T{1} / (T{1} + std::exp(-z));
}

// View (C,H,W) as (1,C,H,W).
template <typename T>
Tensor<T> as_batch(const Tensor<T>& f, bool& squeezed) {
    if (f.rank() == 3) {
        squeezed = true;
        Tensor<T> b = f;
        b.reshape(Shape{1, f.dim(0), f.dim(1), f.dim(2)});
        return b;
    }
    require_rank(f.shape(), 4, "attention");
    squeezed = false;
    return f;
}

}  // namespace

template <typename T>
void ChannelAttentionParams<T>::validate() const {
    if (reduce.rank() != 2 || expand.rank() != 2) throw ShapeError("channel attention: weights must be matrices");
    const std::size_t c = reduce.dim(1), cr = reduce.dim(0);
    if (expand.dim(0) != c || expand.dim(1) != cr) {
        throw ShapeError("channel attention: expand " + shape_str(expand.shape()) + " does not mirror reduce " +
                         shape_str(reduce.shape()));
    }
    if (reduction == 0 || c % reduction != 0 || c / reduction != cr) {
        throw ShapeError("channel attention: reduction ratio must divide the channel count");
    }
    if (bias.size() != c) throw ShapeError("channel attention: bias length must equal channel count");
}

template <typename T>
void SpatialAttentionParams<T>::validate() const {
    if (kernel.rank() != 4 || kernel.dim(0) != 1 || kernel.dim(1) != 2 || kernel.dim(2) != kernel.dim(3)) {
        throw ShapeError("spatial attention: kernel must be 1x2xkxk");
    }
    if (kernel.dim(3) % 2 == 0) throw ShapeError("spatial attention: kernel size must be odd");
}

template <typename T>
Tensor<T> channel_attention(const Tensor<T>& features, const ChannelAttentionParams<T>& params) {
    params.validate();
    bool squeezed = false;
    const Tensor<T> f = as_batch(features, squeezed);
    const std::size_t batch = f.dim(0), c = f.dim(1), plane = f.dim(2) * f.dim(3);
    if (c != params.channels()) {
        throw ShapeError("channel attention: feature map has " + std::to_string(c) + " channels, params expect " +
                         std::to_string(params.channels()));
    }
    const std::size_t cr = params.reduce.dim(0);
    Tensor<T> out(squeezed ? Shape{c} : Shape{batch, c});
    std::vector<T> avg(c), mx(c), z(c);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* src = f.data() + (b * c + ch) * plane;
            T s{0};
            T m = -std::numeric_limits<T>::infinity();
            for (std::size_t i = 0; i < plane; ++i) {
                s += src[i];
                m = std::max(m, src[i]);
            }
            avg[ch] = s / static_cast<T>(plane);
            mx[ch] = m;
        }
        std::fill(z.begin(), z.end(), T{0});
        for (const auto* desc : {&avg, &mx}) {
            for (std::size_t h = 0; h < cr; ++h) {
                T acc{0};
                for (std::size_t ch = 0; ch < c; ++ch) acc += params.reduce[h * c + ch] * (*desc)[ch];
                acc = std::max(acc, T{0});
                for (std::size_t ch = 0; ch < c; ++ch) z[ch] += params.expand[ch * cr + h] * acc;
            }
        }
        for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] = sigmoid(z[ch] + params.bias[ch]);
    }
    return out;
}

template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& features, const SpatialAttentionParams<T>& params) {
    params.validate();
    bool squeezed = false;
    const Tensor<T> f = as_batch(features, squeezed);
    const std::size_t batch = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
    if (h == 0 || w == 0 || c == 0) throw ShapeError("spatial attention: empty feature map");
    const std::size_t k = params.kernel_size();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    Tensor<T> out(squeezed ? Shape{1, h, w} : Shape{batch, 1, h, w});
    std::vector<T> pooled(2 * h * w);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < h * w; ++i) {
            T s{0};
            T m = -std::numeric_limits<T>::infinity();
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T v = f[(b * c + ch) * h * w + i];
                s += v;
                m = std::max(m, v);
            }
            pooled[i] = s / static_cast<T>(c);
            pooled[h * w + i] = m;
        }
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                T acc = params.bias;
                for (std::size_t map = 0; map < 2; ++map) {
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += params.kernel[(map * k + ky) * k + kx] *
                                   pooled[map * h * w + static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)];
                        }
                    }
                }
                out[(b * h + y) * w + x] = sigmoid(acc);
            }
        }
    }
    return out;
}

template <typename T>
CbamBlock<T>::CbamBlock(const CbamOptions& opts, Rng& rng)
    : opts_(opts),
      hidden_(opts.reduction ? opts.channels / opts.reduction : 0),
      reduce_(Shape{hidden_, opts.channels}),
      expand_(Shape{opts.channels, hidden_}),
      channel_bias_(Shape{opts.channels}) {
    if (opts.channels == 0 || opts.reduction == 0 || opts.channels % opts.reduction != 0) {
        throw ShapeError("cbam: reduction ratio " + std::to_string(opts.reduction) + " must divide channel count " +
                         std::to_string(opts.channels));
    }
    if (opts.spatial_kernel % 2 == 0) throw ShapeError("cbam: spatial kernel size must be odd");
    nn::Conv2dOptions conv;
    conv.in_channels = 2;
    conv.out_channels = 1;
    conv.kernel = opts.spatial_kernel;
    conv.padding = opts.spatial_kernel / 2;
    conv.bias = true;
    spatial_conv_ = std::make_unique<nn::Conv2d<T>>(conv);

    nn::init_uniform(reduce_.value, static_cast<T>(1.0 / std::sqrt(static_cast<double>(opts.channels))), rng);
    nn::init_uniform(expand_.value, static_cast<T>(1.0 / std::sqrt(static_cast<double>(hidden_))), rng);
    const double fan_in = 2.0 * static_cast<double>(opts.spatial_kernel * opts.spatial_kernel);
    nn::init_uniform(spatial_conv_->weight().value, static_cast<T>(1.0 / std::sqrt(fan_in)), rng);
}

template <typename T>
Tensor<T> CbamBlock<T>::forward(const Tensor<T>& x, nn::Mode mode) {
    require_rank(x.shape(), 4, "cbam");
    const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t plane = h * w;
    if (c != opts_.channels) {
        throw ShapeError("cbam: block built for " + std::to_string(opts_.channels) + " channels, got " +
                         shape_str(x.shape()));
    }
    const std::size_t cr = hidden_;

    // Channel descriptors.
    avg_ = Tensor<T>(Shape{batch, c});
    max_ = Tensor<T>(Shape{batch, c});
    max_at_.assign(batch * c, 0);
    for (std::size_t bc = 0; bc < batch * c; ++bc) {
        const T* src = x.data() + bc * plane;
        T s{0};
        std::size_t best = 0;
        for (std::size_t i = 0; i < plane; ++i) {
            s += src[i];
            if (src[i] > src[best]) best = i;
        }
        avg_[bc] = s / static_cast<T>(plane);
        max_[bc] = src[best];
        max_at_[bc] = best;
    }

    // Shared MLP on both descriptors.
    hidden_avg_ = Tensor<T>(Shape{batch, cr});
    hidden_max_ = Tensor<T>(Shape{batch, cr});
    kernels::gemm<T>(false, true, batch, cr, c, T{1}, avg_.data(), c, reduce_.value.data(), c, T{0},
                     hidden_avg_.data(), cr);
    kernels::gemm<T>(false, true, batch, cr, c, T{1}, max_.data(), c, reduce_.value.data(), c, T{0},
                     hidden_max_.data(), cr);
    Tensor<T> hidden_sum(Shape{batch, cr});
    for (std::size_t i = 0; i < batch * cr; ++i) {
        hidden_avg_[i] = std::max(hidden_avg_[i], T{0});
        hidden_max_[i] = std::max(hidden_max_[i], T{0});
        hidden_sum[i] = hidden_avg_[i] + hidden_max_[i];
    }
    channel_gate_ = Tensor<T>(Shape{batch, c});
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy(channel_bias_.value.data(), channel_bias_.value.data() + c, channel_gate_.data() + b * c);
    }
    kernels::gemm<T>(false, true, batch, c, cr, T{1}, hidden_sum.data(), cr, expand_.value.data(), cr, T{1},
                     channel_gate_.data(), c);
    for (auto& v : channel_gate_.vec()) v = sigmoid(v);

    gated_ = Tensor<T>(x.shape());
    for (std::size_t bc = 0; bc < batch * c; ++bc) {
        const T g = channel_gate_[bc];
        const T* src = x.data() + bc * plane;
        T* dst = gated_.data() + bc * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * g;
    }

    // Spatial descriptors on the channel-gated map.
    Tensor<T> pooled(Shape{batch, 2, h, w});
    chan_max_at_.assign(batch * plane, 0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < plane; ++i) {
            T s{0};
            std::size_t best = 0;
            T best_v = gated_[(b * c) * plane + i];
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T v = gated_[(b * c + ch) * plane + i];
                s += v;
                if (v > best_v) {
                    best_v = v;
                    best = ch;
                }
            }
            pooled[(b * 2) * plane + i] = s / static_cast<T>(c);
            pooled[(b * 2 + 1) * plane + i] = best_v;
            chan_max_at_[b * plane + i] = best;
        }
    }
    spatial_gate_ = spatial_conv_->forward(pooled, mode);
    for (auto& v : spatial_gate_.vec()) v = sigmoid(v);

    Tensor<T> y(x.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        const T* sg = spatial_gate_.data() + b * plane;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* src = gated_.data() + (b * c + ch) * plane;
            T* dst = y.data() + (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * sg[i];
        }
    }
    if (mode == nn::Mode::train) {
        input_ = x;
    } else {
        input_ = Tensor<T>();
    }
    return y;
}

template <typename T>
Tensor<T> CbamBlock<T>::backward(const Tensor<T>& grad_out) {
    if (input_.empty()) throw ShapeError("cbam: backward without a training-mode forward");
    if (grad_out.shape() != input_.shape()) throw ShapeError("cbam: gradient shape mismatch");
    const std::size_t batch = input_.dim(0), c = input_.dim(1), h = input_.dim(2), w = input_.dim(3);
    const std::size_t plane = h * w;
    const std::size_t cr = hidden_;

    // Spatial gate: out = F' * sg.
    Tensor<T> d_gated(input_.shape());
    Tensor<T> d_logit(Shape{batch, 1, h, w});
    for (std::size_t b = 0; b < batch; ++b) {
        const T* sg = spatial_gate_.data() + b * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            T acc{0};
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t idx = (b * c + ch) * plane + i;
                acc += grad_out[idx] * gated_[idx];
                d_gated[idx] = grad_out[idx] * sg[i];
            }
            const T deriv = fault_ == BackwardFault::spatial_gate ? sg[i] : sg[i] * (T{1} - sg[i]);
            d_logit[b * plane + i] = acc * deriv;
        }
    }
    const Tensor<T> d_pooled = spatial_conv_->backward(d_logit);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < plane; ++i) {
            const T d_mean = d_pooled[(b * 2) * plane + i] / static_cast<T>(c);
            for (std::size_t ch = 0; ch < c; ++ch) d_gated[(b * c + ch) * plane + i] += d_mean;
            d_gated[(b * c + chan_max_at_[b * plane + i]) * plane + i] += d_pooled[(b * 2 + 1) * plane + i];
        }
    }

    // Channel gate: F' = F * g.
    Tensor<T> dx(input_.shape());
    Tensor<T> d_z(Shape{batch, c});
    for (std::size_t bc = 0; bc < batch * c; ++bc) {
        const T g = channel_gate_[bc];
        T acc{0};
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t idx = bc * plane + i;
            acc += d_gated[idx] * input_[idx];
            dx[idx] = d_gated[idx] * g;
        }
        d_z[bc] = acc * g * (T{1} - g);
    }
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) channel_bias_.grad[ch] += d_z[b * c + ch];
    }
    Tensor<T> hidden_sum(Shape{batch, cr});
    for (std::size_t i = 0; i < batch * cr; ++i) hidden_sum[i] = hidden_avg_[i] + hidden_max_[i];
    // expand: (C x Cr) += d_z^T * hidden_sum
    kernels::gemm<T>(true, false, c, cr, batch, T{1}, d_z.data(), c, hidden_sum.data(), cr, T{1},
                     expand_.grad.data(), cr);
    Tensor<T> d_hidden(Shape{batch, cr});
    kernels::gemm<T>(false, false, batch, cr, c, T{1}, d_z.data(), c, expand_.value.data(), cr, T{0},
                     d_hidden.data(), cr);
    Tensor<T> d_ha(Shape{batch, cr});
    Tensor<T> d_hm(Shape{batch, cr});
    for (std::size_t i = 0; i < batch * cr; ++i) {
        d_ha[i] = hidden_avg_[i] > T{0} ? d_hidden[i] : T{0};
        d_hm[i] = hidden_max_[i] > T{0} ? d_hidden[i] : T{0};
    }
    // reduce: (Cr x C) += d_ha^T * avg + d_hm^T * max
    kernels::gemm<T>(true, false, cr, c, batch, T{1}, d_ha.data(), cr, avg_.data(), c, T{1}, reduce_.grad.data(), c);
    kernels::gemm<T>(true, false, cr, c, batch, T{1}, d_hm.data(), cr, max_.data(), c, T{1}, reduce_.grad.data(), c);
    Tensor<T> d_avg(Shape{batch, c});
    Tensor<T> d_max(Shape{batch, c});
    kernels::gemm<T>(false, false, batch, c, cr, T{1}, d_ha.data(), cr, reduce_.value.data(), c, T{0}, d_avg.data(), c);
    kernels::gemm<T>(false, false, batch, c, cr, T{1}, d_hm.data(), cr, reduce_.value.data(), c, T{0}, d_max.data(), c);
    for (std::size_t bc = 0; bc < batch * c; ++bc) {
        const T share = d_avg[bc] / static_cast<T>(plane);
        T* dst = dx.data() + bc * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += share;
        dst[max_at_[bc]] += d_max[bc];
    }
    return dx;
}

template <typename T>
void CbamBlock<T>::collect_parameters(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
    out.push_back({nn::join_name(prefix, "channel.reduce"), &reduce_});
    out.push_back({nn::join_name(prefix, "channel.expand"), &expand_});
    out.push_back({nn::join_name(prefix, "channel.bias"), &channel_bias_});
    spatial_conv_->collect_parameters(nn::join_name(prefix, "spatial"), out);
}

template <typename T>
void CbamBlock<T>::clear_cache() {
    input_ = Tensor<T>();
    gated_ = Tensor<T>();
    spatial_conv_->clear_cache();
}

template <typename T>
ChannelAttentionParams<T> CbamBlock<T>::channel_params() const {
    return {reduce_.value, expand_.value, channel_bias_.value, opts_.reduction};
}

template <typename T>
SpatialAttentionParams<T> CbamBlock<T>::spatial_params() const {
    return {spatial_conv_->weight().value, spatial_conv_->bias().value[0]};
}

template <typename T>
void CbamBlock<T>::set_channel_params(const ChannelAttentionParams<T>& p) {
    p.validate();
    if (p.reduce.shape() != reduce_.value.shape() || p.reduction != opts_.reduction) {
        throw ShapeError("cbam: channel params do not match block geometry");
    }
    reduce_.value = p.reduce;
    expand_.value = p.expand;
    channel_bias_.value = p.bias;
}

template <typename T>
void CbamBlock<T>::set_spatial_params(const SpatialAttentionParams<T>& p) {
    p.validate();
    if (p.kernel.shape() != spatial_conv_->weight().value.shape()) {
        throw ShapeError("cbam: spatial kernel does not match block geometry");
    }
    spatial_conv_->weight().value = p.kernel;
    spatial_conv_->bias().value[0] = p.bias;
}

template <typename T>
Tensor<T> cbam_forward(const Tensor<T>& features, CbamBlock<T>& block) {
    bool squeezed = false;
    const Tensor<T> batch = as_batch(features, squeezed);
    Tensor<T> out = block.forward(batch, nn::Mode::eval);
    if (squeezed) out.reshape(features.shape());
    return out;
}

#define STONEFUSE_INSTANTIATE(T)                                                                     \
    template struct ChannelAttentionParams<T>;                                                       \
    template struct SpatialAttentionParams<T>;                                                       \
    template Tensor<T> channel_attention<T>(const Tensor<T>&, const ChannelAttentionParams<T>&);     \
    template Tensor<T> spatial_attention<T>(const Tensor<T>&, const SpatialAttentionParams<T>&);     \
    template class CbamBlock<T>;                                                                     \
    template Tensor<T> cbam_forward<T>(const Tensor<T>&, CbamBlock<T>&);

STONEFUSE_INSTANTIATE(float)
STONEFUSE_INSTANTIATE(double)

}  // namespace stonefuse::attention
