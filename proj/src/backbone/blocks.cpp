#include "stonefuse/backbone/blocks.hpp"

#include <cmath>

namespace stonefuse::backbone {
namespace {

// Kaiming-normal, fan-out mode, for convolutions followed by a rectifier.
template <typename T>
std::unique_ptr<nn::Conv2d<T>> make_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, Rng& rng) {
    nn::Conv2dOptions o;
    o.in_channels = in;
    o.out_channels = out;
    o.kernel = k;
    o.stride = stride;
    o.padding = k / 2;
    auto conv = std::make_unique<nn::Conv2d<T>>(o);
    const double fan_out = static_cast<double>(out * k * k);
    nn::init_normal(conv->weight().value, static_cast<T>(std::sqrt(2.0 / fan_out)), rng);
    return conv;
}

}  // namespace

template <typename T>
void ResidualBlock<T>::finish(const BlockOptions& opts, std::size_t out_channels, Rng& rng) {
    out_channels_ = out_channels;
    if (opts.attention) {
        attention::CbamOptions co = opts.cbam;
        co.channels = out_channels;
        cbam_ = std::make_unique<attention::CbamBlock<T>>(co, rng);
    }
    if (opts.stride != 1 || opts.in_channels != out_channels) {
        downsample_ = std::make_unique<nn::Sequential<T>>();
        downsample_->add("0", make_conv<T>(opts.in_channels, out_channels, 1, opts.stride, rng));
        downsample_->add("1", std::make_unique<nn::BatchNorm<T>>(out_channels));
    }
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, nn::Mode mode) {
    Tensor<T> out = branch_.forward(x, mode);
    if (cbam_) out = cbam_->forward(out, mode);
    const Tensor<T> shortcut = downsample_ ? downsample_->forward(x, mode) : x;
    if (shortcut.shape() != out.shape()) throw ShapeError("residual block: branch/shortcut shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += shortcut[i];
    return out_relu_.forward(out, mode);
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
    const Tensor<T> g = out_relu_.backward(grad_out);
    Tensor<T> gb = cbam_ ? cbam_->backward(g) : g;
    Tensor<T> dx = branch_.backward(gb);
    const Tensor<T> ds = downsample_ ? downsample_->backward(g) : g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
    return dx;
}

template <typename T>
void ResidualBlock<T>::collect_parameters(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
    branch_.collect_parameters(prefix, out);
    if (cbam_) cbam_->collect_parameters(nn::join_name(prefix, "cbam"), out);
    if (downsample_) downsample_->collect_parameters(nn::join_name(prefix, "downsample"), out);
}

template <typename T>
void ResidualBlock<T>::collect_buffers(const std::string& prefix, std::vector<nn::BufferRef<T>>& out) {
    branch_.collect_buffers(prefix, out);
    if (downsample_) downsample_->collect_buffers(nn::join_name(prefix, "downsample"), out);
}

template <typename T>
void ResidualBlock<T>::for_each_child(const std::function<void(const nn::Layer<T>&)>& fn) const {
    fn(branch_);
    if (cbam_) fn(*cbam_);
    if (downsample_) fn(*downsample_);
}

template <typename T>
void ResidualBlock<T>::clear_cache() {
    branch_.clear_cache();
    if (cbam_) cbam_->clear_cache();
    if (downsample_) downsample_->clear_cache();
    out_relu_.clear_cache();
}

template <typename T>
Bottleneck<T>::Bottleneck(const BlockOptions& opts, Rng& rng) {
    const std::size_t w = opts.width;
    auto& b = this->branch_;
    b.add("conv1", make_conv<T>(opts.in_channels, w, 1, 1, rng));
    b.add("bn1", std::make_unique<nn::BatchNorm<T>>(w));
    b.add("relu1", std::make_unique<nn::ReLU<T>>());
    b.add("conv2", make_conv<T>(w, w, 3, opts.stride, rng));
    b.add("bn2", std::make_unique<nn::BatchNorm<T>>(w));
    b.add("relu2", std::make_unique<nn::ReLU<T>>());
    b.add("conv3", make_conv<T>(w, w * kExpansion, 1, 1, rng));
    b.add("bn3", std::make_unique<nn::BatchNorm<T>>(w * kExpansion));
    this->finish(opts, w * kExpansion, rng);
}

template <typename T>
ConvBlock<T>::ConvBlock(const BlockOptions& opts, Rng& rng) {
    auto& b = this->branch_;
    b.add("conv1", make_conv<T>(opts.in_channels, opts.width, 3, opts.stride, rng));
    b.add("bn1", std::make_unique<nn::BatchNorm<T>>(opts.width));
    this->finish(opts, opts.width, rng);
}

template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class Bottleneck<float>;
template class Bottleneck<double>;
template class ConvBlock<float>;
template class ConvBlock<double>;

}  // namespace stonefuse::backbone
