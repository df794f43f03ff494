#include "stonefuse/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stonefuse/kernels/kernels.hpp"

namespace stonefuse::nn {

template <typename T>
void init_uniform(Tensor<T>& t, T bound, Rng& rng) {
    for (auto& v : t.vec()) v = static_cast<T>(uniform(rng, -static_cast<double>(bound), static_cast<double>(bound)));
}

template <typename T>
void init_normal(Tensor<T>& t, T stddev, Rng& rng) {
    for (auto& v : t.vec()) v = static_cast<T>(standard_normal(rng) * static_cast<double>(stddev));
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const Conv2dOptions& opts)
    : opts_(opts),
      weight_(Shape{opts.out_channels, opts.in_channels, opts.kernel, opts.kernel}),
      bias_(opts.bias ? Shape{opts.out_channels} : Shape{0}) {
    if (opts.kernel == 0 || opts.stride == 0) throw ShapeError("conv2d: kernel and stride must be positive");
}

template <typename T>
std::size_t Conv2d<T>::output_size(std::size_t in) const {
    const std::size_t padded = in + 2 * opts_.padding;
    if (padded < opts_.kernel) throw ShapeError("conv2d: input smaller than kernel");
    return (padded - opts_.kernel) / opts_.stride + 1;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode mode) {
    require_rank(x.shape(), 4, "conv2d");
    if (x.dim(1) != opts_.in_channels) {
        throw ShapeError("conv2d: expected " + std::to_string(opts_.in_channels) + " input channels, got " +
                         shape_str(x.shape()));
    }
    const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t k = opts_.kernel, s = opts_.stride, p = opts_.padding;
    const std::size_t ho = output_size(h), wo = output_size(w);
    const std::size_t plane = ho * wo;
    const std::size_t n = batch * plane;
    const std::size_t kdim = cin * k * k;
    const std::size_t cout = opts_.out_channels;

    std::vector<T> cols(kdim * n);
    const T* xd = x.data();
    for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                T* row = cols.data() + ((c * k + ky) * k + kx) * n;
                for (std::size_t b = 0; b < batch; ++b) {
                    const T* src = xd + (b * cin + c) * h * w;
                    T* dst = row + b * plane;
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
                        T* drow = dst + oy * wo;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                            std::fill(drow, drow + wo, T{0});
                            continue;
                        }
                        const T* srow = src + static_cast<std::size_t>(iy) * w;
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
                            drow[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T{0} : srow[ix];
                        }
                    }
                }
            }
        }
    }

    std::vector<T> out_cm(cout * n);
    kernels::gemm<T>(false, false, cout, n, kdim, T{1}, weight_.value.data(), kdim, cols.data(), n, T{0},
                     out_cm.data(), n);

    Tensor<T> y(Shape{batch, cout, ho, wo});
    T* yd = y.data();
    for (std::size_t o = 0; o < cout; ++o) {
        const T bv = opts_.bias ? bias_.value[o] : T{0};
        for (std::size_t b = 0; b < batch; ++b) {
            const T* src = out_cm.data() + o * n + b * plane;
            T* dst = yd + (b * cout + o) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + bv;
        }
    }

    in_shape_ = x.shape();
    if (mode == Mode::train) {
        cols_ = std::move(cols);
    } else {
        cols_.clear();
    }
    return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
    if (cols_.empty()) throw ShapeError("conv2d: backward without a training-mode forward");
    const std::size_t batch = in_shape_[0], cin = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    const std::size_t k = opts_.kernel, s = opts_.stride, p = opts_.padding;
    const std::size_t ho = output_size(h), wo = output_size(w);
    const std::size_t plane = ho * wo;
    const std::size_t n = batch * plane;
    const std::size_t kdim = cin * k * k;
    const std::size_t cout = opts_.out_channels;
    if (grad_out.shape() != Shape{batch, cout, ho, wo}) throw ShapeError("conv2d: gradient shape mismatch");

    std::vector<T> g_cm(cout * n);
    for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t b = 0; b < batch; ++b) {
            const T* src = grad_out.data() + (b * cout + o) * plane;
            std::copy(src, src + plane, g_cm.data() + o * n + b * plane);
        }
    }
    if (opts_.bias) {
        for (std::size_t o = 0; o < cout; ++o) {
            T acc{0};
            const T* row = g_cm.data() + o * n;
            for (std::size_t i = 0; i < n; ++i) acc += row[i];
            bias_.grad[o] += acc;
        }
    }
    kernels::gemm<T>(false, true, cout, kdim, n, T{1}, g_cm.data(), n, cols_.data(), n, T{1},
                     weight_.grad.data(), kdim);

    std::vector<T>& dcols = cols_;  // reuse storage
    kernels::gemm<T>(true, false, kdim, n, cout, T{1}, weight_.value.data(), kdim, g_cm.data(), n, T{0},
                     dcols.data(), n);

    Tensor<T> dx(in_shape_);
    T* dxd = dx.data();
    for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* row = dcols.data() + ((c * k + ky) * k + kx) * n;
                for (std::size_t b = 0; b < batch; ++b) {
                    T* dst = dxd + (b * cin + c) * h * w;
                    const T* src = row + b * plane;
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        T* drow = dst + static_cast<std::size_t>(iy) * w;
                        const T* srow = src + oy * wo;
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
                            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) drow[ix] += srow[ox];
                        }
                    }
                }
            }
        }
    }
    cols_.clear();
    return dx;
}

template <typename T>
void Conv2d<T>::collect_parameters(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({join_name(prefix, "weight"), &weight_});
    if (opts_.bias) out.push_back({join_name(prefix, "bias"), &bias_});
}

template <typename T>
void Conv2d<T>::clear_cache() {
    cols_.clear();
    cols_.shrink_to_fit();
}

// ---------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels, T momentum, T eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(Shape{channels}),
      beta_(Shape{channels}),
      running_mean_(Shape{channels}, T{0}),
      running_var_(Shape{channels}, T{1}) {
    gamma_.value.fill(T{1});
}

// Per-channel batch statistics; var is the biased estimate used for
// normalisation, unbiased feeds the running average.
template <typename T>
void BatchNorm<T>::stats_rows(const Tensor<T>& x, std::vector<T>& mean, std::vector<T>& var,
                              std::vector<T>& unbiased) const {
    const std::size_t batch = x.dim(0);
    const std::size_t inner = x.size() / (batch * channels_);
    const double count = static_cast<double>(batch * inner);
    std::vector<double> sum(channels_, 0.0), sq(channels_, 0.0);
    if (inner == 1) {
        for (std::size_t b = 0; b < batch; ++b) {
            const T* row = x.data() + b * channels_;
            for (std::size_t c = 0; c < channels_; ++c) sum[c] += static_cast<double>(row[c]);
        }
        for (std::size_t c = 0; c < channels_; ++c) sum[c] /= count;
        for (std::size_t b = 0; b < batch; ++b) {
            const T* row = x.data() + b * channels_;
            for (std::size_t c = 0; c < channels_; ++c) {
                const double d = static_cast<double>(row[c]) - sum[c];
                sq[c] += d * d;
            }
        }
    } else {
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < channels_; ++c) {
                const T* src = x.data() + (b * channels_ + c) * inner;
                double acc = 0.0;
                for (std::size_t i = 0; i < inner; ++i) acc += static_cast<double>(src[i]);
                sum[c] += acc;
            }
        }
        for (std::size_t c = 0; c < channels_; ++c) sum[c] /= count;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < channels_; ++c) {
                const T* src = x.data() + (b * channels_ + c) * inner;
                const double m = sum[c];
                double acc = 0.0;
                for (std::size_t i = 0; i < inner; ++i) {
                    const double d = static_cast<double>(src[i]) - m;
                    acc += d * d;
                }
                sq[c] += acc;
            }
        }
    }
    mean.resize(channels_);
    var.resize(channels_);
    unbiased.resize(channels_);
    for (std::size_t c = 0; c < channels_; ++c) {
        mean[c] = static_cast<T>(sum[c]);
        var[c] = static_cast<T>(sq[c] / count);
        unbiased[c] = static_cast<T>(sq[c] / (count - 1.0));
    }
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
    if (x.rank() < 2 || x.dim(1) != channels_) {
        throw ShapeError("batchnorm: expected (N, " + std::to_string(channels_) + ", ...), got " + shape_str(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t inner = x.size() / (batch * channels_);
    std::vector<T> mean, var, unbiased;
    if (mode == Mode::train) {
        if (batch * inner < 2) throw ShapeError("batchnorm: training mode needs more than one value per channel");
        stats_rows(x, mean, var, unbiased);
        for (std::size_t c = 0; c < channels_; ++c) {
            running_mean_[c] = (T{1} - momentum_) * running_mean_[c] + momentum_ * mean[c];
            running_var_[c] = (T{1} - momentum_) * running_var_[c] + momentum_ * unbiased[c];
        }
    } else {
        mean.assign(running_mean_.data(), running_mean_.data() + channels_);
        var.assign(running_var_.data(), running_var_.data() + channels_);
    }
    inv_std_.resize(channels_);
    std::vector<T> scale(channels_), shift(channels_);
    for (std::size_t c = 0; c < channels_; ++c) {
        inv_std_[c] = T{1} / std::sqrt(var[c] + eps_);
        scale[c] = gamma_.value[c] * inv_std_[c];
        shift[c] = beta_.value[c] - mean[c] * scale[c];
    }

    Tensor<T> y(x.shape());
    const T* xd = x.data();
    T* yd = y.data();
    if (mode == Mode::eval) {
        xhat_ = Tensor<T>();
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < channels_; ++c) {
                const std::size_t off = (b * channels_ + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) yd[off + i] = xd[off + i] * scale[c] + shift[c];
            }
        }
        return y;
    }
    xhat_ = Tensor<T>(x.shape());
    T* xh = xhat_.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels_; ++c) {
            const std::size_t off = (b * channels_ + c) * inner;
            const T m = mean[c], inv = inv_std_[c], g = gamma_.value[c], bt = beta_.value[c];
            for (std::size_t i = 0; i < inner; ++i) {
                xh[off + i] = (xd[off + i] - m) * inv;
                yd[off + i] = g * xh[off + i] + bt;
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& grad_out) {
    if (xhat_.empty()) throw ShapeError("batchnorm: backward without a training-mode forward");
    if (grad_out.shape() != xhat_.shape()) throw ShapeError("batchnorm: gradient shape mismatch");
    const std::size_t batch = grad_out.dim(0);
    const std::size_t inner = grad_out.size() / (batch * channels_);
    const T count = static_cast<T>(batch * inner);
    const T* gd = grad_out.data();
    const T* xh = xhat_.data();
    std::vector<T> sum_dy(channels_, T{0}), sum_dy_xhat(channels_, T{0});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels_; ++c) {
            const std::size_t off = (b * channels_ + c) * inner;
            T s0{0}, s1{0};
            for (std::size_t i = 0; i < inner; ++i) {
                s0 += gd[off + i];
                s1 += gd[off + i] * xh[off + i];
            }
            sum_dy[c] += s0;
            sum_dy_xhat[c] += s1;
        }
    }
    // dx = g*inv/count * (count*dy - sum_dy - xhat*sum_dy_xhat)
    std::vector<T> k(channels_), a(channels_), bterm(channels_);
    for (std::size_t c = 0; c < channels_; ++c) {
        gamma_.grad[c] += sum_dy_xhat[c];
        beta_.grad[c] += sum_dy[c];
        k[c] = gamma_.value[c] * inv_std_[c];
        a[c] = sum_dy[c] / count;
        bterm[c] = sum_dy_xhat[c] / count;
    }
    Tensor<T> dx(grad_out.shape());
    T* dd = dx.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels_; ++c) {
            const std::size_t off = (b * channels_ + c) * inner;
            const T kc = k[c], ac = a[c], bc = bterm[c];
            for (std::size_t i = 0; i < inner; ++i) dd[off + i] = kc * (gd[off + i] - ac - xh[off + i] * bc);
        }
    }
    return dx;
}

template <typename T>
void BatchNorm<T>::collect_parameters(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({join_name(prefix, "weight"), &gamma_});
    out.push_back({join_name(prefix, "bias"), &beta_});
}

template <typename T>
void BatchNorm<T>::collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
    out.push_back({join_name(prefix, "running_mean"), &running_mean_});
    out.push_back({join_name(prefix, "running_var"), &running_var_});
}

template <typename T>
void BatchNorm<T>::clear_cache() {
    xhat_ = Tensor<T>();
}

// ---------------------------------------------------------------- ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y(x.shape());
    const T* xd = x.data();
    T* yd = y.data();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) yd[i] = std::max(xd[i], T{0});
    if (mode == Mode::eval) {
        mask_.clear();
        return y;
    }
    mask_.resize(n);
    for (std::size_t i = 0; i < n; ++i) mask_[i] = xd[i] > T{0} ? T{1} : T{0};
    return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
    if (grad_out.size() != mask_.size() || mask_.empty()) throw ShapeError("relu: backward without a matching training-mode forward");
    Tensor<T> dx(grad_out.shape());
    const T* gd = grad_out.data();
    T* dd = dx.data();
    for (std::size_t i = 0; i < dx.size(); ++i) dd[i] = gd[i] * mask_[i];
    return dx;
}

// ---------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double probability, std::uint64_t seed) : p_(probability), rng_(seed) {
    if (!(probability >= 0.0 && probability < 1.0)) throw ConfigError("dropout probability must be in [0, 1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::eval || p_ == 0.0) {
        scale_.assign(x.size(), T{1});
        return x;
    }
    // One 64-bit draw decides two elements: drop when a 32-bit half < p * 2^32.
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
    const auto threshold = static_cast<std::uint64_t>(p_ * 4294967296.0);
    const std::size_t n = x.size();
    scale_.resize(n);
    for (std::size_t i = 0; i < n; i += 2) {
        const std::uint64_t r = rng_();
        scale_[i] = (r & 0xffffffffULL) < threshold ? T{0} : keep_scale;
        if (i + 1 < n) scale_[i + 1] = (r >> 32) < threshold ? T{0} : keep_scale;
    }
    Tensor<T> y(x.shape());
    const T* xd = x.data();
    T* yd = y.data();
    for (std::size_t i = 0; i < n; ++i) yd[i] = xd[i] * scale_[i];
    return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_out) {
    if (grad_out.size() != scale_.size()) throw ShapeError("dropout: gradient shape mismatch");
    Tensor<T> dx(grad_out.shape());
    const T* gd = grad_out.data();
    T* dd = dx.data();
    for (std::size_t i = 0; i < dx.size(); ++i) dd[i] = gd[i] * scale_[i];
    return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features)
    : in_(in_features), out_(out_features), weight_(Shape{out_features, in_features}), bias_(Shape{out_features}) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode mode) {
    if (x.rank() != 2 || x.dim(1) != in_) {
        throw ShapeError("linear: expected (N, " + std::to_string(in_) + "), got " + shape_str(x.shape()));
    }
    const std::size_t n = x.dim(0);
    Tensor<T> y(Shape{n, out_});
    for (std::size_t r = 0; r < n; ++r) std::copy(bias_.value.data(), bias_.value.data() + out_, y.data() + r * out_);
    kernels::gemm<T>(false, true, n, out_, in_, T{1}, x.data(), in_, weight_.value.data(), in_, T{1}, y.data(), out_);
    if (mode == Mode::train) {
        input_ = x;
    } else {
        input_ = Tensor<T>();
    }
    return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
    if (input_.empty()) throw ShapeError("linear: backward without a training-mode forward");
    const std::size_t n = input_.dim(0);
    if (grad_out.shape() != Shape{n, out_}) throw ShapeError("linear: gradient shape mismatch");
    kernels::gemm<T>(true, false, out_, in_, n, T{1}, grad_out.data(), out_, input_.data(), in_, T{1},
                     weight_.grad.data(), in_);
    for (std::size_t r = 0; r < n; ++r) {
        kernels::axpy<T>(out_, T{1}, grad_out.data() + r * out_, bias_.grad.data());
    }
    Tensor<T> dx(Shape{n, in_});
    kernels::gemm<T>(false, false, n, in_, out_, T{1}, grad_out.data(), out_, weight_.value.data(), in_, T{0},
                     dx.data(), in_);
    return dx;
}

template <typename T>
void Linear<T>::collect_parameters(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({join_name(prefix, "weight"), &weight_});
    out.push_back({join_name(prefix, "bias"), &bias_});
}

// ---------------------------------------------------------------- MaxPool2d

template <typename T>
MaxPool2d<T>::MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t padding)
    : kernel_(kernel), stride_(stride), padding_(padding) {}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, Mode /*mode*/) {
    require_rank(x.shape(), 4, "maxpool2d");
    const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = (h + 2 * padding_ - kernel_) / stride_ + 1;
    const std::size_t wo = (w + 2 * padding_ - kernel_) / stride_ + 1;
    Tensor<T> y(Shape{batch, c, ho, wo});
    argmax_.assign(y.size(), 0);
    in_shape_ = x.shape();
    for (std::size_t bc = 0; bc < batch * c; ++bc) {
        const T* src = x.data() + bc * h * w;
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t ky = 0; ky < kernel_; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(padding_);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kx = 0; kx < kernel_; ++kx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(padding_);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        const std::size_t idx = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
                        if (src[idx] > best) {
                            best = src[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t o = (bc * ho + oy) * wo + ox;
                y[o] = best;
                argmax_[o] = bc * h * w + best_idx;
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out) {
    if (grad_out.size() != argmax_.size()) throw ShapeError("maxpool2d: gradient shape mismatch");
    Tensor<T> dx(in_shape_);
    for (std::size_t i = 0; i < grad_out.size(); ++i) dx[argmax_[i]] += grad_out[i];
    return dx;
}

// ---------------------------------------------------------------- AvgPool2d

template <typename T>
AvgPool2d<T>::AvgPool2d(std::size_t factor) : factor_(factor) {
    if (factor == 0) throw ShapeError("avgpool2d: factor must be positive");
}

template <typename T>
Tensor<T> AvgPool2d<T>::forward(const Tensor<T>& x, Mode /*mode*/) {
    require_rank(x.shape(), 4, "avgpool2d");
    in_shape_ = x.shape();
    if (factor_ == 1) return x;
    const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % factor_ || w % factor_) {
        throw ShapeError("avgpool2d: spatial size " + shape_str(x.shape()) + " not divisible by " + std::to_string(factor_));
    }
    const std::size_t ho = h / factor_, wo = w / factor_;
    const T scale = T{1} / static_cast<T>(factor_ * factor_);
    Tensor<T> y(Shape{batch, c, ho, wo});
    const std::size_t f = factor_;
    for (std::size_t bc = 0; bc < batch * c; ++bc) {
        const T* src = x.data() + bc * h * w;
        T* dst = y.data() + bc * ho * wo;
        for (std::size_t iy = 0; iy < h; ++iy) {
            T* drow = dst + (iy / f) * wo;
            const T* srow = src + iy * w;
            for (std::size_t ox = 0; ox < wo; ++ox) {
                T acc{0};
                for (std::size_t fx = 0; fx < f; ++fx) acc += srow[ox * f + fx];
                drow[ox] += acc;
            }
        }
        for (std::size_t i = 0; i < ho * wo; ++i) dst[i] *= scale;
    }
    return y;
}

template <typename T>
Tensor<T> AvgPool2d<T>::backward(const Tensor<T>& grad_out) {
    if (factor_ == 1) return grad_out;
    const std::size_t h = in_shape_[2], w = in_shape_[3];
    const std::size_t ho = h / factor_, wo = w / factor_;
    const T scale = T{1} / static_cast<T>(factor_ * factor_);
    Tensor<T> dx(in_shape_);
    for (std::size_t bc = 0; bc < in_shape_[0] * in_shape_[1]; ++bc) {
        const T* src = grad_out.data() + bc * ho * wo;
        T* dst = dx.data() + bc * h * w;
        for (std::size_t iy = 0; iy < h; ++iy) {
            const T* srow = src + (iy / factor_) * wo;
            T* drow = dst + iy * w;
            for (std::size_t ox = 0; ox < wo; ++ox) std::fill_n(drow + ox * factor_, factor_, srow[ox] * scale);
        }
    }
    return dx;
}

// ---------------------------------------------------------------- GlobalAvgPool

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x, Mode /*mode*/) {
    require_rank(x.shape(), 4, "global_avgpool");
    in_shape_ = x.shape();
    const std::size_t bc = x.dim(0) * x.dim(1);
    const std::size_t plane = x.dim(2) * x.dim(3);
    Tensor<T> y(Shape{x.dim(0), x.dim(1)});
    for (std::size_t i = 0; i < bc; ++i) {
        T acc{0};
        const T* src = x.data() + i * plane;
        for (std::size_t j = 0; j < plane; ++j) acc += src[j];
        y[i] = acc / static_cast<T>(plane);
    }
    return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
    const std::size_t plane = in_shape_[2] * in_shape_[3];
    Tensor<T> dx(in_shape_);
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        const T g = grad_out[i] / static_cast<T>(plane);
        std::fill(dx.data() + i * plane, dx.data() + (i + 1) * plane, g);
    }
    return dx;
}

#define STONEFUSE_INSTANTIATE(T)                                  \
    template void init_uniform<T>(Tensor<T>&, T, Rng&);           \
    template void init_normal<T>(Tensor<T>&, T, Rng&);            \
    template class Conv2d<T>;                                     \
    template class BatchNorm<T>;                                  \
    template class ReLU<T>;                                       \
    template class Dropout<T>;                                    \
    template class Linear<T>;                                     \
    template class MaxPool2d<T>;                                  \
    template class AvgPool2d<T>;                                  \
    template class GlobalAvgPool<T>;

STONEFUSE_INSTANTIATE(float)
STONEFUSE_INSTANTIATE(double)

}  // namespace stonefuse::nn
