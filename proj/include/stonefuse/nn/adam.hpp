#pragma once

#include <cstdint>
#include <vector>

#include "stonefuse/nn/layer.hpp"

namespace stonefuse::nn {

struct AdamOptions {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adaptive-moment optimizer over the trainable subset of `params`.
template <typename T>
class Adam {
public:
    Adam(std::vector<ParamRef<T>> params, AdamOptions opts = {});

    void zero_grad();
    void step();

    std::uint64_t steps() const noexcept { return t_; }
    const AdamOptions& options() const noexcept { return opts_; }

private:
    std::vector<ParamRef<T>> params_;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
    AdamOptions opts_;
    std::uint64_t t_ = 0;
};

}  // namespace stonefuse::nn
