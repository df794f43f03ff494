#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stonefuse/core/rng.hpp"
#include "stonefuse/core/tensor.hpp"

namespace stonefuse::nn {

enum class Mode { train, eval };

template <typename T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    Parameter() = default;
    explicit Parameter(Shape shape) : value(shape), grad(shape) {}
    void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
struct ParamRef {
    std::string name;
    Parameter<T>* param;
};

// Non-trainable persistent state (batch-norm running statistics).
template <typename T>
struct BufferRef {
    std::string name;
    Tensor<T>* tensor;
};

// A differentiable stage with cached forward state. backward() must follow the
// forward() call whose activations it differentiates, and it accumulates into
// parameter gradients.
template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual std::string_view kind() const = 0;

    virtual void collect_parameters(const std::string& /*prefix*/, std::vector<ParamRef<T>>& /*out*/) {}
    virtual void collect_buffers(const std::string& /*prefix*/, std::vector<BufferRef<T>>& /*out*/) {}
    virtual void for_each_child(const std::function<void(const Layer<T>&)>& /*fn*/) const {}

    // Drops cached activations.
    virtual void clear_cache() {}
};

inline std::string join_name(const std::string& prefix, std::string_view name) {
    return prefix.empty() ? std::string(name) : prefix + "." + std::string(name);
}

template <typename T>
std::vector<ParamRef<T>> parameters_of(Layer<T>& layer, const std::string& prefix = {}) {
    std::vector<ParamRef<T>> out;
    layer.collect_parameters(prefix, out);
    return out;
}

template <typename T>
std::vector<BufferRef<T>> buffers_of(Layer<T>& layer, const std::string& prefix = {}) {
    std::vector<BufferRef<T>> out;
    layer.collect_buffers(prefix, out);
    return out;
}

// Counts layers (recursively, including `root`) whose kind() equals `kind`.
template <typename T>
std::size_t count_layers(const Layer<T>& root, std::string_view kind) {
    std::size_t n = root.kind() == kind ? 1 : 0;
    root.for_each_child([&](const Layer<T>& child) { n += count_layers(child, kind); });
    return n;
}

// Ordered container of named layers.
template <typename T>
class Sequential : public Layer<T> {
public:
    Sequential() = default;

    template <typename L>
    L& add(std::string name, std::unique_ptr<L> layer) {
        L& ref = *layer;
        layers_.emplace_back(std::move(name), std::move(layer));
        return ref;
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        Tensor<T> h = x;
        for (auto& [name, layer] : layers_) h = layer->forward(h, mode);
        return h;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = grad_out;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
        return g;
    }

    std::string_view kind() const override { return "sequential"; }

    void collect_parameters(const std::string& prefix, std::vector<ParamRef<T>>& out) override {
        for (auto& [name, layer] : layers_) layer->collect_parameters(join_name(prefix, name), out);
    }
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) override {
        for (auto& [name, layer] : layers_) layer->collect_buffers(join_name(prefix, name), out);
    }
    void for_each_child(const std::function<void(const Layer<T>&)>& fn) const override {
        for (const auto& entry : layers_) fn(*entry.second);
    }
    void clear_cache() override {
        for (auto& entry : layers_) entry.second->clear_cache();
    }

    std::size_t size() const noexcept { return layers_.size(); }
    Layer<T>& at(std::size_t i) { return *layers_.at(i).second; }
    const std::string& name_at(std::size_t i) const { return layers_.at(i).first; }

private:
    std::vector<std::pair<std::string, std::unique_ptr<Layer<T>>>> layers_;
};

}  // namespace stonefuse::nn
