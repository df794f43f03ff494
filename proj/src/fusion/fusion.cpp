#include "stonefuse/fusion/fusion.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "stonefuse/core/errors.hpp"

namespace stonefuse::fusion {

using backbone::BackboneSpec;
using backbone::HeadSpec;

std::string_view to_string(FusionKind kind) { return kind == FusionKind::max_pool ? "max" : "concat"; }

FusionKind fusion_from_string(std::string_view s) {
    if (s == "max" || s == "max_pool") return FusionKind::max_pool;
    if (s == "concat" || s == "concatenation") return FusionKind::concatenation;
    throw ConfigError("unknown fusion strategy '" + std::string(s) + "' (expected max or concat)");
}

template <typename T>
std::vector<T> fuse(std::span<const T> surface, std::span<const T> section, FusionStrategy strategy) {
    if (surface.size() != section.size()) {
        throw ShapeError("fuse: feature widths differ (" + std::to_string(surface.size()) + " vs " +
                         std::to_string(section.size()) + ")");
    }
    std::vector<T> out;
    if (strategy.kind == FusionKind::max_pool) {
        out.resize(surface.size());
        for (std::size_t i = 0; i < surface.size(); ++i) out[i] = std::max(surface[i], section[i]);
    } else {
        out.reserve(2 * surface.size());
        out.insert(out.end(), surface.begin(), surface.end());
        out.insert(out.end(), section.begin(), section.end());
    }
    return out;
}

template <typename T>
Tensor<T> fuse(const Tensor<T>& surface, const Tensor<T>& section, FusionStrategy strategy) {
    require_rank(surface.shape(), 2, "fuse");
    if (surface.shape() != section.shape()) {
        throw ShapeError("fuse: feature batches differ in shape (" + shape_str(surface.shape()) + " vs " +
                         shape_str(section.shape()) + ")");
    }
    const std::size_t b = surface.dim(0), d = surface.dim(1), w = strategy.fused_width(d);
    Tensor<T> out(Shape{b, w});
    for (std::size_t i = 0; i < b; ++i) {
        const T* s = surface.data() + i * d;
        const T* c = section.data() + i * d;
        T* o = out.data() + i * w;
        if (strategy.kind == FusionKind::max_pool) {
            for (std::size_t j = 0; j < d; ++j) o[j] = std::max(s[j], c[j]);
        } else {
            std::copy(s, s + d, o);
            std::copy(c, c + d, o + d);
        }
    }
    return out;
}

std::vector<ViewPair> pair_views(const dataset::PatchSet& patches, std::uint64_t seed) {
    using dataset::kClassCount;
    std::array<std::vector<std::size_t>, kClassCount> sur, sec;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto c = static_cast<std::size_t>(patches.labels[i]);
        (patches.views[i] == dataset::View::surface ? sur : sec)[c].push_back(i);
    }
    std::vector<ViewPair> out;
    for (std::size_t c = 0; c < kClassCount; ++c) {
        if (sur[c].empty() && sec[c].empty()) continue;
        if (sur[c].empty() || sec[c].empty()) {
            throw DataError("class " + std::string(dataset::to_string(static_cast<dataset::StoneClass>(c))) +
                            " has no " + (sur[c].empty() ? "surface" : "section") + " patches to pair with");
        }
        Rng rng(mix_seed(seed, c));
        const std::size_t n = std::max(sur[c].size(), sec[c].size());
        auto draw = [&](const std::vector<std::size_t>& src) {
            std::vector<std::size_t> seq;
            seq.reserve(n + src.size());
            while (seq.size() < n) {
                std::vector<std::size_t> round = src;
                shuffle(round.begin(), round.end(), rng);
                seq.insert(seq.end(), round.begin(), round.end());
            }
            seq.resize(n);
            return seq;
        };
        const auto s = draw(sur[c]);
        const auto x = draw(sec[c]);
        for (std::size_t i = 0; i < n; ++i) out.push_back({s[i], x[i], static_cast<int>(c)});
    }
    if (out.empty()) throw DataError("pair_views: no patches");
    return out;
}

template <typename T>
MultiViewModel<T>::MultiViewModel(const BackboneSpec& backbone, FusionStrategy strategy, const HeadSpec& head,
                                  std::uint64_t seed)
    : backbone_spec_(backbone), head_spec_(head), strategy_(strategy) {
    head.validate();
    const std::size_t width = strategy.fused_width(backbone.feature_dim());
    if (head.input_width != 0 && head.input_width != width) {
        throw ConfigError("head input width " + std::to_string(head.input_width) + " does not match fused width " +
                          std::to_string(width));
    }
    head_spec_.input_width = width;
    Rng extractor_rng(mix_seed(seed, 1));
    surface_ = std::make_unique<backbone::Extractor<T>>(backbone, extractor_rng);
    section_ = std::make_unique<backbone::Extractor<T>>(backbone, extractor_rng);
    for (auto* e : {surface_.get(), section_.get()}) {
        for (auto& ref : nn::parameters_of<T>(*e)) ref.param->trainable = false;
    }
    Rng head_rng(mix_seed(seed, 2));
    head_ = backbone::make_head<T>(head, width, head_rng);
}

template <typename T>
Tensor<T> MultiViewModel<T>::features(const Tensor<T>& surface, const Tensor<T>& section) {
    if (surface.shape() != section.shape()) {
        throw ShapeError("multi-view batches differ in shape (" + shape_str(surface.shape()) + " vs " +
                         shape_str(section.shape()) + ")");
    }
    Tensor<T> fs = surface_->forward(surface, nn::Mode::eval);
    surface_->clear_cache();
    Tensor<T> fc = section_->forward(section, nn::Mode::eval);
    section_->clear_cache();
    return fuse(fs, fc, strategy_);
}

template <typename T>
Tensor<T> MultiViewModel<T>::forward_fused(const Tensor<T>& fused, nn::Mode mode) {
    require_rank(fused.shape(), 2, "multi-view head");
    if (fused.dim(1) != fused_width()) {
        throw ShapeError("fused width " + std::to_string(fused.dim(1)) + ", head expects " +
                         std::to_string(fused_width()));
    }
    return head_->forward(fused, mode);
}

template <typename T>
Tensor<T> MultiViewModel<T>::forward_logits(const Tensor<T>& surface, const Tensor<T>& section, nn::Mode mode) {
    return forward_fused(features(surface, section), mode);
}

template <typename T>
std::vector<nn::ParamRef<T>> MultiViewModel<T>::parameters() {
    std::vector<nn::ParamRef<T>> out;
    surface_->collect_parameters("surface_extractor", out);
    section_->collect_parameters("section_extractor", out);
    head_->collect_parameters("head", out);
    return out;
}

template <typename T>
std::vector<nn::ParamRef<T>> MultiViewModel<T>::head_parameters() {
    return nn::parameters_of<T>(*head_, "head");
}

template <typename T>
std::vector<nn::BufferRef<T>> MultiViewModel<T>::buffers() {
    std::vector<nn::BufferRef<T>> out;
    surface_->collect_buffers("surface_extractor", out);
    section_->collect_buffers("section_extractor", out);
    head_->collect_buffers("head", out);
    return out;
}

template <typename T>
std::uint32_t MultiViewModel<T>::extractor_checksum() {
    const std::uint32_t a = backbone::parameter_checksum<T>(*surface_);
    const std::uint32_t b = backbone::parameter_checksum<T>(*section_);
    return static_cast<std::uint32_t>(mix_seed(a, b));
}

template <typename T>
std::unique_ptr<MultiViewModel<T>> build_multiview(backbone::SingleViewModel<T>& base, FusionStrategy strategy,
                                                   const HeadSpec& head, std::uint64_t seed) {
    if (!base.trained()) throw ConfigError("multi-view model needs a trained single-view base");
    auto model = std::make_unique<MultiViewModel<T>>(base.backbone_spec(), strategy, head, seed);
    backbone::copy_state<T>(base.extractor(), model->surface_extractor());
    backbone::copy_state<T>(base.extractor(), model->section_extractor());
    return model;
}

template <typename T>
Tensor<T> forward_multiview(MultiViewModel<T>& model, const Tensor<T>& surface, const Tensor<T>& section) {
    return model.forward_logits(surface, section, nn::Mode::eval);
}

#define STONEFUSE_INSTANTIATE(T)                                                                             \
    template std::vector<T> fuse<T>(std::span<const T>, std::span<const T>, FusionStrategy);                  \
    template Tensor<T> fuse<T>(const Tensor<T>&, const Tensor<T>&, FusionStrategy);                           \
    template class MultiViewModel<T>;                                                                        \
    template std::unique_ptr<MultiViewModel<T>> build_multiview<T>(backbone::SingleViewModel<T>&, FusionStrategy, \
                                                                   const HeadSpec&, std::uint64_t);          \
    template Tensor<T> forward_multiview<T>(MultiViewModel<T>&, const Tensor<T>&, const Tensor<T>&);

STONEFUSE_INSTANTIATE(float)
STONEFUSE_INSTANTIATE(double)

}  // namespace stonefuse::fusion
