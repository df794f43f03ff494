#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "stonefuse/backbone/model.hpp"
#include "stonefuse/dataset/cache.hpp"

namespace stonefuse::fusion {

enum class FusionKind : std::uint8_t { max_pool, concatenation };

struct FusionStrategy {
    FusionKind kind = FusionKind::concatenation;

    std::size_t fused_width(std::size_t feature_dim) const {
        return kind == FusionKind::max_pool ? feature_dim : 2 * feature_dim;
    }
    bool operator==(const FusionStrategy&) const = default;
};

// "max" / "concat" (the long enum names are accepted on input too).
std::string_view to_string(FusionKind kind);
FusionKind fusion_from_string(std::string_view s);

// max_pool: elementwise max. concatenation: [surface | section], always in
// that order.
template <typename T>
std::vector<T> fuse(std::span<const T> surface, std::span<const T> section, FusionStrategy strategy);

// Row-wise over (B, d) feature batches.
template <typename T>
Tensor<T> fuse(const Tensor<T>& surface, const Tensor<T>& section, FusionStrategy strategy);

// One training or test example: indices into a PatchSet holding both views.
struct ViewPair {
    std::size_t surface = 0;
    std::size_t section = 0;
    int label = 0;
};

// Seeded within-class matching of surface to section patches. Each class
// yields max(#surface, #section) pairs: both lists are shuffled, and the
// shorter one is extended with fresh shuffles of itself, so every patch
// appears at least once and equal-sized classes get a perfect matching.
// Pairs come out grouped by class. Throws DataError when a class has patches
// in only one view.
std::vector<ViewPair> pair_views(const dataset::PatchSet& patches, std::uint64_t seed);

// Two frozen, parameter-identical copies of a trained extractor, one per
// view, and a freshly initialized head over the fused feature vector.
// Extractors always run in inference mode; only the head learns.
template <typename T>
class MultiViewModel {
public:
    // Fresh (untrained) extractors; used when restoring a checkpoint.
    MultiViewModel(const backbone::BackboneSpec& backbone, FusionStrategy strategy, const backbone::HeadSpec& head,
                   std::uint64_t seed);

    // Fused (B, fused_width) features for a surface and a section batch.
    Tensor<T> features(const Tensor<T>& surface, const Tensor<T>& section);
    Tensor<T> forward_fused(const Tensor<T>& fused, nn::Mode mode);
    Tensor<T> forward_logits(const Tensor<T>& surface, const Tensor<T>& section, nn::Mode mode);
    // Backpropagates into the head only.
    void backward(const Tensor<T>& grad_logits) { head_->backward(grad_logits); }

    std::vector<nn::ParamRef<T>> parameters();
    std::vector<nn::ParamRef<T>> head_parameters();
    std::vector<nn::BufferRef<T>> buffers();
    void reseed_dropout(std::uint64_t seed) { backbone::reseed_dropout(*head_, seed); }

    // Combined checksum of both extractors.
    std::uint32_t extractor_checksum();

    backbone::Extractor<T>& surface_extractor() noexcept { return *surface_; }
    backbone::Extractor<T>& section_extractor() noexcept { return *section_; }
    nn::Sequential<T>& head() noexcept { return *head_; }
    FusionStrategy strategy() const noexcept { return strategy_; }
    std::size_t fused_width() const { return strategy_.fused_width(backbone_spec_.feature_dim()); }
    const backbone::BackboneSpec& backbone_spec() const noexcept { return backbone_spec_; }
    const backbone::HeadSpec& head_spec() const noexcept { return head_spec_; }

private:
    backbone::BackboneSpec backbone_spec_;
    backbone::HeadSpec head_spec_;
    FusionStrategy strategy_;
    std::unique_ptr<backbone::Extractor<T>> surface_;
    std::unique_ptr<backbone::Extractor<T>> section_;
    std::unique_ptr<nn::Sequential<T>> head_;
};

// Duplicates the base extractor into both views. Throws ConfigError when the
// base was never trained or `head.input_width` disagrees with the fused width.
template <typename T>
std::unique_ptr<MultiViewModel<T>> build_multiview(backbone::SingleViewModel<T>& base, FusionStrategy strategy,
                                                   const backbone::HeadSpec& head, std::uint64_t seed);

// Inference logits for paired batches; ShapeError when the batches differ in shape.
template <typename T>
Tensor<T> forward_multiview(MultiViewModel<T>& model, const Tensor<T>& surface, const Tensor<T>& section);

}  // namespace stonefuse::fusion
