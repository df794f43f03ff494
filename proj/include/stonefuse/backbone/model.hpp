#pragma once

#include <cstdint>
#include <memory>

#include "stonefuse/backbone/blocks.hpp"
#include "stonefuse/backbone/spec.hpp"

namespace stonefuse::backbone {

// Feature extractor: image batch (B,3,S,S) -> pooled features (B, feature_dim).
template <typename T>
class Extractor final : public nn::Layer<T> {
public:
    Extractor(const BackboneSpec& spec, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override { return body_.backward(grad_out); }
    std::string_view kind() const override { return "extractor"; }
    void collect_parameters(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) override {
        body_.collect_parameters(prefix, out);
    }
    void collect_buffers(const std::string& prefix, std::vector<nn::BufferRef<T>>& out) override {
        body_.collect_buffers(prefix, out);
    }
    void for_each_child(const std::function<void(const nn::Layer<T>&)>& fn) const override { fn(body_); }
    void clear_cache() override { body_.clear_cache(); }

    const BackboneSpec& spec() const noexcept { return spec_; }
    // Every residual block in forward order.
    std::vector<ResidualBlock<T>*> blocks();

private:
    BackboneSpec spec_;
    nn::Sequential<T> body_;
    std::vector<ResidualBlock<T>*> blocks_;
};

// Linear -> [BN] -> ReLU -> Dropout per hidden width, then a final Linear.
template <typename T>
std::unique_ptr<nn::Sequential<T>> make_head(const HeadSpec& spec, std::size_t input_width, Rng& rng);

template <typename T>
class SingleViewModel {
public:
    SingleViewModel(const BackboneSpec& backbone, const HeadSpec& head, std::uint64_t seed);

    Tensor<T> forward_features(const Tensor<T>& batch, nn::Mode mode);
    Tensor<T> forward_logits(const Tensor<T>& batch, nn::Mode mode);
    // Backpropagates d loss / d logits from the last forward_logits call;
    // stops at the head when the extractor is frozen.
    void backward(const Tensor<T>& grad_logits);

    std::vector<nn::ParamRef<T>> parameters();
    std::vector<nn::BufferRef<T>> buffers();

    void set_frozen(bool frozen);
    bool frozen() const noexcept { return frozen_; }
    void reseed_dropout(std::uint64_t seed);
    // Set once the model has seen at least one training epoch (or was loaded
    // from a checkpoint that had).
    bool trained() const noexcept { return trained_; }
    void set_trained(bool trained) noexcept { trained_ = trained; }

    Extractor<T>& extractor() noexcept { return *extractor_; }
    nn::Sequential<T>& head() noexcept { return *head_; }
    const BackboneSpec& backbone_spec() const noexcept { return backbone_spec_; }
    const HeadSpec& head_spec() const noexcept { return head_spec_; }

private:
    BackboneSpec backbone_spec_;
    HeadSpec head_spec_;
    std::unique_ptr<Extractor<T>> extractor_;
    std::unique_ptr<nn::Sequential<T>> head_;
    bool frozen_ = false;
    bool trained_ = false;
};

// Reseeds every Dropout layer in `head` from (seed, position).
template <typename T>
void reseed_dropout(nn::Sequential<T>& head, std::uint64_t seed);

// Builds the model; loads pretrained extractor weights when requested.
// Attention and head weights are always freshly initialized from `seed`.
template <typename T>
std::unique_ptr<SingleViewModel<T>> build_model(const BackboneSpec& backbone, const HeadSpec& head,
                                                std::uint64_t seed);

template <typename T>
std::size_t count_attention_blocks(const nn::Layer<T>& root) {
    return nn::count_layers(root, "cbam");
}

template <typename T>
std::size_t count_attention_blocks(SingleViewModel<T>& model) {
    return count_attention_blocks<T>(model.extractor());
}

// Copies extractor parameters/buffers (not under a cbam scope) from a
// torchvision-named weight archive. Throws on any missing or mis-shaped entry.
template <typename T>
void load_pretrained(Extractor<T>& extractor, const std::filesystem::path& path);

// Copies every parameter and buffer by name; shapes must match.
template <typename T>
void copy_state(nn::Layer<T>& from, nn::Layer<T>& to);

// CRC-32 over names and raw bytes of all parameters and buffers.
template <typename T>
std::uint32_t parameter_checksum(nn::Layer<T>& layer);

}  // namespace stonefuse::backbone
