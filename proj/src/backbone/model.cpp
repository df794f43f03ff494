#include "stonefuse/backbone/model.hpp"

#include <cmath>
#include <cstring>
#include <map>

#include "stonefuse/core/archive.hpp"
#include "stonefuse/core/io.hpp"

namespace stonefuse::backbone {
namespace {

constexpr std::size_t kTinyResolution = 16;

template <typename T>
std::unique_ptr<nn::Conv2d<T>> stem_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, Rng& rng) {
    nn::Conv2dOptions o;
    o.in_channels = in;
    o.out_channels = out;
    o.kernel = k;
    o.stride = stride;
    o.padding = k / 2;
    auto conv = std::make_unique<nn::Conv2d<T>>(o);
    nn::init_normal(conv->weight().value, static_cast<T>(std::sqrt(2.0 / static_cast<double>(out * k * k))), rng);
    return conv;
}

template <typename T>
void init_linear(nn::Linear<T>& fc, Rng& rng) {
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fc.in_features())));
    nn::init_uniform(fc.weight().value, bound, rng);
    nn::init_uniform(fc.bias().value, bound, rng);
}

}  // namespace

template <typename T>
Extractor<T>::Extractor(const BackboneSpec& spec, Rng& rng) : spec_(spec) {
    spec.validate();
    BlockOptions bo;
    bo.attention = spec.attention_enabled;
    bo.cbam.reduction = spec.reduction;
    bo.cbam.spatial_kernel = spec.spatial_kernel;

    if (spec.architecture == Architecture::resnet50) {
        body_.add("conv1", stem_conv<T>(3, 64, 7, 2, rng));
        body_.add("bn1", std::make_unique<nn::BatchNorm<T>>(64));
        body_.add("relu", std::make_unique<nn::ReLU<T>>());
        body_.add("maxpool", std::make_unique<nn::MaxPool2d<T>>(3, 2, 1));
        const std::size_t depths[4] = {3, 4, 6, 3};
        const std::size_t widths[4] = {64, 128, 256, 512};
        std::size_t in = 64;
        for (std::size_t stage = 0; stage < 4; ++stage) {
            auto layer = std::make_unique<nn::Sequential<T>>();
            for (std::size_t i = 0; i < depths[stage]; ++i) {
                bo.in_channels = in;
                bo.width = widths[stage];
                bo.stride = (i == 0 && stage > 0) ? 2 : 1;
                auto& block = layer->add(std::to_string(i), std::make_unique<Bottleneck<T>>(bo, rng));
                blocks_.push_back(&block);
                in = block.out_channels();
            }
            body_.add("layer" + std::to_string(stage + 1), std::move(layer));
        }
    } else {
        body_.add("pool", std::make_unique<nn::AvgPool2d<T>>(spec.input_size / kTinyResolution));
        const std::size_t widths[4] = {8, 16, 32, 64};
        std::size_t in = 3;
        for (std::size_t stage = 0; stage < 4; ++stage) {
            auto layer = std::make_unique<nn::Sequential<T>>();
            bo.in_channels = in;
            bo.width = widths[stage];
            bo.stride = 2;
            auto& block = layer->add("0", std::make_unique<ConvBlock<T>>(bo, rng));
            blocks_.push_back(&block);
            in = block.out_channels();
            body_.add("layer" + std::to_string(stage + 1), std::move(layer));
        }
    }
    body_.add("avgpool", std::make_unique<nn::GlobalAvgPool<T>>());
}

template <typename T>
Tensor<T> Extractor<T>::forward(const Tensor<T>& x, nn::Mode mode) {
    require_rank(x.shape(), 4, "extractor");
    if (x.dim(1) != 3 || x.dim(2) != spec_.input_size || x.dim(3) != spec_.input_size) {
        throw ShapeError("extractor: expected (B,3," + std::to_string(spec_.input_size) + "," +
                         std::to_string(spec_.input_size) + ") input, got " + shape_str(x.shape()));
    }
    return body_.forward(x, mode);
}

template <typename T>
std::vector<ResidualBlock<T>*> Extractor<T>::blocks() {
    return blocks_;
}

template <typename T>
std::unique_ptr<nn::Sequential<T>> make_head(const HeadSpec& spec, std::size_t input_width, Rng& rng) {
    spec.validate();
    auto head = std::make_unique<nn::Sequential<T>>();
    std::size_t in = input_width;
    const std::size_t hidden = spec.layer_widths.size() - 1;
    for (std::size_t i = 0; i < spec.layer_widths.size(); ++i) {
        const std::size_t out = spec.layer_widths[i];
        const std::string idx = std::to_string(i + 1);
        auto& fc = head->add("fc" + idx, std::make_unique<nn::Linear<T>>(in, out));
        init_linear(fc, rng);
        if (i < hidden) {
            if (spec.batch_normalization) head->add("bn" + idx, std::make_unique<nn::BatchNorm<T>>(out));
            head->add("relu" + idx, std::make_unique<nn::ReLU<T>>());
            head->add("dropout" + idx, std::make_unique<nn::Dropout<T>>(spec.dropout_probability, rng()));
        }
        in = out;
    }
    return head;
}

template <typename T>
SingleViewModel<T>::SingleViewModel(const BackboneSpec& backbone, const HeadSpec& head, std::uint64_t seed)
    : backbone_spec_(backbone), head_spec_(head) {
    head.validate();
    if (head.input_width != 0 && head.input_width != backbone.feature_dim()) {
        throw ConfigError("head input width " + std::to_string(head.input_width) + " does not match feature_dim " +
                          std::to_string(backbone.feature_dim()));
    }
    Rng extractor_rng(mix_seed(seed, 1));
    Rng head_rng(mix_seed(seed, 2));
    extractor_ = std::make_unique<Extractor<T>>(backbone, extractor_rng);
    head_ = make_head<T>(head, backbone.feature_dim(), head_rng);
}

template <typename T>
Tensor<T> SingleViewModel<T>::forward_features(const Tensor<T>& batch, nn::Mode mode) {
    return extractor_->forward(batch, frozen_ ? nn::Mode::eval : mode);
}

template <typename T>
Tensor<T> SingleViewModel<T>::forward_logits(const Tensor<T>& batch, nn::Mode mode) {
    return head_->forward(forward_features(batch, mode), mode);
}

template <typename T>
void SingleViewModel<T>::backward(const Tensor<T>& grad_logits) {
    const Tensor<T> d_features = head_->backward(grad_logits);
    if (!frozen_) extractor_->backward(d_features);
}

template <typename T>
std::vector<nn::ParamRef<T>> SingleViewModel<T>::parameters() {
    std::vector<nn::ParamRef<T>> out;
    extractor_->collect_parameters("extractor", out);
    head_->collect_parameters("head", out);
    return out;
}

template <typename T>
std::vector<nn::BufferRef<T>> SingleViewModel<T>::buffers() {
    std::vector<nn::BufferRef<T>> out;
    extractor_->collect_buffers("extractor", out);
    head_->collect_buffers("head", out);
    return out;
}

template <typename T>
void SingleViewModel<T>::set_frozen(bool frozen) {
    frozen_ = frozen;
    for (auto& ref : nn::parameters_of<T>(*extractor_)) ref.param->trainable = !frozen;
}

template <typename T>
void reseed_dropout(nn::Sequential<T>& head, std::uint64_t seed) {
    std::size_t i = 0;
    for (std::size_t k = 0; k < head.size(); ++k) {
        if (auto* d = dynamic_cast<nn::Dropout<T>*>(&head.at(k))) d->reseed(mix_seed(seed, ++i));
    }
}

template <typename T>
void SingleViewModel<T>::reseed_dropout(std::uint64_t seed) {
    backbone::reseed_dropout(*head_, seed);
}

template <typename T>
std::unique_ptr<SingleViewModel<T>> build_model(const BackboneSpec& backbone, const HeadSpec& head, std::uint64_t seed) {
    auto model = std::make_unique<SingleViewModel<T>>(backbone, head, seed);
    if (backbone.pretrained_init == PretrainedInit::imagenet) load_pretrained<T>(model->extractor(), backbone.pretrained_path);
    return model;
}

template <typename T>
void load_pretrained(Extractor<T>& extractor, const std::filesystem::path& path) {
    if (path.empty() || !std::filesystem::exists(path)) {
        throw ConfigError("pretrained weight file not found: " + path.string());
    }
    const TensorArchive archive = TensorArchive::load(path);
    auto assign = [&](const std::string& name, Tensor<T>& dst) {
        if (name.find(".cbam.") != std::string::npos) return;
        if (!archive.contains(name)) throw CheckpointError("pretrained weights lack '" + name + "'");
        Tensor<T> src = archive.get<T>(name);
        if (src.shape() != dst.shape()) {
            throw CheckpointError("pretrained '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                                  shape_str(dst.shape()));
        }
        dst = std::move(src);
    };
    for (auto& ref : nn::parameters_of<T>(extractor)) assign(ref.name, ref.param->value);
    for (auto& ref : nn::buffers_of<T>(extractor)) assign(ref.name, *ref.tensor);
}

template <typename T>
void copy_state(nn::Layer<T>& from, nn::Layer<T>& to) {
    auto src_params = nn::parameters_of<T>(from);
    auto dst_params = nn::parameters_of<T>(to);
    auto src_buffers = nn::buffers_of<T>(from);
    auto dst_buffers = nn::buffers_of<T>(to);
    if (src_params.size() != dst_params.size() || src_buffers.size() != dst_buffers.size()) {
        throw ShapeError("copy_state: layer structures differ");
    }
    for (std::size_t i = 0; i < src_params.size(); ++i) {
        if (src_params[i].name != dst_params[i].name ||
            src_params[i].param->value.shape() != dst_params[i].param->value.shape()) {
            throw ShapeError("copy_state: parameter mismatch at '" + src_params[i].name + "'");
        }
        dst_params[i].param->value = src_params[i].param->value;
    }
    for (std::size_t i = 0; i < src_buffers.size(); ++i) {
        if (src_buffers[i].name != dst_buffers[i].name) throw ShapeError("copy_state: buffer mismatch");
        *dst_buffers[i].tensor = *src_buffers[i].tensor;
    }
}

template <typename T>
std::uint32_t parameter_checksum(nn::Layer<T>& layer) {
    std::uint32_t crc = 0;
    auto feed = [&](const std::string& name, const Tensor<T>& t) {
        crc = crc32(name, crc);
        crc = crc32(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(t.data()), t.size() * sizeof(T)), crc);
    };
    for (auto& ref : nn::parameters_of<T>(layer)) feed(ref.name, ref.param->value);
    for (auto& ref : nn::buffers_of<T>(layer)) feed(ref.name, *ref.tensor);
    return crc;
}

#define STONEFUSE_INSTANTIATE(T)                                                                               \
    template class Extractor<T>;                                                                               \
    template class SingleViewModel<T>;                                                                         \
    template std::unique_ptr<nn::Sequential<T>> make_head<T>(const HeadSpec&, std::size_t, Rng&);              \
    template std::unique_ptr<SingleViewModel<T>> build_model<T>(const BackboneSpec&, const HeadSpec&, std::uint64_t); \
    template void load_pretrained<T>(Extractor<T>&, const std::filesystem::path&);                             \
    template void copy_state<T>(nn::Layer<T>&, nn::Layer<T>&);                                                 \
    template void reseed_dropout<T>(nn::Sequential<T>&, std::uint64_t);                                        \
    template std::uint32_t parameter_checksum<T>(nn::Layer<T>&);

STONEFUSE_INSTANTIATE(float)
STONEFUSE_INSTANTIATE(double)

}  // namespace stonefuse::backbone
