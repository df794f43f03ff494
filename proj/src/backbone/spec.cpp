#include "stonefuse/backbone/spec.hpp"

#include "stonefuse/core/errors.hpp"

namespace stonefuse::backbone {

std::string_view to_string(Architecture a) { return a == Architecture::resnet50 ? "resnet50" : "tiny"; }

Architecture architecture_from_string(std::string_view s) {
    if (s == "resnet50") return Architecture::resnet50;
    if (s == "tiny") return Architecture::tiny;
    throw ConfigError("unknown architecture '" + std::string(s) + "' (expected resnet50 or tiny)");
}

std::string_view to_string(PretrainedInit p) { return p == PretrainedInit::imagenet ? "imagenet" : "random"; }

PretrainedInit pretrained_from_string(std::string_view s) {
    if (s == "imagenet") return PretrainedInit::imagenet;
    if (s == "random") return PretrainedInit::random;
    throw ConfigError("unknown pretrained_init '" + std::string(s) + "' (expected imagenet or random)");
}

BackboneSpec BackboneSpec::resnet50(bool attention) {
    BackboneSpec s;
    s.architecture = Architecture::resnet50;
    s.attention_enabled = attention;
    return s;
}

BackboneSpec BackboneSpec::tiny(bool attention, std::size_t input_size) {
    BackboneSpec s;
    s.architecture = Architecture::tiny;
    s.attention_enabled = attention;
    s.input_size = input_size;
    s.reduction = 4;
    s.spatial_kernel = 3;
    return s;
}

std::size_t BackboneSpec::feature_dim() const { return architecture == Architecture::resnet50 ? 2048 : 64; }

void BackboneSpec::validate() const {
    if (input_size == 0) throw ConfigError("input_size must be positive");
    if (architecture == Architecture::tiny && (input_size < 16 || input_size % 16 != 0)) {
        throw ConfigError("tiny backbone needs an input size that is a multiple of 16, got " +
                          std::to_string(input_size));
    }
    if (architecture == Architecture::resnet50 && input_size < 32) {
        throw ConfigError("resnet50 needs an input size of at least 32");
    }
    if (spatial_kernel % 2 == 0) throw ConfigError("spatial attention kernel must be odd");
    if (reduction == 0) throw ConfigError("attention reduction ratio must be positive");
    if (pretrained_init == PretrainedInit::imagenet && pretrained_path.empty()) {
        throw ConfigError("pretrained_init=imagenet requires a pretrained weight file");
    }
}

void HeadSpec::validate() const {
    if (layer_widths.empty() || layer_widths.back() != kNumClasses) {
        throw ConfigError("head must end in " + std::to_string(kNumClasses) + " outputs");
    }
    for (auto w : layer_widths) {
        if (w == 0) throw ConfigError("head layer widths must be positive");
    }
    if (!(dropout_probability >= 0.0 && dropout_probability < 1.0)) {
        throw ConfigError("dropout probability must be in [0, 1)");
    }
}

nlohmann::json to_json(const BackboneSpec& s) {
    return {{"architecture", to_string(s.architecture)},
            {"attention_enabled", s.attention_enabled},
            {"pretrained_init", to_string(s.pretrained_init)},
            {"input_size", s.input_size},
            {"reduction", s.reduction},
            {"spatial_kernel", s.spatial_kernel},
            {"feature_dim", s.feature_dim()}};
}

BackboneSpec backbone_spec_from_json(const nlohmann::json& j) {
    try {
        BackboneSpec s;
        s.architecture = architecture_from_string(j.at("architecture").get<std::string>());
        s.attention_enabled = j.at("attention_enabled").get<bool>();
        s.pretrained_init = pretrained_from_string(j.value("pretrained_init", std::string("random")));
        s.input_size = j.at("input_size").get<std::size_t>();
        s.reduction = j.at("reduction").get<std::size_t>();
        s.spatial_kernel = j.at("spatial_kernel").get<std::size_t>();
        // Pretrained weights are already baked into a checkpoint.
        s.pretrained_init = PretrainedInit::random;
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("invalid backbone spec: ") + e.what());
    }
}

nlohmann::json to_json(const HeadSpec& s) {
    return {{"layer_widths", s.layer_widths},
            {"batch_normalization", s.batch_normalization},
            {"dropout_probability", s.dropout_probability},
            {"input_width", s.input_width}};
}

HeadSpec head_spec_from_json(const nlohmann::json& j) {
    try {
        HeadSpec s;
        s.layer_widths = j.at("layer_widths").get<std::vector<std::size_t>>();
        s.batch_normalization = j.at("batch_normalization").get<bool>();
        s.dropout_probability = j.at("dropout_probability").get<double>();
        s.input_width = j.value("input_width", std::size_t{0});
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("invalid head spec: ") + e.what());
    }
}

}  // namespace stonefuse::backbone
