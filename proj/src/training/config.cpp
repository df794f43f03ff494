#include "stonefuse/training/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/core/io.hpp"

namespace stonefuse::training {

std::string_view to_string(TrainMode m) {
    switch (m) {
        case TrainMode::single_view_surface: return "surface";
        case TrainMode::single_view_section: return "section";
        case TrainMode::single_view_mixed: return "mixed";
        case TrainMode::multi_view: return "mv";
    }
    return "mixed";
}

TrainMode mode_from_string(std::string_view s) {
    if (s == "surface" || s == "single_view_surface") return TrainMode::single_view_surface;
    if (s == "section" || s == "single_view_section") return TrainMode::single_view_section;
    if (s == "mixed" || s == "single_view_mixed") return TrainMode::single_view_mixed;
    if (s == "mv" || s == "multi_view") return TrainMode::multi_view;
    throw ConfigError("unknown mode '" + std::string(s) + "' (expected surface, section, mixed or mv)");
}

void TrainConfig::validate() const {
    if (runs < 1) throw ConfigError("runs must be at least 1");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2 (batch normalization)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

backbone::BackboneSpec TrainConfig::backbone_spec(std::size_t patch_size) const {
    backbone::BackboneSpec s = arch == backbone::Architecture::tiny ? backbone::BackboneSpec::tiny(attention, patch_size)
                                                                   : backbone::BackboneSpec::resnet50(attention);
    s.input_size = patch_size;
    if (!pretrained_path.empty()) {
        s.pretrained_init = backbone::PretrainedInit::imagenet;
        s.pretrained_path = pretrained_path;
    }
    s.validate();
    return s;
}

backbone::HeadSpec TrainConfig::head_spec() const {
    backbone::HeadSpec h;
    h.dropout_probability = dropout;
    return h;
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"dropout", c.dropout},
            {"runs", c.runs},
            {"seed", c.seed},
            {"mode", to_string(c.mode)},
            {"arch", backbone::to_string(c.arch)},
            {"attention", c.attention},
            {"fusion", fusion::to_string(c.fusion)},
            {"pretrained_path", c.pretrained_path.generic_string()},
            {"deterministic", c.deterministic}};
}

std::string TrainConfig::fingerprint() const {
    nlohmann::json j = to_json(*this);
    j.erase("runs");
    j.erase("mode");
    j.erase("deterministic");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", crc32(j.dump()));
    return buf;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    static const std::set<std::string> known = {"epochs", "batch_size", "learning_rate", "dropout", "runs", "seed",
                                                "mode", "arch", "attention", "fusion", "pretrained_path",
                                                "deterministic"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown training config key '" + key + "'");
    }
    TrainConfig c;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.dropout = j.value("dropout", c.dropout);
        c.runs = j.value("runs", c.runs);
        c.seed = j.value("seed", c.seed);
        if (j.contains("mode")) c.mode = mode_from_string(j["mode"].get<std::string>());
        if (j.contains("arch")) c.arch = backbone::architecture_from_string(j["arch"].get<std::string>());
        c.attention = j.value("attention", c.attention);
        if (j.contains("fusion")) c.fusion = fusion::fusion_from_string(j["fusion"].get<std::string>());
        c.pretrained_path = j.value("pretrained_path", std::string());
        c.deterministic = j.value("deterministic", c.deterministic);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid training config: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open training config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
    return train_config_from_json(j);
}

}  // namespace stonefuse::training
