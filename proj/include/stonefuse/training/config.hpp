#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "stonefuse/backbone/spec.hpp"
#include "stonefuse/fusion/fusion.hpp"

namespace stonefuse::training {

enum class TrainMode : std::uint8_t { single_view_surface, single_view_section, single_view_mixed, multi_view };

// "surface", "section", "mixed", "mv"
std::string_view to_string(TrainMode m);
TrainMode mode_from_string(std::string_view s);

// Flat training configuration. The optimizer is Adam with its usual moment
// coefficients (0.9, 0.999) and eps 1e-8; the loss is 6-class cross-entropy.
struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 2e-4;
    double dropout = 0.5;
    std::size_t runs = 5;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::single_view_mixed;

    backbone::Architecture arch = backbone::Architecture::resnet50;
    bool attention = true;
    fusion::FusionKind fusion = fusion::FusionKind::concatenation;
    // Only read for resnet50 with ImageNet initialization.
    std::filesystem::path pretrained_path;
    bool deterministic = true;

    void validate() const;
    std::uint64_t run_seed(std::size_t run_index) const { return seed + run_index; }

    // Extractor for `patch_size` inputs; the tiny backbone uses r=4, k=3.
    backbone::BackboneSpec backbone_spec(std::size_t patch_size) const;
    backbone::HeadSpec head_spec() const;

    // 8 hex digits of a CRC-32 over the canonical JSON, excluding `runs`,
    // `mode` and `deterministic`, which do not change what a run learns.
    std::string fingerprint() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep their defaults; unknown keys throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

}  // namespace stonefuse::training
