#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace stonefuse::backbone {

enum class Architecture { resnet50, tiny };
enum class PretrainedInit { imagenet, random };

inline constexpr std::size_t kNumClasses = 6;

std::string_view to_string(Architecture a);
Architecture architecture_from_string(std::string_view s);
std::string_view to_string(PretrainedInit p);
PretrainedInit pretrained_from_string(std::string_view s);

// Residual feature extractor configuration.
//
// resnet50: torchvision-layout ResNet-50 (3-4-6-3 bottlenecks), 2048-d features.
// tiny:     average-pool to 16x16, then four stride-2 single-conv residual
//           blocks (8, 16, 32, 64 channels) down to 1x1, 64-d features.
//           Test-scale only.
struct BackboneSpec {
    Architecture architecture = Architecture::resnet50;
    bool attention_enabled = true;
    PretrainedInit pretrained_init = PretrainedInit::random;
    std::filesystem::path pretrained_path;
    std::size_t input_size = 256;
    std::size_t reduction = 16;
    std::size_t spatial_kernel = 7;

    static BackboneSpec resnet50(bool attention = true);
    static BackboneSpec tiny(bool attention = true, std::size_t input_size = 64);

    std::size_t feature_dim() const;
    void validate() const;

    bool operator==(const BackboneSpec&) const = default;
};

struct HeadSpec {
    std::vector<std::size_t> layer_widths{512, 256, kNumClasses};
    bool batch_normalization = true;
    double dropout_probability = 0.5;
    // Expected input width; 0 means "take it from the extractor".
    std::size_t input_width = 0;

    void validate() const;

    bool operator==(const HeadSpec&) const = default;
};

nlohmann::json to_json(const BackboneSpec& s);
BackboneSpec backbone_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HeadSpec& s);
HeadSpec head_spec_from_json(const nlohmann::json& j);

}  // namespace stonefuse::backbone
