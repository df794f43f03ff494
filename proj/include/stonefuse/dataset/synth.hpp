#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "stonefuse/core/rng.hpp"
#include "stonefuse/dataset/image.hpp"
#include "stonefuse/dataset/types.hpp"

namespace stonefuse::dataset {

// Paired-view synthetic stones. Class c = section_levels * a + b, where the
// surface view renders only factor a (grating period) and the section view
// only factor b (chroma direction of a smooth colour field). Neither view
// alone determines the class.
struct SynthConfig {
    std::size_t classes = kClassCount;
    std::size_t surface_factor_levels = 3;
    std::size_t section_factor_levels = 2;
    double noise_std = 10.0;  // Gaussian, in 8-bit units
    std::size_t images_per_class_per_view = 20;
    std::size_t image_size = 328;
    std::uint64_t seed = 0;
    double texture_period = 12.0;  // finest grating period in pixels; coarser levels double it

    void validate() const;  // ConfigError
    std::size_t surface_level(StoneClass c) const { return static_cast<std::size_t>(c) / section_factor_levels; }
    std::size_t section_level(StoneClass c) const { return static_cast<std::size_t>(c) % section_factor_levels; }
    double grating_period(std::size_t level) const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

// Grey sinusoidal grating at a fixed 30 degree orientation, shifted by an
// integer `shift` pixels along x; noise drawn from `rng`.
Image render_surface(const SynthConfig& cfg, std::size_t level, std::size_t shift, Rng& rng);
// Smooth random field along the level's chroma direction; field and noise from `rng`.
Image render_section(const SynthConfig& cfg, std::size_t level, Rng& rng);

// Writes out_dir/images/<class>_<view>_<k>.png and out_dir/manifest.jsonl.
DatasetManifest synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace stonefuse::dataset
