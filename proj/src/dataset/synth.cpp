#include "stonefuse/dataset/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "stonefuse/core/errors.hpp"

namespace stonefuse::dataset {
namespace {

constexpr double kGratingAmplitude = 60.0;
constexpr double kFieldAmplitude = 45.0;
constexpr std::size_t kFieldWaves = 6;

// One negative channel per direction; survives per-channel whitening as a
// sign pattern in the channel correlations.
constexpr std::array<std::array<double, 3>, 3> kChroma = {{{1, 1, -1}, {1, -1, 1}, {-1, 1, 1}}};

std::uint8_t to_pixel(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

}  // namespace

void SynthConfig::validate() const {
    if (classes != kClassCount) throw ConfigError("synthetic data needs exactly 6 classes");
    if (surface_factor_levels * section_factor_levels != classes) {
        throw ConfigError("surface_factor_levels x section_factor_levels must equal 6, got " +
                          std::to_string(surface_factor_levels) + " x " + std::to_string(section_factor_levels));
    }
    if (section_factor_levels > kChroma.size()) throw ConfigError("at most 3 section factor levels are supported");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
    if (images_per_class_per_view < 2) throw ConfigError("images_per_class_per_view must be at least 2");
    if (image_size < 16) throw ConfigError("image_size must be at least 16");
    if (!(texture_period >= 2.0)) throw ConfigError("texture_period must be at least 2 pixels");
}

double SynthConfig::grating_period(std::size_t level) const {
    return texture_period * std::ldexp(1.0, static_cast<int>(surface_factor_levels - 1 - level));
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = nlohmann::json{{"classes", c.classes},
                       {"surface_factor_levels", c.surface_factor_levels},
                       {"section_factor_levels", c.section_factor_levels},
                       {"noise_std", c.noise_std},
                       {"images_per_class_per_view", c.images_per_class_per_view},
                       {"image_size", c.image_size},
                       {"seed", c.seed},
                       {"texture_period", c.texture_period}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    c = SynthConfig{};
    for (const auto& [key, value] : j.items()) {
        if (key == "classes") c.classes = value.get<std::size_t>();
        else if (key == "surface_factor_levels") c.surface_factor_levels = value.get<std::size_t>();
        else if (key == "section_factor_levels") c.section_factor_levels = value.get<std::size_t>();
        else if (key == "noise_std") c.noise_std = value.get<double>();
        else if (key == "images_per_class_per_view") c.images_per_class_per_view = value.get<std::size_t>();
        else if (key == "image_size") c.image_size = value.get<std::size_t>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "texture_period") c.texture_period = value.get<double>();
        else throw ConfigError("unknown synth config key '" + key + "'");
    }
}

Image render_surface(const SynthConfig& cfg, std::size_t level, std::size_t shift, Rng& rng) {
    const std::size_t n = cfg.image_size;
    const double period = cfg.grating_period(level);
    const double theta = std::numbers::pi / 6.0;
    const double kx = std::cos(theta) / period, ky = std::sin(theta) / period;
    Image img(n, n);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const double phase = 2.0 * std::numbers::pi * (static_cast<double>(x + shift) * kx + static_cast<double>(y) * ky);
            const double base = 128.0 + kGratingAmplitude * std::sin(phase);
            for (std::size_t c = 0; c < 3; ++c) {
                const double noise = cfg.noise_std > 0.0 ? cfg.noise_std * standard_normal(rng) : 0.0;
                img.at(x, y, c) = to_pixel(base + noise);
            }
        }
    }
    return img;
}

Image render_section(const SynthConfig& cfg, std::size_t level, Rng& rng) {
    const std::size_t n = cfg.image_size;
    struct Wave {
        double fx, fy, phase;
    };
    std::array<Wave, kFieldWaves> waves;
    for (auto& w : waves) {
        const double f = uniform(rng, 1.0 / 64.0, 1.0 / 24.0);
        const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        w = {f * std::cos(dir), f * std::sin(dir), uniform(rng, 0.0, 2.0 * std::numbers::pi)};
    }
    const auto& chroma = kChroma[level];
    const double norm = 1.0 / std::sqrt(static_cast<double>(kFieldWaves) / 2.0);
    Image img(n, n);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            double s = 0.0;
            for (const auto& w : waves) {
                s += std::cos(2.0 * std::numbers::pi * (w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y)) + w.phase);
            }
            s *= norm;
            for (std::size_t c = 0; c < 3; ++c) {
                const double noise = cfg.noise_std > 0.0 ? cfg.noise_std * standard_normal(rng) : 0.0;
                img.at(x, y, c) = to_pixel(128.0 + kFieldAmplitude * s * chroma[c] + noise);
            }
        }
    }
    return img;
}

DatasetManifest synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir / "images");
    DatasetManifest m;
    for (StoneClass cls : kAllClasses) {
        for (View view : kAllViews) {
            for (std::size_t k = 0; k < cfg.images_per_class_per_view; ++k) {
                const std::uint64_t key = (static_cast<std::uint64_t>(cls) * kViewCount + static_cast<std::uint64_t>(view)) * 1000003ULL + k;
                Rng rng(mix_seed(cfg.seed, key));
                Image img;
                if (view == View::surface) {
                    const double period = cfg.grating_period(cfg.surface_level(cls));
                    const auto shift = uniform_index(rng, static_cast<std::size_t>(std::ceil(2.0 * period)));
                    img = render_surface(cfg, cfg.surface_level(cls), shift, rng);
                } else {
                    img = render_section(cfg, cfg.section_level(cls), rng);
                }
                char name[64];
                std::snprintf(name, sizeof name, "%s_%s_%03zu.png", std::string(to_string(cls)).c_str(),
                              std::string(to_string(view)).c_str(), k);
                const auto path = out_dir / "images" / name;
                write_png(path, img);
                char stone[48];
                std::snprintf(stone, sizeof stone, "synth-%s-%03zu", std::string(to_string(cls)).c_str(), k);
                m.records.push_back({path, cls, view, stone, Split::unassigned});
            }
        }
    }
    save_manifest(m, out_dir / "manifest.jsonl");
    return m;
}

}  // namespace stonefuse::dataset
