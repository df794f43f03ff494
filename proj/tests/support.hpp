#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "stonefuse/core/rng.hpp"
#include "stonefuse/core/tensor.hpp"
#include "stonefuse/dataset/cache.hpp"

namespace test {

// Removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / ("stonefuse-" + name + "-" + std::to_string(::getpid()))) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

template <typename T>
stonefuse::Tensor<T> randn(stonefuse::Shape shape, stonefuse::Rng& rng, double scale = 1.0) {
    stonefuse::Tensor<T> t(std::move(shape));
    for (auto& v : t.vec()) v = static_cast<T>(scale * stonefuse::standard_normal(rng));
    return t;
}

// `per_group` random patches for each (class, view), label-dependent mean shift.
inline stonefuse::dataset::PatchSet toy_patches(std::size_t patch, std::size_t per_group, std::uint64_t seed) {
    stonefuse::Rng rng(seed);
    stonefuse::dataset::PatchSet set;
    set.patch_size = patch;
    for (int label = 0; label < 6; ++label) {
        for (auto view : stonefuse::dataset::kAllViews) {
            for (std::size_t k = 0; k < per_group; ++k) {
                set.labels.push_back(label);
                set.views.push_back(view);
                set.names.push_back("toy");
                for (std::size_t i = 0; i < set.sample_size(); ++i) {
                    set.pixels.push_back(static_cast<float>(stonefuse::standard_normal(rng) + 0.3 * label));
                }
            }
        }
    }
    return set;
}

}  // namespace test
