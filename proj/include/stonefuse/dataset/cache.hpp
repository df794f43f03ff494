#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stonefuse/dataset/types.hpp"

namespace stonefuse::dataset {

struct PrepareConfig {
    std::size_t patch_size = 256;
    std::size_t max_overlap = 20;
    std::size_t budget = 1000;  // patches per (class, view)
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct PatchIndexEntry {
    std::filesystem::path path;  // relative to the index directory
    StoneClass stone_class = StoneClass::WW;
    View view = View::surface;
    Split split = Split::unassigned;
    std::string source_id;
    std::string stone_id;
    std::size_t x = 0;
    std::size_t y = 0;
    std::string augmentation_tag = "none";
};

struct PatchIndex {
    std::filesystem::path root;  // directory holding index.jsonl
    std::size_t patch_size = 0;
    std::vector<PatchIndexEntry> entries;
};

// Split images, tile, balance each (class, view) group to the budget, and
// write raw 8-bit patches to
//   out_dir/patches/<split>/<class>/<view>/<source-id>_<x>_<y>[_aug-<tag>].png
// plus out_dir/patches/index.jsonl and the split manifest out_dir/manifest.jsonl.
// Whitening happens at load time; PNG cannot hold whitened values.
PatchIndex prepare_patches(const DatasetManifest& manifest, const PrepareConfig& cfg,
                           const std::filesystem::path& out_dir);

PatchIndex load_patch_index(const std::filesystem::path& index_path);

// Whitened patches held contiguously (N x 3 x P x P) for training and evaluation.
struct PatchSet {
    std::size_t patch_size = 0;
    std::vector<float> pixels;
    std::vector<int> labels;
    std::vector<View> views;
    std::vector<std::string> names;  // index-relative paths, for traceability

    std::size_t size() const { return labels.size(); }
    std::size_t sample_size() const { return 3 * patch_size * patch_size; }
    const float* sample(std::size_t i) const { return pixels.data() + i * sample_size(); }
    // Gathers the listed samples into a (B, 3, P, P) tensor.
    Tensor<float> batch(std::span<const std::size_t> indices) const;
    // Subset restricted to one view.
    PatchSet filter(View view) const;
};

// All entries of `split`, optionally restricted to one view, in index order.
PatchSet load_patches(const PatchIndex& index, Split split, std::optional<View> view = std::nullopt);

}  // namespace stonefuse::dataset
