#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stonefuse/core/tensor.hpp"

namespace stonefuse::dataset {

// Stone types, in label order 0..5.
enum class StoneClass : std::uint8_t { WW, WD, AU, STR, BRU, CYS };
enum class View : std::uint8_t { surface, section };
enum class Split : std::uint8_t { train, test, unassigned };

inline constexpr std::size_t kClassCount = 6;
inline constexpr std::size_t kViewCount = 2;
inline constexpr std::array<StoneClass, kClassCount> kAllClasses = {
    StoneClass::WW, StoneClass::WD, StoneClass::AU, StoneClass::STR, StoneClass::BRU, StoneClass::CYS};
inline constexpr std::array<View, kViewCount> kAllViews = {View::surface, View::section};

std::string_view to_string(StoneClass c);
std::string_view to_string(View v);
std::string_view to_string(Split s);
// Throw DataError on unknown tokens.
StoneClass class_from_string(std::string_view s);
View view_from_string(std::string_view s);
Split split_from_string(std::string_view s);

inline int label_of(StoneClass c) { return static_cast<int>(c); }
StoneClass class_from_label(int label);

struct ImageRecord {
    std::filesystem::path image_path;  // absolute, or relative to the working directory
    StoneClass stone_class = StoneClass::WW;
    View view = View::surface;
    std::string stone_id;
    Split split = Split::unassigned;

    // File stem; names the image's patches in the cache.
    std::string source_id() const { return image_path.stem().string(); }
};

using GroupCounts = std::array<std::array<std::size_t, kViewCount>, kClassCount>;

struct DatasetManifest {
    std::vector<ImageRecord> records;
    std::size_t patch_size = 256;
    std::size_t max_overlap = 20;
    std::size_t per_class_patch_budget = 1000;  // per view; mixed sets hold twice this per class

    GroupCounts counts() const;
};

// JSON-lines, one {"image_path","class","view","stone_id"[,"split"]} object per
// line. Relative image paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
// Image paths are written relative to the manifest's directory when possible.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// One square 3-channel sample, CHW, either raw 0..255 or whitened.
struct PatchRecord {
    Tensor<float> pixels;
    std::string source_id;
    StoneClass stone_class = StoneClass::WW;
    View view = View::surface;
    Split split = Split::unassigned;
    std::size_t x = 0;
    std::size_t y = 0;
    std::string augmentation_tag = "none";

    std::size_t size() const { return pixels.rank() == 3 ? pixels.dim(1) : 0; }
};

}  // namespace stonefuse::dataset
