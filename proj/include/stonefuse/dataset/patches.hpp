#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stonefuse/dataset/image.hpp"
#include "stonefuse/dataset/types.hpp"

namespace stonefuse::dataset {

// Patch starts along one axis of `length` pixels: a grid with stride
// patch - max_overlap anchored at 0. When the grid has two or more starts, the
// last one is moved flush to the far border; that only shrinks its overlap
// with the previous patch, so the bound still holds and the edge is covered.
// A lone start stays at 0. Throws ShapeError if length < patch or
// max_overlap >= patch.
std::vector<std::size_t> tile_offsets(std::size_t length, std::size_t patch, std::size_t max_overlap);

// Row-major (y outer) patches of raw pixel values in CHW float. Source fields
// (class, view, id) are left for the caller.
std::vector<PatchRecord> extract_patches(const Image& image, std::size_t patch_size, std::size_t max_overlap);

// Per-patch, per-channel standardisation with divisor max(std, 1e-8).
PatchRecord whiten(PatchRecord patch);
void whiten_in_place(float* chw, std::size_t channels, std::size_t plane);

enum class Transform : std::uint8_t { none, hflip, vflip, rot90, rot180, rot270, jitter };

struct Augmentation {
    Transform kind = Transform::none;
    double contrast = 1.0;   // jitter only, in [0.8, 1.2]
    double brightness = 0.0; // jitter only, in [-20, 20] raw units
    std::string tag() const;
};

// The transform a seed selects. Non-identity draws skip Transform::none.
Augmentation sample_augmentation(std::uint64_t seed, bool allow_identity = true);
PatchRecord apply_augmentation(PatchRecord patch, const Augmentation& aug);
PatchRecord augment(const PatchRecord& patch, std::uint64_t seed, bool allow_identity = true);

// Per (class, view) group present in the input: subsample surplus groups,
// top up deficit groups with augmented (never identity) copies. Every class
// must be represented in each view that appears. Output is grouped by
// (class, view); within a group, originals keep their order.
std::vector<PatchRecord> balance(std::vector<PatchRecord> patches, std::size_t budget, std::uint64_t seed);
// The same treatment for one (class, view) group, taken from the first
// record; balance() applies it to every group. Lets callers stream groups.
std::vector<PatchRecord> balance_group(std::vector<PatchRecord> group, std::size_t budget, std::uint64_t seed);

// Image-level split, stratified by (class, view). Each stratum sends
// round(fraction * n) images to train, clamped so both sides are non-empty.
std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> split(const DatasetManifest& manifest,
                                                                    double train_fraction, std::uint64_t seed);

}  // namespace stonefuse::dataset
