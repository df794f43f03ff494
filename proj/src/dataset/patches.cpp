#include "stonefuse/dataset/patches.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/core/rng.hpp"

namespace stonefuse::dataset {

std::vector<std::size_t> tile_offsets(std::size_t length, std::size_t patch, std::size_t max_overlap) {
    if (patch == 0 || max_overlap >= patch) {
        throw ConfigError("max_overlap (" + std::to_string(max_overlap) + ") must be smaller than patch size (" +
                          std::to_string(patch) + ")");
    }
    if (length < patch) {
        throw DataError("image side " + std::to_string(length) + " is smaller than patch size " + std::to_string(patch));
    }
    const std::size_t stride = patch - max_overlap;
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + patch <= length; s += stride) starts.push_back(s);
    if (starts.size() >= 2) starts.back() = length - patch;
    return starts;
}

std::vector<PatchRecord> extract_patches(const Image& image, std::size_t patch_size, std::size_t max_overlap) {
    const auto xs = tile_offsets(image.width, patch_size, max_overlap);
    const auto ys = tile_offsets(image.height, patch_size, max_overlap);
    const std::size_t plane = patch_size * patch_size;
    std::vector<PatchRecord> out;
    out.reserve(xs.size() * ys.size());
    for (std::size_t y0 : ys) {
        for (std::size_t x0 : xs) {
            PatchRecord p;
            p.pixels = Tensor<float>(Shape{3, patch_size, patch_size});
            float* d = p.pixels.data();
            for (std::size_t y = 0; y < patch_size; ++y) {
                const std::uint8_t* row = image.rgb.data() + ((y0 + y) * image.width + x0) * 3;
                for (std::size_t x = 0; x < patch_size; ++x) {
                    for (std::size_t c = 0; c < 3; ++c) d[c * plane + y * patch_size + x] = row[x * 3 + c];
                }
            }
            p.x = x0;
            p.y = y0;
            out.push_back(std::move(p));
        }
    }
    return out;
}

void whiten_in_place(float* chw, std::size_t channels, std::size_t plane) {
    constexpr double kEps = 1e-8;
    for (std::size_t c = 0; c < channels; ++c) {
        float* v = chw + c * plane;
        double sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) sum += v[i];
        const double mean = sum / static_cast<double>(plane);
        double sq = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            const double d = v[i] - mean;
            sq += d * d;
        }
        const double inv = 1.0 / std::max(std::sqrt(sq / static_cast<double>(plane)), kEps);
        for (std::size_t i = 0; i < plane; ++i) v[i] = static_cast<float>((v[i] - mean) * inv);
    }
}

PatchRecord whiten(PatchRecord patch) {
    require_rank(patch.pixels.shape(), 3, "whiten");
    whiten_in_place(patch.pixels.data(), patch.pixels.dim(0), patch.pixels.dim(1) * patch.pixels.dim(2));
    return patch;
}

std::string Augmentation::tag() const {
    switch (kind) {
        case Transform::none: return "none";
        case Transform::hflip: return "hflip";
        case Transform::vflip: return "vflip";
        case Transform::rot90: return "rot90";
        case Transform::rot180: return "rot180";
        case Transform::rot270: return "rot270";
        case Transform::jitter:
            return "jit-c" + std::to_string(std::lround(contrast * 1000.0)) + "-b" +
                   std::to_string(std::lround(brightness));
    }
    return "none";
}

Augmentation sample_augmentation(std::uint64_t seed, bool allow_identity) {
    Rng rng(mix_seed(seed, 0xa0));
    Augmentation a;
    a.kind = allow_identity ? static_cast<Transform>(uniform_index(rng, 7))
                            : static_cast<Transform>(1 + uniform_index(rng, 6));
    if (a.kind == Transform::jitter) {
        a.contrast = static_cast<double>(800 + uniform_index(rng, 401)) / 1000.0;
        a.brightness = static_cast<double>(uniform_index(rng, 41)) - 20.0;
    }
    return a;
}

PatchRecord apply_augmentation(PatchRecord patch, const Augmentation& aug) {
    require_rank(patch.pixels.shape(), 3, "augment");
    const std::size_t ch = patch.pixels.dim(0), n = patch.pixels.dim(1);
    if (patch.pixels.dim(2) != n) throw ShapeError("augment: patch must be square, got " + shape_str(patch.pixels.shape()));
    patch.augmentation_tag = aug.tag();
    if (aug.kind == Transform::none) return patch;
    const Tensor<float>& in = patch.pixels;
    Tensor<float> out(in.shape());
    const std::size_t plane = n * n;
    for (std::size_t c = 0; c < ch; ++c) {
        const float* s = in.data() + c * plane;
        float* d = out.data() + c * plane;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                float v = 0.0f;
                switch (aug.kind) {
                    case Transform::hflip: v = s[i * n + (n - 1 - j)]; break;
                    case Transform::vflip: v = s[(n - 1 - i) * n + j]; break;
                    // Counter-clockwise quarter turns.
                    case Transform::rot90: v = s[j * n + (n - 1 - i)]; break;
                    case Transform::rot180: v = s[(n - 1 - i) * n + (n - 1 - j)]; break;
                    case Transform::rot270: v = s[(n - 1 - j) * n + i]; break;
                    case Transform::jitter: {
                        const double x = (s[i * n + j] - 127.5) * aug.contrast + 127.5 + aug.brightness;
                        v = static_cast<float>(std::round(std::clamp(x, 0.0, 255.0)));
                        break;
                    }
                    case Transform::none: break;
                }
                d[i * n + j] = v;
            }
        }
    }
    patch.pixels = std::move(out);
    return patch;
}

PatchRecord augment(const PatchRecord& patch, std::uint64_t seed, bool allow_identity) {
    return apply_augmentation(patch, sample_augmentation(seed, allow_identity));
}

namespace {

std::size_t group_key(StoneClass c, View v) {
    return static_cast<std::size_t>(c) * kViewCount + static_cast<std::size_t>(v);
}

// Top-up copies for one deficit group. Sources are visited in a seeded order
// so copies spread over images; each source cycles through the six
// non-identity transforms before falling back to fresh jitter draws, and no
// source receives the same tag twice.
std::vector<PatchRecord> top_up(const std::vector<PatchRecord>& originals, std::size_t deficit, std::uint64_t seed) {
    const std::size_t n = originals.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(seed, 1));
    shuffle(order.begin(), order.end(), rng);

    std::vector<std::set<std::string>> used(n);
    std::vector<PatchRecord> out;
    out.reserve(deficit);
    for (std::size_t j = 0; j < deficit; ++j) {
        const std::size_t src = order[j % n];
        const std::size_t round = j / n;
        const std::uint64_t src_seed = mix_seed(seed, 1000 + src);
        Augmentation aug;
        if (round < 6) {
            std::array<Transform, 6> kinds = {Transform::hflip, Transform::vflip, Transform::rot90,
                                              Transform::rot180, Transform::rot270, Transform::jitter};
            Rng kr(src_seed);
            shuffle(kinds.begin(), kinds.end(), kr);
            aug.kind = kinds[round];
        } else {
            aug.kind = Transform::jitter;
        }
        if (aug.kind == Transform::jitter) {
            for (std::uint64_t attempt = 0;; ++attempt) {
                Rng jr(mix_seed(src_seed, round * 7919 + attempt));
                aug.contrast = static_cast<double>(800 + uniform_index(jr, 401)) / 1000.0;
                aug.brightness = static_cast<double>(uniform_index(jr, 41)) - 20.0;
                if (!used[src].count(aug.tag())) break;
            }
        }
        used[src].insert(aug.tag());
        out.push_back(apply_augmentation(originals[src], aug));
    }
    return out;
}

}  // namespace

std::vector<PatchRecord> balance(std::vector<PatchRecord> patches, std::size_t budget, std::uint64_t seed) {
    if (budget == 0) throw ConfigError("patch budget must be positive");
    std::array<std::vector<PatchRecord>, kClassCount * kViewCount> groups;
    std::array<bool, kViewCount> view_present{};
    for (auto& p : patches) {
        view_present[static_cast<std::size_t>(p.view)] = true;
        groups[group_key(p.stone_class, p.view)].push_back(std::move(p));
    }
    std::vector<PatchRecord> out;
    out.reserve(budget * kClassCount * kViewCount);
    for (StoneClass c : kAllClasses) {
        for (View v : kAllViews) {
            if (!view_present[static_cast<std::size_t>(v)]) continue;
            auto& group = groups[group_key(c, v)];
            if (group.empty()) {
                throw DataError("no source patches for class " + std::string(to_string(c)) + ", view " +
                                std::string(to_string(v)));
            }
            for (auto& p : balance_group(std::move(group), budget, seed)) out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<PatchRecord> balance_group(std::vector<PatchRecord> group, std::size_t budget, std::uint64_t seed) {
    if (budget == 0) throw ConfigError("patch budget must be positive");
    if (group.empty()) throw DataError("cannot balance an empty patch group");
    const std::uint64_t gseed = mix_seed(seed, group_key(group.front().stone_class, group.front().view));
    if (group.size() > budget) {
        std::vector<std::size_t> idx(group.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Rng rng(gseed);
        shuffle(idx.begin(), idx.end(), rng);
        idx.resize(budget);
        std::sort(idx.begin(), idx.end());
        std::vector<PatchRecord> out;
        out.reserve(budget);
        for (std::size_t i : idx) out.push_back(std::move(group[i]));
        return out;
    }
    auto extra = group.size() < budget ? top_up(group, budget - group.size(), gseed) : std::vector<PatchRecord>{};
    for (auto& p : extra) group.push_back(std::move(p));
    return group;
}

std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> split(const DatasetManifest& manifest,
                                                                    double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie strictly between 0 and 1");
    }
    std::array<std::vector<std::size_t>, kClassCount * kViewCount> strata;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        strata[group_key(r.stone_class, r.view)].push_back(i);
    }
    std::vector<Split> assigned(manifest.records.size(), Split::test);
    for (std::size_t g = 0; g < strata.size(); ++g) {
        auto& idx = strata[g];
        if (idx.empty()) continue;
        if (idx.size() < 2) {
            throw DataError("class " + std::string(to_string(static_cast<StoneClass>(g / kViewCount))) + ", view " +
                            std::string(to_string(static_cast<View>(g % kViewCount))) +
                            " has a single image; both splits need at least one");
        }
        Rng rng(mix_seed(seed, g));
        shuffle(idx.begin(), idx.end(), rng);
        auto k = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
        k = std::clamp<std::size_t>(k, 1, idx.size() - 1);
        for (std::size_t i = 0; i < k; ++i) assigned[idx[i]] = Split::train;
    }
    std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> out;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        ImageRecord r = manifest.records[i];
        r.split = assigned[i];
        (r.split == Split::train ? out.first : out.second).push_back(std::move(r));
    }
    return out;
}

}  // namespace stonefuse::dataset
