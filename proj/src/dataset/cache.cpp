#include "stonefuse/dataset/cache.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/core/io.hpp"
#include "stonefuse/dataset/image.hpp"
#include "stonefuse/dataset/patches.hpp"

namespace stonefuse::dataset {
namespace {

Image to_image(const Tensor<float>& chw) {
    const std::size_t n = chw.dim(1), plane = n * n;
    Image img(n, n);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                const float v = std::clamp(chw[c * plane + y * n + x], 0.0f, 255.0f);
                img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }
    return img;
}

std::string patch_name(const PatchRecord& p) {
    std::string name = p.source_id + "_" + std::to_string(p.x) + "_" + std::to_string(p.y);
    if (p.augmentation_tag != "none") name += "_aug-" + p.augmentation_tag;
    return name + ".png";
}

}  // namespace

PatchIndex prepare_patches(const DatasetManifest& manifest, const PrepareConfig& cfg,
                           const std::filesystem::path& out_dir) {
    if (manifest.records.empty()) throw DataError("manifest has no images");
    std::set<std::string> ids;
    for (const auto& r : manifest.records) {
        if (!ids.insert(r.source_id()).second) {
            throw DataError("two images share the file stem '" + r.source_id() + "'; patch names would collide");
        }
    }

    const auto patches_dir = out_dir / "patches";
    if (std::filesystem::exists(patches_dir)) {
        if (!std::filesystem::exists(patches_dir / "index.jsonl") && !std::filesystem::is_empty(patches_dir)) {
            throw ConfigError(patches_dir.string() + " exists and is not a patch cache; refusing to overwrite");
        }
        std::filesystem::remove_all(patches_dir);
    }
    std::filesystem::create_directories(patches_dir);

    // Same coverage rule as balance(): every class in each view that appears.
    const GroupCounts counts = manifest.counts();
    for (View view : kAllViews) {
        bool any = false;
        for (StoneClass cls : kAllClasses) any |= counts[static_cast<std::size_t>(cls)][static_cast<std::size_t>(view)] > 0;
        if (!any) continue;
        for (StoneClass cls : kAllClasses) {
            if (counts[static_cast<std::size_t>(cls)][static_cast<std::size_t>(view)] == 0) {
                throw DataError("no " + std::string(to_string(view)) + " images for class " + std::string(to_string(cls)));
            }
        }
    }
    auto [train, test] = split(manifest, cfg.train_fraction, cfg.seed);
    DatasetManifest assigned = manifest;
    assigned.records = train;
    assigned.records.insert(assigned.records.end(), test.begin(), test.end());
    assigned.patch_size = cfg.patch_size;
    assigned.max_overlap = cfg.max_overlap;
    assigned.per_class_patch_budget = cfg.budget;

    std::map<std::string, std::string> stone_of;
    for (const auto& r : assigned.records) stone_of[r.source_id()] = r.stone_id;

    PatchIndex index;
    index.root = patches_dir;
    index.patch_size = cfg.patch_size;
    std::string lines;
    for (StoneClass cls : kAllClasses) {
        for (View view : kAllViews) {
            std::vector<PatchRecord> group;
            for (const auto& r : assigned.records) {
                if (r.stone_class != cls || r.view != view) continue;
                auto patches = extract_patches(read_png(r.image_path), cfg.patch_size, cfg.max_overlap);
                for (auto& p : patches) {
                    p.source_id = r.source_id();
                    p.stone_class = cls;
                    p.view = view;
                    p.split = r.split;
                    group.push_back(std::move(p));
                }
            }
            if (group.empty()) continue;
            group = balance_group(std::move(group), cfg.budget, cfg.seed);
            for (const auto& p : group) {
                PatchIndexEntry e;
                e.path = std::filesystem::path(std::string(to_string(p.split))) / std::string(to_string(cls)) /
                         std::string(to_string(view)) / patch_name(p);
                e.stone_class = cls;
                e.view = view;
                e.split = p.split;
                e.source_id = p.source_id;
                e.stone_id = stone_of[p.source_id];
                e.x = p.x;
                e.y = p.y;
                e.augmentation_tag = p.augmentation_tag;
                write_png(patches_dir / e.path, to_image(p.pixels));
                nlohmann::json j{{"path", e.path.generic_string()},
                                 {"class", to_string(cls)},
                                 {"view", to_string(view)},
                                 {"split", to_string(e.split)},
                                 {"source_id", e.source_id},
                                 {"stone_id", e.stone_id},
                                 {"x", e.x},
                                 {"y", e.y},
                                 {"augmentation", e.augmentation_tag},
                                 {"patch_size", cfg.patch_size}};
                lines += j.dump();
                lines += '\n';
                index.entries.push_back(std::move(e));
            }
        }
    }
    atomic_write(patches_dir / "index.jsonl", lines);
    save_manifest(assigned, out_dir / "manifest.jsonl");
    return index;
}

PatchIndex load_patch_index(const std::filesystem::path& index_path) {
    std::ifstream in(index_path);
    if (!in) throw DataError("cannot open patch index " + index_path.string());
    PatchIndex index;
    index.root = index_path.parent_path();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            PatchIndexEntry e;
            e.path = j.at("path").get<std::string>();
            e.stone_class = class_from_string(j.at("class").get<std::string>());
            e.view = view_from_string(j.at("view").get<std::string>());
            e.split = split_from_string(j.at("split").get<std::string>());
            e.source_id = j.at("source_id").get<std::string>();
            e.stone_id = j.value("stone_id", std::string{});
            e.x = j.at("x").get<std::size_t>();
            e.y = j.at("y").get<std::size_t>();
            e.augmentation_tag = j.value("augmentation", std::string("none"));
            const auto size = j.at("patch_size").get<std::size_t>();
            if (index.patch_size != 0 && size != index.patch_size) throw DataError("mixed patch sizes in index");
            index.patch_size = size;
            index.entries.push_back(std::move(e));
        } catch (const std::exception& e) {
            throw DataError(index_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return index;
}

Tensor<float> PatchSet::batch(std::span<const std::size_t> indices) const {
    Tensor<float> out(Shape{indices.size(), 3, patch_size, patch_size});
    const std::size_t n = sample_size();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        if (indices[b] >= size()) throw ShapeError("patch set index out of range");
        std::memcpy(out.data() + b * n, sample(indices[b]), n * sizeof(float));
    }
    return out;
}

PatchSet PatchSet::filter(View view) const {
    PatchSet out;
    out.patch_size = patch_size;
    for (std::size_t i = 0; i < size(); ++i) {
        if (views[i] != view) continue;
        out.pixels.insert(out.pixels.end(), sample(i), sample(i) + sample_size());
        out.labels.push_back(labels[i]);
        out.views.push_back(views[i]);
        out.names.push_back(names[i]);
    }
    return out;
}

PatchSet load_patches(const PatchIndex& index, Split split, std::optional<View> view) {
    PatchSet set;
    set.patch_size = index.patch_size;
    const std::size_t p = index.patch_size, plane = p * p;
    std::size_t count = 0;
    for (const auto& e : index.entries) count += e.split == split && (!view || e.view == *view);
    set.pixels.resize(count * 3 * plane);
    std::size_t i = 0;
    for (const auto& e : index.entries) {
        if (e.split != split || (view && e.view != *view)) continue;
        const Image img = read_png(index.root / e.path);
        if (img.width != p || img.height != p) {
            throw DataError("patch " + e.path.string() + " is " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + ", index says " + std::to_string(p));
        }
        float* dst = set.pixels.data() + i * 3 * plane;
        for (std::size_t y = 0; y < p; ++y) {
            for (std::size_t x = 0; x < p; ++x) {
                for (std::size_t c = 0; c < 3; ++c) dst[c * plane + y * p + x] = img.at(x, y, c);
            }
        }
        whiten_in_place(dst, 3, plane);
        set.labels.push_back(label_of(e.stone_class));
        set.views.push_back(e.view);
        set.names.push_back(e.path.generic_string());
        ++i;
    }
    return set;
}

}  // namespace stonefuse::dataset
