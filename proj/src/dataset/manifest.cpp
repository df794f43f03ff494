#include <fstream>
#include <set>

#include <json.hpp>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/core/io.hpp"
#include "stonefuse/dataset/types.hpp"

namespace stonefuse::dataset {

namespace {

constexpr std::array<std::string_view, kClassCount> kClassNames = {"WW", "WD", "AU", "STR", "BRU", "CYS"};

}  // namespace

std::string_view to_string(StoneClass c) { return kClassNames[static_cast<std::size_t>(c)]; }

std::string_view to_string(View v) { return v == View::surface ? "surface" : "section"; }

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        default: return "unassigned";
    }
}

StoneClass class_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kClassNames.size(); ++i) {
        if (kClassNames[i] == s) return static_cast<StoneClass>(i);
    }
    throw DataError("unknown stone class '" + std::string(s) + "' (expected WW, WD, AU, STR, BRU or CYS)");
}

View view_from_string(std::string_view s) {
    if (s == "surface") return View::surface;
    if (s == "section") return View::section;
    throw DataError("unknown view '" + std::string(s) + "' (expected surface or section)");
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    if (s == "unassigned") return Split::unassigned;
    throw DataError("unknown split '" + std::string(s) + "'");
}

StoneClass class_from_label(int label) {
    if (label < 0 || label >= static_cast<int>(kClassCount)) {
        throw DataError("class label " + std::to_string(label) + " out of range");
    }
    return static_cast<StoneClass>(label);
}

GroupCounts DatasetManifest::counts() const {
    GroupCounts c{};
    for (const auto& r : records) ++c[static_cast<std::size_t>(r.stone_class)][static_cast<std::size_t>(r.view)];
    return c;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    const std::filesystem::path base = path.parent_path();
    DatasetManifest m;
    std::set<std::filesystem::path> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(where + ": invalid JSON (" + e.what() + ")");
        }
        try {
            ImageRecord r;
            std::filesystem::path p = j.at("image_path").get<std::string>();
            r.image_path = p.is_absolute() ? p : base / p;
            r.stone_class = class_from_string(j.at("class").get<std::string>());
            r.view = view_from_string(j.at("view").get<std::string>());
            r.stone_id = j.at("stone_id").get<std::string>();
            if (j.contains("split")) r.split = split_from_string(j["split"].get<std::string>());
            if (!seen.insert(r.image_path.lexically_normal()).second) {
                throw DataError("duplicate image_path " + p.string());
            }
            m.records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    const std::filesystem::path base = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
    std::string out;
    for (const auto& r : manifest.records) {
        std::filesystem::path p = std::filesystem::absolute(r.image_path).lexically_normal();
        const auto rel = p.lexically_relative(std::filesystem::absolute(base).lexically_normal());
        if (!rel.empty() && *rel.begin() != "..") p = rel;
        nlohmann::json j;
        j["image_path"] = p.generic_string();
        j["class"] = to_string(r.stone_class);
        j["view"] = to_string(r.view);
        j["stone_id"] = r.stone_id;
        if (r.split != Split::unassigned) j["split"] = to_string(r.split);
        out += j.dump();
        out += '\n';
    }
    atomic_write(path, out);
}

}  // namespace stonefuse::dataset
