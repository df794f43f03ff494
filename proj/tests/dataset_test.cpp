#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/dataset/cache.hpp"
#include "stonefuse/dataset/image.hpp"
#include "stonefuse/dataset/patches.hpp"
#include "stonefuse/dataset/synth.hpp"
#include "support.hpp"

using namespace stonefuse;
using namespace stonefuse::dataset;

namespace {

PatchRecord ramp_patch(std::size_t n, StoneClass c = StoneClass::WW, View v = View::surface) {
    PatchRecord p;
    p.pixels = Tensor<float>(Shape{3, n, n});
    for (std::size_t i = 0; i < p.pixels.size(); ++i) p.pixels[i] = static_cast<float>((i * 37) % 251);
    p.stone_class = c;
    p.view = v;
    return p;
}

// Pearson correlation of two channels of an interleaved image.
double channel_corr(const Image& img, std::size_t a, std::size_t b) {
    const std::size_t n = img.width * img.height;
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) ma += img.rgb[i * 3 + a], mb += img.rgb[i * 3 + b];
    ma /= n, mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = img.rgb[i * 3 + a] - ma, y = img.rgb[i * 3 + b] - mb;
        sab += x * y, saa += x * x, sbb += y * y;
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("tile offsets") {
    // stride 44: 0..264 fits 328 exactly.
    CHECK(tile_offsets(328, 64, 20) == std::vector<std::size_t>{0, 44, 88, 132, 176, 220, 264});
    // The last grid start (220) snaps flush to 300 - 64.
    CHECK(tile_offsets(300, 64, 20) == std::vector<std::size_t>{0, 44, 88, 132, 176, 236});
    CHECK(tile_offsets(64, 64, 20) == std::vector<std::size_t>{0});
    CHECK(tile_offsets(100, 64, 20) == std::vector<std::size_t>{0});
    CHECK(tile_offsets(512, 256, 20) == std::vector<std::size_t>{0, 256});
    CHECK(tile_offsets(492, 256, 20) == std::vector<std::size_t>{0, 236});  // overlap exactly 20
    CHECK(tile_offsets(256, 256, 20) == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(tile_offsets(63, 64, 20), DataError);
    CHECK_THROWS_AS(tile_offsets(300, 64, 64), ConfigError);
}

TEST_CASE("neighbouring tiles never overlap by more than the bound") {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        const std::size_t patch = 16 + uniform_index(rng, 300);
        const std::size_t overlap = uniform_index(rng, patch);
        const std::size_t length = patch + uniform_index(rng, 2000);
        const auto s = tile_offsets(length, patch, overlap);
        REQUIRE(!s.empty());
        CHECK(s.front() == 0);
        CHECK(s.back() + patch <= length);
        for (std::size_t i = 1; i < s.size(); ++i) {
            REQUIRE(s[i] > s[i - 1]);
            CHECK(s[i - 1] + patch - std::min(s[i - 1] + patch, s[i]) <= overlap);
        }
        if (s.size() >= 2) CHECK(s.back() + patch == length);
    }
}

TEST_CASE("extract_patches copies pixels in CHW order") {
    Image img(100, 70);
    for (std::size_t y = 0; y < 70; ++y)
        for (std::size_t x = 0; x < 100; ++x)
            for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>((x + 2 * y + 50 * c) % 256);
    const auto ps = extract_patches(img, 32, 8);
    CHECK(ps.size() == tile_offsets(100, 32, 8).size() * tile_offsets(70, 32, 8).size());
    for (const auto& p : ps) {
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(p.pixels[c * 1024 + 5 * 32 + 7] == float(img.at(p.x + 7, p.y + 5, c)));
        }
    }
}

TEST_CASE("whitening standardises each channel") {
    auto p = whiten(ramp_patch(16));
    for (std::size_t c = 0; c < 3; ++c) {
        double m = 0, s = 0;
        for (std::size_t i = 0; i < 256; ++i) m += p.pixels[c * 256 + i];
        m /= 256;
        for (std::size_t i = 0; i < 256; ++i) s += (p.pixels[c * 256 + i] - m) * (p.pixels[c * 256 + i] - m);
        CHECK(m == doctest::Approx(0.0).epsilon(1e-5).scale(1));
        CHECK(std::sqrt(s / 256) == doctest::Approx(1.0).epsilon(1e-5));
    }
    PatchRecord flat;
    flat.pixels = Tensor<float>(Shape{3, 4, 4}, 9.0f);
    const auto flat_white = whiten(flat);
    for (float v : flat_white.pixels.vec()) CHECK(v == 0.0f);
}

TEST_CASE("geometric augmentations compose to the identity") {
    const auto p = ramp_patch(9);
    auto apply = [](PatchRecord q, Transform t) { return apply_augmentation(std::move(q), {t}); };
    CHECK(apply(apply(p, Transform::hflip), Transform::hflip).pixels == p.pixels);
    CHECK(apply(apply(p, Transform::vflip), Transform::vflip).pixels == p.pixels);
    CHECK(apply(apply(p, Transform::rot90), Transform::rot270).pixels == p.pixels);
    CHECK(apply(apply(p, Transform::rot90), Transform::rot90).pixels == apply(p, Transform::rot180).pixels);
    CHECK(apply(apply(p, Transform::hflip), Transform::vflip).pixels == apply(p, Transform::rot180).pixels);
    // Counter-clockwise: the top-right corner moves to the top-left.
    const auto r = apply(p, Transform::rot90);
    CHECK(r.pixels[0] == p.pixels[8]);
    CHECK(apply(p, Transform::rot90).augmentation_tag == "rot90");
}

TEST_CASE("augmentation sampling is seeded and can exclude the identity") {
    for (std::uint64_t s = 0; s < 300; ++s) {
        const auto a = sample_augmentation(s, false);
        CHECK(a.kind != Transform::none);
        CHECK(sample_augmentation(s).tag() == sample_augmentation(s).tag());
        if (a.kind == Transform::jitter) {
            CHECK(a.contrast >= 0.8);
            CHECK(a.contrast <= 1.2);
            CHECK(std::abs(a.brightness) <= 20.0);
        }
    }
    const auto j = apply_augmentation(ramp_patch(4), {Transform::jitter, 1.0, 0.0});
    CHECK(j.pixels == ramp_patch(4).pixels);
}

TEST_CASE("balance_group subsamples surplus and tops up deficit groups") {
    std::vector<PatchRecord> few;
    for (std::size_t i = 0; i < 3; ++i) {
        auto p = ramp_patch(8, StoneClass::AU, View::section);
        p.x = i;
        few.push_back(p);
    }
    const auto up = balance_group(few, 20, 9);
    REQUIRE(up.size() == 20);
    std::set<std::pair<std::size_t, std::string>> seen;
    for (std::size_t i = 0; i < up.size(); ++i) {
        CHECK(up[i].stone_class == StoneClass::AU);
        CHECK(up[i].view == View::section);
        if (i < 3) {
            CHECK(up[i].augmentation_tag == "none");
            CHECK(up[i].x == i);
        } else {
            CHECK(up[i].augmentation_tag != "none");
        }
        CHECK(seen.insert({up[i].x, up[i].augmentation_tag}).second);  // no duplicate copies
    }

    std::vector<PatchRecord> many;
    for (std::size_t i = 0; i < 50; ++i) {
        auto p = ramp_patch(4);
        p.x = i;
        many.push_back(p);
    }
    const auto down = balance_group(many, 12, 9);
    REQUIRE(down.size() == 12);
    for (std::size_t i = 1; i < down.size(); ++i) CHECK(down[i].x > down[i - 1].x);
    for (const auto& p : down) CHECK(p.augmentation_tag == "none");
    CHECK(balance_group(many, 12, 9)[5].x == down[5].x);
}

TEST_CASE("balance equalises every (class, view) group") {
    std::vector<PatchRecord> all;
    for (auto c : kAllClasses) {
        for (auto v : kAllViews) {
            const std::size_t n = 1 + static_cast<std::size_t>(c) * 3 + static_cast<std::size_t>(v);
            for (std::size_t i = 0; i < n; ++i) all.push_back(ramp_patch(4, c, v));
        }
    }
    const auto out = balance(all, 7, 1);
    std::map<std::pair<int, int>, std::size_t> counts;
    for (const auto& p : out) counts[{int(p.stone_class), int(p.view)}]++;
    CHECK(counts.size() == 12);
    for (const auto& [k, n] : counts) CHECK(n == 7);

    std::vector<PatchRecord> missing;
    for (auto c : {StoneClass::WW, StoneClass::WD}) missing.push_back(ramp_patch(4, c));
    CHECK_THROWS_AS(balance(missing, 3, 1), DataError);
}

TEST_CASE("image-level split is stratified and leak-free") {
    DatasetManifest m;
    for (auto c : kAllClasses) {
        for (auto v : kAllViews) {
            for (int k = 0; k < 7; ++k) {
                m.records.push_back({"img/" + std::string(to_string(c)) + std::string(to_string(v)) + std::to_string(k) + ".png",
                                     c, v, "s" + std::to_string(k), Split::unassigned});
            }
        }
    }
    const auto [train, test] = split(m, 0.8, 3);
    CHECK(train.size() + test.size() == m.records.size());
    std::set<std::string> train_paths;
    for (const auto& r : train) train_paths.insert(r.image_path.string());
    for (const auto& r : test) CHECK(train_paths.count(r.image_path.string()) == 0);
    std::map<std::pair<int, int>, std::size_t> per;
    for (const auto& r : train) per[{int(r.stone_class), int(r.view)}]++;
    for (const auto& [k, n] : per) CHECK(n == 6);  // round(0.8 * 7)
    const auto again = split(m, 0.8, 3);
    CHECK(again.first.size() == train.size());
    for (std::size_t i = 0; i < train.size(); ++i) CHECK(again.first[i].image_path == train[i].image_path);
}

TEST_CASE("synthetic views each carry only their own factor") {
    SynthConfig cfg;
    cfg.noise_std = 0.0;
    cfg.image_size = 256;
    CHECK(cfg.surface_level(StoneClass::WW) == cfg.surface_level(StoneClass::WD));
    CHECK(cfg.section_level(StoneClass::WW) == cfg.section_level(StoneClass::AU));
    CHECK(cfg.section_level(StoneClass::WW) != cfg.section_level(StoneClass::WD));

    // Surface: a grey grating whose horizontal frequency is cos(30°) / period.
    for (std::size_t level = 0; level < cfg.surface_factor_levels; ++level) {
        Rng rng(level);
        const Image img = render_surface(cfg, level, 0, rng);
        for (std::size_t i = 0; i < img.width * img.height; ++i) {
            REQUIRE(img.rgb[i * 3] == img.rgb[i * 3 + 1]);
            REQUIRE(img.rgb[i * 3] == img.rgb[i * 3 + 2]);
        }
        const std::size_t n = img.width;
        double best = 0;
        std::size_t best_bin = 0;
        for (std::size_t f = 1; f < n / 2; ++f) {
            double re = 0, im = 0;
            for (std::size_t x = 0; x < n; ++x) {
                const double v = img.at(x, 0, 0) - 128.0;
                re += v * std::cos(2 * M_PI * f * x / n);
                im -= v * std::sin(2 * M_PI * f * x / n);
            }
            if (re * re + im * im > best) best = re * re + im * im, best_bin = f;
        }
        const double expected = n * std::cos(M_PI / 6) / cfg.grating_period(level);
        CAPTURE(level);
        CHECK(std::abs(double(best_bin) - expected) <= 1.0);
    }

    // Section: the channel correlation signs follow the level's chroma direction.
    Rng r0(1), r1(1);
    const Image s0 = render_section(cfg, 0, r0), s1 = render_section(cfg, 1, r1);
    CHECK(channel_corr(s0, 0, 1) > 0.9);
    CHECK(channel_corr(s0, 0, 2) < -0.9);
    CHECK(channel_corr(s1, 0, 1) < -0.9);
    CHECK(channel_corr(s1, 0, 2) > 0.9);
}

TEST_CASE("synth config validation") {
    SynthConfig cfg;
    cfg.surface_factor_levels = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    nlohmann::json j = {{"image_size", 96}, {"bogus", 1}};
    CHECK_THROWS_AS(j.get<SynthConfig>(), ConfigError);
}

TEST_CASE("prepare writes a balanced, split patch cache") {
    test::TempDir dir("prepare");
    nlohmann::json j = {{"images_per_class_per_view", 3}, {"image_size", 64}, {"seed", 4}};
    const auto manifest = synth_generate(j.get<SynthConfig>(), dir.path / "synth");
    CHECK(manifest.records.size() == 36);
    const auto reread = load_manifest(dir.path / "synth" / "manifest.jsonl");
    CHECK(reread.records.size() == 36);
    CHECK(read_png(reread.records[0].image_path).width == 64);

    PrepareConfig cfg;
    cfg.patch_size = 32;
    cfg.budget = 10;
    cfg.seed = 4;
    const auto index = prepare_patches(reread, cfg, dir.path / "data");
    CHECK(index.patch_size == 32);
    std::map<std::pair<int, int>, std::size_t> per;
    std::map<std::string, std::set<Split>> source_splits;
    for (const auto& e : index.entries) {
        per[{int(e.stone_class), int(e.view)}]++;
        source_splits[e.source_id].insert(e.split);
        CHECK(std::filesystem::exists(index.root / e.path));
    }
    CHECK(per.size() == 12);
    for (const auto& [k, n] : per) CHECK(n == 10);
    for (const auto& [id, splits] : source_splits) CHECK(splits.size() == 1);

    const auto loaded = load_patch_index(index.root / "index.jsonl");
    CHECK(loaded.entries.size() == index.entries.size());
    const auto train = load_patches(loaded, Split::train);
    const auto sur = load_patches(loaded, Split::test, View::surface);
    CHECK(train.size() + load_patches(loaded, Split::test).size() == 120);
    for (auto v : sur.views) CHECK(v == View::surface);
    // Whitened at load time.
    double m = 0;
    for (std::size_t i = 0; i < 32 * 32; ++i) m += train.sample(0)[i];
    CHECK(std::abs(m / 1024) < 1e-4);
}

}
