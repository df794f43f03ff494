#include <doctest.h>

#include <map>
#include <set>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/fusion/fusion.hpp"
#include "support.hpp"

using namespace stonefuse;
using namespace stonefuse::fusion;
using dataset::View;

namespace {

dataset::PatchSet uneven_set() {
    // class c: c+2 surface patches and 4 section patches, interleaved.
    dataset::PatchSet s;
    s.patch_size = 1;
    for (int c = 0; c < 6; ++c) {
        for (int k = 0; k < std::max(c + 2, 4); ++k) {
            if (k < c + 2) s.labels.push_back(c), s.views.push_back(View::surface);
            if (k < 4) s.labels.push_back(c), s.views.push_back(View::section);
        }
    }
    s.pixels.assign(s.size() * s.sample_size(), 0.0f);
    s.names.assign(s.size(), "x");
    return s;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("fuse on vectors") {
    const std::vector<float> a{1, -2, 3}, b{0, 5, 3};
    CHECK(fuse<float>(a, b, {FusionKind::max_pool}) == std::vector<float>{1, 5, 3});
    CHECK(fuse<float>(a, b, {FusionKind::concatenation}) == std::vector<float>{1, -2, 3, 0, 5, 3});
    CHECK(fuse<float>(b, a, {FusionKind::concatenation}) == std::vector<float>{0, 5, 3, 1, -2, 3});
    CHECK_THROWS_AS(fuse<float>(a, std::vector<float>{1, 2}, {FusionKind::max_pool}), ShapeError);
    CHECK(FusionStrategy{FusionKind::max_pool}.fused_width(64) == 64);
    CHECK(FusionStrategy{FusionKind::concatenation}.fused_width(64) == 128);
}

TEST_CASE("fusion names") {
    CHECK(to_string(FusionKind::max_pool) == "max");
    CHECK(to_string(FusionKind::concatenation) == "concat");
    CHECK(fusion_from_string("concatenation") == FusionKind::concatenation);
    CHECK(fusion_from_string("max_pool") == FusionKind::max_pool);
    CHECK_THROWS_AS(fusion_from_string("sum"), ConfigError);
}

TEST_CASE("pair_views matches within classes and covers every patch") {
    const auto set = uneven_set();
    const auto pairs = pair_views(set, 11);
    std::map<int, std::size_t> per_class;
    std::map<std::size_t, std::size_t> uses;
    for (const auto& p : pairs) {
        per_class[p.label]++;
        CHECK(set.views[p.surface] == View::surface);
        CHECK(set.views[p.section] == View::section);
        CHECK(set.labels[p.surface] == p.label);
        CHECK(set.labels[p.section] == p.label);
        uses[p.surface]++;
        uses[p.section]++;
    }
    for (int c = 0; c < 6; ++c) CHECK(per_class[c] == std::size_t(std::max(c + 2, 4)));
    CHECK(uses.size() == set.size());  // every patch used at least once
    // Class 2 has 4 and 4: a perfect matching, each patch exactly once.
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.labels[i] == 2) CHECK(uses[i] == 1);
    }
    // Grouped by class.
    for (std::size_t i = 1; i < pairs.size(); ++i) CHECK(pairs[i].label >= pairs[i - 1].label);
}

TEST_CASE("pair_views is seeded") {
    const auto set = uneven_set();
    const auto a = pair_views(set, 1), b = pair_views(set, 1), c = pair_views(set, 2);
    auto same = [](const std::vector<ViewPair>& x, const std::vector<ViewPair>& y) {
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i].surface != y[i].surface || x[i].section != y[i].section) return false;
        }
        return true;
    };
    CHECK(same(a, b));
    CHECK_FALSE(same(a, c));
}

TEST_CASE("pair_views rejects a class seen in one view only") {
    auto set = uneven_set();
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.labels[i] == 3) set.views[i] = View::surface;
    }
    CHECK_THROWS_AS(pair_views(set, 1), DataError);
}

TEST_CASE("multi-view model") {
    auto base = backbone::build_model<float>(backbone::BackboneSpec::tiny(true, 32), {}, 3);
    CHECK_THROWS_AS(build_multiview(*base, {FusionKind::max_pool}, {}, 1), ConfigError);
    base->set_trained(true);
    backbone::HeadSpec wrong;
    wrong.input_width = 100;
    CHECK_THROWS_AS(build_multiview(*base, {FusionKind::concatenation}, wrong, 1), ConfigError);

    auto mv = build_multiview(*base, {FusionKind::concatenation}, {}, 1);
    CHECK(mv->fused_width() == 128);
    const auto crc = backbone::parameter_checksum<float>(base->extractor());
    CHECK(backbone::parameter_checksum<float>(mv->surface_extractor()) == crc);
    CHECK(backbone::parameter_checksum<float>(mv->section_extractor()) == crc);
    for (auto& p : mv->parameters()) {
        if (p.name.rfind("head", 0) != 0) CHECK_FALSE(p.param->trainable);
    }
    CHECK(mv->head_parameters().size() < mv->parameters().size());

    Rng rng(4);
    const auto s = test::randn<float>({3, 3, 32, 32}, rng), t = test::randn<float>({3, 3, 32, 32}, rng);
    const auto fused = mv->features(s, t);
    const auto fs = base->forward_features(s, nn::Mode::eval), ft = base->forward_features(t, nn::Mode::eval);
    CHECK(fused == fuse(fs, ft, {FusionKind::concatenation}));
    CHECK(forward_multiview(*mv, s, t).shape() == Shape{3, 6});
    CHECK_THROWS_AS(mv->forward_fused(Tensor<float>(Shape{3, 64}), nn::Mode::eval), ShapeError);
    CHECK_THROWS_AS(forward_multiview(*mv, s, test::randn<float>({2, 3, 32, 32}, rng)), ShapeError);
}

}
