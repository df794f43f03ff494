#include <doctest.h>

#include <cmath>

#include "stonefuse/attention/cbam.hpp"
#include "stonefuse/backbone/model.hpp"
#include "stonefuse/core/errors.hpp"
#include "stonefuse/training/gradcheck.hpp"
#include "support.hpp"

using namespace stonefuse;
using attention::CbamBlock;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Channels [1 3] and [0 2] over a 1x2 map.
Tensor<double> two_by_two() { return Tensor<double>(Shape{2, 1, 2}, std::vector<double>{1, 3, 0, 2}); }

}  // namespace

TEST_SUITE("attention") {

TEST_CASE("channel attention on a hand-worked example") {
    attention::ChannelAttentionParams<double> p;
    p.reduce = Tensor<double>(Shape{1, 2}, std::vector<double>{1, 1});
    p.expand = Tensor<double>(Shape{2, 1}, std::vector<double>{1, -1});
    p.bias = Tensor<double>(Shape{2}, std::vector<double>{0.5, 0});
    p.reduction = 2;
    // avg = (2, 1), max = (3, 2); hidden 3 and 5; branch sum (8, -8).
    const auto g = attention::channel_attention(two_by_two(), p);
    REQUIRE(g.shape() == Shape{2});
    CHECK(g[0] == doctest::Approx(sigmoid(8.5)));
    CHECK(g[1] == doctest::Approx(sigmoid(-8.0)));
}

TEST_CASE("spatial attention on a hand-worked example") {
    attention::SpatialAttentionParams<double> p;
    p.kernel = Tensor<double>(Shape{1, 2, 1, 1}, std::vector<double>{2, 1});
    p.bias = -1;
    // mean = (0.5, 2.5), max = (1, 3) per pixel.
    const auto g = attention::spatial_attention(two_by_two(), p);
    REQUIRE(g.shape() == Shape{1, 1, 2});
    CHECK(g[0] == doctest::Approx(sigmoid(2 * 0.5 + 1 - 1)));
    CHECK(g[1] == doctest::Approx(sigmoid(2 * 2.5 + 3 - 1)));
}

TEST_CASE("spatial attention degenerate inputs") {
    attention::SpatialAttentionParams<double> p;
    p.kernel = Tensor<double>(Shape{1, 2, 3, 3});
    p.bias = 0;
    Rng rng(2);
    const auto half = attention::spatial_attention(test::randn<double>({4, 5, 5}, rng), p);
    for (double v : half.vec()) CHECK(v == 0.5);

    // Constant field: interior pixels see the full kernel.
    for (std::size_t i = 0; i < 18; ++i) p.kernel[i] = 0.05 * double(i) - 0.3;
    p.bias = 0.2;
    Tensor<double> f(Shape{2, 5, 5});
    for (std::size_t i = 0; i < 25; ++i) f[i] = 1.0, f[25 + i] = 3.0;  // mean 2, max 3
    double ksum_mean = 0, ksum_max = 0;
    for (std::size_t i = 0; i < 9; ++i) ksum_mean += p.kernel[i], ksum_max += p.kernel[9 + i];
    const auto g = attention::spatial_attention(f, p);
    for (std::size_t y = 1; y < 4; ++y)
        for (std::size_t x = 1; x < 4; ++x) CHECK(g[y * 5 + x] == doctest::Approx(sigmoid(0.2 + 2 * ksum_mean + 3 * ksum_max)));
}

TEST_CASE("saturated gates pass features through") {
    Rng rng(8);
    CbamBlock<double> blk({.channels = 16, .reduction = 4, .spatial_kernel = 7}, rng);
    auto cp = blk.channel_params();
    cp.bias.fill(20.0);
    blk.set_channel_params(cp);
    auto sp = blk.spatial_params();
    sp.bias = 20.0;
    blk.set_spatial_params(sp);
    const auto x = test::randn<double>({16, 9, 9}, rng);
    const auto y = attention::cbam_forward(x, blk);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-6);
}

TEST_CASE("cbam forward is the product of both gates") {
    Rng rng(3);
    CbamBlock<double> blk({.channels = 8, .reduction = 4, .spatial_kernel = 3}, rng);
    const auto x = test::randn<double>({2, 8, 5, 6}, rng);
    const auto y = blk.forward(x, nn::Mode::eval);
    const auto& cg = blk.last_channel_gate();
    const auto& sg = blk.last_spatial_gate();
    REQUIRE(cg.shape() == Shape{2, 8});
    REQUIRE(sg.shape() == Shape{2, 1, 5, 6});
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 8; ++c)
            for (std::size_t i = 0; i < 30; ++i) {
                const std::size_t at = (b * 8 + c) * 30 + i;
                CHECK(y[at] == doctest::Approx(x[at] * cg[b * 8 + c] * sg[b * 30 + i]));
            }
    // Standalone gate functions agree with the block.
    Tensor<double> x0(Shape{8, 5, 6}, std::vector<double>(x.data(), x.data() + 240));
    const auto g0 = attention::channel_attention(x0, blk.channel_params());
    for (std::size_t c = 0; c < 8; ++c) CHECK(g0[c] == doctest::Approx(cg[c]));
}

TEST_CASE("cbam rejects bad configurations") {
    Rng rng(4);
    CHECK_THROWS((CbamBlock<float>({.channels = 10, .reduction = 4, .spatial_kernel = 3}, rng)));
    CHECK_THROWS((CbamBlock<float>({.channels = 8, .reduction = 4, .spatial_kernel = 4}, rng)));
    CbamBlock<float> blk({.channels = 8, .reduction = 4, .spatial_kernel = 3}, rng);
    CHECK_THROWS_AS(blk.forward(Tensor<float>(Shape{1, 4, 3, 3}), nn::Mode::eval), ShapeError);
}

TEST_CASE("gradient check passes on cbam and flags a corrupted backward rule") {
    Rng rng(5);
    CbamBlock<double> blk({.channels = 16, .reduction = 4, .spatial_kernel = 3}, rng);
    const auto x = test::randn<double>({2, 16, 6, 6}, rng);
    training::GradCheckOptions opts;
    opts.input_samples = 30;
    const auto good = training::verify_gradients(blk, x, 1e-4, opts);
    CHECK_MESSAGE(good.passed, good.summary());

    blk.set_backward_fault(attention::BackwardFault::spatial_gate);
    const auto bad = training::verify_gradients(blk, x, 1e-4, opts);
    CHECK_FALSE(bad.passed);
    CHECK(bad.max_rel_error > 1e-2);
    CHECK(bad.summary().find("FAIL") != std::string::npos);
}

TEST_CASE("gradient check on the classifier head") {
    Rng rng(6);
    backbone::HeadSpec spec;
    spec.layer_widths = {12, 8, 6};
    spec.dropout_probability = 0.0;  // a fresh mask per forward would defeat finite differences
    auto head = backbone::make_head<double>(spec, 10, rng);
    // Biases ahead of batch norm have an exactly zero gradient; finite
    // differences return ~1e-11 there, which the 1e-6 floor turns into ~1e-5.
    const auto r = training::verify_gradients(*head, test::randn<double>({5, 10}, rng), 1e-4);
    CHECK_MESSAGE(r.passed, r.summary());
}

TEST_CASE("backbone structure") {
    Rng rng(7);
    for (bool att : {true, false}) {
        backbone::Extractor<float> tiny(backbone::BackboneSpec::tiny(att, 64), rng);
        CHECK(backbone::count_attention_blocks<float>(tiny) == (att ? 4u : 0u));
        const auto f = tiny.forward(test::randn<float>({2, 3, 64, 64}, rng), nn::Mode::eval);
        CHECK(f.shape() == Shape{2, 64});
    }
    CHECK(backbone::BackboneSpec::resnet50().feature_dim() == 2048);
    CHECK_THROWS_AS(backbone::BackboneSpec::tiny(true, 40).validate(), ConfigError);

    auto a = backbone::build_model<float>(backbone::BackboneSpec::tiny(true, 32), {}, 1);
    auto b = backbone::build_model<float>(backbone::BackboneSpec::tiny(true, 32), {}, 1);
    CHECK(backbone::parameter_checksum<float>(a->extractor()) == backbone::parameter_checksum<float>(b->extractor()));
    auto c = backbone::build_model<float>(backbone::BackboneSpec::tiny(true, 32), {}, 2);
    CHECK(backbone::parameter_checksum<float>(a->extractor()) != backbone::parameter_checksum<float>(c->extractor()));
    backbone::copy_state<float>(a->extractor(), c->extractor());
    CHECK(backbone::parameter_checksum<float>(a->extractor()) == backbone::parameter_checksum<float>(c->extractor()));
}

}
