#include <doctest.h>

#include <fstream>

#include "stonefuse/core/archive.hpp"
#include "stonefuse/core/errors.hpp"
#include "stonefuse/training/checkpoint.hpp"
#include "stonefuse/training/config.hpp"
#include "stonefuse/training/trainer.hpp"
#include "support.hpp"

using namespace stonefuse;
using namespace stonefuse::training;
using backbone::BackboneSpec;

namespace {

TrainConfig tiny_config(TrainMode mode) {
    TrainConfig c;
    c.arch = backbone::Architecture::tiny;
    c.mode = mode;
    c.epochs = 2;
    c.runs = 2;
    c.batch_size = 16;
    return c;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("train config JSON and fingerprint") {
    TrainConfig c;
    c.seed = 9;
    c.fusion = fusion::FusionKind::max_pool;
    const auto back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.fingerprint() == c.fingerprint());
    CHECK(c.fingerprint().size() == 8);

    TrainConfig more_runs = c;
    more_runs.runs = 9;
    more_runs.mode = TrainMode::multi_view;
    CHECK(more_runs.fingerprint() == c.fingerprint());
    TrainConfig other = c;
    other.learning_rate = 1e-3;
    CHECK(other.fingerprint() != c.fingerprint());

    CHECK_THROWS_AS(train_config_from_json({{"epochs", 3}, {"learnin_rate", 1}}), ConfigError);
    CHECK(train_config_from_json({{"epochs", 3}}).batch_size == 32);
    TrainConfig bad;
    bad.batch_size = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(c.run_seed(3) == 12);
    CHECK(TrainConfig{}.head_spec().layer_widths == std::vector<std::size_t>{512, 256, 6});
    const auto tiny = tiny_config(TrainMode::single_view_mixed).backbone_spec(64);
    CHECK(tiny.reduction == 4);
    CHECK(tiny.spatial_kernel == 3);
    CHECK(mode_from_string("mv") == TrainMode::multi_view);
    CHECK_THROWS_AS(mode_from_string("both"), ConfigError);
}

TEST_CASE("checkpoint round trip, tampering and architecture checks") {
    test::TempDir dir("ckpt");
    auto model = backbone::build_model<float>(BackboneSpec::tiny(true, 32), {}, 4);
    model->set_trained(true);
    Rng rng(1);
    const auto x = test::randn<float>({3, 3, 32, 32}, rng);
    const auto logits = model->forward_logits(x, nn::Mode::eval);
    CheckpointInfo info;
    info.trained = true;
    info.run_index = 2;
    info.seed = 77;
    info.config_fingerprint = "abcd1234";
    const auto path = dir.path / "m.ckpt";
    save_checkpoint(*model, info, path);

    const auto meta = inspect_checkpoint(path);
    CHECK(meta.kind == ModelKind::single_view);
    CHECK(meta.run_index == 2);
    CHECK(meta.seed == 77);
    CHECK(meta.config_fingerprint == "abcd1234");
    CHECK(meta.backbone == BackboneSpec::tiny(true, 32));

    auto loaded = load_single_view<float>(path);
    CHECK(loaded->trained());
    CHECK(loaded->forward_logits(x, nn::Mode::eval) == logits);

    const BackboneSpec no_att = BackboneSpec::tiny(false, 32);
    try {
        load_single_view<float>(path, &no_att);
        FAIL("expected an architecture mismatch");
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
    }
    CHECK_THROWS_AS(load_multiview<float>(path), CheckpointError);
    CHECK_THROWS_AS(inspect_checkpoint(dir.path / "missing.ckpt"), ConfigError);

    // Flip one byte in the middle of the tensor data.
    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    bytes[bytes.size() / 2] ^= 0x5a;
    std::ofstream(dir.path / "bad.ckpt", std::ios::binary) << bytes;
    try {
        load_single_view<float>(dir.path / "bad.ckpt");
        FAIL("expected a corruption error");
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("corrupt") != std::string::npos);
    }
    std::ofstream(dir.path / "short.ckpt", std::ios::binary) << bytes.substr(0, 10);
    CHECK_THROWS_AS(inspect_checkpoint(dir.path / "short.ckpt"), CheckpointError);

    // A missing tensor is refused even with a valid checksum.
    auto archive = TensorArchive::load(path);
    archive.tensors.erase(archive.tensors.begin());
    archive.save(dir.path / "partial.ckpt");
    CHECK_THROWS_AS(load_single_view<float>(dir.path / "partial.ckpt"), CheckpointError);
}

TEST_CASE("multi-view checkpoint round trip") {
    test::TempDir dir("mvckpt");
    auto base = backbone::build_model<float>(BackboneSpec::tiny(false, 32), {}, 4);
    base->set_trained(true);
    auto mv = fusion::build_multiview(*base, {fusion::FusionKind::max_pool}, {}, 5);
    CheckpointInfo info;
    info.mode = TrainMode::multi_view;
    save_checkpoint(*mv, info, dir.path / "mv.ckpt");
    const auto meta = inspect_checkpoint(dir.path / "mv.ckpt");
    CHECK(meta.kind == ModelKind::multi_view);
    REQUIRE(meta.fusion.has_value());
    CHECK(meta.fusion->kind == fusion::FusionKind::max_pool);
    auto back = load_multiview<float>(dir.path / "mv.ckpt");
    CHECK(back->extractor_checksum() == mv->extractor_checksum());
    Rng rng(2);
    const auto s = test::randn<float>({2, 3, 32, 32}, rng), t = test::randn<float>({2, 3, 32, 32}, rng);
    CHECK(fusion::forward_multiview(*back, s, t) == fusion::forward_multiview(*mv, s, t));
}

TEST_CASE("training is reproducible and independent of the job count") {
    const auto train = test::toy_patches(16, 8, 1), test_set = test::toy_patches(16, 3, 2);
    auto cfg = tiny_config(TrainMode::single_view_mixed);
    const auto a = train_single_view(cfg, train, test_set);
    const auto b = train_single_view(cfg, train, test_set, {.out_dir = {}, .jobs = 2, .log = {}});
    REQUIRE(a.records.size() == 2);
    for (std::size_t r = 0; r < 2; ++r) {
        CHECK(a.records[r].seed == r);
        CHECK(a.records[r].predictions == b.records[r].predictions);
        CHECK(to_json(a.records[r]) == to_json(b.records[r]));
        CHECK(a.records[r].epochs.size() == 2);
    }
    CHECK(a.model->trained());
    CHECK(predict(*a.model, test_set) == a.records[0].predictions);

    cfg.mode = TrainMode::single_view_surface;
    const auto sur = train_single_view(cfg, train, test_set);
    CHECK(sur.records[0].test.total == test_set.filter(dataset::View::surface).size());
}

TEST_CASE("multi-view training writes run files and keeps extractors frozen") {
    test::TempDir dir("mvtrain");
    const auto train = test::toy_patches(16, 8, 1), test_set = test::toy_patches(16, 3, 2);
    auto base = train_single_view(tiny_config(TrainMode::single_view_mixed), train, test_set).model;
    auto cfg = tiny_config(TrainMode::multi_view);
    const auto mv = train_multiview(cfg, *base, train, test_set, {.out_dir = dir.path, .jobs = 1, .log = {}});
    for (const auto& r : mv.records) {
        CHECK(r.extractor_checksum_before == r.extractor_checksum_after);
        CHECK(r.test.total == fusion::pair_views(test_set, kTestPairSeed).size());
        for (const char* ext : {".ckpt", ".epochs.jsonl", ".json"}) {
            CHECK(std::filesystem::exists(dir.path / ("run-" + std::to_string(r.run_index) + ext)));
        }
        const auto back = run_record_from_json(to_json(r));
        CHECK(back.predictions == r.predictions);
        CHECK(back.test.accuracy == r.test.accuracy);
    }
    auto untrained = backbone::build_model<float>(base->backbone_spec(), {}, 1);
    CHECK_THROWS_AS(train_multiview(cfg, *untrained, train, test_set), ConfigError);
}

TEST_CASE("divergence is reported") {
    const auto train = test::toy_patches(16, 4, 1);
    auto cfg = tiny_config(TrainMode::single_view_mixed);
    cfg.runs = 1;
    cfg.epochs = 3;
    cfg.learning_rate = 1e30;
    CHECK_THROWS_AS(train_single_view(cfg, train, train), DivergenceError);
}

}
