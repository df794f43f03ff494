#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "stonefuse/backbone/model.hpp"
#include "stonefuse/dataset/cache.hpp"
#include "stonefuse/evaluation/metrics.hpp"
#include "stonefuse/fusion/fusion.hpp"
#include "stonefuse/training/config.hpp"

namespace stonefuse::training {

// Seed of the fixed test-time pairing for multi-view evaluation.
inline constexpr std::uint64_t kTestPairSeed = 0x7e57;

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
};

struct RunRecord {
    std::size_t run_index = 0;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::single_view_mixed;
    std::vector<EpochLog> epochs;
    evaluation::MetricsReport test;
    std::vector<int> predictions;  // test-set order (pairs in pairing order for multi-view)
    std::filesystem::path checkpoint;
    // Multi-view only: combined extractor checksum before and after training.
    std::uint32_t extractor_checksum_before = 0;
    std::uint32_t extractor_checksum_after = 0;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

struct TrainOptions {
    // When set, each run writes run-<i>.ckpt, run-<i>.epochs.jsonl and
    // run-<i>.json here.
    std::filesystem::path out_dir;
    // Runs executed concurrently. Results do not depend on it.
    std::size_t jobs = 1;
    std::function<void(const std::string&)> log;
};

struct SingleViewResult {
    std::unique_ptr<backbone::SingleViewModel<float>> model;  // run 0
    std::vector<RunRecord> records;
};

struct MultiViewResult {
    std::unique_ptr<fusion::MultiViewModel<float>> model;  // run 0
    std::vector<RunRecord> records;
};

// The view subset a single-view mode trains and tests on.
dataset::PatchSet select_view(const dataset::PatchSet& set, TrainMode mode);

// `config.runs` independent runs with seeds seed + run_index on the view
// subset selected by config.mode. Throws DataError on an empty split and
// DivergenceError on a non-finite loss.
SingleViewResult train_single_view(const TrainConfig& config, const dataset::PatchSet& train,
                                   const dataset::PatchSet& test, const TrainOptions& options = {});

// Heads over two frozen copies of `base`'s extractor. The extractors run in
// inference mode, so their per-patch features are computed once and reused
// for every epoch and run; pairs are redrawn each epoch.
MultiViewResult train_multiview(const TrainConfig& config, backbone::SingleViewModel<float>& base,
                                const dataset::PatchSet& train, const dataset::PatchSet& test,
                                const TrainOptions& options = {});

// Predictions for every sample of `set`, in order.
std::vector<int> predict(backbone::SingleViewModel<float>& model, const dataset::PatchSet& set,
                         std::size_t batch_size = 128);
// Predictions for `pairs` drawn from `set`.
std::vector<int> predict(fusion::MultiViewModel<float>& model, const dataset::PatchSet& set,
                         const std::vector<fusion::ViewPair>& pairs, std::size_t batch_size = 128);

}  // namespace stonefuse::training
