#include "stonefuse/training/trainer.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/core/io.hpp"
#include "stonefuse/nn/adam.hpp"
#include "stonefuse/nn/loss.hpp"
#include "stonefuse/training/checkpoint.hpp"

namespace stonefuse::training {

using dataset::PatchSet;
using fusion::ViewPair;

namespace {

// Seed salts for the per-run streams.
constexpr std::uint64_t kShuffleSalt = 0x100;
constexpr std::uint64_t kDropoutSalt = 0x200;
constexpr std::uint64_t kPairSalt = 0x300;
constexpr std::size_t kInferenceBatch = 128;

class Logger {
public:
    explicit Logger(const TrainOptions& o) : fn_(o.log) {}
    void operator()(const std::string& s) {
        if (!fn_) return;
        std::lock_guard lock(mu_);
        fn_(s);
    }

private:
    std::function<void(const std::string&)> fn_;
    std::mutex mu_;
};

// Runs fn(run_index) for every run on up to `jobs` threads; rethrows the
// first failure after all threads finish.
template <typename F>
void for_each_run(std::size_t runs, std::size_t jobs, F fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, runs));
    if (jobs == 1) {
        for (std::size_t r = 0; r < runs; ++r) fn(r);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) {
        pool.emplace_back([&] {
            for (std::size_t r = next++; r < runs; r = next++) {
                try {
                    fn(r);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

// Batch boundaries; a trailing batch of one sample is dropped because batch
// normalization cannot estimate a variance from it.
std::vector<std::pair<std::size_t, std::size_t>> batches(std::size_t n, std::size_t batch) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t s = 0; s < n; s += batch) {
        const std::size_t e = std::min(n, s + batch);
        if (e - s >= 2) out.emplace_back(s, e);
    }
    return out;
}

void check_finite(double loss, std::size_t epoch, std::size_t run, std::uint64_t seed) {
    if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss in run " + std::to_string(run) + " (seed " +
                              std::to_string(seed) + "), epoch " + std::to_string(epoch));
    }
}

void write_run_files(const TrainOptions& options, RunRecord& record, const std::function<void(const std::filesystem::path&)>& save) {
    if (options.out_dir.empty()) return;
    std::filesystem::create_directories(options.out_dir);
    const std::string stem = "run-" + std::to_string(record.run_index);
    record.checkpoint = stem + ".ckpt";
    save(options.out_dir / record.checkpoint);
    std::string lines;
    for (const auto& e : record.epochs) {
        lines += nlohmann::json{{"run", record.run_index},
                                {"epoch", e.epoch},
                                {"train_loss", e.train_loss},
                                {"train_accuracy", e.train_accuracy}}
                     .dump();
        lines += '\n';
    }
    atomic_write(options.out_dir / (stem + ".epochs.jsonl"), lines);
    atomic_write(options.out_dir / (stem + ".json"), to_json(record).dump(2) + "\n");
}

std::string epoch_line(const RunRecord& r, const EpochLog& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "[%s run %zu] epoch %zu: loss %.4f, train accuracy %.4f",
                  std::string(to_string(r.mode)).c_str(), r.run_index, e.epoch, e.train_loss, e.train_accuracy);
    return buf;
}

std::vector<int> labels_of(const PatchSet& set, std::span<const std::size_t> idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(set.labels[i]);
    return out;
}

// Per-patch extractor features for every sample of `set`, in order (N x d).
Tensor<float> extract_all(backbone::Extractor<float>& surface, backbone::Extractor<float>& section,
                          const PatchSet& set) {
    const std::size_t d = surface.spec().feature_dim();
    Tensor<float> out(Shape{set.size(), d});
    for (auto view : dataset::kAllViews) {
        auto& extractor = view == dataset::View::surface ? surface : section;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < set.size(); ++i) {
            if (set.views[i] == view) idx.push_back(i);
        }
        for (std::size_t s = 0; s < idx.size(); s += kInferenceBatch) {
            const std::span<const std::size_t> chunk(idx.data() + s, std::min(kInferenceBatch, idx.size() - s));
            const Tensor<float> f = extractor.forward(set.batch(chunk), nn::Mode::eval);
            for (std::size_t b = 0; b < chunk.size(); ++b) {
                std::copy(f.data() + b * d, f.data() + (b + 1) * d, out.data() + chunk[b] * d);
            }
        }
        extractor.clear_cache();
    }
    return out;
}

Tensor<float> gather_fused(const Tensor<float>& features, std::span<const ViewPair> pairs,
                           fusion::FusionStrategy strategy) {
    const std::size_t d = features.dim(1);
    Tensor<float> sur(Shape{pairs.size(), d}), sec(Shape{pairs.size(), d});
    for (std::size_t b = 0; b < pairs.size(); ++b) {
        std::copy(features.data() + pairs[b].surface * d, features.data() + (pairs[b].surface + 1) * d,
                  sur.data() + b * d);
        std::copy(features.data() + pairs[b].section * d, features.data() + (pairs[b].section + 1) * d,
                  sec.data() + b * d);
    }
    return fusion::fuse(sur, sec, strategy);
}

std::vector<int> predict_fused(fusion::MultiViewModel<float>& model, const Tensor<float>& features,
                               const std::vector<ViewPair>& pairs) {
    std::vector<int> out;
    out.reserve(pairs.size());
    for (std::size_t s = 0; s < pairs.size(); s += kInferenceBatch) {
        const std::span<const ViewPair> chunk(pairs.data() + s, std::min(kInferenceBatch, pairs.size() - s));
        const auto p = nn::argmax_rows(model.forward_fused(gather_fused(features, chunk, model.strategy()), nn::Mode::eval));
        out.insert(out.end(), p.begin(), p.end());
    }
    model.head().clear_cache();
    return out;
}

std::vector<int> pair_labels(const std::vector<ViewPair>& pairs) {
    std::vector<int> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.label);
    return out;
}

}  // namespace

nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"train_accuracy", e.train_accuracy}});
    }
    nlohmann::json j{{"run_index", r.run_index},
                     {"seed", r.seed},
                     {"mode", to_string(r.mode)},
                     {"epochs", epochs},
                     {"test", evaluation::to_json(r.test)},
                     {"predictions", r.predictions},
                     {"checkpoint", r.checkpoint.generic_string()}};
    if (r.mode == TrainMode::multi_view) {
        j["extractor_checksum_before"] = r.extractor_checksum_before;
        j["extractor_checksum_after"] = r.extractor_checksum_after;
    }
    return j;
}

RunRecord run_record_from_json(const nlohmann::json& j) {
    try {
        RunRecord r;
        r.run_index = j.at("run_index").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.mode = mode_from_string(j.at("mode").get<std::string>());
        for (const auto& e : j.at("epochs")) {
            r.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                                e.at("train_accuracy").get<double>()});
        }
        r.test = evaluation::metrics_from_json(j.at("test"));
        r.predictions = j.value("predictions", std::vector<int>{});
        r.checkpoint = j.value("checkpoint", std::string());
        r.extractor_checksum_before = j.value("extractor_checksum_before", std::uint32_t{0});
        r.extractor_checksum_after = j.value("extractor_checksum_after", std::uint32_t{0});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed run record: ") + e.what());
    }
}

PatchSet select_view(const PatchSet& set, TrainMode mode) {
    switch (mode) {
        case TrainMode::single_view_surface: return set.filter(dataset::View::surface);
        case TrainMode::single_view_section: return set.filter(dataset::View::section);
        case TrainMode::single_view_mixed: return set;
        case TrainMode::multi_view: break;
    }
    throw ConfigError("multi-view mode has no single-view subset");
}

std::vector<int> predict(backbone::SingleViewModel<float>& model, const PatchSet& set, std::size_t batch_size) {
    std::vector<int> out;
    out.reserve(set.size());
    std::vector<std::size_t> idx(set.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t s = 0; s < idx.size(); s += batch_size) {
        const std::span<const std::size_t> chunk(idx.data() + s, std::min(batch_size, idx.size() - s));
        const auto p = nn::argmax_rows(model.forward_logits(set.batch(chunk), nn::Mode::eval));
        out.insert(out.end(), p.begin(), p.end());
    }
    model.extractor().clear_cache();
    model.head().clear_cache();
    return out;
}

std::vector<int> predict(fusion::MultiViewModel<float>& model, const PatchSet& set,
                         const std::vector<ViewPair>& pairs, std::size_t batch_size) {
    std::vector<int> out;
    out.reserve(pairs.size());
    for (std::size_t s = 0; s < pairs.size(); s += batch_size) {
        const std::size_t n = std::min(batch_size, pairs.size() - s);
        std::vector<std::size_t> si, ci;
        for (std::size_t b = 0; b < n; ++b) {
            si.push_back(pairs[s + b].surface);
            ci.push_back(pairs[s + b].section);
        }
        const auto p = nn::argmax_rows(fusion::forward_multiview(model, set.batch(si), set.batch(ci)));
        out.insert(out.end(), p.begin(), p.end());
    }
    model.head().clear_cache();
    return out;
}

SingleViewResult train_single_view(const TrainConfig& config, const PatchSet& train_all, const PatchSet& test_all,
                                   const TrainOptions& options) {
    config.validate();
    // Mixed mode trains on the sets as given; avoid copying them.
    PatchSet train_subset, test_subset;
    const bool mixed = config.mode == TrainMode::single_view_mixed;
    if (!mixed) {
        train_subset = select_view(train_all, config.mode);
        test_subset = select_view(test_all, config.mode);
    }
    const PatchSet& train = mixed ? train_all : train_subset;
    const PatchSet& test = mixed ? test_all : test_subset;
    if (train.size() < 2) throw DataError("training split is empty for mode " + std::string(to_string(config.mode)));
    if (test.size() == 0) throw DataError("test split is empty for mode " + std::string(to_string(config.mode)));
    const backbone::BackboneSpec spec = config.backbone_spec(train.patch_size);
    const backbone::HeadSpec head = config.head_spec();

    Logger log(options);
    SingleViewResult result;
    result.records.resize(config.runs);
    for_each_run(config.runs, options.jobs, [&](std::size_t r) {
        RunRecord record;
        record.run_index = r;
        record.seed = config.run_seed(r);
        record.mode = config.mode;
        auto model = backbone::build_model<float>(spec, head, record.seed);
        nn::Adam<float> adam(model->parameters(), {config.learning_rate});
        for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
            const auto order = shuffled(train.size(), mix_seed(record.seed, kShuffleSalt + epoch));
            model->reseed_dropout(mix_seed(record.seed, kDropoutSalt + epoch));
            double loss_sum = 0.0;
            std::size_t correct = 0, seen = 0;
            for (auto [s, e] : batches(order.size(), config.batch_size)) {
                const std::span<const std::size_t> idx(order.data() + s, e - s);
                adam.zero_grad();
                const auto loss = nn::softmax_cross_entropy(model->forward_logits(train.batch(idx), nn::Mode::train),
                                                            labels_of(train, idx));
                check_finite(loss.loss, epoch, r, record.seed);
                model->backward(loss.grad);
                adam.step();
                loss_sum += static_cast<double>(loss.loss) * static_cast<double>(idx.size());
                correct += loss.correct;
                seen += idx.size();
            }
            model->set_trained(true);
            record.epochs.push_back({epoch, loss_sum / static_cast<double>(seen),
                                     static_cast<double>(correct) / static_cast<double>(seen)});
            log(epoch_line(record, record.epochs.back()));
        }
        model->extractor().clear_cache();
        model->head().clear_cache();
        record.predictions = predict(*model, test);
        record.test = evaluation::compute_metrics(record.predictions, test.labels);
        write_run_files(options, record, [&](const std::filesystem::path& p) {
            CheckpointInfo info;
            info.mode = config.mode;
            info.config_fingerprint = config.fingerprint();
            info.run_index = r;
            info.seed = record.seed;
            save_checkpoint(*model, info, p);
        });
        char buf[96];
        std::snprintf(buf, sizeof buf, "[%s run %zu] test accuracy %.4f", std::string(to_string(config.mode)).c_str(),
                      r, record.test.accuracy);
        log(buf);
        result.records[r] = std::move(record);
        if (r == 0) result.model = std::move(model);
    });
    return result;
}

MultiViewResult train_multiview(const TrainConfig& config, backbone::SingleViewModel<float>& base,
                                const PatchSet& train, const PatchSet& test, const TrainOptions& options) {
    config.validate();
    if (train.size() < 2) throw DataError("training split is empty");
    if (test.size() == 0) throw DataError("test split is empty");
    if (train.patch_size != base.backbone_spec().input_size) {
        throw ConfigError("patch size " + std::to_string(train.patch_size) + " does not match the base model input " +
                          std::to_string(base.backbone_spec().input_size));
    }
    const fusion::FusionStrategy strategy{config.fusion};
    const backbone::HeadSpec head = config.head_spec();
    Logger log(options);

    // The extractors are frozen and run in inference mode, so the features of
    // each patch are the same in every epoch and every run.
    auto probe = fusion::build_multiview(base, strategy, head, config.run_seed(0));
    const std::uint32_t reference_checksum = probe->extractor_checksum();
    const Tensor<float> train_features = extract_all(probe->surface_extractor(), probe->section_extractor(), train);
    const Tensor<float> test_features = extract_all(probe->surface_extractor(), probe->section_extractor(), test);
    probe.reset();
    const std::vector<ViewPair> test_pairs = fusion::pair_views(test, kTestPairSeed);
    const std::vector<int> test_labels = pair_labels(test_pairs);

    MultiViewResult result;
    result.records.resize(config.runs);
    for_each_run(config.runs, options.jobs, [&](std::size_t r) {
        RunRecord record;
        record.run_index = r;
        record.seed = config.run_seed(r);
        record.mode = TrainMode::multi_view;
        auto model = fusion::build_multiview(base, strategy, head, record.seed);
        record.extractor_checksum_before = model->extractor_checksum();
        if (record.extractor_checksum_before != reference_checksum) {
            throw std::logic_error("multi-view extractors differ from the base");
        }
        nn::Adam<float> adam(model->head_parameters(), {config.learning_rate});
        for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
            auto pairs = fusion::pair_views(train, mix_seed(record.seed, kPairSalt + epoch));
            const auto order = shuffled(pairs.size(), mix_seed(record.seed, kShuffleSalt + epoch));
            model->reseed_dropout(mix_seed(record.seed, kDropoutSalt + epoch));
            double loss_sum = 0.0;
            std::size_t correct = 0, seen = 0;
            std::vector<ViewPair> batch;
            std::vector<int> labels;
            for (auto [s, e] : batches(order.size(), config.batch_size)) {
                batch.clear();
                labels.clear();
                for (std::size_t i = s; i < e; ++i) {
                    batch.push_back(pairs[order[i]]);
                    labels.push_back(pairs[order[i]].label);
                }
                adam.zero_grad();
                const auto loss = nn::softmax_cross_entropy(
                    model->forward_fused(gather_fused(train_features, batch, strategy), nn::Mode::train), labels);
                check_finite(loss.loss, epoch, r, record.seed);
                model->backward(loss.grad);
                adam.step();
                loss_sum += static_cast<double>(loss.loss) * static_cast<double>(batch.size());
                correct += loss.correct;
                seen += batch.size();
            }
            record.epochs.push_back({epoch, loss_sum / static_cast<double>(seen),
                                     static_cast<double>(correct) / static_cast<double>(seen)});
            log(epoch_line(record, record.epochs.back()));
        }
        model->head().clear_cache();
        record.extractor_checksum_after = model->extractor_checksum();
        record.predictions = predict_fused(*model, test_features, test_pairs);
        record.test = evaluation::compute_metrics(record.predictions, test_labels);
        write_run_files(options, record, [&](const std::filesystem::path& p) {
            CheckpointInfo info;
            info.config_fingerprint = config.fingerprint();
            info.run_index = r;
            info.seed = record.seed;
            info.trained = config.epochs > 0;
            save_checkpoint(*model, info, p);
        });
        char buf[96];
        std::snprintf(buf, sizeof buf, "[mv-%s run %zu] test accuracy %.4f",
                      std::string(fusion::to_string(strategy.kind)).c_str(), r, record.test.accuracy);
        log(buf);
        result.records[r] = std::move(record);
        if (r == 0) result.model = std::move(model);
    });
    return result;
}

}  // namespace stonefuse::training
