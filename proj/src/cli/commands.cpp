#include "stonefuse/cli/commands.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <regex>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/core/io.hpp"
#include "stonefuse/dataset/synth.hpp"
#include "stonefuse/evaluation/metrics.hpp"
#include "stonefuse/evaluation/plot.hpp"
#include "stonefuse/training/checkpoint.hpp"
#include "stonefuse/training/trainer.hpp"

namespace stonefuse::cli {

namespace fs = std::filesystem;
using training::TrainMode;

namespace {

void say(const LogFn& log, const std::string& s) {
    if (log) log(s);
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) { atomic_write(path, j.dump(2) + "\n"); }

std::string timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    return buf;
}

fs::path resolve_checkpoint(const fs::path& p) {
    if (p.empty()) throw ConfigError("no checkpoint given");
    const fs::path file = fs::is_directory(p) ? p / "run-0.ckpt" : p;
    if (!fs::exists(file)) throw ConfigError("checkpoint not found: " + file.string());
    return file;
}

std::optional<dataset::View> view_of(TrainMode mode) {
    if (mode == TrainMode::single_view_surface) return dataset::View::surface;
    if (mode == TrainMode::single_view_section) return dataset::View::section;
    return std::nullopt;
}

void check_patch_size(const training::CheckpointInfo& info, const dataset::PatchIndex& index) {
    if (info.backbone.input_size != index.patch_size) {
        throw ConfigError("checkpoint expects " + std::to_string(info.backbone.input_size) + " px inputs, patch cache holds " +
                          std::to_string(index.patch_size) + " px patches");
    }
}

fs::path default_out(const fs::path& checkpoint, const std::string& what) {
    return checkpoint.parent_path() / (what + "-" + checkpoint.stem().string());
}

std::string tag_for(const training::TrainConfig& cfg) {
    std::string t = std::string(training::to_string(cfg.mode));
    if (cfg.mode == TrainMode::multi_view) t += "-" + std::string(fusion::to_string(cfg.fusion));
    t += cfg.attention ? "-att" : "-noatt";
    return t;
}

}  // namespace

std::string model_name(TrainMode mode, std::optional<fusion::FusionKind> fusion, bool attention) {
    std::string name;
    switch (mode) {
        case TrainMode::single_view_surface: name = "Surface"; break;
        case TrainMode::single_view_section: name = "Section"; break;
        case TrainMode::single_view_mixed: name = "Mixed"; break;
        case TrainMode::multi_view:
            name = std::string("MV ") + (fusion && *fusion == fusion::FusionKind::max_pool ? "max-pooling" : "concatenation");
            break;
    }
    return name + (attention ? " + attention" : "");
}

dataset::PatchIndex open_patch_index(const fs::path& data) {
    if (data.empty()) throw ConfigError("no patch data given (--data)");
    fs::path index = data;
    if (fs::is_directory(data)) index = fs::exists(data / "patches" / "index.jsonl") ? data / "patches" / "index.jsonl"
                                                                                    : data / "index.jsonl";
    if (!fs::exists(index)) throw DataError("patch index not found under " + data.string());
    return dataset::load_patch_index(index);
}

CommandOutcome cmd_synth(const SynthArgs& args, const LogFn& log) {
    if (args.out_dir.empty()) throw ConfigError("synth needs an output directory");
    dataset::SynthConfig cfg;
    if (!args.config.empty()) {
        nlohmann::json j;
        try {
            j = read_json(args.config);
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
        cfg = j.get<dataset::SynthConfig>();
    }
    if (args.seed) cfg.seed = *args.seed;
    cfg.validate();
    say(log, "rendering " + std::to_string(cfg.classes * dataset::kViewCount * cfg.images_per_class_per_view) +
                 " images into " + args.out_dir.string());
    const auto manifest = dataset::synth_generate(cfg, args.out_dir);
    CommandOutcome out;
    for (const auto& r : manifest.records) out.artifacts_written.push_back(r.image_path);
    out.artifacts_written.push_back(args.out_dir / "manifest.jsonl");
    out.summary = "wrote " + std::to_string(manifest.records.size()) + " images and " +
                  (args.out_dir / "manifest.jsonl").string();
    return out;
}

CommandOutcome cmd_prepare(const PrepareArgs& args, const LogFn& log) {
    if (args.out_dir.empty()) throw ConfigError("prepare needs an output directory");
    if (args.config.max_overlap >= args.config.patch_size) throw ConfigError("max_overlap must be below patch_size");
    const auto manifest = dataset::load_manifest(args.manifest);
    say(log, "patching " + std::to_string(manifest.records.size()) + " images");
    const auto index = dataset::prepare_patches(manifest, args.config, args.out_dir);
    std::size_t train = 0, test = 0;
    for (const auto& e : index.entries) (e.split == dataset::Split::train ? train : test) += 1;
    CommandOutcome out;
    out.artifacts_written = {index.root / "index.jsonl", args.out_dir / "manifest.jsonl"};
    out.summary = "prepared " + std::to_string(index.entries.size()) + " patches (" + std::to_string(train) +
                  " train, " + std::to_string(test) + " test) in " + index.root.string();
    return out;
}

CommandOutcome cmd_train(const TrainArgs& args, const LogFn& log) {
    training::TrainConfig cfg = args.config.empty() ? training::TrainConfig{} : training::load_train_config(args.config);
    if (args.mode) cfg.mode = *args.mode;
    if (args.fusion) cfg.fusion = *args.fusion;
    if (args.attention) cfg.attention = *args.attention;
    if (args.arch) cfg.arch = *args.arch;
    if (args.seed) cfg.seed = *args.seed;
    if (args.epochs) cfg.epochs = *args.epochs;
    if (args.runs) cfg.runs = *args.runs;
    if (args.deterministic) cfg.deterministic = *args.deterministic;
    cfg.validate();

    // Everything that can be rejected without touching the disk is checked first.
    fs::path base_path;
    training::CheckpointInfo base_info;
    if (cfg.mode == TrainMode::multi_view) {
        if (args.base.empty()) throw ConfigError("multi-view training needs a mixed-mode base checkpoint (--base)");
        base_path = resolve_checkpoint(args.base);
        base_info = training::inspect_checkpoint(base_path);
        if (base_info.kind != training::ModelKind::single_view || base_info.mode != TrainMode::single_view_mixed) {
            throw ConfigError("base checkpoint " + base_path.string() + " was trained in mode '" +
                              std::string(training::to_string(base_info.mode)) + "'; multi-view needs 'mixed'");
        }
        // Architecture follows the base unless a flag asks for something specific.
        if (!args.arch) cfg.arch = base_info.backbone.architecture;
        if (!args.attention) cfg.attention = base_info.backbone.attention_enabled;
    }
    const dataset::PatchIndex index = open_patch_index(args.data);
    const backbone::BackboneSpec spec = cfg.backbone_spec(index.patch_size);

    const std::string tag = args.tag.empty() ? tag_for(cfg) : args.tag;
    fs::path run_dir = args.run_dir;
    if (run_dir.empty()) {
        run_dir = args.runs_root / (timestamp() + "-" + tag);
        for (int k = 2; fs::exists(run_dir); ++k) run_dir = args.runs_root / (timestamp() + "-" + tag + "-" + std::to_string(k));
    }
    if (fs::exists(run_dir) && !fs::is_empty(run_dir)) {
        throw ConfigError("run directory " + run_dir.string() + " already exists; refusing to overwrite");
    }
    const fs::path staging = run_dir.string() + ".partial";
    fs::remove_all(staging);
    fs::create_directories(staging);

    try {
        training::TrainOptions opts;
        opts.out_dir = staging;
        opts.jobs = args.jobs;
        opts.log = log;
        std::vector<training::RunRecord> records;
        if (cfg.mode == TrainMode::multi_view) {
            auto base = training::load_single_view<float>(base_path, &spec);
            const auto train = dataset::load_patches(index, dataset::Split::train);
            const auto test = dataset::load_patches(index, dataset::Split::test);
            records = training::train_multiview(cfg, *base, train, test, opts).records;
        } else {
            const auto view = view_of(cfg.mode);
            const auto train = dataset::load_patches(index, dataset::Split::train, view);
            const auto test = dataset::load_patches(index, dataset::Split::test, view);
            records = training::train_single_view(cfg, train, test, opts).records;
        }
        std::vector<evaluation::MetricsReport> reports;
        for (const auto& r : records) reports.push_back(r.test);
        const auto aggregate = evaluation::aggregate_runs(reports);
        const std::optional<fusion::FusionKind> fusion_kind =
            cfg.mode == TrainMode::multi_view ? std::optional(cfg.fusion) : std::nullopt;
        write_json(staging / "config.json", training::to_json(cfg));
        write_json(staging / "aggregate.json", evaluation::to_json(aggregate));
        nlohmann::json artifacts = {"config.json", "aggregate.json"};
        for (const auto& r : records) {
            const std::string stem = "run-" + std::to_string(r.run_index);
            for (const char* ext : {".ckpt", ".epochs.jsonl", ".json"}) artifacts.push_back(stem + ext);
        }
        nlohmann::json idx{{"command", "train"},
                           {"model", model_name(cfg.mode, fusion_kind, cfg.attention)},
                           {"mode", training::to_string(cfg.mode)},
                           {"arch", backbone::to_string(cfg.arch)},
                           {"attention", cfg.attention},
                           {"fusion", fusion_kind ? nlohmann::json(fusion::to_string(*fusion_kind)) : nlohmann::json()},
                           {"patch_size", index.patch_size},
                           {"seed", cfg.seed},
                           {"runs", cfg.runs},
                           {"config_fingerprint", cfg.fingerprint()},
                           {"base_checkpoint", base_path.empty() ? nlohmann::json() : nlohmann::json(base_path.generic_string())},
                           {"artifacts", artifacts}};
        write_json(staging / "index.json", idx);
        if (fs::exists(run_dir)) fs::remove(run_dir);  // empty by the check above
        fs::create_directories(run_dir.parent_path().empty() ? fs::path(".") : run_dir.parent_path());
        fs::rename(staging, run_dir);

        CommandOutcome out;
        for (const auto& a : artifacts) out.artifacts_written.push_back(run_dir / a.get<std::string>());
        out.artifacts_written.push_back(run_dir / "index.json");
        out.summary = model_name(cfg.mode, fusion_kind, cfg.attention) + ": accuracy " +
                      evaluation::format_mean_std(aggregate.accuracy) + " over " + std::to_string(cfg.runs) +
                      " runs -> " + run_dir.string();
        return out;
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
}

CommandOutcome cmd_eval(const EvalArgs& args, const LogFn& log) {
    const fs::path ckpt = resolve_checkpoint(args.checkpoint);
    const auto info = training::inspect_checkpoint(ckpt);
    const auto index = open_patch_index(args.data);
    check_patch_size(info, index);
    const fs::path out_dir = args.out_dir.empty() ? default_out(ckpt, "eval") : args.out_dir;

    evaluation::MetricsReport report;
    std::string name;
    if (info.kind == training::ModelKind::multi_view) {
        auto model = training::load_multiview<float>(ckpt);
        const auto test = dataset::load_patches(index, dataset::Split::test);
        const auto pairs = fusion::pair_views(test, training::kTestPairSeed);
        std::vector<int> labels;
        for (const auto& p : pairs) labels.push_back(p.label);
        report = evaluation::compute_metrics(training::predict(*model, test, pairs), labels);
        name = model_name(info.mode, info.fusion->kind, info.backbone.attention_enabled);
    } else {
        auto model = training::load_single_view<float>(ckpt);
        const auto test = dataset::load_patches(index, dataset::Split::test, view_of(info.mode));
        if (test.size() == 0) throw DataError("test split is empty");
        report = evaluation::compute_metrics(training::predict(*model, test), test.labels);
        name = model_name(info.mode, std::nullopt, info.backbone.attention_enabled);
    }
    for (const auto& w : report.warnings) say(log, "warning: " + w);
    fs::create_directories(out_dir);
    write_json(out_dir / "metrics.json", evaluation::to_json(report));
    evaluation::write_confusion_png(report.confusion, out_dir / "confusion.png", name);
    write_json(out_dir / "index.json", {{"command", "eval"},
                                        {"model", name},
                                        {"checkpoint", ckpt.generic_string()},
                                        {"artifacts", {"metrics.json", "confusion.png"}}});
    CommandOutcome out;
    out.artifacts_written = {out_dir / "metrics.json", out_dir / "confusion.png", out_dir / "index.json"};
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s: accuracy %.4f, macro F1 %.4f on %zu test samples", name.c_str(),
                  report.accuracy, report.macro_f1, report.total);
    out.summary = buf;
    return out;
}

CommandOutcome cmd_embed(const EmbedArgs& args, const LogFn& log) {
    const fs::path ckpt = resolve_checkpoint(args.checkpoint);
    const auto info = training::inspect_checkpoint(ckpt);
    const auto index = open_patch_index(args.data);
    check_patch_size(info, index);
    const fs::path out_dir = args.out_dir.empty() ? default_out(ckpt, "embed") : args.out_dir;

    evaluation::EmbeddingSet emb;
    std::string name;
    if (info.kind == training::ModelKind::multi_view) {
        auto model = training::load_multiview<float>(ckpt);
        const auto test = dataset::load_patches(index, dataset::Split::test);
        name = model_name(info.mode, info.fusion->kind, info.backbone.attention_enabled);
        emb = evaluation::extract_embeddings(*model, test, fusion::pair_views(test, training::kTestPairSeed), name);
    } else {
        auto model = training::load_single_view<float>(ckpt);
        const auto test = dataset::load_patches(index, dataset::Split::test, view_of(info.mode));
        name = model_name(info.mode, std::nullopt, info.backbone.attention_enabled);
        emb = evaluation::extract_embeddings(*model, test, name);
    }
    const auto stats = evaluation::cluster_stats(emb);
    say(log, "projecting " + std::to_string(emb.size()) + " embeddings to 3-D");
    emb = evaluation::project_3d(std::move(emb), args.seed, args.umap);
    nlohmann::json stats_json = evaluation::to_json(stats);
    stats_json["projected_silhouette"] = evaluation::projected_silhouette(emb);
    stats_json["model"] = name;
    stats_json["samples"] = emb.size();
    stats_json["feature_dim"] = emb.dim;

    fs::create_directories(out_dir);
    atomic_write(out_dir / "embeddings.csv", evaluation::embeddings_csv(emb));
    evaluation::write_scatter_png(emb, out_dir / "scatter.png", name);
    write_json(out_dir / "cluster_stats.json", stats_json);
    write_json(out_dir / "index.json", {{"command", "embed"},
                                        {"model", name},
                                        {"checkpoint", ckpt.generic_string()},
                                        {"seed", args.seed},
                                        {"artifacts", {"embeddings.csv", "scatter.png", "cluster_stats.json"}}});
    CommandOutcome out;
    out.artifacts_written = {out_dir / "embeddings.csv", out_dir / "scatter.png", out_dir / "cluster_stats.json",
                             out_dir / "index.json"};
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s: %zu x %zu embeddings, inter/intra ratio %.3f, silhouette %.3f", name.c_str(),
                  emb.size(), emb.dim, stats.ratio, stats.silhouette);
    out.summary = buf;
    return out;
}

CommandOutcome cmd_report(const ReportArgs& args, const LogFn& log) {
    if (args.run_dirs.empty()) throw ConfigError("report needs at least one run directory");
    static const std::regex run_file(R"(run-(\d+)\.json)");
    std::vector<std::pair<std::string, evaluation::AggregateReport>> rows;
    nlohmann::json models = nlohmann::json::array();
    for (const auto& dir : args.run_dirs) {
        if (!fs::is_directory(dir)) throw ConfigError("not a run directory: " + dir.string());
        const auto idx = read_json(dir / "index.json");
        std::vector<std::pair<int, fs::path>> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            std::smatch m;
            const std::string fname = entry.path().filename().string();
            if (std::regex_match(fname, m, run_file)) files.emplace_back(std::stoi(m[1]), entry.path());
        }
        if (files.empty()) throw DataError("no run records in " + dir.string());
        std::sort(files.begin(), files.end());
        std::vector<evaluation::MetricsReport> reports;
        for (const auto& [i, path] : files) reports.push_back(training::run_record_from_json(read_json(path)).test);
        const auto agg = evaluation::aggregate_runs(reports);
        say(log, dir.string() + ": " + std::to_string(reports.size()) + " runs");
        const std::string name = idx.value("model", dir.filename().string());
        rows.emplace_back(name, agg);
        nlohmann::json m = evaluation::to_json(agg);
        m["model"] = name;
        m["run_dir"] = dir.filename().string();
        models.push_back(m);
    }
    const fs::path out_dir = args.out_dir.empty() ? args.run_dirs.front() : args.out_dir;
    fs::create_directories(out_dir);
    const std::string table = evaluation::render_table(rows);
    atomic_write(out_dir / "report.md", table);
    write_json(out_dir / "report.json", {{"models", models}, {"std_kind", "population"}});
    CommandOutcome out;
    out.artifacts_written = {out_dir / "report.md", out_dir / "report.json"};
    out.summary = table;
    return out;
}

int exit_code_for(const std::exception_ptr& error) {
    try {
        std::rethrow_exception(error);
    } catch (const ConfigError&) {
        return kExitConfig;
    } catch (const DataError&) {
        return kExitData;
    } catch (const DivergenceError&) {
        return kExitDivergence;
    } catch (...) {
        return kExitInternal;
    }
}

CommandOutcome run_command(const std::function<CommandOutcome()>& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        CommandOutcome out;
        out.exit_code = exit_code_for(std::current_exception());
        out.summary = e.what();
        return out;
    } catch (...) {
        CommandOutcome out;
        out.exit_code = kExitInternal;
        out.summary = "unknown error";
        return out;
    }
}

}  // namespace stonefuse::cli
