// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance 1 4 8      a subset
//
// STONEFUSE_ACCEPTANCE_DIR keeps the pipeline artifacts in a fixed place;
// otherwise a fresh temporary directory is used and removed afterwards.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "stonefuse/attention/cbam.hpp"
#include "stonefuse/backbone/model.hpp"
#include "stonefuse/cli/commands.hpp"
#include "stonefuse/core/errors.hpp"
#include "stonefuse/dataset/patches.hpp"
#include "stonefuse/evaluation/metrics.hpp"
#include "stonefuse/fusion/fusion.hpp"
#include "stonefuse/training/checkpoint.hpp"
#include "stonefuse/training/gradcheck.hpp"
#include "stonefuse/training/trainer.hpp"

namespace fs = std::filesystem;
using namespace stonefuse;
using backbone::BackboneSpec;
using backbone::HeadSpec;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

void progress(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.vec()) v = static_cast<T>(scale * standard_normal(rng));
    return t;
}

void require_ok(const cli::CommandOutcome& out, const std::string& what) {
    if (out.exit_code != 0) throw std::runtime_error(what + " failed (exit " + std::to_string(out.exit_code) + "): " + out.summary);
}

// ---------------------------------------------------------------------------
// 1. Gradient fidelity

Verdict gradient_fidelity() {
    const auto t0 = Clock::now();
    Rng rng(11);
    attention::CbamBlock<double> cbam({.channels = 32, .reduction = 16, .spatial_kernel = 7}, rng);
    const auto x = random_tensor<double>({2, 32, 8, 8}, rng);
    training::GradCheckOptions opts;
    opts.samples_per_tensor = 24;
    opts.input_samples = 48;
    const auto block = training::verify_gradients(cbam, x, 1e-4, opts);

    Rng rng2(12);
    backbone::Extractor<double> tiny(BackboneSpec::tiny(true, 32), rng2);
    const auto img = random_tensor<double>({3, 3, 32, 32}, rng2);
    const auto net = training::verify_gradients(tiny, img, 1e-3, opts);

    const double secs = seconds_since(t0);
    return {block.passed && net.passed && secs < 60.0,
            "cbam " + fmt("%.2e", block.max_rel_error) + " (< 1e-4), tiny backbone " + fmt("%.2e", net.max_rel_error) +
                " (< 1e-3), " + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------------------
// 2. Attention structure

Verdict attention_structure() {
    Rng rng(21);
    BackboneSpec with = BackboneSpec::resnet50(true);
    with.input_size = 64;
    BackboneSpec without = with;
    without.attention_enabled = false;
    backbone::Extractor<float> on(with, rng);
    backbone::Extractor<float> off(without, rng);
    const std::size_t n_on = backbone::count_attention_blocks<float>(on);
    const std::size_t n_off = backbone::count_attention_blocks<float>(off);

    // Every gate of every block strictly inside (0, 1).
    on.forward(random_tensor<float>({2, 3, 64, 64}, rng), nn::Mode::eval);
    bool gates_ok = true;
    std::size_t gate_values = 0;
    for (auto* b : on.blocks()) {
        auto* c = b->cbam();
        if (!c) continue;
        for (const Tensor<float>* g : {&c->last_channel_gate(), &c->last_spatial_gate()}) {
            for (float v : g->vec()) {
                gates_ok = gates_ok && v > 0.0f && v < 1.0f;
                ++gate_values;
            }
        }
    }

    // Shape preservation over random (C, H, W).
    bool shapes_ok = true;
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t c = 1 + uniform_index(rng, 64);
        const std::size_t h = 1 + uniform_index(rng, 20);
        const std::size_t w = 1 + uniform_index(rng, 20);
        std::vector<std::size_t> divisors;
        for (std::size_t d = 1; d <= std::min<std::size_t>(c, 16); ++d) {
            if (c % d == 0) divisors.push_back(d);
        }
        const std::size_t r = divisors[uniform_index(rng, divisors.size())];
        const std::size_t k = 1 + 2 * uniform_index(rng, 4);
        attention::CbamBlock<float> blk({.channels = c, .reduction = r, .spatial_kernel = k}, rng);
        const auto x3 = random_tensor<float>({c, h, w}, rng);
        const auto y3 = attention::cbam_forward(x3, blk);
        const auto x4 = random_tensor<float>({2, c, h, w}, rng);
        const auto y4 = attention::cbam_forward(x4, blk);
        shapes_ok = shapes_ok && y3.shape() == x3.shape() && y4.shape() == x4.shape();
    }
    return {n_on == 16 && n_off == 0 && gates_ok && gate_values > 0 && shapes_ok,
            "resnet50 blocks: " + std::to_string(n_on) + " with attention, " + std::to_string(n_off) +
                " without; " + std::to_string(gate_values) + " gate values " + (gates_ok ? "in (0,1)" : "OUT OF (0,1)") +
                "; shape preserved on 25 random (C,H,W): " + (shapes_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 3. Saturation identity

Verdict saturation_identity() {
    Rng rng(31);
    backbone::Extractor<double> plain(BackboneSpec::tiny(false, 64), rng);
    backbone::Extractor<double> gated(BackboneSpec::tiny(true, 64), rng);

    // Share every non-attention weight and running statistic by name.
    std::map<std::string, Tensor<double>*> src;
    for (auto& p : nn::parameters_of<double>(plain)) src[p.name] = &p.param->value;
    for (auto& b : nn::buffers_of<double>(plain)) src[b.name] = b.tensor;
    std::size_t shared = 0;
    for (auto& p : nn::parameters_of<double>(gated)) {
        if (auto it = src.find(p.name); it != src.end()) p.param->value = *it->second, ++shared;
    }
    for (auto& b : nn::buffers_of<double>(gated)) {
        if (auto it = src.find(b.name); it != src.end()) *b.tensor = *it->second, ++shared;
    }
    for (auto* blk : gated.blocks()) {
        auto* c = blk->cbam();
        auto cp = c->channel_params();
        cp.bias.fill(20.0);
        c->set_channel_params(cp);
        auto sp = c->spatial_params();
        sp.bias = 20.0;
        c->set_spatial_params(sp);
    }
    const auto x = random_tensor<double>({4, 3, 64, 64}, rng, 1.0);
    const auto a = plain.forward(x, nn::Mode::eval);
    const auto b = gated.forward(x, nn::Mode::eval);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return {shared == src.size() && worst < 1e-4,
            "max |feature difference| " + fmt("%.2e", worst) + " (< 1e-4) over " + std::to_string(a.size()) +
                " features, " + std::to_string(shared) + "/" + std::to_string(src.size()) + " tensors shared"};
}

// ---------------------------------------------------------------------------
// 4. Fusion contracts

Verdict fusion_contracts() {
    Rng rng(41);
    const std::size_t d = 64;
    const fusion::FusionStrategy max{fusion::FusionKind::max_pool}, cat{fusion::FusionKind::concatenation};
    bool sym = true, widths = true, order = true;
    for (int t = 0; t < 50; ++t) {
        const auto a = random_tensor<float>({3, d}, rng), b = random_tensor<float>({3, d}, rng);
        const auto ab = fusion::fuse(a, b, max), ba = fusion::fuse(b, a, max);
        sym = sym && ab == ba;
        const auto c = fusion::fuse(a, b, cat);
        widths = widths && ab.shape() == Shape{3, d} && c.shape() == Shape{3, 2 * d};
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
                order = order && c[r * 2 * d + j] == a[r * d + j] && c[r * 2 * d + d + j] == b[r * d + j];
            }
        }
    }

    // Multi-view training leaves both extractors untouched.
    dataset::PatchSet set;
    set.patch_size = 16;
    for (int label = 0; label < 6; ++label) {
        for (auto view : dataset::kAllViews) {
            for (int k = 0; k < 6; ++k) {
                set.labels.push_back(label);
                set.views.push_back(view);
                set.names.push_back("p");
                for (std::size_t i = 0; i < set.sample_size(); ++i) {
                    set.pixels.push_back(static_cast<float>(standard_normal(rng) + 0.3 * label));
                }
            }
        }
    }
    training::TrainConfig cfg;
    cfg.arch = backbone::Architecture::tiny;
    cfg.epochs = 2;
    cfg.runs = 1;
    cfg.batch_size = 16;
    cfg.mode = training::TrainMode::single_view_mixed;
    auto base = training::train_single_view(cfg, set, set).model;
    const std::uint32_t base_crc = backbone::parameter_checksum<float>(base->extractor());
    cfg.mode = training::TrainMode::multi_view;
    cfg.runs = 2;
    bool checksums = true;
    for (auto kind : {fusion::FusionKind::max_pool, fusion::FusionKind::concatenation}) {
        cfg.fusion = kind;
        auto mv = training::train_multiview(cfg, *base, set, set);
        for (const auto& r : mv.records) {
            checksums = checksums && r.extractor_checksum_before == r.extractor_checksum_after;
        }
        checksums = checksums && backbone::parameter_checksum<float>(mv.model->surface_extractor()) == base_crc &&
                    backbone::parameter_checksum<float>(mv.model->section_extractor()) == base_crc;
    }
    checksums = checksums && backbone::parameter_checksum<float>(base->extractor()) == base_crc;
    return {sym && widths && order && checksums,
            std::string("max symmetric: ") + (sym ? "yes" : "no") + ", widths d/2d: " + (widths ? "yes" : "no") +
                ", concat order [surface|section]: " + (order ? "yes" : "no") +
                ", extractor checksums unchanged by MV training: " + (checksums ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 5 and 7. Synthetic reproduction pipeline

struct Pipeline {
    fs::path data;
    std::map<std::string, fs::path> runs;          // tag -> run directory
    std::map<std::string, nlohmann::json> aggregate;  // tag -> aggregate.json
    std::string table;
    double seconds = 0.0;
};

std::optional<Pipeline> g_pipeline;
fs::path g_work;

const Pipeline& pipeline() {
    if (g_pipeline) return *g_pipeline;
    Pipeline p;
    const fs::path root = g_work / "reproduction";
    fs::remove_all(root);
    const auto t0 = Clock::now();

    cli::SynthArgs synth;
    synth.out_dir = root / "synth";
    synth.seed = 0;
    require_ok(cli::cmd_synth(synth), "synth");
    cli::PrepareArgs prep;
    prep.manifest = root / "synth" / "manifest.jsonl";
    prep.out_dir = root / "data";
    prep.config.patch_size = 64;
    prep.config.max_overlap = 20;
    prep.config.budget = 1000;
    prep.config.seed = 0;
    require_ok(cli::cmd_prepare(prep), "prepare");
    p.data = prep.out_dir;
    progress("data ready after " + fmt("%.0f s", seconds_since(t0)));

    auto train = [&](const std::string& tag, training::TrainMode mode, bool attention, std::size_t runs,
                     std::optional<fusion::FusionKind> fusion = std::nullopt, const std::string& base = "") {
        cli::TrainArgs a;
        a.data = p.data;
        a.mode = mode;
        a.arch = backbone::Architecture::tiny;
        a.attention = attention;
        a.fusion = fusion;
        a.seed = 0;
        a.runs = runs;
        a.deterministic = true;
        a.run_dir = root / "runs" / tag;
        if (!base.empty()) a.base = p.runs.at(base);
        const auto t = Clock::now();
        require_ok(cli::cmd_train(a), "train " + tag);
        p.runs[tag] = a.run_dir;
        p.aggregate[tag] = read_json(a.run_dir / "aggregate.json");
        progress(tag + ": accuracy " + fmt("%.4f", p.aggregate[tag]["accuracy"]["mean"].get<double>()) + " in " +
                 fmt("%.0f s", seconds_since(t)));
    };
    using training::TrainMode;
    using fusion::FusionKind;
    train("surface", TrainMode::single_view_surface, true, 5);
    train("section", TrainMode::single_view_section, true, 5);
    // The multi-view extractor is duplicated from a single mixed model, so
    // each attention setting needs one base run.
    train("mixed-att", TrainMode::single_view_mixed, true, 1);
    train("mixed-noatt", TrainMode::single_view_mixed, false, 1);
    train("mv-max-att", TrainMode::multi_view, true, 5, FusionKind::max_pool, "mixed-att");
    train("mv-concat-att", TrainMode::multi_view, true, 5, FusionKind::concatenation, "mixed-att");
    train("mv-max-noatt", TrainMode::multi_view, false, 5, FusionKind::max_pool, "mixed-noatt");
    train("mv-concat-noatt", TrainMode::multi_view, false, 5, FusionKind::concatenation, "mixed-noatt");
    p.seconds = seconds_since(t0);

    cli::ReportArgs rep;
    for (const char* tag : {"surface", "section", "mixed-att", "mixed-noatt", "mv-max-noatt", "mv-concat-noatt",
                            "mv-max-att", "mv-concat-att"}) {
        rep.run_dirs.push_back(p.runs.at(tag));
    }
    rep.out_dir = root;
    const auto out = cli::cmd_report(rep);
    require_ok(out, "report");
    p.table = out.summary;
    g_pipeline = std::move(p);
    return *g_pipeline;
}

double mean_acc(const Pipeline& p, const std::string& tag) {
    return p.aggregate.at(tag)["accuracy"]["mean"].get<double>();
}

Verdict view_ordering() {
    const auto& p = pipeline();
    std::cerr << p.table;
    const double sur = mean_acc(p, "surface"), sec = mean_acc(p, "section");
    const double mx = mean_acc(p, "mv-max-att"), cc = mean_acc(p, "mv-concat-att");
    const double mx0 = mean_acc(p, "mv-max-noatt"), cc0 = mean_acc(p, "mv-concat-noatt");
    const bool a = sur <= 0.60 && sec <= 0.45;
    const bool b = mx >= 0.95 && cc >= 0.95;
    const bool c = mx >= mx0 && cc >= cc0;
    const bool t = p.seconds <= 20 * 60;
    return {a && b && c && t,
            "(a) surface " + fmt("%.3f", sur) + " <= 0.60, section " + fmt("%.3f", sec) + " <= 0.45: " +
                (a ? "ok" : "NO") + "; (b) MV max " + fmt("%.3f", mx) + ", MV concat " + fmt("%.3f", cc) +
                " >= 0.95: " + (b ? "ok" : "NO") + "; (c) attention vs none: max " + fmt("%.3f", mx) + " vs " +
                fmt("%.3f", mx0) + ", concat " + fmt("%.3f", cc) + " vs " + fmt("%.3f", cc0) + ": " +
                (c ? "ok" : "NO") + "; runtime " + fmt("%.0f s", p.seconds) + " <= 1200 s: " + (t ? "ok" : "NO")};
}

Verdict cluster_claim() {
    const auto& p = pipeline();
    auto embed = [&](const std::string& tag) {
        cli::EmbedArgs a;
        a.checkpoint = p.runs.at(tag);
        a.data = p.data;
        a.seed = 0;
        require_ok(cli::cmd_embed(a), "embed " + tag);
        return read_json(p.runs.at(tag) / "embed-run-0" / "cluster_stats.json");
    };
    const auto mv = embed("mv-concat-att");
    const auto base = embed("mixed-att");
    auto num = [](const nlohmann::json& j) {
        return j.is_string() ? std::numeric_limits<double>::infinity() : j.get<double>();
    };
    const double r_mv = num(mv["ratio"]), r_base = num(base["ratio"]);
    const double s_mv = mv["silhouette"].get<double>(), s_base = base["silhouette"].get<double>();
    return {r_mv > r_base && s_mv > s_base,
            "inter/intra ratio MV concat + attention " + fmt("%.3f", r_mv) + " > mixed base " + fmt("%.3f", r_base) +
                "; silhouette " + fmt("%.3f", s_mv) + " > " + fmt("%.3f", s_base)};
}

// ---------------------------------------------------------------------------
// 6. Metrics oracle

Verdict metrics_oracle() {
    std::vector<std::string> failures;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };
    // Hand-computed case: 12 samples, 9 correct.
    //   true  0 0 0 1 1 2 2 2 3 4 5 5
    //   pred  0 0 1 1 1 2 0 2 3 5 5 5
    const std::vector<int> labels{0, 0, 0, 1, 1, 2, 2, 2, 3, 4, 5, 5};
    const std::vector<int> preds{0, 0, 1, 1, 1, 2, 0, 2, 3, 5, 5, 5};
    const auto r = evaluation::compute_metrics(preds, labels);
    evaluation::ConfusionMatrix cm{};
    cm[0][0] = 2, cm[0][1] = 1, cm[1][1] = 2, cm[2][2] = 2, cm[2][0] = 1, cm[3][3] = 1, cm[4][5] = 1, cm[5][5] = 2;
    expect(r.confusion == cm, "confusion matrix");
    expect(r.accuracy == 9.0 / 12.0, "accuracy");
    // precision: 2/3, 2/3, 1, 1, 0, 2/3   recall: 2/3, 1, 2/3, 1, 0, 1
    const double p[6] = {2.0 / 3, 2.0 / 3, 1, 1, 0, 2.0 / 3};
    const double q[6] = {2.0 / 3, 1, 2.0 / 3, 1, 0, 1};
    double mp = 0, mr = 0, mf = 0;
    for (int c = 0; c < 6; ++c) {
        const double f = p[c] + q[c] > 0 ? 2 * p[c] * q[c] / (p[c] + q[c]) : 0.0;
        expect(std::abs(r.per_class[c].precision - p[c]) < 1e-15, "precision " + std::to_string(c));
        expect(std::abs(r.per_class[c].recall - q[c]) < 1e-15, "recall " + std::to_string(c));
        expect(std::abs(r.per_class[c].f1 - f) < 1e-15, "f1 " + std::to_string(c));
        mp += p[c] / 6, mr += q[c] / 6, mf += f / 6;
    }
    expect(std::abs(r.macro_precision - mp) < 1e-15 && std::abs(r.macro_recall - mr) < 1e-15 &&
               std::abs(r.macro_f1 - mf) < 1e-15,
           "macro averages");

    // Perfect predictions and an absent class.
    const std::vector<int> y2{0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
    const auto r2 = evaluation::compute_metrics(y2, y2);
    expect(r2.accuracy == 1.0 && r2.per_class[5].support == 0 && r2.per_class[5].f1 == 0.0 && !r2.warnings.empty(),
           "absent class");
    expect(std::abs(r2.macro_f1 - 5.0 / 6.0) < 1e-15, "macro over six classes");

    // Aggregation against a direct computation.
    Rng rng(61);
    std::vector<evaluation::MetricsReport> runs;
    std::vector<double> accs;
    for (int k = 0; k < 5; ++k) {
        std::vector<int> yt, yp;
        for (int i = 0; i < 300; ++i) {
            yt.push_back(static_cast<int>(uniform_index(rng, 6)));
            yp.push_back(uniform01(rng) < 0.9 ? yt.back() : static_cast<int>(uniform_index(rng, 6)));
        }
        runs.push_back(evaluation::compute_metrics(yp, yt));
        accs.push_back(runs.back().accuracy);
    }
    double mean = 0;
    for (double a : accs) mean += a / accs.size();
    double var = 0;
    for (double a : accs) var += (a - mean) * (a - mean) / accs.size();
    const auto agg = evaluation::aggregate_runs(runs);
    expect(std::abs(agg.accuracy.mean - mean) < 1e-12 && std::abs(agg.accuracy.std - std::sqrt(var)) < 1e-12,
           "aggregate mean/std");

    // Table format.
    std::vector<evaluation::MetricsReport> fixed(5);
    const double vals[5] = {0.96, 0.97, 0.97, 0.96, 0.98};
    for (int k = 0; k < 5; ++k) fixed[k].accuracy = fixed[k].macro_precision = fixed[k].macro_recall = fixed[k].macro_f1 = vals[k];
    const std::string table = evaluation::render_table({{"MV concatenation + attention", evaluation::aggregate_runs(fixed)}});
    expect(table.find("| MV concatenation + attention | 0.968 ± 0.007 | 0.968 ± 0.007 | 0.968 ± 0.007 | 0.968 ± 0.007 |") !=
               std::string::npos,
           "table row");

    std::string detail = failures.empty() ? "crafted confusion cases exact, aggregate within 1e-12, table rows \"0.968 ± 0.007\""
                                          : "failed:";
    for (const auto& f : failures) detail += " " + f + ";";
    return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// 8. Determinism and I/O

std::map<std::string, std::string> small_pipeline(const fs::path& root) {
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "synth.json") << R"({"images_per_class_per_view": 4, "image_size": 96, "seed": 7})";
    cli::SynthArgs synth;
    synth.config = root / "synth.json";
    synth.out_dir = root / "synth";
    require_ok(cli::cmd_synth(synth), "synth");
    cli::PrepareArgs prep;
    prep.manifest = root / "synth" / "manifest.jsonl";
    prep.out_dir = root / "data";
    prep.config.patch_size = 32;
    prep.config.budget = 40;
    prep.config.seed = 7;
    require_ok(cli::cmd_prepare(prep), "prepare");

    cli::TrainArgs base;
    base.data = prep.out_dir;
    base.mode = training::TrainMode::single_view_mixed;
    base.arch = backbone::Architecture::tiny;
    base.epochs = 2;
    base.runs = 2;
    base.seed = 7;
    base.deterministic = true;
    base.run_dir = root / "runs" / "mixed";
    require_ok(cli::cmd_train(base), "train mixed");
    cli::TrainArgs mv = base;
    mv.mode = training::TrainMode::multi_view;
    mv.fusion = fusion::FusionKind::concatenation;
    mv.base = base.run_dir;
    mv.run_dir = root / "runs" / "mv";
    require_ok(cli::cmd_train(mv), "train mv");
    cli::ReportArgs rep;
    rep.run_dirs = {base.run_dir, mv.run_dir};
    rep.out_dir = root / "report";
    require_ok(cli::cmd_report(rep), "report");

    std::map<std::string, std::string> files;
    for (const char* f : {"report/report.md", "report/report.json", "runs/mixed/run-0.json", "runs/mixed/run-1.json",
                          "runs/mv/run-0.json", "runs/mv/run-1.json", "runs/mixed/run-0.ckpt", "runs/mv/run-1.ckpt"}) {
        files[f] = slurp(root / f);
    }
    return files;
}

bool tiling_oracle(std::string& detail) {
    Rng rng(81);
    const std::size_t patch = 256, overlap = 20;
    for (int t = 0; t < 50; ++t) {
        const std::size_t w = patch + uniform_index(rng, 1200), h = patch + uniform_index(rng, 1200);
        const dataset::Image img(w, h);
        const auto patches = dataset::extract_patches(img, patch, overlap);
        for (std::size_t i = 0; i < patches.size(); ++i) {
            const auto& a = patches[i];
            if (a.size() != patch || a.x + patch > w || a.y + patch > h) {
                detail = "patch outside a " + std::to_string(w) + "x" + std::to_string(h) + " image";
                return false;
            }
            for (std::size_t j = i + 1; j < patches.size(); ++j) {
                const auto& b = patches[j];
                const auto ov = [&](std::size_t p, std::size_t q) {
                    const std::size_t lo = std::max(p, q), hi = std::min(p, q) + patch;
                    return hi > lo ? hi - lo : std::size_t{0};
                };
                // Two patches may share a row or column band, but never
                // more than `overlap` pixels along both axes at once.
                const std::size_t ox = ov(a.x, b.x), oy = ov(a.y, b.y);
                if (std::min(ox, oy) > overlap) {
                    detail = "overlap " + std::to_string(ox) + "x" + std::to_string(oy) + " in a " + std::to_string(w) +
                             "x" + std::to_string(h) + " image";
                    return false;
                }
            }
        }
        const std::size_t expected = dataset::tile_offsets(w, patch, overlap).size() * dataset::tile_offsets(h, patch, overlap).size();
        if (patches.size() != expected || patches.empty()) {
            detail = "patch count mismatch in a " + std::to_string(w) + "x" + std::to_string(h) + " image";
            return false;
        }
    }
    detail = "50 random image sizes, all pairwise overlaps <= 20 px";
    return true;
}

Verdict determinism_and_io() {
    std::vector<std::string> notes;
    bool ok = true;

    const auto a = small_pipeline(g_work / "determinism-a");
    const auto b = small_pipeline(g_work / "determinism-b");
    std::size_t differing = 0;
    for (const auto& [name, bytes] : a) differing += b.at(name) != bytes;
    ok = ok && differing == 0;
    notes.push_back(std::to_string(a.size() - differing) + "/" + std::to_string(a.size()) +
                    " report, record and checkpoint files byte-identical across two seeded pipelines");

    // Checkpoint round trip.
    Rng rng(82);
    const fs::path dir = g_work / "roundtrip";
    fs::create_directories(dir);
    auto sv = backbone::build_model<float>(BackboneSpec::tiny(true, 32), HeadSpec{}, 5);
    sv->set_trained(true);
    const auto x = random_tensor<float>({4, 3, 32, 32}, rng);
    const auto before = sv->forward_logits(x, nn::Mode::eval);
    training::save_checkpoint(*sv, {}, dir / "sv.ckpt");
    const auto sv2 = training::load_single_view<float>(dir / "sv.ckpt");
    const bool sv_same = sv2->forward_logits(x, nn::Mode::eval) == before;

    auto mv = fusion::build_multiview(*sv, {fusion::FusionKind::concatenation}, HeadSpec{}, 6);
    const auto y = random_tensor<float>({4, 3, 32, 32}, rng);
    const auto mv_before = fusion::forward_multiview(*mv, x, y);
    training::CheckpointInfo info;
    info.mode = training::TrainMode::multi_view;
    training::save_checkpoint(*mv, info, dir / "mv.ckpt");
    auto mv2 = training::load_multiview<float>(dir / "mv.ckpt");
    const bool mv_same = fusion::forward_multiview(*mv2, x, y) == mv_before;
    ok = ok && sv_same && mv_same;
    notes.push_back(std::string("checkpoint logits bitwise equal: single-view ") + (sv_same ? "yes" : "no") +
                    ", multi-view " + (mv_same ? "yes" : "no"));

    std::string tiling;
    ok = tiling_oracle(tiling) && ok;
    notes.push_back(tiling);

    std::string detail;
    for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
    return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<int, std::pair<const char*, std::function<Verdict()>>> criteria{
        {1, {"gradient fidelity", gradient_fidelity}},
        {2, {"attention structure", attention_structure}},
        {3, {"saturation identity", saturation_identity}},
        {4, {"fusion contracts", fusion_contracts}},
        {5, {"view and fusion ordering on synthetic data", view_ordering}},
        {6, {"metrics oracle", metrics_oracle}},
        {7, {"cluster claim", cluster_claim}},
        {8, {"determinism and I/O", determinism_and_io}},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    if (selected.empty()) {
        for (const auto& [k, v] : criteria) selected.insert(k);
    }

    const char* keep = std::getenv("STONEFUSE_ACCEPTANCE_DIR");
    g_work = keep ? fs::path(keep) : fs::temp_directory_path() / ("stonefuse-acceptance-" + std::to_string(::getpid()));
    fs::create_directories(g_work);

    int failed = 0;
    for (int k : selected) {
        const auto it = criteria.find(k);
        if (it == criteria.end()) {
            std::cout << "criterion " << k << ": FAIL - no such criterion" << std::endl;
            ++failed;
            continue;
        }
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = it->second.second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << "criterion " << k << " (" << it->second.first << "): " << (v.pass ? "PASS" : "FAIL") << " - "
                  << v.detail << " [" << fmt("%.1f s", seconds_since(t0)) << "]" << std::endl;
    }
    if (!keep) fs::remove_all(g_work);
    return failed == 0 ? 0 : 1;
}
