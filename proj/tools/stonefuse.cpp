// stonefuse: synth -> prepare -> train -> eval / embed -> report.

#include <iostream>

#include <CLI11.hpp>

#include "stonefuse/cli/commands.hpp"
#include "stonefuse/core/errors.hpp"
#include "stonefuse/kernels/kernels.hpp"

namespace sf = stonefuse;
using sf::cli::CommandOutcome;

namespace {

template <typename T, typename Parse>
std::optional<T> parse_opt(const std::string& s, Parse parse) {
    if (s.empty()) return std::nullopt;
    return parse(s);
}

std::optional<bool> on_off(const std::string& s) {
    if (s.empty()) return std::nullopt;
    if (s == "on") return true;
    if (s == "off") return false;
    throw sf::ConfigError("--attention expects on or off, got '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view kidney-stone classification with attention and late fusion"};
    app.require_subcommand(1);
    bool quiet = false;
    std::string isa;
    app.add_flag("-q,--quiet", quiet, "Only print the final summary");
    app.add_option("--isa", isa, "Force the kernel ISA")->check(CLI::IsMember({"scalar", "avx2"}));

    auto log = [&](const std::string& s) {
        if (!quiet) std::cerr << s << '\n';
    };

    // synth
    sf::cli::SynthArgs synth;
    std::uint64_t synth_seed = 0;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic paired-view dataset");
    c_synth->add_option("--config", synth.config, "SynthConfig JSON");
    c_synth->add_option("--out", synth.out_dir, "Output directory")->required();
    auto* o_synth_seed = c_synth->add_option("--seed", synth_seed, "Override the config seed");

    // prepare
    sf::cli::PrepareArgs prep;
    auto* c_prep = app.add_subcommand("prepare", "Patch, balance and split a manifest into a patch cache");
    c_prep->add_option("--manifest", prep.manifest, "Image manifest (JSON lines)")->required();
    c_prep->add_option("--out", prep.out_dir, "Output directory")->required();
    c_prep->add_option("--patch-size", prep.config.patch_size, "Square patch side")->capture_default_str();
    c_prep->add_option("--max-overlap", prep.config.max_overlap, "Largest overlap between neighbouring patches")
        ->capture_default_str();
    c_prep->add_option("--budget", prep.config.budget, "Patches per class and view")->capture_default_str();
    c_prep->add_option("--train-fraction", prep.config.train_fraction, "Share of images per stratum used for training")
        ->capture_default_str();
    c_prep->add_option("--seed", prep.config.seed, "Split, balance and augmentation seed")->capture_default_str();

    // train
    sf::cli::TrainArgs train;
    std::string mode, fusion, attention, arch;
    std::uint64_t train_seed = 0;
    std::size_t epochs = 0, runs = 0;
    bool deterministic = false;
    auto* c_train = app.add_subcommand("train", "Train single-view or multi-view models for all runs");
    c_train->add_option("--config", train.config, "TrainConfig JSON");
    c_train->add_option("--data", train.data, "Patch cache (prepare output directory)")->required();
    c_train->add_option("--mode", mode, "surface | section | mixed | mv")
        ->check(CLI::IsMember({"surface", "section", "mixed", "mv"}));
    c_train->add_option("--fusion", fusion, "max | concat")->check(CLI::IsMember({"max", "concat"}));
    c_train->add_option("--attention", attention, "on | off")->check(CLI::IsMember({"on", "off"}));
    c_train->add_option("--arch", arch, "resnet50 | tiny")->check(CLI::IsMember({"resnet50", "tiny"}));
    auto* o_train_seed = c_train->add_option("--seed", train_seed, "Base seed; run i uses seed + i");
    auto* o_epochs = c_train->add_option("--epochs", epochs, "Override epochs");
    auto* o_runs = c_train->add_option("--runs", runs, "Override runs");
    c_train->add_flag("--deterministic", deterministic, "Require bit-reproducible runs");
    c_train->add_option("--jobs", train.jobs, "Runs trained concurrently")->capture_default_str();
    c_train->add_option("--base", train.base, "Mixed-mode checkpoint or run directory (mv only)");
    c_train->add_option("--run-dir", train.run_dir, "Exact run directory");
    c_train->add_option("--runs-root", train.runs_root, "Parent of timestamped run directories")->capture_default_str();
    c_train->add_option("--tag", train.tag, "Run directory suffix");

    // eval
    sf::cli::EvalArgs eval;
    auto* c_eval = app.add_subcommand("eval", "Test-set metrics and confusion heatmap for a checkpoint");
    c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint file or run directory")->required();
    c_eval->add_option("--data", eval.data, "Patch cache")->required();
    c_eval->add_option("--out", eval.out_dir, "Output directory");

    // embed
    sf::cli::EmbedArgs embed;
    auto* c_embed = app.add_subcommand("embed", "Feature embeddings, 3-D UMAP scatter and cluster statistics");
    c_embed->add_option("--checkpoint", embed.checkpoint, "Checkpoint file or run directory")->required();
    c_embed->add_option("--data", embed.data, "Patch cache")->required();
    c_embed->add_option("--out", embed.out_dir, "Output directory");
    c_embed->add_option("--seed", embed.seed, "UMAP seed")->capture_default_str();
    c_embed->add_option("--neighbors", embed.umap.n_neighbors, "UMAP neighbour count")->capture_default_str();

    // report
    sf::cli::ReportArgs report;
    auto* c_report = app.add_subcommand("report", "Aggregate runs into a mean ± std table");
    c_report->add_option("run_dirs", report.run_dirs, "Run directories, one table row each")->required();
    c_report->add_option("--out", report.out_dir, "Output directory (default: first run directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : sf::cli::kExitConfig;
    }

    if (isa == "scalar") sf::kernels::set_isa(sf::kernels::Isa::scalar);
    if (isa == "avx2") {
        if (!sf::kernels::avx2_available()) {
            std::cerr << "error: AVX2 is not available on this CPU\n";
            return sf::cli::kExitConfig;
        }
        sf::kernels::set_isa(sf::kernels::Isa::avx2);
    }

    const CommandOutcome out = sf::cli::run_command([&]() -> CommandOutcome {
        if (*c_synth) {
            if (o_synth_seed->count()) synth.seed = synth_seed;
            return sf::cli::cmd_synth(synth, log);
        }
        if (*c_prep) return sf::cli::cmd_prepare(prep, log);
        if (*c_train) {
            train.mode = parse_opt<sf::training::TrainMode>(mode, sf::training::mode_from_string);
            train.fusion = parse_opt<sf::fusion::FusionKind>(fusion, sf::fusion::fusion_from_string);
            train.attention = on_off(attention);
            train.arch = parse_opt<sf::backbone::Architecture>(arch, sf::backbone::architecture_from_string);
            if (o_train_seed->count()) train.seed = train_seed;
            if (o_epochs->count()) train.epochs = epochs;
            if (o_runs->count()) train.runs = runs;
            if (deterministic) train.deterministic = true;
            return sf::cli::cmd_train(train, log);
        }
        if (*c_eval) return sf::cli::cmd_eval(eval, log);
        if (*c_embed) return sf::cli::cmd_embed(embed, log);
        return sf::cli::cmd_report(report, log);
    });
    if (out.exit_code != 0) {
        std::cerr << "error: " << out.summary << '\n';
    } else {
        std::cout << out.summary << '\n';
    }
    return out.exit_code;
}
