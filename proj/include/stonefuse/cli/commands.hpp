#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stonefuse/dataset/cache.hpp"
#include "stonefuse/evaluation/embedding.hpp"
#include "stonefuse/training/config.hpp"

namespace stonefuse::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

struct CommandOutcome {
    int exit_code = kExitOk;
    std::vector<std::filesystem::path> artifacts_written;
    std::string summary;
};

using LogFn = std::function<void(const std::string&)>;

struct SynthArgs {
    std::filesystem::path config;  // optional SynthConfig JSON
    std::filesystem::path out_dir;
    std::optional<std::uint64_t> seed;
};

struct PrepareArgs {
    std::filesystem::path manifest;
    std::filesystem::path out_dir;
    dataset::PrepareConfig config;
};

struct TrainArgs {
    std::filesystem::path config;  // optional TrainConfig JSON; flags below override it
    std::filesystem::path data;    // prepare output directory or its patches/index.jsonl
    std::optional<training::TrainMode> mode;
    std::optional<fusion::FusionKind> fusion;
    std::optional<bool> attention;
    std::optional<backbone::Architecture> arch;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> runs;
    std::optional<bool> deterministic;
    std::size_t jobs = 1;
    std::filesystem::path base;  // mixed-mode checkpoint or run directory (mv only)
    // Run directory; when empty, <runs_root>/<timestamp>-<tag>.
    std::filesystem::path run_dir;
    std::filesystem::path runs_root = "runs";
    std::string tag;
};

struct EvalArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::filesystem::path out_dir;  // default: <checkpoint dir>/eval-<checkpoint stem>
};

struct EmbedArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::filesystem::path out_dir;  // default: <checkpoint dir>/embed-<checkpoint stem>
    std::uint64_t seed = 0;
    evaluation::UmapOptions umap;
};

struct ReportArgs {
    std::vector<std::filesystem::path> run_dirs;
    std::filesystem::path out_dir;  // default: the first run directory
};

// Each command throws on failure; run_command maps exceptions to exit codes.
CommandOutcome cmd_synth(const SynthArgs& args, const LogFn& log = {});
CommandOutcome cmd_prepare(const PrepareArgs& args, const LogFn& log = {});
// Trains into a staging directory that is renamed into place only on success.
CommandOutcome cmd_train(const TrainArgs& args, const LogFn& log = {});
CommandOutcome cmd_eval(const EvalArgs& args, const LogFn& log = {});
CommandOutcome cmd_embed(const EmbedArgs& args, const LogFn& log = {});
CommandOutcome cmd_report(const ReportArgs& args, const LogFn& log = {});

// ConfigError -> 2, DataError (including checkpoint errors) -> 3,
// DivergenceError -> 4, anything else -> 1.
int exit_code_for(const std::exception_ptr& error);

// Runs `fn`, turning exceptions into an outcome with the mapped exit code and
// the error message as summary.
CommandOutcome run_command(const std::function<CommandOutcome()>& fn);

// Display name of a trained model, e.g. "MV concat + attention".
std::string model_name(training::TrainMode mode, std::optional<fusion::FusionKind> fusion, bool attention);

// Resolves a prepare output directory (or an index path) to its patch index.
dataset::PatchIndex open_patch_index(const std::filesystem::path& data);

}  // namespace stonefuse::cli
