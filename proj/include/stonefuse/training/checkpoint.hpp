#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "stonefuse/backbone/model.hpp"
#include "stonefuse/fusion/fusion.hpp"
#include "stonefuse/training/config.hpp"

namespace stonefuse::training {

enum class ModelKind : std::uint8_t { single_view, multi_view };

// Metadata stored alongside the weights. The tensors themselves live in a
// TensorArchive whose trailing CRC-32 detects corruption.
struct CheckpointInfo {
    static constexpr int kFormatVersion = 1;

    ModelKind kind = ModelKind::single_view;
    TrainMode mode = TrainMode::single_view_mixed;
    backbone::BackboneSpec backbone;
    backbone::HeadSpec head;
    std::optional<fusion::FusionStrategy> fusion;
    bool trained = false;
    std::string config_fingerprint;
    std::size_t run_index = 0;
    std::uint64_t seed = 0;
};

// Reads metadata only (the whole file is still checksummed).
CheckpointInfo inspect_checkpoint(const std::filesystem::path& path);

// `info.kind`, specs and fusion are taken from the model; the rest from `info`.
template <typename T>
void save_checkpoint(backbone::SingleViewModel<T>& model, CheckpointInfo info, const std::filesystem::path& path);
template <typename T>
void save_checkpoint(fusion::MultiViewModel<T>& model, CheckpointInfo info, const std::filesystem::path& path);

// When `expected` is given, its architecture, attention setting, input size
// and attention hyperparameters must match the stored backbone; otherwise a
// CheckpointError names the differing field.
template <typename T>
std::unique_ptr<backbone::SingleViewModel<T>> load_single_view(const std::filesystem::path& path,
                                                               const backbone::BackboneSpec* expected = nullptr,
                                                               CheckpointInfo* info = nullptr);
template <typename T>
std::unique_ptr<fusion::MultiViewModel<T>> load_multiview(const std::filesystem::path& path,
                                                          const backbone::BackboneSpec* expected = nullptr,
                                                          CheckpointInfo* info = nullptr);

// Throws CheckpointError describing the first field that differs.
void check_architecture(const backbone::BackboneSpec& stored, const backbone::BackboneSpec& expected);

}  // namespace stonefuse::training
