#include "stonefuse/training/checkpoint.hpp"

#include <set>

#include "stonefuse/core/archive.hpp"
#include "stonefuse/core/errors.hpp"

namespace stonefuse::training {

namespace {

constexpr const char* kFormat = "stonefuse-checkpoint";

nlohmann::json info_json(const CheckpointInfo& info) {
    nlohmann::json j{{"format", kFormat},
                     {"format_version", CheckpointInfo::kFormatVersion},
                     {"kind", info.kind == ModelKind::single_view ? "single_view" : "multi_view"},
                     {"mode", to_string(info.mode)},
                     {"backbone", backbone::to_json(info.backbone)},
                     {"head", backbone::to_json(info.head)},
                     {"fusion", nullptr},
                     {"trained", info.trained},
                     {"config_fingerprint", info.config_fingerprint},
                     {"run_index", info.run_index},
                     {"seed", info.seed}};
    if (info.fusion) j["fusion"] = fusion::to_string(info.fusion->kind);
    return j;
}

CheckpointInfo parse_info(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string()) != kFormat) throw CheckpointError("not a stonefuse checkpoint");
        const int version = j.at("format_version").get<int>();
        if (version != CheckpointInfo::kFormatVersion) {
            throw CheckpointError("unsupported checkpoint format version " + std::to_string(version) + " (expected " +
                                  std::to_string(CheckpointInfo::kFormatVersion) + ")");
        }
        CheckpointInfo info;
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "single_view") info.kind = ModelKind::single_view;
        else if (kind == "multi_view") info.kind = ModelKind::multi_view;
        else throw CheckpointError("unknown model kind '" + kind + "'");
        info.mode = mode_from_string(j.at("mode").get<std::string>());
        info.backbone = backbone::backbone_spec_from_json(j.at("backbone"));
        info.head = backbone::head_spec_from_json(j.at("head"));
        if (!j.at("fusion").is_null()) {
            info.fusion = fusion::FusionStrategy{fusion::fusion_from_string(j["fusion"].get<std::string>())};
        }
        info.trained = j.at("trained").get<bool>();
        info.config_fingerprint = j.at("config_fingerprint").get<std::string>();
        info.run_index = j.at("run_index").get<std::size_t>();
        info.seed = j.at("seed").get<std::uint64_t>();
        if (info.kind == ModelKind::multi_view && !info.fusion) throw CheckpointError("multi-view checkpoint lacks fusion");
        return info;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("invalid checkpoint metadata: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("invalid checkpoint metadata: ") + e.what());
    }
}

template <typename T>
void put_state(TensorArchive& archive, const std::vector<nn::ParamRef<T>>& params,
               const std::vector<nn::BufferRef<T>>& buffers) {
    for (const auto& p : params) archive.put(p.name, p.param->value);
    for (const auto& b : buffers) archive.put(b.name, *b.tensor);
}

template <typename T>
void restore_state(const TensorArchive& archive, const std::vector<nn::ParamRef<T>>& params,
                   const std::vector<nn::BufferRef<T>>& buffers) {
    std::set<std::string> expected;
    auto take = [&](const std::string& name, Tensor<T>& dst) {
        expected.insert(name);
        Tensor<T> src = archive.get<T>(name);
        if (src.shape() != dst.shape()) {
            throw CheckpointError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) +
                                  ", model expects " + shape_str(dst.shape()));
        }
        dst = std::move(src);
    };
    for (const auto& p : params) take(p.name, p.param->value);
    for (const auto& b : buffers) take(b.name, *b.tensor);
    for (const auto& [name, tensor] : archive.tensors) {
        if (!expected.count(name)) throw CheckpointError("checkpoint holds unexpected tensor '" + name + "'");
    }
}

std::pair<TensorArchive, CheckpointInfo> open(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
    TensorArchive archive = TensorArchive::load(path);
    CheckpointInfo info = parse_info(archive.metadata);
    return {std::move(archive), std::move(info)};
}

}  // namespace

void check_architecture(const backbone::BackboneSpec& stored, const backbone::BackboneSpec& expected) {
    auto fail = [](const std::string& field, const std::string& have, const std::string& want) {
        throw CheckpointError("checkpoint architecture mismatch: " + field + " is " + have + ", requested " + want);
    };
    if (stored.architecture != expected.architecture) {
        fail("arch", std::string(backbone::to_string(stored.architecture)),
             std::string(backbone::to_string(expected.architecture)));
    }
    if (stored.attention_enabled != expected.attention_enabled) {
        fail("attention", stored.attention_enabled ? "on" : "off", expected.attention_enabled ? "on" : "off");
    }
    if (stored.input_size != expected.input_size) {
        fail("input_size", std::to_string(stored.input_size), std::to_string(expected.input_size));
    }
    if (stored.reduction != expected.reduction) {
        fail("reduction", std::to_string(stored.reduction), std::to_string(expected.reduction));
    }
    if (stored.spatial_kernel != expected.spatial_kernel) {
        fail("spatial_kernel", std::to_string(stored.spatial_kernel), std::to_string(expected.spatial_kernel));
    }
}

CheckpointInfo inspect_checkpoint(const std::filesystem::path& path) { return open(path).second; }

template <typename T>
void save_checkpoint(backbone::SingleViewModel<T>& model, CheckpointInfo info, const std::filesystem::path& path) {
    info.kind = ModelKind::single_view;
    info.backbone = model.backbone_spec();
    info.head = model.head_spec();
    info.fusion.reset();
    info.trained = model.trained();
    TensorArchive archive;
    archive.metadata = info_json(info);
    put_state<T>(archive, model.parameters(), model.buffers());
    archive.save(path);
}

template <typename T>
void save_checkpoint(fusion::MultiViewModel<T>& model, CheckpointInfo info, const std::filesystem::path& path) {
    info.kind = ModelKind::multi_view;
    info.mode = TrainMode::multi_view;
    info.backbone = model.backbone_spec();
    info.head = model.head_spec();
    info.fusion = model.strategy();
    TensorArchive archive;
    archive.metadata = info_json(info);
    put_state<T>(archive, model.parameters(), model.buffers());
    archive.save(path);
}

template <typename T>
std::unique_ptr<backbone::SingleViewModel<T>> load_single_view(const std::filesystem::path& path,
                                                               const backbone::BackboneSpec* expected,
                                                               CheckpointInfo* info_out) {
    auto [archive, info] = open(path);
    if (info.kind != ModelKind::single_view) {
        throw CheckpointError(path.string() + " holds a multi-view model, expected a single-view one");
    }
    if (expected) check_architecture(info.backbone, *expected);
    auto model = std::make_unique<backbone::SingleViewModel<T>>(info.backbone, info.head, info.seed);
    restore_state<T>(archive, model->parameters(), model->buffers());
    model->set_trained(info.trained);
    if (info_out) *info_out = info;
    return model;
}

template <typename T>
std::unique_ptr<fusion::MultiViewModel<T>> load_multiview(const std::filesystem::path& path,
                                                          const backbone::BackboneSpec* expected,
                                                          CheckpointInfo* info_out) {
    auto [archive, info] = open(path);
    if (info.kind != ModelKind::multi_view) {
        throw CheckpointError(path.string() + " holds a single-view model, expected a multi-view one");
    }
    if (expected) check_architecture(info.backbone, *expected);
    auto model = std::make_unique<fusion::MultiViewModel<T>>(info.backbone, *info.fusion, info.head, info.seed);
    restore_state<T>(archive, model->parameters(), model->buffers());
    if (info_out) *info_out = info;
    return model;
}

#define STONEFUSE_INSTANTIATE(T)                                                                              \
    template void save_checkpoint<T>(backbone::SingleViewModel<T>&, CheckpointInfo, const std::filesystem::path&); \
    template void save_checkpoint<T>(fusion::MultiViewModel<T>&, CheckpointInfo, const std::filesystem::path&);    \
    template std::unique_ptr<backbone::SingleViewModel<T>> load_single_view<T>(                                 \
        const std::filesystem::path&, const backbone::BackboneSpec*, CheckpointInfo*);                          \
    template std::unique_ptr<fusion::MultiViewModel<T>> load_multiview<T>(                                      \
        const std::filesystem::path&, const backbone::BackboneSpec*, CheckpointInfo*);

STONEFUSE_INSTANTIATE(float)
STONEFUSE_INSTANTIATE(double)

}  // namespace stonefuse::training
