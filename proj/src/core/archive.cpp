#include "stonefuse/core/archive.hpp"

#include <bit>
#include <cstring>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/core/io.hpp"

namespace stonefuse {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'F', 'A', 'R'};

template <typename U>
void put_raw(std::string& out, U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

class Reader {
public:
    explicit Reader(const std::string& bytes, std::size_t limit) : bytes_(bytes), limit_(limit) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    const char* take(std::size_t n) {
        need(n);
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > limit_) throw CheckpointError("archive truncated");
    }
    const std::string& bytes_;
    std::size_t limit_;
    std::size_t pos_ = 0;
};

template <typename T>
void put_tensor(std::string& out, std::uint8_t dtype, const Tensor<T>& t) {
    put_raw<std::uint8_t>(out, dtype);
    put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_raw<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(T));
}

template <typename T>
Tensor<T> read_tensor(Reader& r, const Shape& shape) {
    const std::size_t n = shape_numel(shape);
    std::vector<T> data(n);
    if (n) std::memcpy(data.data(), r.take(n * sizeof(T)), n * sizeof(T));
    return Tensor<T>(shape, std::move(data));
}

}  // namespace

template <typename T>
Tensor<T> TensorArchive::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw CheckpointError("archive has no tensor named '" + name + "'");
    return std::visit([](const auto& t) { return t.template cast<T>(); }, it->second);
}

template Tensor<float> TensorArchive::get<float>(const std::string&) const;
template Tensor<double> TensorArchive::get<double>(const std::string&) const;

std::string TensorArchive::serialize() const {
    std::string out(kMagic, 4);
    put_raw<std::uint32_t>(out, kVersion);
    const std::string meta = metadata.dump();
    put_raw<std::uint64_t>(out, meta.size());
    out += meta;
    put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, value] : tensors) {
        put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        if (const auto* f = std::get_if<Tensor<float>>(&value)) {
            put_tensor(out, 0, *f);
        } else {
            put_tensor(out, 1, std::get<Tensor<double>>(value));
        }
    }
    put_raw<std::uint32_t>(out, crc32(out));
    return out;
}

TensorArchive TensorArchive::deserialize(const std::string& bytes) {
    if (bytes.size() < 4 + 4 + 8 + 4 + 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointError("not a stonefuse archive (bad magic)");
    }
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + body, 4);
    if (crc32(std::string_view(bytes.data(), body)) != stored_crc) {
        throw CheckpointError("archive checksum mismatch (file corrupted)");
    }
    Reader r(bytes, body);
    r.take(4);
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) {
        throw CheckpointError("unsupported archive version " + std::to_string(version) + " (expected " +
                              std::to_string(kVersion) + ")");
    }
    TensorArchive ar;
    const auto meta_len = r.get<std::uint64_t>();
    try {
        ar.metadata = nlohmann::json::parse(r.get_bytes(meta_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("archive metadata is not valid JSON: ") + e.what());
    }
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.get<std::uint32_t>();
        std::string name = r.get_bytes(name_len);
        const auto dtype = r.get<std::uint8_t>();
        const auto rank = r.get<std::uint32_t>();
        Shape shape(rank);
        for (auto& d : shape) d = r.get<std::uint64_t>();
        if (dtype == 0) {
            ar.tensors.emplace(std::move(name), read_tensor<float>(r, shape));
        } else if (dtype == 1) {
            ar.tensors.emplace(std::move(name), read_tensor<double>(r, shape));
        } else {
            throw CheckpointError("archive tensor '" + name + "' has unknown dtype");
        }
    }
    if (r.pos() != body) throw CheckpointError("archive has trailing bytes");
    return ar;
}

void TensorArchive::save(const std::filesystem::path& path) const { atomic_write(path, serialize()); }

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("file not found: " + path.string());
    return deserialize(read_file(path));
}

}  // namespace stonefuse
