#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "stonefuse/core/tensor.hpp"

namespace stonefuse {

// Single-file container of named tensors plus JSON metadata, terminated by a
// CRC-32 of all preceding bytes.
//
//   "SFAR" | u32 version | u64 meta_len | meta JSON
//   | u32 count | { u32 name_len | name | u8 dtype | u32 rank | u64 dims[rank] | data }*
//   | u32 crc32
//
// Integers and floats are little-endian; dtype 0 = float32, 1 = float64.
struct TensorArchive {
    static constexpr std::uint32_t kVersion = 1;

    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, std::variant<Tensor<float>, Tensor<double>>> tensors;

    template <typename T>
    void put(const std::string& name, const Tensor<T>& t) {
        tensors.insert_or_assign(name, t);
    }

    bool contains(const std::string& name) const { return tensors.count(name) != 0; }

    // Returns the named tensor converted to T; throws CheckpointError when absent.
    template <typename T>
    Tensor<T> get(const std::string& name) const;

    std::string serialize() const;
    static TensorArchive deserialize(const std::string& bytes);

    void save(const std::filesystem::path& path) const;
    static TensorArchive load(const std::filesystem::path& path);
};

}  // namespace stonefuse
