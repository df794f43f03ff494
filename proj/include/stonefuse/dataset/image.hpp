#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace stonefuse::dataset {

// 8-bit RGB, row-major, interleaved (HWC).
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
    bool operator==(const Image&) const = default;
};

// Any PNG libpng understands is converted to 8-bit RGB. DataError on failure.
Image read_png(const std::filesystem::path& path);
// Atomic: encodes in memory, then write-then-rename.
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace stonefuse::dataset
