#include "stonefuse/dataset/image.hpp"

#include <png.h>

#include <string>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/core/io.hpp"

namespace stonefuse::dataset {

Image read_png(const std::filesystem::path& path) {
    const std::string bytes = [&] {
        try {
            return read_file(path);
        } catch (const std::exception& e) {
            throw DataError("cannot read image " + path.string() + ": " + e.what());
        }
    }();
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
        throw DataError("invalid PNG " + path.string() + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    Image out(img.width, img.height);
    if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw DataError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.rgb.size() != image.width * image.height * 3 || image.width == 0 || image.height == 0) {
        throw DataError("write_png: malformed image buffer for " + path.string());
    }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    img.flags = PNG_IMAGE_FLAG_FAST;
    // Worst-case size up front; sizing first would encode twice.
    png_alloc_size_t size = PNG_IMAGE_PNG_SIZE_MAX(img);
    std::string buffer(size, '\0');
    if (!png_image_write_to_memory(&img, buffer.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
        throw DataError("cannot encode PNG for " + path.string() + ": " + img.message);
    }
    buffer.resize(size);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    atomic_write(path, buffer);
}

}  // namespace stonefuse::dataset
