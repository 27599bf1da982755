#include "pathogan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "pathogan/error.hpp"
#include "pathogan/simd/kernels.hpp"

namespace pathogan {

Image8 Image8::crop(int row, int col, int rows, int cols) const {
    require(row >= 0 && col >= 0 && row + rows <= height && col + cols <= width,
            "crop window outside image");
    Image8 out(rows, cols, channels);
    const std::size_t span = static_cast<std::size_t>(cols) * channels;
    for (int r = 0; r < rows; ++r) std::copy_n(px(row + r, col), span, out.px(r, 0));
    return out;
}

std::size_t Mask::count() const { return simd::kernels().count_nonzero(data.data(), data.size()); }

std::size_t Mask::count_window(int row, int col, int rows, int cols) const {
    require(row >= 0 && col >= 0 && row + rows <= height && col + cols <= width,
            "window outside mask");
    const auto& k = simd::kernels();
    std::size_t total = 0;
    for (int r = 0; r < rows; ++r)
        total += k.count_nonzero(data.data() + static_cast<std::size_t>(row + r) * width + col, cols);
    return total;
}

Mask Mask::crop(int row, int col, int rows, int cols) const {
    require(row >= 0 && col >= 0 && row + rows <= height && col + cols <= width,
            "crop window outside mask");
    Mask out(rows, cols);
    for (int r = 0; r < rows; ++r)
        std::copy_n(data.data() + static_cast<std::size_t>(row + r) * width + col, cols,
                    out.data.data() + static_cast<std::size_t>(r) * cols);
    return out;
}

PlanarImage to_signed_unit(const Image8& image) {
    PlanarImage out(image.channels, image.height, image.width);
    const std::size_t plane = out.plane_size();
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < image.channels; ++c)
            out.data[c * plane + p] = static_cast<float>(image.data[p * image.channels + c]) / 127.5f - 1.0f;
    return out;
}

Image8 from_signed_unit(const PlanarImage& image) {
    Image8 out(image.height, image.width, image.channels);
    const std::size_t plane = image.plane_size();
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < image.channels; ++c) {
            const float v = (image.data[c * plane + p] + 1.0f) * 127.5f;
            out.data[p * image.channels + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr file(std::fopen(path.c_str(), mode));
    if (!file) throw IoError("cannot open " + path.string());
    return file;
}

// Raw decode; returns 1 (gray) or 3 (RGB) channels at 8 bits.
Image8 decode_png(const std::filesystem::path& path) {
    auto file = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    // Objects that must survive a longjmp are constructed before setjmp.
    Image8 image;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    image = Image8(height, width, channels);
    rows.resize(height);
    for (int r = 0; r < height; ++r) rows[r] = image.px(r, 0);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void encode_png(const std::filesystem::path& path, const Image8& image) {
    if (image.channels != 1 && image.channels != 3) throw InvalidInput("PNG writer expects 1 or 3 channels");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("cannot write PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, image.width, image.height, 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < image.height; ++r) png_write_row(png, const_cast<png_bytep>(image.px(r, 0)));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

Image8 read_png(const std::filesystem::path& path) { return decode_png(path); }

void write_png(const std::filesystem::path& path, const Image8& image) { encode_png(path, image); }

Mask read_mask_png(const std::filesystem::path& path) {
    const Image8 raw = decode_png(path);
    Mask mask(raw.height, raw.width);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        bool set = false;
        for (int c = 0; c < raw.channels; ++c) set = set || raw.data[i * raw.channels + c] != 0;
        mask.data[i] = set ? 1 : 0;
    }
    return mask;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
    Image8 gray(mask.height, mask.width, 1);
    for (std::size_t i = 0; i < mask.size(); ++i) gray.data[i] = mask.data[i] ? 255 : 0;
    encode_png(path, gray);
}

}  // namespace pathogan
