#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pathogan {

// 8-bit raster, channels interleaved (HWC).
struct Image8 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    Image8() = default;
    Image8(int h, int w, int c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    std::uint8_t* px(int row, int col) { return data.data() + (static_cast<std::size_t>(row) * width + col) * channels; }
    const std::uint8_t* px(int row, int col) const { return data.data() + (static_cast<std::size_t>(row) * width + col) * channels; }

    // Copies the rows x cols window whose top-left corner is (row, col).
    Image8 crop(int row, int col, int rows, int cols) const;

    bool operator==(const Image8&) const = default;
};

// Boolean raster stored one byte per pixel (0 or 1).
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int h, int w, bool fill = false)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

    std::uint8_t& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
    std::uint8_t at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
    std::size_t size() const { return data.size(); }
    std::size_t count() const;
    // Number of set pixels in a window; the window must lie inside the mask.
    std::size_t count_window(int row, int col, int rows, int cols) const;
    Mask crop(int row, int col, int rows, int cols) const;

    bool operator==(const Mask&) const = default;
};

// Float raster with planar channels (CHW), the layout networks consume.
struct PlanarImage {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    PlanarImage() = default;
    PlanarImage(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    std::span<float> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
    std::span<const float> plane(int c) const { return {data.data() + c * plane_size(), plane_size()}; }
    float& at(int c, int row, int col) { return data[c * plane_size() + static_cast<std::size_t>(row) * width + col]; }
    float at(int c, int row, int col) const { return data[c * plane_size() + static_cast<std::size_t>(row) * width + col]; }

    bool operator==(const PlanarImage&) const = default;
};

// pixel / 127.5 - 1, channels de-interleaved.
PlanarImage to_signed_unit(const Image8& image);
// Inverse of to_signed_unit with clamping and round-half-away rounding.
Image8 from_signed_unit(const PlanarImage& image);

// Lossless PNG I/O. RGB images keep 3 channels (alpha is dropped, palettes
// and 16-bit depths are reduced to 8-bit RGB); grayscale images load with
// one channel. Masks are written as 0/255 grayscale and read as nonzero.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace pathogan
