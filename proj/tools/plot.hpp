#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pathogan/anomaly.hpp"
#include "pathogan/image.hpp"

namespace pathogan::cli {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kNormalColor{40, 110, 200};
inline constexpr Rgb kTumorColor{210, 60, 50};
inline constexpr Rgb kAxisColor{60, 60, 60};

// Minimal raster drawing for the static report figures.
class Canvas {
public:
    Canvas(int width, int height, Rgb background = {255, 255, 255});

    void fill_rect(int x0, int y0, int x1, int y1, Rgb color, double opacity = 1.0);
    void line(int x0, int y0, int x1, int y1, Rgb color);
    void blit(const Image8& image, int x, int y);
    const Image8& image() const { return image_; }

private:
    void put(int x, int y, Rgb color, double opacity);
    Image8 image_;
};

// Overlaid normal / tumor score histograms.
Image8 histogram_plot(const Histogram& histogram, int width = 480, int height = 320);

// One polyline per series on shared axes; x is the sample index.
Image8 curves_plot(const std::vector<std::vector<double>>& series, const std::vector<Rgb>& colors, int width = 480,
                   int height = 320);

// Residual values mapped to a dark-to-bright red ramp, `vmax` saturating.
Image8 heatmap(const ResidualMap& residual, double vmax);
Image8 mask_image(const Mask& mask);
Image8 upscale(const Image8& image, int factor);

// Rows of equally sized tiles separated by `pad` white pixels.
Image8 image_grid(const std::vector<std::vector<Image8>>& rows, int pad = 2);

}  // namespace pathogan::cli
