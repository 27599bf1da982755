#include "plot.hpp"

#include <algorithm>
#include <cmath>

#include "pathogan/error.hpp"

namespace pathogan::cli {

Canvas::Canvas(int width, int height, Rgb background) : image_(height, width, 3) {
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) std::copy(background.begin(), background.end(), image_.px(y, x));
}

void Canvas::put(int x, int y, Rgb color, double opacity) {
    if (x < 0 || y < 0 || x >= image_.width || y >= image_.height) return;
    auto* p = image_.px(y, x);
    for (int c = 0; c < 3; ++c) p[c] = static_cast<std::uint8_t>(std::lround((1.0 - opacity) * p[c] + opacity * color[c]));
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb color, double opacity) {
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) put(x, y, color, opacity);
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb color) {
    // Bresenham
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        put(x0, y0, color, 1.0);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void Canvas::blit(const Image8& image, int x, int y) {
    require(image.channels == 3, "blit expects an RGB image");
    for (int r = 0; r < image.height; ++r)
        for (int c = 0; c < image.width; ++c) {
            const auto* p = image.px(r, c);
            put(x + c, y + r, {p[0], p[1], p[2]}, 1.0);
        }
}

namespace {

constexpr int kMargin = 24;

void axes(Canvas& canvas, int width, int height) {
    canvas.line(kMargin, height - kMargin, width - kMargin, height - kMargin, kAxisColor);
    canvas.line(kMargin, kMargin, kMargin, height - kMargin, kAxisColor);
}

}  // namespace

Image8 histogram_plot(const Histogram& histogram, int width, int height) {
    Canvas canvas(width, height);
    const auto bins = std::max(histogram.normal.size(), histogram.tumor.size());
    std::size_t peak = 1;
    for (auto v : histogram.normal) peak = std::max(peak, v);
    for (auto v : histogram.tumor) peak = std::max(peak, v);
    const double plot_w = width - 2.0 * kMargin, plot_h = height - 2.0 * kMargin;
    auto draw = [&](const std::vector<std::size_t>& counts, Rgb color) {
        for (std::size_t b = 0; b < counts.size(); ++b) {
            const int x0 = kMargin + static_cast<int>(plot_w * b / bins);
            const int x1 = kMargin + static_cast<int>(plot_w * (b + 1) / bins) - 1;
            const int top = height - kMargin - static_cast<int>(std::lround(plot_h * counts[b] / peak));
            if (counts[b] > 0) canvas.fill_rect(x0, top, x1, height - kMargin - 1, color, 0.5);
        }
    };
    if (bins > 0) {
        draw(histogram.normal, kNormalColor);
        draw(histogram.tumor, kTumorColor);
    }
    axes(canvas, width, height);
    return canvas.image();
}

Image8 curves_plot(const std::vector<std::vector<double>>& series, const std::vector<Rgb>& colors, int width,
                   int height) {
    require(colors.size() >= series.size(), "one colour per series");
    Canvas canvas(width, height);
    double lo = INFINITY, hi = -INFINITY;
    std::size_t longest = 0;
    for (const auto& s : series) {
        longest = std::max(longest, s.size());
        for (double v : s)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }
    axes(canvas, width, height);
    if (longest == 0 || !std::isfinite(lo)) return canvas.image();
    if (hi == lo) hi = lo + 1.0;
    const double plot_w = width - 2.0 * kMargin, plot_h = height - 2.0 * kMargin;
    auto px = [&](std::size_t i) { return kMargin + static_cast<int>(std::lround(plot_w * i / std::max<std::size_t>(1, longest - 1))); };
    auto py = [&](double v) { return height - kMargin - static_cast<int>(std::lround(plot_h * (v - lo) / (hi - lo))); };
    if (lo < 0.0 && hi > 0.0) canvas.line(kMargin, py(0.0), width - kMargin, py(0.0), {200, 200, 200});
    for (std::size_t k = 0; k < series.size(); ++k)
        for (std::size_t i = 1; i < series[k].size(); ++i)
            canvas.line(px(i - 1), py(series[k][i - 1]), px(i), py(series[k][i]), colors[k]);
    if (longest == 1)
        for (std::size_t k = 0; k < series.size(); ++k)
            if (!series[k].empty()) canvas.fill_rect(px(0) - 2, py(series[k][0]) - 2, px(0) + 2, py(series[k][0]) + 2, colors[k]);
    return canvas.image();
}

Image8 heatmap(const ResidualMap& residual, double vmax) {
    Image8 out(residual.height, residual.width, 3);
    for (int r = 0; r < residual.height; ++r)
        for (int c = 0; c < residual.width; ++c) {
            const double t = vmax > 0.0 ? std::clamp(residual.at(r, c) / vmax, 0.0, 1.0) : 0.0;
            auto* p = out.px(r, c);
            p[0] = static_cast<std::uint8_t>(std::lround(255.0 * std::min(1.0, 2.0 * t)));
            p[1] = static_cast<std::uint8_t>(std::lround(255.0 * std::max(0.0, 2.0 * t - 1.0)));
            p[2] = 0;
        }
    return out;
}

Image8 mask_image(const Mask& mask) {
    Image8 out(mask.height, mask.width, 3);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c) std::fill_n(out.px(r, c), 3, mask.at(r, c) ? 255 : 0);
    return out;
}

Image8 upscale(const Image8& image, int factor) {
    require(factor >= 1, "upscale factor must be positive");
    Image8 out(image.height * factor, image.width * factor, image.channels);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            std::copy_n(image.px(r / factor, c / factor), image.channels, out.px(r, c));
    return out;
}

Image8 image_grid(const std::vector<std::vector<Image8>>& rows, int pad) {
    require(!rows.empty() && !rows.front().empty(), "image grid needs at least one tile");
    const int th = rows.front().front().height, tw = rows.front().front().width;
    std::size_t cols = 0;
    for (const auto& row : rows) cols = std::max(cols, row.size());
    Canvas canvas(static_cast<int>(cols) * (tw + pad) + pad, static_cast<int>(rows.size()) * (th + pad) + pad);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            require(rows[r][c].height == th && rows[r][c].width == tw, "grid tiles must share one size");
            canvas.blit(rows[r][c], pad + static_cast<int>(c) * (tw + pad), pad + static_cast<int>(r) * (th + pad));
        }
    return canvas.image();
}

}  // namespace pathogan::cli
