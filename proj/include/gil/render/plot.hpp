#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "image.hpp"

namespace gil {

namespace detail {

inline void draw_line(Image& img, long x0, long y0, long x1, long y1, Rgb8 c) {
    const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
        if (x0 >= 0 && y0 >= 0 && x0 < static_cast<long>(img.width) && y0 < static_cast<long>(img.height))
            img.set(static_cast<std::size_t>(x0), static_cast<std::size_t>(y0), c);
        if (x0 == x1 && y0 == y1) break;
        const long e2 = 2 * err;
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

}  // namespace detail

// Loss-per-epoch line plot: white background, gray axes with quarter
// gridlines, one colored polyline per series. The y range is [0, max].
inline Image plot_loss_curves(const std::vector<std::vector<double>>& series, std::size_t width = 480,
                              std::size_t height = 320) {
    constexpr std::array<Rgb8, 6> palette{{{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                           {214, 39, 40}, {148, 103, 189}, {140, 86, 75}}};
    constexpr long margin = 24;
    Image img(width, height, {255, 255, 255});
    const long left = margin, right = static_cast<long>(width) - margin / 2;
    const long top = margin / 2, bottom = static_cast<long>(height) - margin;

    std::size_t n = 0;
    double hi = 0.0;
    for (const auto& s : series) {
        n = std::max(n, s.size());
        for (double v : s)
            if (std::isfinite(v)) hi = std::max(hi, v);
    }
    if (hi <= 0.0) hi = 1.0;

    for (int q = 1; q <= 4; ++q) {
        const long y = bottom - (bottom - top) * q / 4;
        detail::draw_line(img, left, y, right, y, {230, 230, 230});
    }
    detail::draw_line(img, left, bottom, right, bottom, {96, 96, 96});
    detail::draw_line(img, left, bottom, left, top, {96, 96, 96});

    auto px = [&](std::size_t i) {
        return n <= 1 ? left : left + static_cast<long>(std::lround(double(right - left) * double(i) / double(n - 1)));
    };
    auto py = [&](double v) {
        const double t = std::isfinite(v) ? std::clamp(v / hi, 0.0, 1.0) : 1.0;
        return bottom - static_cast<long>(std::lround(double(bottom - top) * t));
    };
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const Rgb8 c = palette[k % palette.size()];
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i + 1 < s.size()) detail::draw_line(img, px(i), py(s[i]), px(i + 1), py(s[i + 1]), c);
            else detail::draw_line(img, px(i), py(s[i]), px(i), py(s[i]), c);
        }
    }
    return img;
}

}  // namespace gil
