#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "../world.hpp"

namespace gil {

using Rgb8 = std::array<std::uint8_t, 3>;

// 8-bit RGB, row-major.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(std::size_t w, std::size_t h, Rgb8 fill = {0, 0, 0}) : width(w), height(h), pixels(w * h * 3) {
        for (std::size_t i = 0; i < w * h; ++i) set(i % w, i / w, fill);
    }

    Rgb8 at(std::size_t x, std::size_t y) const noexcept {
        const std::uint8_t* p = pixels.data() + (y * width + x) * 3;
        return {p[0], p[1], p[2]};
    }
    void set(std::size_t x, std::size_t y, Rgb8 c) noexcept {
        std::uint8_t* p = pixels.data() + (y * width + x) * 3;
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    }

    bool operator==(const Image&) const = default;
};

inline std::uint8_t to_byte(double unit) noexcept {
    return static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
}

// Each site becomes a scale x scale block: round(color * 255) when occupied,
// `background` when empty.
inline Image render_frame(const Grid& grid, std::size_t scale = 6, Rgb8 background = {0, 0, 0}) {
    if (scale < 1) throw ContractViolation("render_frame: scale must be >= 1");
    Image img(grid.width() * scale, grid.height() * scale, background);
    for (int y = 0; y < static_cast<int>(grid.height()); ++y) {
        for (int x = 0; x < static_cast<int>(grid.width()); ++x) {
            const Position p{x, y};
            if (!grid.occupied(p)) continue;
            const auto s = grid.site(p);
            const Rgb8 c{to_byte(s[channel::red]), to_byte(s[channel::green]), to_byte(s[channel::blue])};
            for (std::size_t dy = 0; dy < scale; ++dy)
                for (std::size_t dx = 0; dx < scale; ++dx) img.set(x * scale + dx, y * scale + dy, c);
        }
    }
    return img;
}

}  // namespace gil
