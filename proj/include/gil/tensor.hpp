#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace gil {

// Dense height x width x channels array, row-major (h, w, c).
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0)
        : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {}
    Tensor3(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data)
        : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
        if (data_.size() != height_ * width_ * channels_) {
            throw ShapeError("Tensor3: data length " + std::to_string(data_.size()) + " does not match " +
                             shape_string());
        }
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::size_t index(std::size_t y, std::size_t x, std::size_t c) const noexcept {
        return (y * width_ + x) * channels_ + c;
    }
    double& operator()(std::size_t y, std::size_t x, std::size_t c) noexcept { return data_[index(y, x, c)]; }
    double operator()(std::size_t y, std::size_t x, std::size_t c) const noexcept { return data_[index(y, x, c)]; }

    // All channels of one site.
    std::span<double> site(std::size_t y, std::size_t x) noexcept {
        return {data_.data() + index(y, x, 0), channels_};
    }
    std::span<const double> site(std::size_t y, std::size_t x) const noexcept {
        return {data_.data() + index(y, x, 0), channels_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool same_shape(const Tensor3& o) const noexcept {
        return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
    }

    bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_string() const {
        return std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_);
    }

    bool operator==(const Tensor3&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

inline void require_shape(const Tensor3& t, std::size_t h, std::size_t w, std::size_t c, const char* who) {
    if (t.height() != h || t.width() != w || t.channels() != c) {
        throw ShapeError(std::string(who) + ": expected " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                         std::to_string(c) + ", got " + t.shape_string());
    }
}

}  // namespace gil
