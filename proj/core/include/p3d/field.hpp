#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "p3d/error.hpp"

namespace p3d {

/// Dense 2D scalar field. Axis 0 (`nx`) is the fast axis, so element (i, j)
/// lives at `j * nx + i`. Slices of a volume keep the volume's axis order.
class Image {
public:
    Image() = default;
    Image(std::size_t nx, std::size_t ny, double fill = 0.0)
        : nx_(nx), ny_(ny), data_(nx * ny, fill) {}
    Image(std::size_t nx, std::size_t ny, std::vector<double> data)
        : nx_(nx), ny_(ny), data_(std::move(data)) {
        if (data_.size() != nx_ * ny_) throw DimensionError("Image: data length does not match shape");
    }

    std::size_t nx() const noexcept { return nx_; }
    std::size_t ny() const noexcept { return ny_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[j * nx_ + i]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[j * nx_ + i]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool same_shape(const Image& o) const noexcept { return nx_ == o.nx_ && ny_ == o.ny_; }
    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    std::vector<double> data_;
};

/// Multi-channel 2D field laid out channel-major: (channel, y, x), x fastest.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
        : c_(channels), h_(height), w_(width), data_(channels * height * width, fill) {}

    std::size_t channels() const noexcept { return c_; }
    std::size_t height() const noexcept { return h_; }
    std::size_t width() const noexcept { return w_; }
    std::size_t plane_size() const noexcept { return h_ * w_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[(c * h_ + y) * w_ + x];
    }
    double operator()(std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[(c * h_ + y) * w_ + x];
    }

    std::span<double> channel(std::size_t c) noexcept { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const double> channel(std::size_t c) const noexcept {
        return {data_.data() + c * plane_size(), plane_size()};
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    bool same_shape(const FeatureMap& o) const noexcept { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
    std::size_t c_ = 0;
    std::size_t h_ = 0;
    std::size_t w_ = 0;
    std::vector<double> data_;
};

/// Single-channel view of an image as a feature map (height = ny, width = nx).
FeatureMap to_feature_map(const Image& img);
Image to_image(const FeatureMap& fm);

}  // namespace p3d
