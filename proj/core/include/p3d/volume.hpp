#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "p3d/field.hpp"

namespace p3d {

/// Orthogonal slicing planes. The sampler alternates XY and XZ; YZ exists for
/// per-plane evaluation.
enum class Plane { XY, XZ, YZ };

std::string_view to_string(Plane p) noexcept;
Plane plane_from_string(std::string_view s);

using Dims = std::array<std::size_t, 3>;

/// Dense 3D scalar field stored as 32-bit floats, x fastest and z slowest.
/// Every dimension must be even and at least 2 so any slice has a one-level
/// Haar decomposition; all values must be finite.
class Volume {
public:
    Volume() = default;
    Volume(Dims dims, float fill = 0.0f);
    Volume(Dims dims, std::vector<float> data);

    const Dims& dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return data_.size(); }

    float& operator()(std::size_t x, std::size_t y, std::size_t z) noexcept { return data_[index(x, y, z)]; }
    float operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept { return data_[index(x, y, z)]; }

    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return (z * dims_[1] + y) * dims_[0] + x;
    }

    /// Number of slices along the axis normal to `plane`.
    std::size_t slice_count(Plane plane) const noexcept;

    friend bool operator==(const Volume&, const Volume&) = default;

private:
    Dims dims_{0, 0, 0};
    std::vector<float> data_;
};

/// A copy of one orthogonal section. XY slices have shape (d1, d2), XZ slices
/// (d1, d3) and YZ slices (d2, d3); the first axis is the fast one.
struct Slice {
    Plane plane = Plane::XY;
    std::size_t index = 0;
    Image pixels;
};

/// Shape (fast, slow) of a slice of `plane`.
std::array<std::size_t, 2> slice_shape(const Dims& dims, Plane plane) noexcept;

Slice slice(const Volume& vol, Plane plane, std::size_t i);
void put_slice(Volume& vol, const Slice& s);
Volume put_slice(const Volume& vol, const Slice& s);

/// Rescales values to [0, 1] using the volume's own min and max. A constant
/// volume maps to zeros.
void normalize_min_max(Volume& vol);

void clamp(Volume& vol, float lo, float hi);

Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& vol, const std::filesystem::path& path);

}  // namespace p3d
