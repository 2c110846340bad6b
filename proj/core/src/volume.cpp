#include "p3d/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace p3d {

namespace {

void check_dims(const Dims& d) {
    for (std::size_t k = 0; k < 3; ++k) {
        if (d[k] < 2 || d[k] % 2 != 0) {
            throw DimensionError("volume dimension d" + std::to_string(k + 1) + " = " + std::to_string(d[k]) +
                                 " must be even and >= 2");
        }
    }
}

void check_finite(std::span<const float> v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw IoError("non-finite voxel value at linear index " + std::to_string(i));
    }
}

}  // namespace

FeatureMap to_feature_map(const Image& img) {
    FeatureMap fm(1, img.ny(), img.nx());
    std::copy(img.values().begin(), img.values().end(), fm.values().begin());
    return fm;
}

Image to_image(const FeatureMap& fm) {
    if (fm.channels() != 1) throw DimensionError("to_image: expected a single channel");
    return Image(fm.width(), fm.height(), std::vector<double>(fm.values().begin(), fm.values().end()));
}

std::string_view to_string(Plane p) noexcept {
    switch (p) {
        case Plane::XY: return "xy";
        case Plane::XZ: return "xz";
        case Plane::YZ: return "yz";
    }
    return "?";
}

Plane plane_from_string(std::string_view s) {
    if (s == "xy" || s == "XY") return Plane::XY;
    if (s == "xz" || s == "XZ") return Plane::XZ;
    if (s == "yz" || s == "YZ") return Plane::YZ;
    throw ParameterError("unknown plane '" + std::string(s) + "'");
}

Volume::Volume(Dims dims, float fill) : dims_(dims) {
    check_dims(dims_);
    data_.assign(dims_[0] * dims_[1] * dims_[2], fill);
}

Volume::Volume(Dims dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
    check_dims(dims_);
    if (data_.size() != dims_[0] * dims_[1] * dims_[2]) {
        throw DimensionError("volume data length " + std::to_string(data_.size()) + " does not match dims product " +
                             std::to_string(dims_[0] * dims_[1] * dims_[2]));
    }
    for (float v : data_) {
        if (!std::isfinite(v)) throw DimensionError("volume contains a non-finite value");
    }
}

std::size_t Volume::slice_count(Plane plane) const noexcept {
    switch (plane) {
        case Plane::XY: return dims_[2];
        case Plane::XZ: return dims_[1];
        case Plane::YZ: return dims_[0];
    }
    return 0;
}

std::array<std::size_t, 2> slice_shape(const Dims& d, Plane plane) noexcept {
    switch (plane) {
        case Plane::XY: return {d[0], d[1]};
        case Plane::XZ: return {d[0], d[2]};
        case Plane::YZ: return {d[1], d[2]};
    }
    return {0, 0};
}

Slice slice(const Volume& vol, Plane plane, std::size_t i) {
    const auto& d = vol.dims();
    if (i >= vol.slice_count(plane)) {
        throw BoundsError("slice index " + std::to_string(i) + " out of range for plane " +
                          std::string(to_string(plane)) + " (count " + std::to_string(vol.slice_count(plane)) + ")");
    }
    auto [na, nb] = slice_shape(d, plane);
    Image img(na, nb);
    switch (plane) {
        case Plane::XY: {
            const float* src = vol.values().data() + vol.index(0, 0, i);
            for (std::size_t k = 0; k < na * nb; ++k) img.values()[k] = src[k];
            break;
        }
        case Plane::XZ:
            for (std::size_t z = 0; z < nb; ++z)
                for (std::size_t x = 0; x < na; ++x) img(x, z) = vol(x, i, z);
            break;
        case Plane::YZ:
            for (std::size_t z = 0; z < nb; ++z)
                for (std::size_t y = 0; y < na; ++y) img(y, z) = vol(i, y, z);
            break;
    }
    return Slice{plane, i, std::move(img)};
}

void put_slice(Volume& vol, const Slice& s) {
    const auto& d = vol.dims();
    if (s.index >= vol.slice_count(s.plane)) {
        throw BoundsError("put_slice index " + std::to_string(s.index) + " out of range");
    }
    auto [na, nb] = slice_shape(d, s.plane);
    if (s.pixels.nx() != na || s.pixels.ny() != nb) {
        throw DimensionError("put_slice: slice shape (" + std::to_string(s.pixels.nx()) + ", " +
                             std::to_string(s.pixels.ny()) + ") does not match plane shape (" + std::to_string(na) +
                             ", " + std::to_string(nb) + ")");
    }
    const auto& p = s.pixels;
    switch (s.plane) {
        case Plane::XY:
            for (std::size_t y = 0; y < nb; ++y)
                for (std::size_t x = 0; x < na; ++x) vol(x, y, s.index) = static_cast<float>(p(x, y));
            break;
        case Plane::XZ:
            for (std::size_t z = 0; z < nb; ++z)
                for (std::size_t x = 0; x < na; ++x) vol(x, s.index, z) = static_cast<float>(p(x, z));
            break;
        case Plane::YZ:
            for (std::size_t z = 0; z < nb; ++z)
                for (std::size_t y = 0; y < na; ++y) vol(s.index, y, z) = static_cast<float>(p(y, z));
            break;
    }
}

Volume put_slice(const Volume& vol, const Slice& s) {
    Volume out = vol;
    put_slice(out, s);
    return out;
}

void normalize_min_max(Volume& vol) {
    auto v = vol.values();
    if (v.empty()) return;
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double a = *lo;
    const double span = static_cast<double>(*hi) - a;
    for (float& x : v) x = span > 0.0 ? static_cast<float>((x - a) / span) : 0.0f;
}

void clamp(Volume& vol, float lo, float hi) {
    for (float& x : vol.values()) x = std::clamp(x, lo, hi);
}

// File layout: one line of JSON, then d1*d2*d3 little-endian float32 values.
Volume load_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open volume file " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw IoError("missing header in " + path.string());

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed header in " + path.string() + ": " + e.what());
    }
    if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3) {
        throw IoError("header field 'dims' must be an array of three integers");
    }
    if (j.value("dtype", std::string{}) != "f32le") throw IoError("header field 'dtype' must be \"f32le\"");

    Dims dims{};
    for (std::size_t k = 0; k < 3; ++k) {
        if (!j["dims"][k].is_number_integer() || j["dims"][k].get<long long>() <= 0) {
            throw IoError("header field 'dims' must hold positive integers");
        }
        dims[k] = j["dims"][k].get<std::size_t>();
        if (dims[k] < 2 || dims[k] % 2 != 0) {
            throw IoError("header field 'dims' entry " + std::to_string(k) + " = " + std::to_string(dims[k]) +
                          " is not even and >= 2");
        }
    }

    const std::size_t count = dims[0] * dims[1] * dims[2];
    const std::size_t expected = count * sizeof(float);
    std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (payload.size() != expected) {
        throw IoError("payload size mismatch in " + path.string() + ": expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(payload.size()));
    }

    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, payload.data() + i * 4, 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        data[i] = std::bit_cast<float>(bits);
    }
    check_finite(data);
    return Volume(dims, std::move(data));
}

void save_volume(const Volume& vol, const std::filesystem::path& path) {
    const auto& d = vol.dims();
    check_finite(vol.values());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << R"({"dims":[)" << d[0] << ',' << d[1] << ',' << d[2] << R"(],"dtype":"f32le","range":[0.0,1.0]})" << '\n';
    std::vector<char> payload(vol.size() * 4);
    for (std::size_t i = 0; i < vol.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(vol.values()[i]);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(payload.data() + i * 4, &bits, 4);
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace p3d
