#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "p3d/field.hpp"
#include "p3d/rng.hpp"
#include "p3d/volume.hpp"

namespace p3d::testing {

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("p3d_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Volume random_volume(Dims d, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
    Rng rng(seed);
    std::uniform_real_distribution<float> u(lo, hi);
    Volume v(d);
    for (float& x : v.values()) x = u(rng);
    return v;
}

inline Image random_image(std::size_t nx, std::size_t ny, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(nx, ny);
    for (double& x : img.values()) x = u(rng);
    return img;
}

inline FeatureMap random_features(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed,
                                  double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    FeatureMap f(c, h, w);
    for (double& x : f.values()) x = u(rng);
    return f;
}

}  // namespace p3d::testing
