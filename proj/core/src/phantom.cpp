#include "p3d/phantom.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "p3d/rng.hpp"

namespace p3d {

namespace {

struct Ellipsoid {
    double cx, cy, cz;  // centre, normalized [-1, 1] coordinates
    double ax, ay, az;  // semi-axes
    double angle;       // rotation about z
    double value;

    bool contains(double x, double y, double z) const {
        const double c = std::cos(angle), s = std::sin(angle);
        const double dx = x - cx, dy = y - cy, dz = z - cz;
        const double u = c * dx + s * dy, v = -s * dx + c * dy;
        return (u * u) / (ax * ax) + (v * v) / (ay * ay) + (dz * dz) / (az * az) <= 1.0;
    }
};

}  // namespace

Volume ellipsoid_phantom(const Dims& dims, std::uint64_t seed) {
    Rng rng = substream(seed, {key(Stream::Phantom)});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

    std::vector<Ellipsoid> shapes;
    // Outer boundary and a darker interior layer.
    const double ox = uni(0.70, 0.85), oy = uni(0.75, 0.90), oz = uni(0.70, 0.85);
    const double oa = uni(-0.3, 0.3);
    shapes.push_back({0, 0, 0, ox, oy, oz, oa, uni(0.75, 0.9)});
    shapes.push_back({0, 0, 0, ox - 0.08, oy - 0.08, oz - 0.08, oa, uni(0.35, 0.5)});
    const int inner = 3 + static_cast<int>(u(rng) * 4);
    for (int i = 0; i < inner; ++i) {
        const double r = uni(0.0, 0.45);
        const double phi = uni(0.0, 2.0 * std::numbers::pi);
        shapes.push_back({r * std::cos(phi), r * std::sin(phi), uni(-0.35, 0.35), uni(0.08, 0.3), uni(0.08, 0.3),
                          uni(0.08, 0.3), uni(0.0, std::numbers::pi), uni(0.05, 1.0)});
    }

    Volume vol(dims);
    constexpr int ss = 2;
    for (std::size_t z = 0; z < dims[2]; ++z) {
        for (std::size_t y = 0; y < dims[1]; ++y) {
            for (std::size_t x = 0; x < dims[0]; ++x) {
                double acc = 0.0;
                for (int sz = 0; sz < ss; ++sz)
                    for (int sy = 0; sy < ss; ++sy)
                        for (int sx = 0; sx < ss; ++sx) {
                            const double px = 2.0 * (x + (sx + 0.5) / ss) / dims[0] - 1.0;
                            const double py = 2.0 * (y + (sy + 0.5) / ss) / dims[1] - 1.0;
                            const double pz = 2.0 * (z + (sz + 0.5) / ss) / dims[2] - 1.0;
                            double v = 0.0;
                            for (const auto& e : shapes)
                                if (e.contains(px, py, pz)) v = e.value;
                            acc += v;
                        }
                vol(x, y, z) = static_cast<float>(acc / (ss * ss * ss));
            }
        }
    }
    return vol;
}

}  // namespace p3d
