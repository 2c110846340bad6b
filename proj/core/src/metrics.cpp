#include "p3d/metrics.hpp"

#include <cmath>
#include <string>

namespace p3d {

namespace {

double psnr_from_mse(double mse, double range) {
    if (mse == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(range * range / mse);
}

std::vector<double> gaussian_window(std::size_t n, double sigma) {
    std::vector<double> w(n);
    const double c = (static_cast<double>(n) - 1.0) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(i) - c;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable "valid" filtering of an nx x ny field.
std::vector<double> filter_valid(std::span<const double> in, std::size_t nx, std::size_t ny,
                                 const std::vector<double>& w) {
    const std::size_t n = w.size();
    const std::size_t ox = nx - n + 1, oy = ny - n + 1;
    std::vector<double> tmp(ox * ny);
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < ox; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += w[k] * in[y * nx + x + k];
            tmp[y * ox + x] = acc;
        }
    std::vector<double> out(ox * oy);
    for (std::size_t y = 0; y < oy; ++y)
        for (std::size_t x = 0; x < ox; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += w[k] * tmp[(y + k) * ox + x];
            out[y * ox + x] = acc;
        }
    return out;
}

}  // namespace

double psnr(std::span<const double> a, std::span<const double> b, double data_range) {
    if (a.size() != b.size() || a.empty()) throw DimensionError("psnr: inputs must be non-empty and the same size");
    if (!(data_range > 0.0)) throw ParameterError("psnr: data range must be positive");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        se += d * d;
    }
    return psnr_from_mse(se / static_cast<double>(a.size()), data_range);
}

double psnr(const Image& a, const Image& b, double data_range) {
    if (!a.same_shape(b)) throw DimensionError("psnr: image shapes differ");
    return psnr(a.values(), b.values(), data_range);
}

double psnr(const Volume& a, const Volume& b, double data_range) {
    if (a.dims() != b.dims()) throw DimensionError("psnr: volume shapes differ");
    if (!(data_range > 0.0)) throw ParameterError("psnr: data range must be positive");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i]);
        se += d * d;
    }
    return psnr_from_mse(se / static_cast<double>(a.size()), data_range);
}

double ssim(const Image& a, const Image& b, const SsimParams& p) {
    if (!a.same_shape(b)) throw DimensionError("ssim: image shapes differ");
    if (a.nx() < p.window || a.ny() < p.window) {
        throw DimensionError("ssim: image (" + std::to_string(a.nx()) + ", " + std::to_string(a.ny()) +
                             ") smaller than the " + std::to_string(p.window) + "-pixel window");
    }
    const auto w = gaussian_window(p.window, p.sigma);
    const std::size_t n = a.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = a.values()[i] * a.values()[i];
        bb[i] = b.values()[i] * b.values()[i];
        ab[i] = a.values()[i] * b.values()[i];
    }
    const auto mu_a = filter_valid(a.values(), a.nx(), a.ny(), w);
    const auto mu_b = filter_valid(b.values(), a.nx(), a.ny(), w);
    const auto e_aa = filter_valid(aa, a.nx(), a.ny(), w);
    const auto e_bb = filter_valid(bb, a.nx(), a.ny(), w);
    const auto e_ab = filter_valid(ab, a.nx(), a.ny(), w);
    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

double z_discontinuity(const Volume& vol) {
    const auto& d = vol.dims();
    double jump = 0.0;
    for (std::size_t z = 0; z + 1 < d[2]; ++z)
        for (std::size_t y = 0; y < d[1]; ++y)
            for (std::size_t x = 0; x < d[0]; ++x) jump += std::abs(double(vol(x, y, z + 1)) - double(vol(x, y, z)));
    jump /= static_cast<double>(d[0] * d[1] * (d[2] - 1));

    double grad = 0.0;
    for (std::size_t z = 0; z < d[2]; ++z)
        for (std::size_t y = 0; y + 1 < d[1]; ++y)
            for (std::size_t x = 0; x + 1 < d[0]; ++x) {
                const double gx = double(vol(x + 1, y, z)) - vol(x, y, z);
                const double gy = double(vol(x, y + 1, z)) - vol(x, y, z);
                grad += std::sqrt(gx * gx + gy * gy);
            }
    grad /= static_cast<double>((d[0] - 1) * (d[1] - 1) * d[2]);
    return jump / (grad + kZDiscontinuityEpsilon);
}

PlaneScores plane_scores(const Volume& pred, const Volume& ref, Plane plane, const SsimParams& params) {
    if (pred.dims() != ref.dims()) throw DimensionError("plane_scores: volume shapes differ");
    const std::size_t n = pred.slice_count(plane);
    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::size_t finite = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Image a = slice(pred, plane, i).pixels;
        const Image b = slice(ref, plane, i).pixels;
        const double p = psnr(a, b, params.data_range);
        if (std::isfinite(p)) {
            psnr_sum += p;
            ++finite;
        }
        ssim_sum += ssim(a, b, params);
    }
    return PlaneScores{plane, finite ? psnr_sum / static_cast<double>(finite) : kPsnrIdentical,
                       ssim_sum / static_cast<double>(n)};
}

std::vector<MetricRow> evaluate(const std::string& id, const Volume& pred, const Volume& ref,
                                const SsimParams& params) {
    std::vector<MetricRow> rows;
    for (Plane p : {Plane::XY, Plane::XZ, Plane::YZ}) {
        const auto s = plane_scores(pred, ref, p, params);
        rows.push_back({id, std::string(to_string(p)), "psnr", s.psnr});
        rows.push_back({id, std::string(to_string(p)), "ssim", s.ssim});
    }
    rows.push_back({id, "3d", "psnr", psnr(pred, ref, params.data_range)});
    rows.push_back({id, "3d", "z_discontinuity", z_discontinuity(pred)});
    return rows;
}

}  // namespace p3d
