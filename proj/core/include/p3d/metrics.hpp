#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "p3d/field.hpp"
#include "p3d/volume.hpp"

namespace p3d {

/// Returned by `psnr` when the inputs are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(range^2 / MSE) in dB.
double psnr(std::span<const double> a, std::span<const double> b, double data_range = 1.0);
double psnr(const Image& a, const Image& b, double data_range = 1.0);
double psnr(const Volume& a, const Volume& b, double data_range = 1.0);

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

/// Mean SSIM over every position where the Gaussian window fits.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// Mean |difference| between consecutive XY slices divided by the mean
/// in-slice forward-difference gradient magnitude (plus a small epsilon).
/// Zero for volumes without variation along z.
double z_discontinuity(const Volume& vol);

/// Offset in the z-discontinuity denominator.
inline constexpr double kZDiscontinuityEpsilon = 1e-6;

struct PlaneScores {
    Plane plane;
    double psnr;  ///< mean over slices with finite PSNR; +inf if every slice is identical
    double ssim;  ///< mean over slices
};

/// Per-plane averages of slice PSNR and SSIM.
PlaneScores plane_scores(const Volume& pred, const Volume& ref, Plane plane, const SsimParams& params = {});

struct MetricRow {
    std::string volume_id;
    std::string plane;
    std::string metric;
    double value;
};

/// Rows for every plane (psnr, ssim) plus whole-volume psnr and the
/// z-discontinuity of `pred`.
std::vector<MetricRow> evaluate(const std::string& id, const Volume& pred, const Volume& ref,
                                const SsimParams& params = {});

}  // namespace p3d
