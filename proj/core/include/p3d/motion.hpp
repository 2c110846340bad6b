#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "p3d/volume.hpp"

namespace p3d {

/// Severity and motion bounds for k-space motion corruption. `m_min` and
/// `m_max` bound the fraction of phase-encode lines replaced by moved data.
struct MotionSpec {
    double m_min = 0.30;
    double m_max = 0.45;
    int n_events = 3;
    double max_translation = 3.0;  ///< voxels, per axis
    double max_rotation = 3.0;     ///< degrees
    std::uint64_t seed = 0;

    static MotionSpec mild(std::uint64_t seed = 0) { return {0.30, 0.45, 3, 3.0, 3.0, seed}; }
    static MotionSpec severe(std::uint64_t seed = 0) { return {0.45, 0.50, 3, 3.0, 3.0, seed}; }

    /// Throws ParameterError when the bounds are inconsistent.
    void validate() const;
};

struct RigidMotion {
    std::array<double, 3> translation{0.0, 0.0, 0.0};  ///< voxels along x, y, z
    std::array<double, 3> axis{0.0, 0.0, 1.0};         ///< unit rotation axis
    double angle = 0.0;                                 ///< degrees, about the volume centre
};

/// A run of consecutive phase-encode positions acquired in one pose.
/// Position p maps to ky = p - d2/2, so position d2/2 is the k-space centre.
struct MotionEvent {
    std::size_t first_line = 0;
    std::size_t line_count = 0;
    RigidMotion motion;
};

struct MotionReport {
    double fraction = 0.0;  ///< realized fraction of affected lines
    std::size_t affected_lines = 0;
    std::size_t total_lines = 0;
    std::vector<MotionEvent> events;
    double max_imag = 0.0;  ///< largest discarded imaginary part
    std::string to_json() const;
};

struct ComplexVolume {
    Dims dims{0, 0, 0};
    std::vector<std::complex<double>> data;
};

/// Unitary 3D DFT (scaled by 1/sqrt(N) both ways), same index layout as Volume.
ComplexVolume fft3(const Volume& vol);
ComplexVolume fft3(const ComplexVolume& vol);
ComplexVolume ifft3(const ComplexVolume& spec);

/// Real part as a volume; records the largest |imag| into `max_imag` if given.
Volume real_part(const ComplexVolume& v, double* max_imag = nullptr);

/// Trilinear rotation about the volume centre; samples outside become 0.
Volume rotate(const Volume& vol, const RigidMotion& motion);

/// Replaces each event's k-space lines (all kx, kz at the event's ky) with
/// the spectrum of the moved volume, then returns the clamped real image.
/// Translation is applied exactly as a Fourier phase ramp.
std::pair<Volume, MotionReport> apply_motion_events(const Volume& vol, const std::vector<MotionEvent>& events);

/// Draws a fraction f in [m_min, m_max], a contiguous block of round(f * d2)
/// phase-encode positions split into up to n_events segments, and a rigid
/// motion per segment.
std::pair<Volume, MotionReport> corrupt(const Volume& vol, const MotionSpec& spec);

}  // namespace p3d
