#include "p3d/motion.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <json.hpp>

#include "p3d/rng.hpp"

namespace p3d {

namespace {

// FFTW planning is not thread-safe.
std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

ComplexVolume transform(const ComplexVolume& in, int sign) {
    const auto& d = in.dims;
    ComplexVolume out{d, std::vector<std::complex<double>>(in.data.size())};
    auto* src = reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data.data()));
    auto* dst = reinterpret_cast<fftw_complex*>(out.data.data());
    fftw_plan plan;
    {
        std::lock_guard lock(plan_mutex());
        // Row-major with the last index fastest: (z, y, x).
        plan = fftw_plan_dft_3d(static_cast<int>(d[2]), static_cast<int>(d[1]), static_cast<int>(d[0]), src, dst, sign,
                                FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(plan_mutex());
        fftw_destroy_plan(plan);
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(in.data.size()));
    for (auto& c : out.data) c *= scale;
    return out;
}

double signed_freq(std::size_t k, std::size_t n) {
    return k < n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
}

std::size_t line_to_ky(std::size_t position, std::size_t d2) { return (position + d2 / 2) % d2; }

}  // namespace

void MotionSpec::validate() const {
    if (!(m_min >= 0.0 && m_min <= m_max && m_max <= 1.0)) {
        throw ParameterError("motion fractions must satisfy 0 <= m_min <= m_max <= 1");
    }
    if (n_events < 1) throw ParameterError("motion needs at least one event");
    if (max_translation < 0.0 || max_rotation < 0.0) throw ParameterError("motion bounds must be non-negative");
}

std::string MotionReport::to_json() const {
    nlohmann::json j;
    j["fraction"] = fraction;
    j["affected_lines"] = affected_lines;
    j["total_lines"] = total_lines;
    j["encode_axis"] = "y";
    j["motion_model"] = "rigid, piecewise constant, k-space line replacement";
    j["max_imag_discarded"] = max_imag;
    j["events"] = nlohmann::json::array();
    for (const auto& e : events) {
        j["events"].push_back({{"first_line", e.first_line},
                               {"line_count", e.line_count},
                               {"translation", e.motion.translation},
                               {"axis", e.motion.axis},
                               {"angle_deg", e.motion.angle}});
    }
    return j.dump(2);
}

ComplexVolume fft3(const Volume& vol) {
    ComplexVolume c{vol.dims(), std::vector<std::complex<double>>(vol.size())};
    for (std::size_t i = 0; i < vol.size(); ++i) c.data[i] = vol.values()[i];
    return transform(c, FFTW_FORWARD);
}

ComplexVolume fft3(const ComplexVolume& vol) { return transform(vol, FFTW_FORWARD); }

ComplexVolume ifft3(const ComplexVolume& spec) { return transform(spec, FFTW_BACKWARD); }

Volume real_part(const ComplexVolume& v, double* max_imag) {
    std::vector<float> data(v.data.size());
    double mi = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<float>(v.data[i].real());
        mi = std::max(mi, std::abs(v.data[i].imag()));
    }
    if (max_imag) *max_imag = mi;
    return Volume(v.dims, std::move(data));
}

Volume rotate(const Volume& vol, const RigidMotion& motion) {
    if (motion.angle == 0.0) return vol;
    const auto& d = vol.dims();
    auto [ux, uy, uz] = motion.axis;
    const double norm = std::sqrt(ux * ux + uy * uy + uz * uz);
    if (!(norm > 0.0)) throw ParameterError("rotation axis must be non-zero");
    ux /= norm, uy /= norm, uz /= norm;
    // Inverse rotation (angle negated) maps output positions to input samples.
    const double a = -motion.angle * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a), C = 1.0 - c;
    const double R[3][3] = {{c + ux * ux * C, ux * uy * C - uz * s, ux * uz * C + uy * s},
                            {uy * ux * C + uz * s, c + uy * uy * C, uy * uz * C - ux * s},
                            {uz * ux * C - uy * s, uz * uy * C + ux * s, c + uz * uz * C}};
    const double cx = (d[0] - 1) / 2.0, cy = (d[1] - 1) / 2.0, cz = (d[2] - 1) / 2.0;
    auto at = [&](long x, long y, long z) -> double {
        if (x < 0 || y < 0 || z < 0 || x >= static_cast<long>(d[0]) || y >= static_cast<long>(d[1]) ||
            z >= static_cast<long>(d[2]))
            return 0.0;
        return vol(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z));
    };
    Volume out(d);
    for (std::size_t z = 0; z < d[2]; ++z) {
        for (std::size_t y = 0; y < d[1]; ++y) {
            for (std::size_t x = 0; x < d[0]; ++x) {
                const double px = x - cx, py = y - cy, pz = z - cz;
                const double sx = R[0][0] * px + R[0][1] * py + R[0][2] * pz + cx;
                const double sy = R[1][0] * px + R[1][1] * py + R[1][2] * pz + cy;
                const double sz = R[2][0] * px + R[2][1] * py + R[2][2] * pz + cz;
                const long x0 = static_cast<long>(std::floor(sx)), y0 = static_cast<long>(std::floor(sy)),
                           z0 = static_cast<long>(std::floor(sz));
                const double fx = sx - x0, fy = sy - y0, fz = sz - z0;
                double v = 0.0;
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                            if (wgt != 0.0) v += wgt * at(x0 + dx, y0 + dy, z0 + dz);
                        }
                out(x, y, z) = static_cast<float>(v);
            }
        }
    }
    return out;
}

std::pair<Volume, MotionReport> apply_motion_events(const Volume& vol, const std::vector<MotionEvent>& events) {
    const auto& d = vol.dims();
    MotionReport report;
    report.total_lines = d[1];
    report.events = events;
    if (events.empty()) return {vol, report};

    ComplexVolume k = fft3(vol);
    for (const auto& ev : events) {
        if (ev.first_line + ev.line_count > d[1]) throw ParameterError("motion event exceeds the phase-encode range");
        report.affected_lines += ev.line_count;
        ComplexVolume moved = fft3(rotate(vol, ev.motion));
        const auto& t = ev.motion.translation;
        for (std::size_t p = ev.first_line; p < ev.first_line + ev.line_count; ++p) {
            const std::size_t ky = line_to_ky(p, d[1]);
            for (std::size_t kz = 0; kz < d[2]; ++kz) {
                for (std::size_t kx = 0; kx < d[0]; ++kx) {
                    const double phase = -2.0 * std::numbers::pi *
                                         (signed_freq(kx, d[0]) * t[0] / d[0] + signed_freq(ky, d[1]) * t[1] / d[1] +
                                          signed_freq(kz, d[2]) * t[2] / d[2]);
                    const std::size_t i = (kz * d[1] + ky) * d[0] + kx;
                    k.data[i] = moved.data[i] * std::polar(1.0, phase);
                }
            }
        }
    }
    report.fraction = static_cast<double>(report.affected_lines) / static_cast<double>(d[1]);
    Volume out = real_part(ifft3(k), &report.max_imag);
    clamp(out, 0.0f, 1.0f);
    return {std::move(out), std::move(report)};
}

std::pair<Volume, MotionReport> corrupt(const Volume& vol, const MotionSpec& spec) {
    spec.validate();
    const std::size_t d2 = vol.dims()[1];
    if (spec.m_max == 0.0) {
        MotionReport report;
        report.total_lines = d2;
        return {vol, report};
    }
    Rng rng = substream(spec.seed, {key(Stream::Motion)});
    std::uniform_real_distribution<double> frac(spec.m_min, spec.m_max);
    const double f = frac(rng);
    const auto lines = static_cast<std::size_t>(std::lround(f * static_cast<double>(d2)));
    if (lines == 0) {
        if (f > 0.0) {
            throw DegenerateSpecError("fraction " + std::to_string(f) + " of " + std::to_string(d2) +
                                      " phase-encode lines rounds to zero lines");
        }
        MotionReport report;
        report.total_lines = d2;
        return {vol, report};
    }
    // The block stays on one side of the k-space centre line, whose pose is the reference.
    const std::size_t centre = d2 / 2;
    std::size_t start = 0;
    const bool fits_before = lines <= centre, fits_after = lines <= d2 - centre - 1;
    if (!fits_before && !fits_after) {
        throw DegenerateSpecError(std::to_string(lines) + " affected lines cannot avoid the k-space centre of " +
                                  std::to_string(d2) + " phase-encode lines");
    }
    const bool after = fits_after && (!fits_before || std::bernoulli_distribution(0.5)(rng));
    if (after) {
        start = std::uniform_int_distribution<std::size_t>(centre + 1, d2 - lines)(rng);
    } else {
        start = std::uniform_int_distribution<std::size_t>(0, centre - lines)(rng);
    }
    const std::size_t n_events = std::min<std::size_t>(static_cast<std::size_t>(spec.n_events), lines);

    std::uniform_real_distribution<double> shift(-spec.max_translation, spec.max_translation);
    std::uniform_real_distribution<double> angle(-spec.max_rotation, spec.max_rotation);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<MotionEvent> events;
    std::size_t pos = start;
    for (std::size_t e = 0; e < n_events; ++e) {
        const std::size_t count = lines / n_events + (e < lines % n_events ? 1 : 0);
        MotionEvent ev;
        ev.first_line = pos;
        ev.line_count = count;
        ev.motion.translation = {shift(rng), shift(rng), shift(rng)};
        std::array<double, 3> axis{gauss(rng), gauss(rng), gauss(rng)};
        const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
        ev.motion.axis = n > 0.0 ? std::array<double, 3>{axis[0] / n, axis[1] / n, axis[2] / n}
                                 : std::array<double, 3>{0.0, 0.0, 1.0};
        ev.motion.angle = angle(rng);
        events.push_back(ev);
        pos += count;
    }
    return apply_motion_events(vol, events);
}

}  // namespace p3d
