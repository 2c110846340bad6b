#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "p3d/mr_sde.hpp"
#include "p3d/provider.hpp"
#include "p3d/volume.hpp"

namespace p3d {

enum class Alternation {
    DeterministicMod2,  ///< XY on even steps, XZ on odd steps
    Probabilistic,      ///< XY with probability alpha / (alpha + beta)
};

struct StepInfo {
    int t;
    Plane plane;
    double seconds;  ///< wall time of this step
};

struct SamplerConfig {
    double alpha = 0.5;
    double beta = 0.5;
    Alternation alternation = Alternation::DeterministicMod2;
    Domain domain = Domain::Wavelet;
    /// Range for intermediate x0 estimates; nullopt disables clamping.
    std::optional<ClampRange> x0_clamp = ClampRange{};
    ClampRange output_clamp{0.0, 1.0};
    std::uint64_t seed = 0;
    std::function<void(const StepInfo&)> progress;
    /// Writes the working volume every `dump_every` steps when > 0.
    int dump_every = 0;
    std::filesystem::path dump_dir;

    /// Throws ConfigError unless alpha, beta are in [0, 1] and sum to 1.
    void validate() const;
};

struct PlaneProviders {
    const NoiseProvider* xy = nullptr;
    const NoiseProvider* xz = nullptr;
};

Plane choose_plane(int t, const SamplerConfig& cfg, Rng& rng);

/// Plane used at step t when the generator is the keyed substream for t.
Plane choose_plane(int t, const SamplerConfig& cfg);

/// Reverse diffusion from the corrupted volume `vT` (also the condition mu).
/// The working volume starts at vT plus terminal noise; each step picks a
/// plane, and every slice of that plane goes through transform, noise
/// prediction, x0 estimate, posterior draw and inverse transform.
Volume restore(const Volume& vT, const PlaneProviders& providers, const NoiseSchedule& sched,
               const SamplerConfig& cfg);

/// Same chain but every step uses the XY plane.
Volume restore_2d_baseline(const Volume& vT, const NoiseProvider& provider_xy, const NoiseSchedule& sched,
                           const SamplerConfig& cfg);

/// Runs the seeded chain once with exact-noise providers built from `v0` and
/// records every answer, so `OracleProvider` can replay the same chain.
std::shared_ptr<NoiseStore> record_oracle_noise(const Volume& v0, const Volume& vT, const NoiseSchedule& sched,
                                                const SamplerConfig& cfg, bool xy_only = false);

}  // namespace p3d
