#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p3d/mr_sde.hpp"
#include "p3d/nn.hpp"
#include "p3d/volume.hpp"

namespace p3d {

/// Shape of the noise-prediction network.
///
/// Input channels are the noisy state (S), the condition (S) and one constant
/// time channel t/T. The body is a small U-Net of wavelet residual blocks
/// (Conv -> SiLU -> WTConv -> SiLU -> Conv, additive skip) with `depth`
/// average-pool levels; a linear convolution maps back to S channels.
/// `features == 0` selects a purely linear model: one convolution from the
/// inputs to the output.
///
/// With `precondition` on, the state channels carry the rescaled residual
/// c_in (x_t - mu) and the prediction is skip (x_t - mu) + out F, where F is
/// the raw network output and the scalars come from `Preconditioning`.
struct DenoiserConfig {
    std::size_t state_channels = 4;  ///< 4 for stacked Haar subbands, 1 in the image domain
    std::size_t features = 24;
    std::size_t depth = 1;
    std::size_t blocks = 1;  ///< residual blocks per encoder level
    std::size_t wt_levels = 2;
    std::size_t kernel = 3;
    bool precondition = true;
    double sigma_data = 0.1;  ///< assumed spread of x0 - mu for preconditioning

    std::size_t input_channels() const noexcept { return 2 * state_channels + 1; }
    bool linear() const noexcept { return features == 0; }
    /// Spatial dims of the network input must be divisible by this.
    std::size_t stride() const noexcept;
    std::string arch_string() const;
    std::uint64_t arch_hash() const;

    friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Per-step scalars wrapping the raw network. Identity (c_in = 1 on raw x_t,
/// skip = 0, out = 1) when preconditioning is off.
struct Preconditioning {
    bool centred = false;
    double c_in = 1.0;
    double skip = 0.0;
    double out = 1.0;
};

Preconditioning preconditioning(const DenoiserConfig& cfg, int t, const NoiseSchedule& sched);

class DenoiserNet {
public:
    /// Activations recorded by a forward pass for the backward pass.
    struct Tape;

    DenoiserNet() = default;
    DenoiserNet(DenoiserConfig cfg, Plane plane);

    const DenoiserConfig& config() const noexcept { return cfg_; }
    Plane plane() const noexcept { return plane_; }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }
    std::size_t param_count() const noexcept { return params_.size(); }

    /// Random initialization; the same seed gives the same weights.
    void init(std::uint64_t seed);

    /// Predicted noise for state `x_t` conditioned on `mu` at step t.
    FeatureMap predict(const FeatureMap& x_t, const FeatureMap& mu, int t, const NoiseSchedule& sched) const;

    /// Raw network input for step t (state channels scaled per `preconditioning`).
    FeatureMap network_input(const FeatureMap& x_t, const FeatureMap& mu, int t, const NoiseSchedule& sched) const;

    /// Applies the output scaling to a raw network output in place.
    void finish_prediction(FeatureMap& raw, const FeatureMap& x_t, const FeatureMap& mu, int t,
                           const NoiseSchedule& sched) const;

    /// Forward pass over the concatenated input; records activations into
    /// `tape` when non-null.
    FeatureMap forward(const FeatureMap& input, Tape* tape) const;
    void backward(const Tape& tape, const FeatureMap& grad_out, std::span<double> grads) const;

    /// Chebyshev radius (input pixels) outside of which a single-pixel change
    /// cannot influence the output.
    std::size_t receptive_radius() const;

private:
    struct Block {
        nn::Conv2d conv1;
        nn::WtConv wt;
        nn::Conv2d conv2;
    };

    FeatureMap block_forward(const Block& b, const FeatureMap& x, Tape* tape) const;
    FeatureMap block_backward(const Block& b, const Tape& tape, std::size_t& cursor, const FeatureMap& grad,
                              std::span<double> grads) const;

    DenoiserConfig cfg_;
    Plane plane_ = Plane::XY;
    nn::Conv2d head_;
    std::vector<std::vector<Block>> encoder_;  // encoder_[level][block]
    std::vector<Block> decoder_;               // decoder_[level], levels 0..depth-1
    nn::Conv2d tail_;
    std::vector<double> params_;
};

struct DenoiserNet::Tape {
    FeatureMap input;
    std::vector<FeatureMap> acts;
};

/// Concatenates state, condition and a constant time channel.
FeatureMap make_network_input(const FeatureMap& x_t, const FeatureMap& mu, double t_frac);

/// A saved network and the schedule it was trained with.
struct Checkpoint {
    DenoiserNet net;
    NoiseSchedule schedule;
};

/// Writes one line of JSON (format, version, plane, channel counts,
/// architecture hash, schedule) followed by the little-endian float64 weights.
void save_checkpoint(const DenoiserNet& net, const NoiseSchedule& sched, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace p3d
