#include "p3d/denoiser.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "p3d/rng.hpp"

namespace p3d {

namespace {

constexpr int kCheckpointVersion = 1;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

std::size_t DenoiserConfig::stride() const noexcept {
    if (linear()) return 1;
    return std::size_t{1} << (wt_levels + depth);
}

std::string DenoiserConfig::arch_string() const {
    std::ostringstream os;
    os << "wres-unet/S" << state_channels << "/F" << features << "/E" << depth << "/B" << blocks << "/L" << wt_levels
       << "/K" << kernel;
    if (precondition) os << "/P" << sigma_data;
    return os.str();
}

std::uint64_t DenoiserConfig::arch_hash() const { return fnv1a(arch_string()); }

DenoiserNet::DenoiserNet(DenoiserConfig cfg, Plane plane) : cfg_(cfg), plane_(plane) {
    if (cfg_.state_channels == 0) throw ConfigError("denoiser needs at least one state channel");
    if (cfg_.kernel % 2 == 0) throw ConfigError("denoiser kernel size must be odd");
    std::size_t offset = 0;
    auto conv = [&](std::size_t cin, std::size_t cout, std::size_t k) {
        nn::Conv2d c{cin, cout, k, offset};
        offset += c.param_count();
        return c;
    };
    const std::size_t F = cfg_.features;
    if (cfg_.linear()) {
        head_ = conv(cfg_.input_channels(), cfg_.state_channels, cfg_.kernel);
    } else {
        auto block = [&] {
            Block b;
            b.conv1 = conv(F, F, cfg_.kernel);
            b.wt = nn::WtConv{F, cfg_.wt_levels, cfg_.kernel, offset};
            offset += b.wt.param_count();
            b.conv2 = conv(F, F, cfg_.kernel);
            return b;
        };
        head_ = conv(cfg_.input_channels(), F, cfg_.kernel);
        encoder_.resize(cfg_.depth + 1);
        for (auto& level : encoder_)
            for (std::size_t i = 0; i < cfg_.blocks; ++i) level.push_back(block());
        for (std::size_t e = 0; e < cfg_.depth; ++e) decoder_.push_back(block());
        tail_ = conv(F, cfg_.state_channels, cfg_.kernel);
    }
    params_.assign(offset, 0.0);
}

void DenoiserNet::init(std::uint64_t seed) {
    Rng rng = substream(seed, {key(Stream::Init), cfg_.arch_hash(), static_cast<std::uint64_t>(plane_)});
    std::normal_distribution<double> n(0.0, 1.0);
    auto fill_conv = [&](const nn::Conv2d& c, double gain) {
        const double sd = gain * std::sqrt(1.0 / static_cast<double>(c.cin * c.k * c.k));
        for (std::size_t i = 0; i < c.weight_count(); ++i) params_[c.offset + i] = sd * n(rng);
        std::fill_n(params_.begin() + static_cast<long>(c.bias_offset()), c.cout, 0.0);
    };
    if (cfg_.linear()) {
        fill_conv(head_, 0.1);
        return;
    }
    fill_conv(head_, 1.0);
    auto fill_block = [&](const Block& b) {
        fill_conv(b.conv1, std::sqrt(2.0));
        const double sd = 0.5 / static_cast<double>(b.wt.k);
        for (std::size_t i = 0; i < b.wt.param_count(); ++i) params_[b.wt.offset + i] = sd * n(rng);
        fill_conv(b.conv2, 0.2);
    };
    for (const auto& level : encoder_)
        for (const auto& b : level) fill_block(b);
    for (const auto& b : decoder_) fill_block(b);
    fill_conv(tail_, 0.1);
}

FeatureMap make_network_input(const FeatureMap& x_t, const FeatureMap& mu, double t_frac) {
    if (!x_t.same_shape(mu)) throw DimensionError("network input: state and condition shapes differ");
    const std::size_t S = x_t.channels();
    FeatureMap in(2 * S + 1, x_t.height(), x_t.width());
    std::copy(x_t.values().begin(), x_t.values().end(), in.values().begin());
    std::copy(mu.values().begin(), mu.values().end(), in.values().begin() + static_cast<long>(x_t.size()));
    std::fill(in.channel(2 * S).begin(), in.channel(2 * S).end(), t_frac);
    return in;
}

Preconditioning preconditioning(const DenoiserConfig& cfg, int t, const NoiseSchedule& sched) {
    if (!cfg.precondition) return {};
    if (t < 0 || t > sched.T) throw StepError("step " + std::to_string(t) + " outside [0, " + std::to_string(sched.T) + "]");
    const double grow = std::exp(sched.theta_bar[static_cast<std::size_t>(t)]);
    const double sigma = grow * std::sqrt(sched.v[static_cast<std::size_t>(t)]);
    const double sd = cfg.sigma_data;
    const double r2 = sigma * sigma + sd * sd;
    return {true, grow / std::sqrt(r2), grow * sigma / r2, sd / std::sqrt(r2)};
}

FeatureMap DenoiserNet::network_input(const FeatureMap& x_t, const FeatureMap& mu, int t,
                                      const NoiseSchedule& sched) const {
    if (x_t.channels() != cfg_.state_channels) {
        throw DimensionError("denoiser expects " + std::to_string(cfg_.state_channels) + " state channels, got " +
                             std::to_string(x_t.channels()));
    }
    const auto pc = preconditioning(cfg_, t, sched);
    FeatureMap in = make_network_input(x_t, mu, static_cast<double>(t) / sched.T);
    if (pc.centred) {
        auto v = in.values();
        const auto m = mu.values();
        for (std::size_t i = 0; i < x_t.size(); ++i) v[i] = pc.c_in * (v[i] - m[i]);
    }
    return in;
}

void DenoiserNet::finish_prediction(FeatureMap& raw, const FeatureMap& x_t, const FeatureMap& mu, int t,
                                    const NoiseSchedule& sched) const {
    const auto pc = preconditioning(cfg_, t, sched);
    if (!pc.centred) return;
    auto r = raw.values();
    const auto x = x_t.values();
    const auto m = mu.values();
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = pc.skip * (x[i] - m[i]) + pc.out * r[i];
}

FeatureMap DenoiserNet::predict(const FeatureMap& x_t, const FeatureMap& mu, int t, const NoiseSchedule& sched) const {
    FeatureMap out = forward(network_input(x_t, mu, t, sched), nullptr);
    finish_prediction(out, x_t, mu, t, sched);
    return out;
}

FeatureMap DenoiserNet::block_forward(const Block& b, const FeatureMap& x, Tape* tape) const {
    FeatureMap u1 = b.conv1.forward(params_, x);
    FeatureMap s1 = nn::silu(u1);
    FeatureMap u2 = b.wt.forward(params_, s1);
    FeatureMap s2 = nn::silu(u2);
    FeatureMap out = b.conv2.forward(params_, s2);
    nn::add_inplace(out, x);
    if (tape) {
        tape->acts.push_back(x);
        tape->acts.push_back(std::move(u1));
        tape->acts.push_back(std::move(s1));
        tape->acts.push_back(std::move(u2));
        tape->acts.push_back(std::move(s2));
    }
    return out;
}

FeatureMap DenoiserNet::block_backward(const Block& b, const Tape& tape, std::size_t& cursor, const FeatureMap& grad,
                                       std::span<double> grads) const {
    const FeatureMap& s2 = tape.acts[cursor - 1];
    const FeatureMap& u2 = tape.acts[cursor - 2];
    const FeatureMap& s1 = tape.acts[cursor - 3];
    const FeatureMap& u1 = tape.acts[cursor - 4];
    const FeatureMap& x = tape.acts[cursor - 5];
    cursor -= 5;
    FeatureMap g = b.conv2.backward(params_, s2, grad, grads);
    g = nn::silu_backward(u2, g);
    g = b.wt.backward(params_, s1, g, grads);
    g = nn::silu_backward(u1, g);
    g = b.conv1.backward(params_, x, g, grads);
    nn::add_inplace(g, grad);
    return g;
}

FeatureMap DenoiserNet::forward(const FeatureMap& input, Tape* tape) const {
    if (input.channels() != cfg_.input_channels()) {
        throw DimensionError("denoiser expects " + std::to_string(cfg_.input_channels()) + " input channels, got " +
                             std::to_string(input.channels()));
    }
    const std::size_t stride = cfg_.stride();
    if (input.height() % stride != 0 || input.width() % stride != 0) {
        throw DimensionError("denoiser input (" + std::to_string(input.width()) + ", " +
                             std::to_string(input.height()) + ") not divisible by network stride " +
                             std::to_string(stride));
    }
    if (tape) {
        tape->input = input;
        tape->acts.clear();
    }
    if (cfg_.linear()) return head_.forward(params_, input);

    FeatureMap a = head_.forward(params_, input);
    std::vector<FeatureMap> skips;
    for (std::size_t e = 0; e <= cfg_.depth; ++e) {
        for (const auto& b : encoder_[e]) a = block_forward(b, a, tape);
        if (e < cfg_.depth) {
            skips.push_back(a);
            a = nn::avg_pool2(a);
        }
    }
    for (std::size_t e = cfg_.depth; e-- > 0;) {
        FeatureMap up = nn::upsample2(a);
        nn::add_inplace(up, skips[e]);
        a = block_forward(decoder_[e], up, tape);
    }
    if (tape) tape->acts.push_back(a);
    return tail_.forward(params_, a);
}

void DenoiserNet::backward(const Tape& tape, const FeatureMap& grad_out, std::span<double> grads) const {
    if (grads.size() != params_.size()) throw WeightError("gradient buffer size does not match parameter count");
    if (cfg_.linear()) {
        head_.backward(params_, tape.input, grad_out, grads);
        return;
    }
    std::size_t cursor = tape.acts.size();
    FeatureMap g = tail_.backward(params_, tape.acts[--cursor], grad_out, grads);
    std::vector<FeatureMap> g_skip(cfg_.depth);
    for (std::size_t e = 0; e < cfg_.depth; ++e) {
        g = block_backward(decoder_[e], tape, cursor, g, grads);
        g_skip[e] = g;
        g = nn::upsample2_backward(g);
    }
    for (std::size_t e = cfg_.depth + 1; e-- > 0;) {
        if (e < cfg_.depth) {
            g = nn::avg_pool2_backward(g);
            nn::add_inplace(g, g_skip[e]);
        }
        for (std::size_t i = encoder_[e].size(); i-- > 0;) g = block_backward(encoder_[e][i], tape, cursor, g, grads);
    }
    head_.backward(params_, tape.input, g, grads);
}

std::size_t DenoiserNet::receptive_radius() const {
    const std::size_t r = cfg_.kernel / 2;
    if (cfg_.linear()) return r;
    const std::size_t wt_extent = (std::size_t{1} << cfg_.wt_levels) * (r + 1);
    auto block_radius = [&](std::size_t scale) { return scale * (2 * r + wt_extent); };
    std::size_t radius = r;  // head
    std::size_t scale = 1;
    for (std::size_t e = 0; e <= cfg_.depth; ++e) {
        radius += cfg_.blocks * block_radius(scale);
        if (e < cfg_.depth) {
            scale *= 2;
            radius += scale;
        }
    }
    for (std::size_t e = cfg_.depth; e-- > 0;) {
        radius += scale;
        scale /= 2;
        radius += block_radius(scale);
    }
    return radius + r;  // tail
}

void save_checkpoint(const DenoiserNet& net, const NoiseSchedule& sched, const std::filesystem::path& path) {
    const auto& c = net.config();
    nlohmann::json j;
    j["format"] = "p3d-denoiser";
    j["version"] = kCheckpointVersion;
    j["plane"] = std::string(to_string(net.plane()));
    j["state_channels"] = c.state_channels;
    j["input_channels"] = c.input_channels();
    j["features"] = c.features;
    j["depth"] = c.depth;
    j["blocks"] = c.blocks;
    j["wt_levels"] = c.wt_levels;
    j["kernel"] = c.kernel;
    j["precondition"] = c.precondition;
    j["sigma_data"] = c.sigma_data;
    j["param_count"] = net.param_count();
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0') << c.arch_hash();
    j["arch_hash"] = hash.str();
    j["schedule"] = {{"T", sched.T},
                     {"lambda", sched.lambda},
                     {"theta", std::vector<double>(sched.theta.begin() + 1, sched.theta.end())}};

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump() << '\n';
    for (double v : net.params()) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        out.write(reinterpret_cast<const char*>(&bits), 8);
    }
    if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw IoError("missing checkpoint manifest in " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed checkpoint manifest: " + std::string(e.what()));
    }
    try {
        if (j.at("format") != "p3d-denoiser") throw IoError("not a denoiser checkpoint: " + path.string());
        if (j.at("version").get<int>() != kCheckpointVersion) {
            throw IoError("unsupported checkpoint version " + j.at("version").dump());
        }
        DenoiserConfig cfg;
        cfg.state_channels = j.at("state_channels");
        cfg.features = j.at("features");
        cfg.depth = j.at("depth");
        cfg.blocks = j.at("blocks");
        cfg.wt_levels = j.at("wt_levels");
        cfg.kernel = j.at("kernel");
        cfg.precondition = j.at("precondition");
        cfg.sigma_data = j.at("sigma_data");
        std::ostringstream hash;
        hash << std::hex << std::setw(16) << std::setfill('0') << cfg.arch_hash();
        if (j.at("arch_hash") != hash.str()) throw IoError("checkpoint architecture hash mismatch");

        Checkpoint ck{DenoiserNet(cfg, plane_from_string(j.at("plane").get<std::string>())), {}};
        if (j.at("param_count").get<std::size_t>() != ck.net.param_count()) {
            throw IoError("checkpoint parameter count does not match its architecture");
        }
        const auto& s = j.at("schedule");
        ck.schedule = NoiseSchedule::from_theta(s.at("theta").get<std::vector<double>>(), s.at("lambda").get<double>());

        std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (payload.size() != ck.net.param_count() * 8) {
            throw IoError("checkpoint payload size mismatch: expected " + std::to_string(ck.net.param_count() * 8) +
                          " bytes, got " + std::to_string(payload.size()));
        }
        auto params = ck.net.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, payload.data() + 8 * i, 8);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            params[i] = std::bit_cast<double>(bits);
        }
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint manifest field error: " + std::string(e.what()));
    }
}

}  // namespace p3d
