#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "p3d/denoiser.hpp"
#include "p3d/error.hpp"
#include "p3d/metrics.hpp"
#include "p3d/motion.hpp"
#include "p3d/phantom.hpp"
#include "p3d/provider.hpp"
#include "p3d/sampler.hpp"
#include "p3d/threads.hpp"
#include "p3d/volume.hpp"

namespace p3d::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    int threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON file of option values; command-line flags take precedence")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "Seed for every random stream")->capture_default_str();
    sub->add_option("--threads", c.threads, "Worker thread cap (0 keeps the runtime default)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
}

std::string json_to_arg(const json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw ConfigError("config key '" + key + "' must be a string, number, boolean or array of those");
}

// Fills options that were not given on the command line from a JSON object.
void apply_config(CLI::App* sub, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "config") continue;
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (!opt) throw ConfigError("unknown config key '" + key + "' for command " + sub->get_name());
        if (opt->count() > 0) continue;
        std::vector<std::string> args;
        if (value.is_array()) {
            for (const auto& v : value) args.push_back(json_to_arg(v, key));
        } else {
            args.push_back(json_to_arg(value, key));
        }
        if (opt->get_type_size() == 0) {
            // Flags take a single boolean.
            if (args.size() != 1 || (args[0] != "true" && args[0] != "false")) {
                throw ConfigError("config key '" + key + "' must be a boolean");
            }
        }
        try {
            for (auto& a : args) opt->add_result(a);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }
}

json option_value(const CLI::Option* opt) {
    if (opt->get_type_size() == 0) return opt->count() > 0 && opt->as<bool>();
    std::vector<std::string> vals;
    if (opt->count() > 0) {
        vals = opt->results();
    } else {
        const std::string d = opt->get_default_str();
        if (d.empty()) return nullptr;
        if (opt->get_expected_max() > 1) {
            try {
                return json::parse(d);
            } catch (const json::exception&) {
                return d;
            }
        }
        vals = {d};
    }
    auto one = [](const std::string& s) -> json {
        try {
            json v = json::parse(s);
            if (v.is_number() || v.is_boolean()) return v;
        } catch (const json::exception&) {
        }
        return s;
    };
    if (opt->get_expected_max() > 1) {
        json arr = json::array();
        for (const auto& s : vals) arr.push_back(one(s));
        return arr;
    }
    return one(vals.front());
}

// Effective option values of a subcommand, loadable again with --config.
json effective_config(const CLI::App* sub) {
    json j = json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string name = opt->get_lnames().front();
        if (name == "help" || name == "config") continue;
        json v = option_value(opt);
        if (!v.is_null()) j[name] = v;
    }
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void echo_config(const CLI::App* sub, const fs::path& primary_output) {
    write_text(fs::path(primary_output.string() + ".config.json"), effective_config(sub).dump(2) + "\n");
}

std::string need(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ConfigError("missing required option " + flag);
    return value;
}

std::string format_value(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

Domain domain_from_string(const std::string& s) {
    if (s == "wavelet") return Domain::Wavelet;
    if (s == "image") return Domain::Image;
    throw ConfigError("unknown domain '" + s + "'");
}

std::string domain_name(Domain d) { return d == Domain::Wavelet ? "wavelet" : "image"; }

Domain domain_of(const DenoiserNet& net) {
    switch (net.config().state_channels) {
        case 4: return Domain::Wavelet;
        case 1: return Domain::Image;
        default:
            throw ConfigError("checkpoint has " + std::to_string(net.config().state_channels) +
                              " state channels; expected 4 (wavelet) or 1 (image)");
    }
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    Common common;
    std::string in, out, report;
    std::string preset = "mild";
    double mmin = 0.0, mmax = 0.0;
    int events = 3;
    double max_translation = 3.0, max_rotation = 3.0;
    CLI::Option* mmin_opt = nullptr;
    CLI::Option* mmax_opt = nullptr;
};

void setup_simulate(CLI::App& app, SimulateArgs& a) {
    auto* sub = app.add_subcommand("simulate", "Corrupt a clean volume with simulated k-space motion");
    add_common(sub, a.common);
    sub->add_option("--in", a.in, "Clean input volume");
    sub->add_option("--out", a.out, "Corrupted output volume");
    sub->add_option("--report", a.report, "Motion report JSON (default: <out>.report.json)");
    sub->add_option("--preset", a.preset, "Severity preset")
        ->check(CLI::IsMember({"mild", "severe"}))
        ->capture_default_str();
    a.mmin_opt = sub->add_option("--mmin", a.mmin, "Minimum affected line fraction (overrides the preset)");
    a.mmax_opt = sub->add_option("--mmax", a.mmax, "Maximum affected line fraction (overrides the preset)");
    sub->add_option("--events", a.events, "Motion events")->capture_default_str();
    sub->add_option("--max-translation", a.max_translation, "Largest translation per axis, voxels")
        ->capture_default_str();
    sub->add_option("--max-rotation", a.max_rotation, "Largest rotation, degrees")->capture_default_str();
}

int run_simulate(const CLI::App* sub, const SimulateArgs& a) {
    const fs::path out = need(a.out, "--out");
    const Volume vol = load_volume(need(a.in, "--in"));
    MotionSpec spec = a.preset == "severe" ? MotionSpec::severe(a.common.seed) : MotionSpec::mild(a.common.seed);
    if (a.mmin_opt->count() > 0) spec.m_min = a.mmin;
    if (a.mmax_opt->count() > 0) spec.m_max = a.mmax;
    spec.n_events = a.events;
    spec.max_translation = a.max_translation;
    spec.max_rotation = a.max_rotation;
    auto [corrupted, report] = corrupt(vol, spec);
    save_volume(corrupted, out);
    const fs::path report_path = a.report.empty() ? fs::path(out.string() + ".report.json") : fs::path(a.report);
    json r = json::parse(report.to_json());
    r["spec"] = {{"m_min", spec.m_min},
                 {"m_max", spec.m_max},
                 {"n_events", spec.n_events},
                 {"max_translation", spec.max_translation},
                 {"max_rotation", spec.max_rotation},
                 {"seed", spec.seed}};
    write_text(report_path, r.dump(2) + "\n");
    echo_config(sub, out);
    std::cout << "simulate: fraction " << report.fraction << " (" << report.affected_lines << " of "
              << report.total_lines << " lines), PSNR " << format_value(psnr(corrupted, vol)) << " dB -> "
              << out.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    Common common;
    std::string data, out, loss_csv;
    std::string plane = "xy";
    std::string domain = "wavelet";
    std::string norm = "l1";
    int steps = 2000;
    std::size_t batch = 8;
    double lr = 1e-3;
    int lr_halve_every = 0;
    std::size_t features = 24, depth = 1, blocks = 1, wt_levels = 2, kernel = 3;
    bool precondition = true;
    double sigma_data = 0.1;
    int T = 100;
    double lambda = kDefaultLambda;
};

void setup_train(CLI::App& app, TrainArgs& a) {
    auto* sub = app.add_subcommand("train", "Train one plane's noise-prediction network");
    add_common(sub, a.common);
    sub->add_option("--data", a.data, "Directory of <id>.clean.vol / <id>.corrupt.vol pairs");
    sub->add_option("--out", a.out, "Checkpoint path");
    sub->add_option("--loss-csv", a.loss_csv, "Loss curve CSV (default: <out>.loss.csv)");
    sub->add_option("--plane", a.plane, "Slice plane")->check(CLI::IsMember({"xy", "xz"}))->capture_default_str();
    sub->add_option("--domain", a.domain, "State domain")
        ->check(CLI::IsMember({"wavelet", "image"}))
        ->capture_default_str();
    sub->add_option("--norm", a.norm, "Loss norm")->check(CLI::IsMember({"l1", "l2"}))->capture_default_str();
    sub->add_option("--steps", a.steps, "Optimization steps")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--batch", a.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--lr", a.lr, "Adam learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--lr-halve-every", a.lr_halve_every, "Halve the learning rate every N steps (0: never)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--features", a.features, "Feature channels (0: linear model)")->capture_default_str();
    sub->add_option("--depth", a.depth, "Encoder/decoder levels")->capture_default_str();
    sub->add_option("--blocks", a.blocks, "Residual blocks per encoder level")->capture_default_str();
    sub->add_option("--wt-levels", a.wt_levels, "Wavelet convolution levels")->capture_default_str();
    sub->add_option("--kernel", a.kernel, "Kernel size")->capture_default_str();
    sub->add_flag("--precondition,!--no-precondition", a.precondition, "Per-step input/output scaling")
        ->capture_default_str();
    sub->add_option("--sigma-data", a.sigma_data, "Preconditioning data spread")->capture_default_str();
    sub->add_option("--T", a.T, "Diffusion steps")->capture_default_str();
    sub->add_option("--lambda", a.lambda, "Stationary noise level")->capture_default_str();
}

int run_train(const CLI::App* sub, const TrainArgs& a) {
    const fs::path out = need(a.out, "--out");
    std::vector<std::string> ids;
    const auto data = load_dataset(need(a.data, "--data"), &ids);

    DenoiserConfig cfg;
    cfg.state_channels = a.domain == "wavelet" ? 4 : 1;
    cfg.features = a.features;
    cfg.depth = a.depth;
    cfg.blocks = a.blocks;
    cfg.wt_levels = a.wt_levels;
    cfg.kernel = a.kernel;
    cfg.precondition = a.precondition;
    cfg.sigma_data = a.sigma_data;
    const Plane plane = plane_from_string(a.plane);
    DenoiserNet net(cfg, plane);
    net.init(a.common.seed);
    const NoiseSchedule sched = build_schedule(a.T, a.lambda);

    TrainOptions opts;
    opts.steps = a.steps;
    opts.batch = a.batch;
    opts.lr = a.lr;
    opts.lr_halve_every = a.lr_halve_every;
    opts.norm = a.norm == "l2" ? LossNorm::L2 : LossNorm::L1;
    opts.seed = a.common.seed;
    const int every = std::max(1, a.steps / 20);
    opts.progress = [&](int step, double loss) {
        if (step % every == 0 || step == a.steps) std::cerr << "train[" << a.plane << "] step " << step << "/" << a.steps
                                                            << " loss " << loss << "\n";
    };
    const auto samples = make_training_samples(data, plane, domain_from_string(a.domain), cfg.stride());
    const TrainResult result = train(net, samples, sched, opts);

    save_checkpoint(net, sched, out);
    std::ostringstream csv;
    csv << "step,loss\n" << std::setprecision(10);
    for (std::size_t i = 0; i < result.loss.size(); ++i) csv << (i + 1) << "," << result.loss[i] << "\n";
    write_text(a.loss_csv.empty() ? fs::path(out.string() + ".loss.csv") : fs::path(a.loss_csv), csv.str());
    echo_config(sub, out);
    std::cout << "train: plane " << a.plane << ", " << data.size() << " pairs, " << samples.size() << " slices, "
              << net.param_count() << " weights, smoothed loss " << result.smoothed_loss.front() << " -> "
              << result.smoothed_loss.back() << " -> " << out.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------- restore

struct RestoreArgs {
    Common common;
    std::string in, out, ckpt_xy, ckpt_xz, oracle, timing, dump_dir;
    std::string mode = "3d";
    std::string alternation = "mod2";
    std::string domain = "wavelet";
    double alpha = 0.5;
    int dump_every = 0;
    bool no_x0_clamp = false;
    int T = 100;
    double lambda = kDefaultLambda;
};

void setup_restore(CLI::App& app, RestoreArgs& a) {
    auto* sub = app.add_subcommand("restore", "Restore a corrupted volume by reverse diffusion");
    add_common(sub, a.common);
    sub->add_option("--in", a.in, "Corrupted input volume");
    sub->add_option("--out", a.out, "Restored output volume");
    sub->add_option("--ckpt-xy", a.ckpt_xy, "XY-plane checkpoint");
    sub->add_option("--ckpt-xz", a.ckpt_xz, "XZ-plane checkpoint (not needed with --mode 2d)");
    sub->add_option("--oracle", a.oracle, "Clean volume; replays its exact recorded noise instead of networks");
    sub->add_option("--mode", a.mode, "3d alternates XY/XZ, 2d uses XY only")
        ->check(CLI::IsMember({"3d", "2d"}))
        ->capture_default_str();
    sub->add_option("--alternation", a.alternation, "Plane choice rule")
        ->check(CLI::IsMember({"mod2", "probabilistic"}))
        ->capture_default_str();
    sub->add_option("--alpha", a.alpha, "XY weight for probabilistic alternation (beta = 1 - alpha)")
        ->capture_default_str();
    sub->add_option("--domain", a.domain, "State domain for --oracle runs")
        ->check(CLI::IsMember({"wavelet", "image"}))
        ->capture_default_str();
    sub->add_flag("--no-x0-clamp", a.no_x0_clamp, "Do not clamp intermediate x0 estimates");
    sub->add_option("--timing", a.timing, "Timing summary JSON (default: <out>.timing.json)");
    sub->add_option("--dump-every", a.dump_every, "Write the working volume every N steps")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--dump-dir", a.dump_dir, "Directory for intermediate volumes");
    sub->add_option("--T", a.T, "Diffusion steps for --oracle runs")->capture_default_str();
    sub->add_option("--lambda", a.lambda, "Stationary noise level for --oracle runs")->capture_default_str();
}

bool same_schedule(const NoiseSchedule& a, const NoiseSchedule& b) {
    return a.T == b.T && a.lambda == b.lambda && a.theta == b.theta;
}

Checkpoint load_plane_checkpoint(const std::string& path, Plane expected, const std::string& flag) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.net.plane() != expected) {
        throw ConfigError(path + " holds a " + std::string(to_string(ck.net.plane())) + " network but was passed as " +
                          flag);
    }
    return ck;
}

void check_stride(const Volume& v, const DenoiserNet& net, Domain domain) {
    const std::size_t need_div = net.config().stride() * (domain == Domain::Wavelet ? 2 : 1);
    for (Plane p : {Plane::XY, Plane::XZ}) {
        auto [na, nb] = slice_shape(v.dims(), p);
        if (na % need_div || nb % need_div) {
            throw ConfigError(std::string(to_string(p)) + " slices of shape (" + std::to_string(na) + ", " +
                              std::to_string(nb) + ") are not divisible by the network stride " +
                              std::to_string(need_div));
        }
    }
}

int run_restore(const CLI::App* sub, const RestoreArgs& a) {
    const fs::path out = need(a.out, "--out");
    const Volume vT = load_volume(need(a.in, "--in"));
    const bool two_d = a.mode == "2d";

    SamplerConfig sc;
    sc.alpha = a.alpha;
    sc.beta = 1.0 - a.alpha;
    sc.alternation = a.alternation == "probabilistic" ? Alternation::Probabilistic : Alternation::DeterministicMod2;
    sc.seed = a.common.seed;
    if (a.no_x0_clamp) sc.x0_clamp.reset();
    sc.dump_every = a.dump_every;
    if (a.dump_every > 0) {
        sc.dump_dir = need(a.dump_dir, "--dump-dir");
        fs::create_directories(sc.dump_dir);
    }
    std::vector<StepInfo> steps;
    sc.progress = [&](const StepInfo& s) { steps.push_back(s); };
    sc.validate();

    std::unique_ptr<NoiseProvider> xy, xz;
    NoiseSchedule sched;
    if (!a.oracle.empty()) {
        const Volume v0 = load_volume(a.oracle);
        sched = build_schedule(a.T, a.lambda);
        sc.domain = domain_from_string(a.domain);
        auto store = record_oracle_noise(v0, vT, sched, sc, two_d);
        xy = oracle_provider(store);
        xz = oracle_provider(store);
    } else {
        Checkpoint cxy = load_plane_checkpoint(need(a.ckpt_xy, "--ckpt-xy"), Plane::XY, "--ckpt-xy");
        sched = cxy.schedule;
        sc.domain = domain_of(cxy.net);
        check_stride(vT, cxy.net, sc.domain);
        if (!two_d) {
            Checkpoint cxz = load_plane_checkpoint(need(a.ckpt_xz, "--ckpt-xz"), Plane::XZ, "--ckpt-xz");
            if (!same_schedule(cxy.schedule, cxz.schedule)) {
                throw ConfigError("the XY and XZ checkpoints were trained with different schedules");
            }
            if (domain_of(cxz.net) != sc.domain) throw ConfigError("the XY and XZ checkpoints use different domains");
            check_stride(vT, cxz.net, sc.domain);
            xz = std::make_unique<NetworkProvider>(std::move(cxz.net), sched);
        }
        xy = std::make_unique<NetworkProvider>(std::move(cxy.net), sched);
    }

    const auto start = std::chrono::steady_clock::now();
    const Volume restored =
        two_d ? restore_2d_baseline(vT, *xy, sched, sc) : restore(vT, PlaneProviders{xy.get(), xz.get()}, sched, sc);
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    save_volume(restored, out);

    std::size_t n_xy = 0;
    double step_sum = 0.0;
    for (const auto& s : steps) {
        n_xy += s.plane == Plane::XY;
        step_sum += s.seconds;
    }
    json timing = {{"total_seconds", total},
                   {"steps", steps.size()},
                   {"per_step_mean_seconds", steps.empty() ? 0.0 : step_sum / static_cast<double>(steps.size())},
                   {"wavelet", sc.domain == Domain::Wavelet},
                   {"mode", a.mode},
                   {"alternation", a.alternation},
                   {"xy_steps", n_xy},
                   {"xz_steps", steps.size() - n_xy}};
    write_text(a.timing.empty() ? fs::path(out.string() + ".timing.json") : fs::path(a.timing), timing.dump(2) + "\n");
    echo_config(sub, out);
    std::cout << "restore: " << steps.size() << " steps (" << n_xy << " xy), " << domain_name(sc.domain)
              << " domain, " << total << " s -> " << out.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    Common common;
    std::string pred, ref, out, id;
};

void setup_eval(CLI::App& app, EvalArgs& a) {
    auto* sub = app.add_subcommand("eval", "Per-plane PSNR/SSIM and z-discontinuity of a prediction");
    add_common(sub, a.common);
    sub->add_option("--pred", a.pred, "Predicted volume");
    sub->add_option("--ref", a.ref, "Reference volume");
    sub->add_option("--out", a.out, "Output CSV");
    sub->add_option("--id", a.id, "Volume id column (default: prediction file stem)");
}

int run_eval(const CLI::App* sub, const EvalArgs& a) {
    const fs::path out = need(a.out, "--out");
    const fs::path pred_path = need(a.pred, "--pred");
    const Volume pred = load_volume(pred_path);
    const Volume ref = load_volume(need(a.ref, "--ref"));
    std::string id = a.id.empty() ? pred_path.stem().string() : a.id;
    const auto rows = evaluate(id, pred, ref);
    std::ostringstream csv;
    csv << "volume_id,plane,metric,value\n";
    for (const auto& r : rows) csv << r.volume_id << "," << r.plane << "," << r.metric << "," << format_value(r.value) << "\n";
    write_text(out, csv.str());
    echo_config(sub, out);
    for (const auto& r : rows) std::cout << r.plane << " " << r.metric << " " << format_value(r.value) << "\n";
    return kOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    Common common;
    std::string out;
    std::vector<std::size_t> sizes{64, 128, 240};
    std::vector<std::string> modes{"wavelet", "image"};
    int steps = 10;
    std::size_t features = 24, depth = 1;
};

void setup_bench(CLI::App& app, BenchArgs& a) {
    auto* sub = app.add_subcommand("bench", "Time sampler steps with and without the wavelet domain");
    add_common(sub, a.common);
    sub->add_option("--out", a.out, "Output CSV");
    sub->add_option("--sizes", a.sizes, "Slice sizes")->delimiter(',')->capture_default_str();
    sub->add_option("--modes", a.modes, "Modes to time")
        ->delimiter(',')
        ->check(CLI::IsMember({"wavelet", "image"}))
        ->capture_default_str();
    sub->add_option("--steps", a.steps, "Timed steps per run")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--features", a.features, "Network feature channels")->capture_default_str();
    sub->add_option("--depth", a.depth, "Network encoder levels")->capture_default_str();
}

int run_bench(const CLI::App* sub, const BenchArgs& a) {
    const fs::path out = need(a.out, "--out");
    std::ostringstream csv;
    csv << "slice_size,mode,steps,mean_ms,std_ms\n";
    for (std::size_t size : a.sizes) {
        for (const auto& mode : a.modes) {
            const Domain domain = domain_from_string(mode);
            DenoiserConfig cfg;
            cfg.state_channels = domain == Domain::Wavelet ? 4 : 1;
            cfg.features = a.features;
            cfg.depth = a.depth;
            const std::size_t div = cfg.stride() * (domain == Domain::Wavelet ? 2 : 1);
            if (size == 0 || size % div != 0) {
                throw ConfigError("slice size " + std::to_string(size) + " is not a multiple of " + std::to_string(div) +
                                  " in " + mode + " mode");
            }
            DenoiserNet net(cfg, Plane::XY);
            net.init(a.common.seed);
            const NoiseSchedule sched = build_schedule(std::max(2, a.steps), kDefaultLambda);
            NetworkProvider provider(net, sched);

            Rng rng = substream(a.common.seed, {key(Stream::Phantom), size});
            std::uniform_real_distribution<float> u(0.0f, 1.0f);
            Volume vT({size, size, 2});
            for (float& v : vT.values()) v = u(rng);

            SamplerConfig sc;
            sc.domain = domain;
            sc.seed = a.common.seed;
            std::vector<double> ms;
            sc.progress = [&](const StepInfo& s) { ms.push_back(1e3 * s.seconds); };
            restore_2d_baseline(vT, provider, sched, sc);
            ms.resize(std::min<std::size_t>(ms.size(), static_cast<std::size_t>(a.steps)));

            const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
            double var = 0.0;
            for (double m : ms) var += (m - mean) * (m - mean);
            const double sd = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
            csv << size << "," << mode << "," << ms.size() << "," << format_value(mean) << "," << format_value(sd) << "\n";
            std::cout << "bench: " << size << "x" << size << " " << mode << " " << format_value(mean) << " ms/step\n";
        }
    }
    write_text(out, csv.str());
    echo_config(sub, out);
    return kOk;
}

// ---------------------------------------------------------------- phantom

struct PhantomArgs {
    Common common;
    std::string out;
    std::vector<std::size_t> dims{32, 32, 32};
};

void setup_phantom(CLI::App& app, PhantomArgs& a) {
    auto* sub = app.add_subcommand("phantom", "Write a synthetic ellipsoid phantom volume");
    add_common(sub, a.common);
    sub->add_option("--out", a.out, "Output volume");
    sub->add_option("--dims", a.dims, "Volume dimensions x,y,z")->delimiter(',')->expected(3)->capture_default_str();
}

int run_phantom(const CLI::App* sub, const PhantomArgs& a) {
    const fs::path out = need(a.out, "--out");
    if (a.dims.size() != 3) throw ConfigError("--dims needs three values");
    const Volume v = ellipsoid_phantom({a.dims[0], a.dims[1], a.dims[2]}, a.common.seed);
    save_volume(v, out);
    echo_config(sub, out);
    std::cout << "phantom: " << a.dims[0] << "x" << a.dims[1] << "x" << a.dims[2] << " -> " << out.string() << "\n";
    return kOk;
}

}  // namespace

std::vector<VolumePair> load_dataset(const fs::path& dir, std::vector<std::string>* ids) {
    if (!fs::is_directory(dir)) throw DatasetError("dataset directory " + dir.string() + " does not exist");
    const std::string clean_ext = ".clean.vol", corrupt_ext = ".corrupt.vol";
    auto ends_with = [](const std::string& s, const std::string& suffix) {
        return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    std::map<std::string, std::pair<bool, bool>> seen;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (ends_with(name, clean_ext)) seen[name.substr(0, name.size() - clean_ext.size())].first = true;
        if (ends_with(name, corrupt_ext)) seen[name.substr(0, name.size() - corrupt_ext.size())].second = true;
    }
    std::vector<VolumePair> pairs;
    for (const auto& [id, have] : seen) {
        if (!have.first) throw DatasetError("missing " + id + clean_ext + " for " + id + corrupt_ext);
        if (!have.second) throw DatasetError("missing " + id + corrupt_ext + " for " + id + clean_ext);
        VolumePair p{load_volume(dir / (id + clean_ext)), load_volume(dir / (id + corrupt_ext))};
        if (p.clean.dims() != p.corrupt.dims()) throw DatasetError("pair " + id + ": clean and corrupted shapes differ");
        if (!pairs.empty() && p.clean.dims() != pairs.front().clean.dims()) {
            throw DatasetError("pair " + id + " has a different shape from the rest of the dataset");
        }
        pairs.push_back(std::move(p));
        if (ids) ids->push_back(id);
    }
    if (pairs.empty()) throw DatasetError("no volume pairs found in " + dir.string());
    return pairs;
}

int run(int argc, const char* const* argv) {
    CLI::App app{"Pseudo-3D wavelet-domain diffusion restoration of motion-corrupted volumes", "p3d"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "p3d 0.1.0");

    SimulateArgs sim;
    TrainArgs tr;
    RestoreArgs rs;
    EvalArgs ev;
    BenchArgs bn;
    PhantomArgs ph;
    setup_phantom(app, ph);
    setup_simulate(app, sim);
    setup_train(app, tr);
    setup_restore(app, rs);
    setup_eval(app, ev);
    setup_bench(app, bn);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        auto common = [&]() -> const Common& {
            if (name == "simulate") return sim.common;
            if (name == "train") return tr.common;
            if (name == "restore") return rs.common;
            if (name == "eval") return ev.common;
            if (name == "phantom") return ph.common;
            return bn.common;
        };
        if (!common().config.empty()) apply_config(sub, common().config);
        set_max_threads(common().threads);
        if (name == "simulate") return run_simulate(sub, sim);
        if (name == "train") return run_train(sub, tr);
        if (name == "restore") return run_restore(sub, rs);
        if (name == "eval") return run_eval(sub, ev);
        if (name == "phantom") return run_phantom(sub, ph);
        return run_bench(sub, bn);
    } catch (const ParameterError& e) {
        std::cerr << "p3d: error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "p3d: error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "p3d: numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const StepError& e) {
        std::cerr << "p3d: numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "p3d: error: " << e.what() << "\n";
        return kData;
    }
}

}  // namespace p3d::cli
