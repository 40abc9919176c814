// Command-line front end: enhancement, training, benchmarking, dataset
// synthesis and the receptive-field probe.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "llpack/llpack.hpp"

namespace fs = std::filesystem;
using namespace llpack;

namespace {

std::vector<int> parse_shape(const std::string& text, std::size_t expected_dims) {
    std::vector<int> dims;
    std::string token;
    for (char c : text + "x") {
        if (c == 'x' || c == 'X') {
            if (token.empty()) throw ConfigError("bad shape \"" + text + "\"");
            dims.push_back(std::stoi(token));
            token.clear();
        } else {
            token += c;
        }
    }
    if (dims.size() != expected_dims) {
        throw ConfigError("expected " + std::to_string(expected_dims) + " shape dims in \"" + text + "\"");
    }
    return dims;
}

int run_enhance(const std::string& input, const std::string& weights_path, const std::string& output,
                const std::string& amplify, const std::string& config_name, int black, int white,
                const std::string& phase_name) {
    const ModelConfig cfg = ModelConfig::preset(config_name);
    const WeightStore weights = load_weights(weights_path);

    Tensor raw;
    if (cfg.input_kind == InputKind::bayer_raw) {
        raw = ops::read_bayer_pgm(input, black, white, bayer_phase_from_string(phase_name)).data;
    } else {
        raw = ops::read_rgb_ppm(input);
    }

    float amp = 0.0f;
    if (amplify == "auto") {
        amp = ops::predict_amplification(ops::log_histogram(raw), AmplifierMLP::from_store(weights));
    } else {
        amp = std::stof(amplify);
    }

    memory::reset_peak();
    const std::size_t baseline = memory::current_bytes();
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor restored = forward_with_amplification(raw, weights, cfg, amp);
    const auto t1 = std::chrono::steady_clock::now();
    const double latency = std::chrono::duration<double>(t1 - t0).count();
    const std::size_t peak = memory::peak_bytes() - baseline;

    ops::write_rgb(output, restored);
    std::printf("amplification=%.4f latency=%.3fs peak_bytes=%zu\n", amp, latency, peak);
    return 0;
}

int run_train(const std::string& config_name, const std::string& data_dir, std::int64_t iters,
              std::uint64_t seed, const std::string& out_path, const std::string& curve_path, int patch,
              float clip_norm, std::int64_t checkpoint_every, const std::string& checkpoint_dir,
              const std::string& resume, bool amplifier_only, const std::string& init_weights) {
    if (amplifier_only) {
        std::vector<std::pair<HistogramFeature, float>> samples;
        for (const auto& dir : dataset::list_pairs(data_dir)) {
            const PairedSample pair = dataset::read_pair(dir);
            samples.emplace_back(ops::log_histogram(pair.dark), pair.true_factor);
        }
        const AmplifierMLP mlp = train_amplifier(samples, iters, seed);
        WeightStore store;
        if (!init_weights.empty()) store = load_weights(init_weights);
        mlp.to_store(store);
        save_weights(store, out_path);
        std::printf("trained amplifier on %zu samples, saved %s\n", samples.size(), out_path.c_str());
        return 0;
    }

    TrainOptions opts;
    opts.config = ModelConfig::preset(config_name);
    opts.iters = iters;
    opts.seed = seed;
    opts.patch = patch;
    opts.clip_norm = clip_norm;
    opts.checkpoint_every = checkpoint_every;
    opts.checkpoint_dir = checkpoint_dir;
    if (!resume.empty()) opts.resume = resume;
    const TrainResult result = train_dir(opts, data_dir);
    save_weights(result.weights, out_path);
    if (!curve_path.empty()) write_loss_curve(curve_path, result.curve);
    const double last = result.curve.empty() ? 0.0 : result.curve.back().total;
    std::printf("trained %lld iters, final loss %.6f, saved %s\n", static_cast<long long>(iters), last,
                out_path.c_str());
    return 0;
}

int run_synth(const std::string& out_dir, int count, const std::string& size_text,
              const std::string& kind_name, const std::string& pattern, const std::string& factors_text,
              float k_min, float k_max, float read_sigma, float shot_gain, std::uint64_t seed) {
    const std::vector<int> size = parse_shape(size_text, 2);
    const InputKind kind = kind_name == "bayer" ? InputKind::bayer_raw : InputKind::rgb;
    std::vector<float> factors;
    if (!factors_text.empty()) {
        std::string token;
        for (char c : factors_text + ",") {
            if (c == ',') {
                if (!token.empty()) factors.push_back(std::stof(token));
                token.clear();
            } else {
                token += c;
            }
        }
    }
    Rng rng(seed);
    NoiseParams noise{read_sigma, shot_gain};
    std::vector<std::string> ids;
    for (int i = 0; i < count; ++i) {
        const Tensor clean = generate_clean_image(rng, size[0], size[1], pattern);
        const float k = factors.empty() ? rng.uniform(k_min, k_max)
                                        : factors[static_cast<std::size_t>(i) % factors.size()];
        const PairedSample pair = ops::synthesize_pair(clean, k, noise, rng.next_u64(), kind);
        char id[16];
        std::snprintf(id, sizeof id, "%04d", i);
        dataset::write_pair(out_dir, id, pair);
        ids.emplace_back(id);
    }
    dataset::write_manifest(out_dir, ids);
    std::printf("wrote %d pairs to %s\n", count, out_dir.c_str());
    return 0;
}

int run_bench_op(const std::string& op, const std::string& shape_text, int alpha, int reps, bool parallel,
                 std::uint64_t seed, const std::string& out_path) {
    const BenchResult r = bench_op(op, parse_shape(shape_text, 3), alpha, reps, parallel, seed);
    const std::string line = bench_csv_header() + "\n" + to_csv(r) + "\n";
    if (out_path.empty()) {
        std::fputs(line.c_str(), stdout);
    } else {
        std::ofstream f(out_path);
        f << line;
    }
    return 0;
}

int run_bench_forward(const std::string& config_name, const std::string& shape_text, int reps,
                      bool parallel, std::uint64_t seed, const std::string& out_path) {
    const std::vector<int> shape = parse_shape(shape_text, 2);
    const BenchResult r =
        bench_forward(ModelConfig::preset(config_name), shape[0], shape[1], reps, parallel, seed);
    const std::string line = bench_csv_header() + "\n" + to_csv(r) + "\n";
    if (out_path.empty()) {
        std::fputs(line.c_str(), stdout);
    } else {
        std::ofstream f(out_path);
        f << line;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLPackNet: CPU low-light image enhancement"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "global RNG seed")->capture_default_str();

    // enhance
    auto* enhance = app.add_subcommand("enhance", "restore a dark image");
    std::string in_path, weights_path, out_path, amplify = "auto", config_name = "bayer8";
    std::string phase_name = "rggb";
    int black = 512, white = 16383;
    enhance->add_option("--input", in_path, "input image (PGM for bayer8, PPM for rgb configs)")->required();
    enhance->add_option("--weights", weights_path, ".llpk weight store")->required();
    enhance->add_option("--output", out_path, "output PPM path")->required();
    enhance->add_option("--amplify", amplify, "auto or a fixed factor >= 1")->capture_default_str();
    enhance->add_option("--config", config_name, "bayer8, rgb8 or rgb4")
        ->check(CLI::IsMember({"bayer8", "rgb8", "rgb4"}))
        ->capture_default_str();
    enhance->add_option("--black", black, "sensor black level (ADU)")->capture_default_str();
    enhance->add_option("--white", white, "sensor white level (ADU)")->capture_default_str();
    enhance->add_option("--phase", phase_name, "bayer phase")
        ->check(CLI::IsMember({"rggb", "bggr", "grbg", "gbrg"}))
        ->capture_default_str();

    // train
    auto* train_cmd = app.add_subcommand("train", "optimize weights on a paired dataset");
    std::string data_dir, train_out = "weights.llpk", curve_path, checkpoint_dir, resume, init_weights;
    std::string train_config = "bayer8";
    std::int64_t iters = 1000, checkpoint_every = 0;
    int patch = 0;
    float clip_norm = 0.0f;
    bool amplifier_only = false;
    train_cmd->add_option("--config", train_config, "bayer8, rgb8 or rgb4")
        ->check(CLI::IsMember({"bayer8", "rgb8", "rgb4"}))
        ->capture_default_str();
    train_cmd->add_option("--data", data_dir, "dataset directory")->required();
    train_cmd->add_option("--iters", iters, "iterations")->capture_default_str();
    train_cmd->add_option("--out", train_out, "output .llpk path")->capture_default_str();
    train_cmd->add_option("--curve", curve_path, "loss-curve CSV path");
    train_cmd->add_option("--patch", patch, "training patch size (0 = full images)")->capture_default_str();
    train_cmd->add_option("--clip-norm", clip_norm, "global gradient-norm clip (0 = off)")
        ->capture_default_str();
    train_cmd->add_option("--checkpoint-every", checkpoint_every, "checkpoint cadence (0 = off)")
        ->capture_default_str();
    train_cmd->add_option("--checkpoint-dir", checkpoint_dir, "checkpoint directory");
    train_cmd->add_option("--resume", resume, "checkpoint prefix to resume from");
    train_cmd->add_flag("--amplifier-only", amplifier_only, "train only the amplifier MLP regression");
    train_cmd->add_option("--init-weights", init_weights, "store to merge amplifier weights into");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
    std::string synth_dir, synth_size = "64x64", synth_kind = "bayer", synth_pattern = "smooth";
    std::string factors_text;
    int synth_count = 8;
    float k_min = 50.0f, k_max = 250.0f, read_sigma = 0.0f, shot_gain = 0.0f;
    synth->add_option("--out", synth_dir, "dataset directory")->required();
    synth->add_option("--count", synth_count, "number of pairs")->capture_default_str();
    synth->add_option("--size", synth_size, "image size HxW")->capture_default_str();
    synth->add_option("--kind", synth_kind, "bayer or rgb")
        ->check(CLI::IsMember({"bayer", "rgb"}))
        ->capture_default_str();
    synth->add_option("--pattern", synth_pattern, "clean-image pattern")
        ->check(CLI::IsMember({"flat", "smooth", "blocks"}))
        ->capture_default_str();
    synth->add_option("--factors", factors_text, "comma-separated darkening factors (cycled)");
    synth->add_option("--k-min", k_min, "min darkening factor")->capture_default_str();
    synth->add_option("--k-max", k_max, "max darkening factor")->capture_default_str();
    synth->add_option("--read-sigma", read_sigma, "read-noise stddev")->capture_default_str();
    synth->add_option("--shot-gain", shot_gain, "shot-noise variance gain")->capture_default_str();

    // bench
    auto* bench = app.add_subcommand("bench", "micro-benchmarks");
    bench->require_subcommand(1);
    auto* bench_op_cmd = bench->add_subcommand("op", "time one upsampling operator");
    std::string bench_op_name, bench_shape = "256x256x128", bench_out;
    int bench_alpha = 2, bench_reps = 9;
    bool bench_parallel = false;
    bench_op_cmd->add_option("--op", bench_op_name, "unpack, pixel_shuffle, transposed_conv or interp")
        ->required()
        ->check(CLI::IsMember({"unpack", "pixel_shuffle", "transposed_conv", "interp"}));
    bench_op_cmd->add_option("--shape", bench_shape, "input HxWxC")->capture_default_str();
    bench_op_cmd->add_option("--alpha", bench_alpha, "upsampling factor")->capture_default_str();
    bench_op_cmd->add_option("--reps", bench_reps, "timed repetitions (>= 5)")->capture_default_str();
    bench_op_cmd->add_flag("--parallel", bench_parallel, "allow internal op parallelism");
    bench_op_cmd->add_option("--out", bench_out, "CSV output path (default stdout)");

    auto* bench_fwd_cmd = bench->add_subcommand("forward", "time an end-to-end forward pass");
    std::string bench_fwd_config = "bayer8", bench_fwd_shape = "512x512", bench_fwd_out;
    int bench_fwd_reps = 5;
    bool bench_fwd_parallel = false;
    bench_fwd_cmd->add_option("--config", bench_fwd_config, "model config")
        ->check(CLI::IsMember({"bayer8", "rgb8", "rgb4"}))
        ->capture_default_str();
    bench_fwd_cmd->add_option("--shape", bench_fwd_shape, "input HxW")->capture_default_str();
    bench_fwd_cmd->add_option("--reps", bench_fwd_reps, "timed repetitions (>= 5)")->capture_default_str();
    bench_fwd_cmd->add_flag("--parallel", bench_fwd_parallel, "allow internal op parallelism");
    bench_fwd_cmd->add_option("--out", bench_fwd_out, "CSV output path (default stdout)");

    // probe-rf
    auto* probe = app.add_subcommand("probe-rf", "gradient-support receptive field of pack + 3x3 conv");
    int probe_alpha = 10;
    probe->add_option("--alpha", probe_alpha, "pack factor")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*enhance) {
            return run_enhance(in_path, weights_path, out_path, amplify, config_name, black, white,
                               phase_name);
        }
        if (*train_cmd) {
            return run_train(train_config, data_dir, iters, seed, train_out, curve_path, patch, clip_norm,
                             checkpoint_every, checkpoint_dir, resume, amplifier_only, init_weights);
        }
        if (*synth) {
            return run_synth(synth_dir, synth_count, synth_size, synth_kind, synth_pattern, factors_text,
                             k_min, k_max, read_sigma, shot_gain, seed);
        }
        if (*bench) {
            if (*bench_op_cmd) {
                return run_bench_op(bench_op_name, bench_shape, bench_alpha, bench_reps, bench_parallel,
                                    seed, bench_out);
            }
            return run_bench_forward(bench_fwd_config, bench_fwd_shape, bench_fwd_reps, bench_fwd_parallel,
                                     seed, bench_fwd_out);
        }
        if (*probe) {
            std::printf("%d\n", count_receptive_field(probe_alpha));
            return 0;
        }
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 1;
}
