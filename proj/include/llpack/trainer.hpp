#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "llpack/amplifier.hpp"
#include "llpack/dataio.hpp"
#include "llpack/model.hpp"
#include "llpack/objective.hpp"
#include "llpack/weights.hpp"

namespace llpack {

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

struct AdamState {
    AdamConfig cfg;
    std::int64_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;

    static AdamState create(const WeightStore& weights, AdamConfig cfg = {}) {
        AdamState s;
        s.cfg = cfg;
        for (const auto& [name, t] : weights) {
            s.m[name] = Tensor(t.dims(), 0.0f);
            s.v[name] = Tensor(t.dims(), 0.0f);
        }
        return s;
    }
};

namespace ops {

// Standard bias-corrected Adam update. Gradients missing from `grads` are
// treated as zero (moments still decay once the step counter advances, but
// from a zero start they stay zero).
inline void adam_step(WeightStore& weights, const std::map<std::string, Tensor>& grads, AdamState& state) {
    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double mc = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double vc = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (const auto& [name, grad] : grads) {
        (void)grad;
        if (!weights.has(name)) throw WeightError("adam_step: gradient for unknown weight \"" + name + "\"");
    }
    for (const auto& [name, current] : weights) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        if (!g.same_shape(current)) throw ShapeError("adam_step: gradient shape mismatch for \"" + name + "\"");
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        Tensor updated = current;
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / mc;
            const double vhat = vi / vc;
            updated[i] = static_cast<float>(updated[i] - state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps));
        }
        weights.set(name, std::move(updated));
    }
}

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm.
inline void clip_global_norm(std::map<std::string, Tensor>& grads, float max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        for (std::int64_t i = 0; i < g.numel(); ++i) sq += static_cast<double>(g[i]) * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const float s = static_cast<float>(max_norm / norm);
    for (auto& [name, g] : grads) {
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= s;
    }
}

}  // namespace ops

struct LossRow {
    std::int64_t iter = 0;
    double total = 0.0, l1 = 0.0, feat = 0.0, smooth = 0.0, tv = 0.0, wl1 = 0.0;
};

inline void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRow>& rows) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write loss curve: " + path.string());
    f << "iter,total,l1,feat,smooth,tv,wl1\n";
    for (const LossRow& r : rows) {
        f << r.iter << "," << r.total << "," << r.l1 << "," << r.feat << "," << r.smooth << "," << r.tv
          << "," << r.wl1 << "\n";
    }
}

struct TrainOptions {
    ModelConfig config;
    std::int64_t iters = 0;
    std::uint64_t seed = 0;
    int patch = 0;  // 0 = train on full stored images
    float clip_norm = 0.0f;  // 0 = disabled
    std::int64_t checkpoint_every = 0;  // 0 = no checkpoints
    std::filesystem::path checkpoint_dir;
    std::filesystem::path resume;  // checkpoint prefix to continue from
    LossWeights loss_weights;
    AdamConfig adam;
    std::uint64_t feature_seed = FeatureExtractor::kDefaultSeed;
};

struct TrainResult {
    WeightStore weights;
    std::vector<LossRow> curve;
};

namespace trainer_detail {

inline std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline void save_checkpoint(const std::filesystem::path& prefix, const WeightStore& weights,
                            const AdamState& adam, const Rng& rng, std::int64_t iter) {
    std::filesystem::create_directories(prefix.parent_path());
    save_weights(weights, prefix.string() + ".llpk");
    WeightStore moments;
    for (const auto& [name, t] : adam.m) moments.set("m/" + name, t);
    for (const auto& [name, t] : adam.v) moments.set("v/" + name, t);
    save_weights(moments, prefix.string() + ".opt.llpk");
    nlohmann::json state;
    state["iter"] = iter;
    state["adam_step"] = adam.step;
    std::vector<std::string> words;
    for (std::uint64_t w : rng.state()) words.push_back(hex64(w));
    state["rng"] = words;
    std::ofstream f(prefix.string() + ".state.json");
    if (!f) throw IoError("cannot write checkpoint state: " + prefix.string());
    f << state.dump(2) << "\n";
}

inline void load_checkpoint(const std::filesystem::path& prefix, WeightStore& weights, AdamState& adam,
                            Rng& rng, std::int64_t& iter) {
    weights = load_weights(prefix.string() + ".llpk");
    const WeightStore moments = load_weights(prefix.string() + ".opt.llpk");
    adam.m.clear();
    adam.v.clear();
    for (const auto& [name, t] : moments) {
        if (name.rfind("m/", 0) == 0) adam.m[name.substr(2)] = t;
        if (name.rfind("v/", 0) == 0) adam.v[name.substr(2)] = t;
    }
    std::ifstream f(prefix.string() + ".state.json");
    if (!f) throw IoError("cannot read checkpoint state: " + prefix.string());
    nlohmann::json state;
    f >> state;
    iter = state.at("iter").get<std::int64_t>();
    adam.step = state.at("adam_step").get<std::int64_t>();
    Rng::State words{};
    const auto& arr = state.at("rng");
    for (std::size_t i = 0; i < 4; ++i) {
        words[i] = std::stoull(arr.at(i).get<std::string>(), nullptr, 16);
    }
    rng.set_state(words);
}

}  // namespace trainer_detail

// Adam loop over paired samples with the composite loss. Amplification uses
// the stored ground-truth factor, entering the tape as a constant, so only
// the enhancement parameters receive gradients. Deterministic per seed;
// resuming from a checkpoint continues the identical trajectory.
inline TrainResult train(const TrainOptions& opts, const std::vector<PairedSample>& pairs) {
    opts.config.validate();
    if (pairs.empty()) throw ConfigError("train: empty dataset");
    for (const PairedSample& p : pairs) {
        if (p.kind != opts.config.input_kind) {
            throw ConfigError("train: dataset kind does not match model config");
        }
    }
    if (opts.patch != 0 && opts.patch % opts.config.spatial_multiple() != 0) {
        throw ConfigError("train: patch size must be divisible by " +
                          std::to_string(opts.config.spatial_multiple()));
    }

    WeightStore weights = build(opts.config, opts.seed);
    AdamState adam = AdamState::create(weights, opts.adam);
    Rng rng(opts.seed ^ 0x7261696e65720000ULL);
    std::int64_t start_iter = 0;
    if (!opts.resume.empty()) {
        trainer_detail::load_checkpoint(opts.resume, weights, adam, rng, start_iter);
    }

    const FeatureExtractor fe = FeatureExtractor::create(opts.feature_seed);
    const GaussianBlur blur = GaussianBlur::create();

    TrainResult result;
    for (std::int64_t iter = start_iter; iter < opts.iters; ++iter) {
        const std::size_t idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pairs.size()) - 1));
        const std::uint64_t patch_seed = rng.next_u64();
        const PairedSample* sample = &pairs[idx];
        PairedSample cropped;
        if (opts.patch > 0 && (sample->gt.height() > opts.patch || sample->gt.width() > opts.patch)) {
            cropped = ops::sample_patch(*sample, opts.patch, patch_seed);
            sample = &cropped;
        }

        Tape tape;
        const auto params = register_params(tape, weights, true);
        const int input = tape.leaf(sample->dark, false);
        const int amp = tape.leaf(Tensor({1}, sample->true_factor), false);
        const int out = tape_forward(tape, input, amp, params, opts.config);
        const int gt = tape.leaf(sample->gt, false);
        std::vector<int> param_ids;
        for (const auto& [name, id] : params) param_ids.push_back(id);
        const ad::LossNodes loss =
            ad::loss_total(tape, gt, out, param_ids, opts.loss_weights, fe, blur);

        LossRow row;
        row.iter = iter;
        row.total = tape.value(loss.total)[0];
        row.l1 = tape.value(loss.l1)[0];
        row.feat = tape.value(loss.feature)[0];
        row.smooth = tape.value(loss.smooth)[0];
        row.tv = tape.value(loss.tv)[0];
        row.wl1 = tape.value(loss.weight_l1)[0];
        if (!std::isfinite(row.total)) {
            throw Error("train: non-finite loss at iter " + std::to_string(iter) + " (l1=" +
                        std::to_string(row.l1) + ", feat=" + std::to_string(row.feat) + ", smooth=" +
                        std::to_string(row.smooth) + ", tv=" + std::to_string(row.tv) + ")");
        }
        result.curve.push_back(row);

        tape.backward(loss.total);
        std::map<std::string, Tensor> grads;
        for (const auto& [name, id] : params) grads[name] = tape.grad(id);
        if (opts.clip_norm > 0.0f) ops::clip_global_norm(grads, opts.clip_norm);
        ops::adam_step(weights, grads, adam);

        if (opts.checkpoint_every > 0 && (iter + 1) % opts.checkpoint_every == 0 &&
            !opts.checkpoint_dir.empty()) {
            trainer_detail::save_checkpoint(opts.checkpoint_dir / ("ckpt_" + std::to_string(iter + 1)),
                                            weights, adam, rng, iter + 1);
        }
    }
    result.weights = std::move(weights);
    return result;
}

inline TrainResult train_dir(const TrainOptions& opts, const std::filesystem::path& dataset_dir) {
    std::vector<PairedSample> pairs;
    for (const auto& dir : dataset::list_pairs(dataset_dir)) pairs.push_back(dataset::read_pair(dir));
    return train(opts, pairs);
}

// Mean PSNR of the model output against GT over a set of pairs, amplifying
// by each pair's true factor.
inline double evaluate_mean_psnr(const WeightStore& weights, const ModelConfig& cfg,
                                 const std::vector<PairedSample>& pairs) {
    double total = 0.0;
    for (const PairedSample& p : pairs) {
        const Tensor out = forward_with_amplification(p.dark, weights, cfg, p.true_factor);
        total += ops::psnr(out, p.gt);
    }
    return total / static_cast<double>(pairs.size());
}

// Regression training for the amplifier alone: squared error between the
// MLP's log-amplification and ln(true factor).
inline AmplifierMLP train_amplifier(const std::vector<std::pair<HistogramFeature, float>>& samples,
                                    std::int64_t iters, std::uint64_t seed, AdamConfig adam_cfg = {}) {
    if (samples.empty()) throw ConfigError("train_amplifier: empty sample set");
    AmplifierMLP mlp = AmplifierMLP::create(64, seed);
    WeightStore weights;
    mlp.to_store(weights);
    AdamState adam = AdamState::create(weights, adam_cfg);
    Rng rng(seed ^ 0x616d706c69667900ULL);
    for (std::int64_t iter = 0; iter < iters; ++iter) {
        const auto& [hist, k] =
            samples[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(samples.size()) - 1))];
        Tape tape;
        const auto params = register_params(tape, weights, true);
        const int h = tape.leaf(hist.mass, false);
        const int z = ad::amplifier_logits(tape, h, params.at("amp/w1"), params.at("amp/b1"),
                                           params.at("amp/w2"), params.at("amp/b2"));
        const int target = tape.leaf(Tensor({1}, std::log(k)), false);
        const int err = ad::sub(tape, z, target);
        const int loss = ad::sum(tape, ad::mul(tape, err, err));
        tape.backward(loss);
        std::map<std::string, Tensor> grads;
        for (const auto& [name, id] : params) grads[name] = tape.grad(id);
        ops::adam_step(weights, grads, adam);
    }
    return AmplifierMLP::from_store(weights);
}

}  // namespace llpack
