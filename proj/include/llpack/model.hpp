#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "llpack/amplifier.hpp"
#include "llpack/nnops.hpp"
#include "llpack/rearrange.hpp"
#include "llpack/rng.hpp"
#include "llpack/tape.hpp"
#include "llpack/tensor.hpp"
#include "llpack/weights.hpp"

namespace llpack {

enum class InputKind { bayer_raw, rgb };

// Full network topology. bayer_raw uses an outer 2x stage around the
// alpha_inner pack/unpack pair (16x total downsampling at alpha_inner = 8);
// rgb inputs skip it.
struct ModelConfig {
    InputKind input_kind = InputKind::bayer_raw;
    int alpha_inner = 8;
    int trunk_channels = 60;
    int rdn_blocks = 3;
    int rdn_layers_per_block = 6;
    int growth = 32;
    float activation_slope = 0.2f;
    // Ablation switch: use pixel_shuffle instead of unpack for the final
    // upsample. The two differ by a fixed channel permutation of the
    // expansion conv's output.
    bool decoder_shuffle = false;

    bool bayer() const { return input_kind == InputKind::bayer_raw; }
    int colors() const { return bayer() ? 4 : 3; }
    int input_channels() const { return bayer() ? 1 : 3; }
    // Spatial divisibility requirement on the input.
    int spatial_multiple() const { return bayer() ? 2 * alpha_inner : alpha_inner; }
    int encoder_in() const { return alpha_inner * alpha_inner; }
    int encoder_out() const { return trunk_channels / colors(); }
    // Channels entering the final expansion conv.
    int decoder_mid() const { return bayer() ? trunk_channels / 4 : trunk_channels; }
    int decoder_out() const { return 3 * alpha_inner * alpha_inner; }

    void validate() const {
        if (alpha_inner != 4 && alpha_inner != 8) {
            throw ConfigError("alpha_inner must be 4 or 8, got " + std::to_string(alpha_inner));
        }
        if (rdn_blocks < 1) throw ConfigError("rdn_blocks must be >= 1");
        if (rdn_layers_per_block < 1) throw ConfigError("rdn_layers_per_block must be >= 1");
        if (growth < 1) throw ConfigError("growth must be >= 1");
        if (trunk_channels < 1 || trunk_channels % colors() != 0) {
            throw ConfigError("trunk_channels must be divisible by the color count");
        }
        if (bayer() && trunk_channels % 4 != 0) {
            throw ConfigError("bayer config requires trunk_channels divisible by 4");
        }
    }

    static ModelConfig preset(const std::string& name) {
        ModelConfig cfg;
        if (name == "bayer8") {
            cfg.input_kind = InputKind::bayer_raw;
            cfg.alpha_inner = 8;
        } else if (name == "rgb8") {
            cfg.input_kind = InputKind::rgb;
            cfg.alpha_inner = 8;
        } else if (name == "rgb4") {
            cfg.input_kind = InputKind::rgb;
            cfg.alpha_inner = 4;
        } else {
            throw ConfigError("unknown config \"" + name + "\" (expected bayer8, rgb8 or rgb4)");
        }
        return cfg;
    }
};

namespace model_detail {

// Stable parameter naming; the README documents this list.
inline std::vector<std::pair<std::string, std::vector<int>>> parameter_shapes(const ModelConfig& cfg) {
    std::vector<std::pair<std::string, std::vector<int>>> out;
    out.emplace_back("amp/w1", std::vector<int>{64, AmplifierMLP::kHidden});
    out.emplace_back("amp/b1", std::vector<int>{AmplifierMLP::kHidden});
    out.emplace_back("amp/w2", std::vector<int>{AmplifierMLP::kHidden, 1});
    out.emplace_back("amp/b2", std::vector<int>{1});
    for (int c = 0; c < cfg.colors(); ++c) {
        const std::string base = "enc/c" + std::to_string(c);
        out.emplace_back(base + "/w", std::vector<int>{3, 3, cfg.encoder_in(), cfg.encoder_out()});
        out.emplace_back(base + "/b", std::vector<int>{cfg.encoder_out()});
    }
    for (int b = 0; b < cfg.rdn_blocks; ++b) {
        const std::string base = "rdn/b" + std::to_string(b);
        for (int l = 0; l < cfg.rdn_layers_per_block; ++l) {
            const int cin = cfg.trunk_channels + l * cfg.growth;
            out.emplace_back(base + "/l" + std::to_string(l) + "/w", std::vector<int>{3, 3, cin, cfg.growth});
            out.emplace_back(base + "/l" + std::to_string(l) + "/b", std::vector<int>{cfg.growth});
        }
        const int fuse_in = cfg.trunk_channels + cfg.rdn_layers_per_block * cfg.growth;
        out.emplace_back(base + "/fuse/w", std::vector<int>{1, 1, fuse_in, cfg.trunk_channels});
        out.emplace_back(base + "/fuse/b", std::vector<int>{cfg.trunk_channels});
    }
    out.emplace_back("rdn/gf1/w", std::vector<int>{1, 1, cfg.rdn_blocks * cfg.trunk_channels, cfg.trunk_channels});
    out.emplace_back("rdn/gf1/b", std::vector<int>{cfg.trunk_channels});
    out.emplace_back("rdn/gf2/w", std::vector<int>{3, 3, cfg.trunk_channels, cfg.trunk_channels});
    out.emplace_back("rdn/gf2/b", std::vector<int>{cfg.trunk_channels});
    out.emplace_back("dec/expand/w", std::vector<int>{3, 3, cfg.decoder_mid(), cfg.decoder_out()});
    out.emplace_back("dec/expand/b", std::vector<int>{cfg.decoder_out()});
    return out;
}

}  // namespace model_detail

// He-initialized weights for every parameter; biases start at zero.
// Deterministic per seed.
inline WeightStore build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    WeightStore store;
    std::uint64_t stream = seed;
    for (const auto& [name, dims] : model_detail::parameter_shapes(cfg)) {
        // Biases ("b", "b1", "b2" leaf names) start at zero.
        const bool is_bias = name[name.rfind('/') + 1] == 'b';
        if (is_bias) {
            store.set(name, Tensor(dims, 0.0f));
        } else {
            store.set(name, ops::he_init(dims, stream));
        }
        ++stream;
    }
    store.set("amp/b2", Tensor({1}, AmplifierMLP::kInitLogAmp));
    return store;
}

inline std::int64_t parameter_count(const WeightStore& store) { return store.param_count(); }

using ShapeObserver = std::function<void(const std::string&, const std::vector<int>&)>;

namespace model_detail {

// Single topology definition shared by the value path and the tape path.
// E supplies the handle type and the op bindings.
template <typename E>
typename E::V net_forward(E& e, typename E::V amplified, const ModelConfig& cfg) {
    using V = typename E::V;
    const int alpha = cfg.alpha_inner;

    // Encoder: split colors, pack each plane, reduce channels.
    std::vector<V> color_feats;
    V planes = amplified;
    if (cfg.bayer()) planes = e.bayer_split(amplified);
    for (int c = 0; c < cfg.colors(); ++c) {
        V plane = e.slice_channels(planes, c, 1);
        V packed = e.pack(plane, alpha);
        V reduced = e.leaky(e.conv(packed, "enc/c" + std::to_string(c), 1));
        color_feats.push_back(reduced);
    }
    V trunk_in = e.concat(color_feats);
    e.note("encoder", trunk_in);

    // RDN trunk: dense blocks with local fusion + residual, then global
    // fusion (1x1, 3x3) and a global residual.
    V x = trunk_in;
    std::vector<V> block_outputs;
    for (int b = 0; b < cfg.rdn_blocks; ++b) {
        const std::string base = "rdn/b" + std::to_string(b);
        std::vector<V> feats{x};
        for (int l = 0; l < cfg.rdn_layers_per_block; ++l) {
            V dense_in = feats.size() == 1 ? feats[0] : e.concat(feats);
            V grown = e.leaky(e.conv(dense_in, base + "/l" + std::to_string(l), 1));
            feats.push_back(grown);
        }
        V fused = e.conv(e.concat(feats), base + "/fuse", 0);
        x = e.add(fused, x);
        block_outputs.push_back(x);
        e.note("rdn_block", x);
    }
    V global = e.conv(e.concat(block_outputs), "rdn/gf1", 0);
    global = e.conv(global, "rdn/gf2", 1);
    V trunk_out = e.add(global, trunk_in);
    e.note("trunk", trunk_out);

    // Decoder: optional 2x unpack (bayer), channel expansion, final unpack.
    V dec = trunk_out;
    if (cfg.bayer()) dec = e.unpack(dec, 2);
    dec = e.leaky(e.conv(dec, "dec/expand", 1));
    e.note("expand", dec);
    V out = cfg.decoder_shuffle ? e.pixel_shuffle(dec, alpha) : e.unpack(dec, alpha);
    return e.clamp01(out);
}

struct RawEngine {
    using V = Tensor;
    const WeightStore& ws;
    const ModelConfig& cfg;
    const ShapeObserver* observer = nullptr;

    V conv(const V& x, const std::string& name, int pad) const {
        return ops::conv2d(x, ws.get(name + "/w"), ws.get(name + "/b"), 1, pad);
    }
    V leaky(const V& x) const { return ops::leaky_relu(x, cfg.activation_slope); }
    V pack(const V& x, int alpha) const { return ops::pack(x, alpha); }
    V unpack(const V& x, int alpha) const { return ops::unpack(x, alpha); }
    V pixel_shuffle(const V& x, int alpha) const { return ops::pixel_shuffle(x, alpha); }
    V bayer_split(const V& x) const { return ops::bayer_split(x); }
    V slice_channels(const V& x, int start, int count) const { return ops::slice_channels(x, start, count); }
    V concat(const std::vector<V>& xs) const { return ops::concat_channels(xs); }
    V add(const V& a, const V& b) const { return ops::add(a, b); }
    V clamp01(const V& x) const { return ops::clamp(x, 0.0f, 1.0f); }
    void note(const char* stage, const V& x) const {
        if (observer) (*observer)(stage, x.dims());
    }
};

struct TapeEngine {
    using V = int;
    Tape& t;
    const std::map<std::string, int>& params;
    const ModelConfig& cfg;
    const ShapeObserver* observer = nullptr;

    int param(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw WeightError("missing weight \"" + name + "\"");
        return it->second;
    }
    V conv(V x, const std::string& name, int pad) const {
        return ad::conv2d(t, x, param(name + "/w"), param(name + "/b"), 1, pad);
    }
    V leaky(V x) const { return ad::leaky_relu(t, x, cfg.activation_slope); }
    V pack(V x, int alpha) const { return ad::pack(t, x, alpha); }
    V unpack(V x, int alpha) const { return ad::unpack(t, x, alpha); }
    V pixel_shuffle(V x, int alpha) const { return ad::pixel_shuffle(t, x, alpha); }
    V bayer_split(V x) const { return ad::bayer_split(t, x); }
    V slice_channels(V x, int start, int count) const { return ad::slice_channels(t, x, start, count); }
    V concat(const std::vector<V>& xs) const { return ad::concat_channels(t, xs); }
    V add(V a, V b) const { return ad::add(t, a, b); }
    V clamp01(V x) const { return ad::clamp(t, x, 0.0f, 1.0f); }
    void note(const char* stage, V x) const {
        if (observer) (*observer)(stage, t.value(x).dims());
    }
};

inline void check_input(const Tensor& raw, const ModelConfig& cfg) {
    if (raw.rank() != 3 || raw.channels() != cfg.input_channels()) {
        throw ShapeError("forward: expected (H, W, " + std::to_string(cfg.input_channels()) +
                         ") input, got " + shape_string(raw.dims()));
    }
    const int m = cfg.spatial_multiple();
    if (raw.height() % m != 0 || raw.width() % m != 0) {
        throw ShapeError("forward: spatial dims " + shape_string(raw.dims()) +
                         " must be divisible by " + std::to_string(m));
    }
}

}  // namespace model_detail

// Inference with an explicit amplification factor.
inline Tensor forward_with_amplification(const Tensor& raw, const WeightStore& weights,
                                         const ModelConfig& cfg, float amplification,
                                         const ShapeObserver* observer = nullptr) {
    cfg.validate();
    model_detail::check_input(raw, cfg);
    model_detail::RawEngine engine{weights, cfg, observer};
    Tensor amplified = ops::apply_amplification(raw, amplification);
    return model_detail::net_forward(engine, std::move(amplified), cfg);
}

// Inference with the amplifier MLP estimating the factor from the input
// histogram.
inline Tensor forward(const Tensor& raw, const WeightStore& weights, const ModelConfig& cfg,
                      const ShapeObserver* observer = nullptr) {
    const HistogramFeature hist = ops::log_histogram(raw);
    const float amp = ops::predict_amplification(hist, AmplifierMLP::from_store(weights));
    return forward_with_amplification(raw, weights, cfg, amp, observer);
}

// Registers every store tensor as a tape leaf. Training marks them
// requires-grad; evaluation may not.
inline std::map<std::string, int> register_params(Tape& t, const WeightStore& store, bool requires_grad) {
    std::map<std::string, int> ids;
    for (const auto& [name, tensor] : store) ids[name] = t.leaf(tensor, requires_grad);
    return ids;
}

// Training-path forward on a tape. `amp` is a one-element node (a constant
// leaf for ground-truth exposure, or the amplifier prediction node).
inline int tape_forward(Tape& t, int input, int amp, const std::map<std::string, int>& params,
                        const ModelConfig& cfg, const ShapeObserver* observer = nullptr) {
    cfg.validate();
    model_detail::check_input(t.value(input), cfg);
    model_detail::TapeEngine engine{t, params, cfg, observer};
    const int amplified = ad::scale_node(t, input, amp);
    return model_detail::net_forward(engine, amplified, cfg);
}

// Gradient-support size of (pack alpha, 3x3 conv) seen from one LR output
// pixel; equals (3*alpha)^2 on a sufficiently large input.
inline int count_receptive_field(int alpha) {
    if (alpha < 1) throw ConfigError("count_receptive_field: alpha must be >= 1");
    const int side = 5 * alpha;
    Tape t;
    const int input = t.leaf(Tensor({side, side, 1}, 1.0f), true);
    const int packed = ad::pack(t, input, alpha);
    const int w = t.leaf(Tensor({3, 3, alpha * alpha, 1}, 1.0f), false);
    const int b = t.leaf(Tensor({1}, 0.0f), false);
    const int conv = ad::conv2d(t, packed, w, b, 1, 1);
    Tensor pick(t.value(conv).dims(), 0.0f);
    pick.at(2, 2, 0) = 1.0f;
    const int indicator = t.leaf(std::move(pick), false);
    const int root = ad::sum(t, ad::mul(t, conv, indicator));
    t.backward(root);
    const Tensor& g = t.grad(input);
    int count = 0;
    for (std::int64_t i = 0; i < g.numel(); ++i) {
        if (g[i] != 0.0f) ++count;
    }
    return count;
}

}  // namespace llpack
