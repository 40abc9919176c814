#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "llpack/nnops.hpp"
#include "llpack/tape.hpp"
#include "llpack/tensor.hpp"
#include "llpack/weights.hpp"

namespace llpack {

// 64 bins spanning [v_min, v_max] with edges equidistant in the log domain:
// e_k = v_min * r^k, r = (v_max/v_min)^(1/bins). Values below v_min count
// into bin 0; bins are closed-left half-open-right; v_max lands in the top
// bin.
struct HistogramConfig {
    int bins = 64;
    double v_min = 0x1.0p-14;  // 2^-14 normalized intensity
    double v_max = 1.0;

    double edge(int k) const { return v_min * std::pow(v_max / v_min, static_cast<double>(k) / bins); }
};

struct HistogramFeature {
    Tensor mass;  // (bins), probabilities summing to 1
};

// One-hidden-layer perceptron mapping the histogram to a log-amplification.
struct AmplifierMLP {
    Tensor w1;  // (bins, hidden)
    Tensor b1;  // (hidden)
    Tensor w2;  // (hidden, 1)
    Tensor b2;  // (1)

    static constexpr int kHidden = 64;
    static constexpr float kMinAmp = 1.0f;
    static constexpr float kMaxAmp = 1000.0f;
    // Untrained prediction is exp(b2) = 100, a typical exposure ratio; a
    // zero init would pin the output at the clamp floor where no gradient
    // flows.
    static constexpr float kInitLogAmp = 4.60517019f;  // ln 100

    static AmplifierMLP create(int bins, std::uint64_t seed) {
        AmplifierMLP mlp;
        mlp.w1 = ops::he_init({bins, kHidden}, seed);
        mlp.b1 = Tensor({kHidden}, 0.0f);
        mlp.w2 = ops::he_init({kHidden, 1}, seed + 1);
        mlp.b2 = Tensor({1}, kInitLogAmp);
        return mlp;
    }

    static AmplifierMLP from_store(const WeightStore& s) {
        return AmplifierMLP{s.get("amp/w1"), s.get("amp/b1"), s.get("amp/w2"), s.get("amp/b2")};
    }

    void to_store(WeightStore& s) const {
        s.set("amp/w1", w1);
        s.set("amp/b1", b1);
        s.set("amp/w2", w2);
        s.set("amp/b2", b2);
    }
};

namespace ops {

inline int histogram_bin(double v, const HistogramConfig& cfg) {
    if (v < cfg.v_min) return 0;
    const double ratio = std::log(v / cfg.v_min) / std::log(cfg.v_max / cfg.v_min);
    int k = static_cast<int>(ratio * cfg.bins);
    if (k < 0) k = 0;
    if (k > cfg.bins - 1) k = cfg.bins - 1;
    // log rounding can be off by one near an edge; settle against the edges.
    while (k + 1 <= cfg.bins - 1 && v >= cfg.edge(k + 1)) ++k;
    while (k > 0 && v < cfg.edge(k)) --k;
    return k;
}

// Probability-normalized log-domain histogram of all values in [0, 1].
inline HistogramFeature log_histogram(const Tensor& raw, const HistogramConfig& cfg = {}) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(cfg.bins), 0);
    for (std::int64_t i = 0; i < raw.numel(); ++i) {
        const float v = raw[i];
        if (v < 0.0f || v > 1.0f) {
            throw DomainError("log_histogram: value " + std::to_string(v) + " outside [0,1]");
        }
        ++counts[static_cast<std::size_t>(histogram_bin(v, cfg))];
    }
    HistogramFeature feat;
    feat.mass = Tensor({cfg.bins});
    const double inv = 1.0 / static_cast<double>(raw.numel());
    for (int k = 0; k < cfg.bins; ++k) {
        feat.mass[k] = static_cast<float>(counts[static_cast<std::size_t>(k)] * inv);
    }
    return feat;
}

// A = clamp(exp(z), 1, 1000) with z = W2 relu(W1 h + b1) + b2.
inline float predict_amplification(const HistogramFeature& h, const AmplifierMLP& mlp) {
    const Tensor hidden = leaky_relu(linear(h.mass, mlp.w1, mlp.b1), 0.0f);
    const float z = linear(hidden, mlp.w2, mlp.b2)[0];
    const float a = std::exp(z);
    return a < AmplifierMLP::kMinAmp ? AmplifierMLP::kMinAmp
                                     : (a > AmplifierMLP::kMaxAmp ? AmplifierMLP::kMaxAmp : a);
}

// Linear-domain scaling; deliberately unclamped, amplified values may
// exceed 1.
inline Tensor apply_amplification(const Tensor& raw, float amplification) {
    if (amplification < 1.0f) {
        throw DomainError("apply_amplification: factor must be >= 1, got " + std::to_string(amplification));
    }
    return scale(raw, amplification);
}

}  // namespace ops

namespace ad {

// Tape path for the amplifier: histogram enters as a constant leaf, the MLP
// parameters are the differentiable inputs. Returns the id of the clamped
// amplification scalar.
inline int predict_amplification(Tape& t, int hist, int w1, int b1, int w2, int b2) {
    const int hidden = relu(t, linear(t, hist, w1, b1));
    const int z = linear(t, hidden, w2, b2);
    return clamp(t, exp(t, z), AmplifierMLP::kMinAmp, AmplifierMLP::kMaxAmp);
}

// Pre-clamp log-amplification, used as the regression output when training
// the amplifier alone.
inline int amplifier_logits(Tape& t, int hist, int w1, int b1, int w2, int b2) {
    const int hidden = relu(t, linear(t, hist, w1, b1));
    return linear(t, hidden, w2, b2);
}

}  // namespace ad
}  // namespace llpack
