#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace llpack;

TEST_CASE("log histogram edge conventions") {
    const HistogramConfig cfg;

    const Tensor zeros({4, 4, 1}, 0.0f);
    const HistogramFeature hz = ops::log_histogram(zeros, cfg);
    REQUIRE(hz.mass[0] == 1.0f);
    for (int k = 1; k < 64; ++k) REQUIRE(hz.mass[k] == 0.0f);

    const Tensor ones({4, 4, 1}, 1.0f);
    const HistogramFeature ho = ops::log_histogram(ones, cfg);
    REQUIRE(ho.mass[63] == 1.0f);

    Tensor half({2, 2, 1}, 0.0f);
    half[2] = 1.0f;
    half[3] = 1.0f;
    const HistogramFeature hh = ops::log_histogram(half, cfg);
    REQUIRE(hh.mass[0] == 0.5f);
    REQUIRE(hh.mass[63] == 0.5f);
    for (int k = 1; k < 63; ++k) REQUIRE(hh.mass[k] == 0.0f);
}

TEST_CASE("log histogram rejects values outside [0,1]") {
    REQUIRE_THROWS_AS(ops::log_histogram(Tensor({2, 2, 1}, 1.5f)), DomainError);
    REQUIRE_THROWS_AS(ops::log_histogram(Tensor({2, 2, 1}, -0.1f)), DomainError);
}

TEST_CASE("histogram mass sums to one") {
    testutil::Rng rng(1);
    const Tensor img = testutil::random_tensor(rng, {32, 32, 1}, 0.0f, 1.0f);
    const HistogramFeature h = ops::log_histogram(img);
    double total = 0.0;
    for (int k = 0; k < 64; ++k) {
        REQUIRE(h.mass[k] >= 0.0f);
        total += h.mass[k];
    }
    REQUIRE(std::abs(total - 1.0) < 1e-6);
}

TEST_CASE("bin edges are closed-left half-open-right") {
    const HistogramConfig cfg;
    // Exactly on edge k: must land in bin k.
    for (int k : {1, 10, 32, 63}) {
        const float edge = static_cast<float>(cfg.edge(k));
        const Tensor t({1, 1, 1}, edge);
        const HistogramFeature h = ops::log_histogram(t, cfg);
        // The float-rounded edge may sit marginally below the exact edge;
        // accept k-1 or k but never anything else.
        int hit = -1;
        for (int i = 0; i < 64; ++i) {
            if (h.mass[i] == 1.0f) hit = i;
        }
        REQUIRE((hit == k || hit == k - 1));
        if (static_cast<double>(edge) >= cfg.edge(k)) REQUIRE(hit == k);
    }
}

TEST_CASE("histogram is scale-monotone") {
    testutil::Rng rng(2);
    const HistogramConfig cfg;
    Tensor img = testutil::random_tensor(rng, {16, 16, 1}, 0.0f, 0.3f);
    for (float c : {1.5f, 3.0f}) {
        Tensor scaled(img.dims());
        for (std::int64_t i = 0; i < img.numel(); ++i) scaled[i] = img[i] * c;
        // Per-pixel bin indices move weakly up, hence stochastic dominance.
        for (std::int64_t i = 0; i < img.numel(); ++i) {
            REQUIRE(ops::histogram_bin(scaled[i], cfg) >= ops::histogram_bin(img[i], cfg));
        }
        const HistogramFeature a = ops::log_histogram(img, cfg);
        const HistogramFeature bfeat = ops::log_histogram(scaled, cfg);
        double cdf_a = 0.0, cdf_b = 0.0;
        for (int k = 0; k < 64; ++k) {
            cdf_a += a.mass[k];
            cdf_b += bfeat.mass[k];
            REQUIRE(cdf_b <= cdf_a + 1e-6);
        }
    }
}

TEST_CASE("predict_amplification analytic cases") {
    HistogramFeature h;
    h.mass = Tensor({64}, 0.0f);
    h.mass[0] = 1.0f;

    AmplifierMLP zero;
    zero.w1 = Tensor({64, 64}, 0.0f);
    zero.b1 = Tensor({64}, 0.0f);
    zero.w2 = Tensor({64, 1}, 0.0f);
    zero.b2 = Tensor({1}, 0.0f);
    REQUIRE(ops::predict_amplification(h, zero) == 1.0f);  // exp(0) clamped to the floor

    AmplifierMLP biased = zero;
    biased.b2 = Tensor({1}, std::log(100.0f));
    REQUIRE(ops::predict_amplification(h, biased) == Catch::Approx(100.0).epsilon(1e-5));

    AmplifierMLP huge = zero;
    huge.b2 = Tensor({1}, 20.0f);
    REQUIRE(ops::predict_amplification(h, huge) == 1000.0f);  // clamp ceiling
}

TEST_CASE("prediction always lands in [1, 1000]") {
    testutil::Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const AmplifierMLP mlp = AmplifierMLP::create(64, rng.next_u64());
        const Tensor img = testutil::random_tensor(rng, {8, 8, 1}, 0.0f, 1.0f);
        const float a = ops::predict_amplification(ops::log_histogram(img), mlp);
        REQUIRE(a >= 1.0f);
        REQUIRE(a <= 1000.0f);
    }
}

TEST_CASE("apply_amplification") {
    testutil::Rng rng(4);
    const Tensor x = testutil::random_tensor(rng, {4, 4, 1}, 0.0f, 0.01f);
    REQUIRE(bit_equal(ops::apply_amplification(x, 1.0f), x));

    const Tensor dark({4, 4, 1}, 0.002f);
    const Tensor bright = ops::apply_amplification(dark, 100.0f);
    for (std::int64_t i = 0; i < bright.numel(); ++i) REQUIRE(bright[i] == Catch::Approx(0.2).epsilon(1e-6));

    REQUIRE_THROWS_AS(ops::apply_amplification(x, 0.5f), DomainError);
}

TEST_CASE("amplification by the true factor recovers the mosaic") {
    testutil::Rng rng(5);
    const Tensor clean = testutil::random_tensor(rng, {16, 16, 3}, 0.0f, 1.0f);
    const float k = 100.0f;
    const PairedSample pair = ops::synthesize_pair(clean, k, NoiseParams{}, 7);
    const Tensor recovered = ops::apply_amplification(pair.dark, k);
    const Tensor expected = ops::mosaic(clean, BayerPhase::rggb);
    REQUIRE(testutil::max_abs_diff(recovered, expected) < 1e-6);
}

TEST_CASE("gradient flows into the MLP weights through the full loss") {
    testutil::Rng rng(6);
    const Tensor clean = testutil::random_tensor(rng, {32, 32, 3}, 0.1f, 0.9f);
    const PairedSample pair = ops::synthesize_pair(clean, 60.0f, NoiseParams{}, 3);

    ModelConfig cfg = ModelConfig::preset("bayer8");
    const WeightStore weights = build(cfg, 1);

    Tape tape;
    const auto params = register_params(tape, weights, true);
    const int input = tape.leaf(pair.dark, false);
    const HistogramFeature hist = ops::log_histogram(pair.dark);
    const int h = tape.leaf(hist.mass, false);
    const int amp = ad::predict_amplification(tape, h, params.at("amp/w1"), params.at("amp/b1"),
                                              params.at("amp/w2"), params.at("amp/b2"));
    const int out = tape_forward(tape, input, amp, params, cfg);
    const int gt = tape.leaf(pair.gt, false);
    const int loss = ad::mean_abs_diff(tape, gt, out);
    tape.backward(loss);

    double norm = 0.0;
    const Tensor& gw1 = tape.grad(params.at("amp/w1"));
    for (std::int64_t i = 0; i < gw1.numel(); ++i) norm += std::abs(static_cast<double>(gw1[i]));
    REQUIRE(norm > 0.0);
}
