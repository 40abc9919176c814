#include <cstdio>
#include <filesystem>
#include <fstream>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace llpack;
using testutil::random_tensor;

namespace {
std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("llpack_model_test_" + name);
}
}  // namespace

TEST_CASE("default SID config parameter count sits in the expected band") {
    const ModelConfig cfg = ModelConfig::preset("bayer8");
    const WeightStore store = build(cfg, 0);
    const std::int64_t n = parameter_count(store);
    REQUIRE(n >= 800000);
    REQUIRE(n <= 1400000);
}

TEST_CASE("degenerate configs are rejected") {
    ModelConfig cfg = ModelConfig::preset("bayer8");
    cfg.rdn_blocks = 0;
    REQUIRE_THROWS_AS(build(cfg, 0), ConfigError);

    ModelConfig bad_alpha = ModelConfig::preset("bayer8");
    bad_alpha.alpha_inner = 5;
    REQUIRE_THROWS_AS(bad_alpha.validate(), ConfigError);

    ModelConfig bad_trunk = ModelConfig::preset("rgb8");
    bad_trunk.trunk_channels = 61;
    REQUIRE_THROWS_AS(bad_trunk.validate(), ConfigError);

    REQUIRE_THROWS_AS(ModelConfig::preset("vga"), ConfigError);
}

TEST_CASE("build is deterministic per seed") {
    const ModelConfig cfg = ModelConfig::preset("rgb4");
    REQUIRE(build(cfg, 7) == build(cfg, 7));
    REQUIRE_FALSE(build(cfg, 7) == build(cfg, 8));
}

TEST_CASE("forward shape law and output range") {
    const ModelConfig cfg = ModelConfig::preset("bayer8");
    const WeightStore w = build(cfg, 1);
    testutil::Rng rng(2);
    const Tensor raw = random_tensor(rng, {64, 64, 1}, 0.0f, 0.004f);
    const Tensor out = forward_with_amplification(raw, w, cfg, 120.0f);
    REQUIRE(out.dims() == std::vector<int>{64, 64, 3});
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        REQUIRE(std::isfinite(out[i]));
        REQUIRE(out[i] >= 0.0f);
        REQUIRE(out[i] <= 1.0f);
    }

    // rgb config shape law
    const ModelConfig rgb = ModelConfig::preset("rgb4");
    const WeightStore wr = build(rgb, 1);
    const Tensor rgb_in = random_tensor(rng, {32, 48, 3}, 0.0f, 0.01f);
    const Tensor rgb_out = forward_with_amplification(rgb_in, wr, rgb, 50.0f);
    REQUIRE(rgb_out.dims() == std::vector<int>{32, 48, 3});
}

TEST_CASE("forward validates input shape against the config") {
    const ModelConfig cfg = ModelConfig::preset("bayer8");
    const WeightStore w = build(cfg, 1);
    REQUIRE_THROWS_AS(forward_with_amplification(Tensor({60, 64, 1}, 0.0f), w, cfg, 10.0f), ShapeError);
    REQUIRE_THROWS_AS(forward_with_amplification(Tensor({64, 64, 3}, 0.0f), w, cfg, 10.0f), ShapeError);

    // a store missing one named parameter reports a weight error
    WeightStore missing;
    for (const auto& [name, tensor] : w) {
        if (name != "enc/c3/w") missing.set(name, tensor);
    }
    REQUIRE_THROWS_AS(forward_with_amplification(Tensor({64, 64, 1}, 0.0f), missing, cfg, 10.0f),
                      WeightError);
}

TEST_CASE("trunk computations stay at 1/16 resolution (bayer), expansion at 1/8") {
    const ModelConfig cfg = ModelConfig::preset("bayer8");
    const WeightStore w = build(cfg, 3);
    testutil::Rng rng(4);
    const Tensor raw = random_tensor(rng, {64, 96, 1}, 0.0f, 0.004f);
    std::vector<std::pair<std::string, std::vector<int>>> stages;
    ShapeObserver observer = [&](const std::string& stage, const std::vector<int>& dims) {
        stages.emplace_back(stage, dims);
    };
    forward_with_amplification(raw, w, cfg, 100.0f, &observer);
    REQUIRE_FALSE(stages.empty());
    for (const auto& [stage, dims] : stages) {
        if (stage == "expand") {
            REQUIRE(dims[0] == 64 / 8);
            REQUIRE(dims[1] == 96 / 8);
        } else {
            REQUIRE(dims[0] == 64 / 16);
            REQUIRE(dims[1] == 96 / 16);
        }
    }
}

TEST_CASE("forward is deterministic") {
    const ModelConfig cfg = ModelConfig::preset("rgb4");
    const WeightStore w = build(cfg, 5);
    testutil::Rng rng(6);
    const Tensor x = random_tensor(rng, {32, 32, 3}, 0.0f, 0.02f);
    REQUIRE(bit_equal(forward_with_amplification(x, w, cfg, 40.0f),
                      forward_with_amplification(x, w, cfg, 40.0f)));
}

TEST_CASE("raw forward and tape forward agree bit-for-bit") {
    const ModelConfig cfg = ModelConfig::preset("rgb4");
    const WeightStore w = build(cfg, 7);
    testutil::Rng rng(8);
    const Tensor x = random_tensor(rng, {16, 16, 3}, 0.0f, 0.02f);
    const Tensor raw_out = forward_with_amplification(x, w, cfg, 25.0f);

    Tape t;
    const auto params = register_params(t, w, false);
    const int input = t.leaf(x, false);
    const int amp = t.leaf(Tensor({1}, 25.0f), false);
    const int out = tape_forward(t, input, amp, params, cfg);
    REQUIRE(bit_equal(raw_out, t.value(out)));
}

TEST_CASE("decoder pixel_shuffle differs from unpack until channels are permuted") {
    ModelConfig cfg = ModelConfig::preset("rgb4");
    const WeightStore w = build(cfg, 9);
    testutil::Rng rng(10);
    const Tensor x = random_tensor(rng, {16, 16, 3}, 0.0f, 0.02f);

    const Tensor with_unpack = forward_with_amplification(x, w, cfg, 30.0f);
    ModelConfig shuffled_cfg = cfg;
    shuffled_cfg.decoder_shuffle = true;
    const Tensor with_shuffle = forward_with_amplification(x, w, shuffled_cfg, 30.0f);
    REQUIRE_FALSE(bit_equal(with_unpack, with_shuffle));

    // Permuting the expansion conv's output channels makes the two layouts
    // identical: shuffle reads channel c*a^2+b where unpack read b*G+c.
    const std::vector<int> perm = ops::unpack_as_shuffle_perm(cfg.alpha_inner, 3);
    WeightStore permuted = w;
    const Tensor& ew = w.get("dec/expand/w");
    const Tensor& eb = w.get("dec/expand/b");
    Tensor pw(ew.dims());
    Tensor pb(eb.dims());
    const int cout = ew.dim(3);
    const std::int64_t rows = ew.numel() / cout;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (int m = 0; m < cout; ++m) pw[r * cout + m] = ew[r * cout + perm[static_cast<std::size_t>(m)]];
    }
    for (int m = 0; m < cout; ++m) pb[m] = eb[perm[static_cast<std::size_t>(m)]];
    permuted.set("dec/expand/w", std::move(pw));
    permuted.set("dec/expand/b", std::move(pb));
    const Tensor swapped = forward_with_amplification(x, permuted, shuffled_cfg, 30.0f);
    REQUIRE(bit_equal(swapped, with_unpack));
}

TEST_CASE("weight container round-trips bit-exactly") {
    const ModelConfig cfg = ModelConfig::preset("rgb4");
    const WeightStore w = build(cfg, 11);
    const auto path = temp_path("roundtrip.llpk");
    save_weights(w, path.string());
    const WeightStore loaded = load_weights(path.string());
    REQUIRE(loaded == w);

    // save -> load -> save produces identical bytes
    const auto path2 = temp_path("roundtrip2.llpk");
    save_weights(loaded, path2.string());
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("weight container detects corruption") {
    WeightStore store;
    testutil::Rng rng(12);
    store.set("x", random_tensor(rng, {3, 4}));
    auto bytes = serialize_weights(store);

    auto corrupt_magic = bytes;
    corrupt_magic[0] = 'X';
    REQUIRE_THROWS_AS(deserialize_weights(corrupt_magic), FormatError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 7);
    REQUIRE_THROWS_AS(deserialize_weights(truncated), FormatError);

    auto flipped = bytes;
    flipped[20] ^= 0x40;
    REQUIRE_THROWS_AS(deserialize_weights(flipped), FormatError);  // CRC catches it

    auto bad_version = bytes;
    bad_version[4] = 9;
    REQUIRE_THROWS_AS(deserialize_weights(bad_version), FormatError);
}

TEST_CASE("random weight stores fuzz round-trip") {
    testutil::Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        WeightStore store;
        const int count = static_cast<int>(rng.uniform_int(0, 5));
        for (int i = 0; i < count; ++i) {
            std::vector<int> dims;
            const int rank = static_cast<int>(rng.uniform_int(1, 4));
            for (int d = 0; d < rank; ++d) dims.push_back(static_cast<int>(rng.uniform_int(1, 6)));
            store.set("t" + std::to_string(i) + "/" + std::to_string(rng.next_u64() % 100),
                      random_tensor(rng, dims));
        }
        REQUIRE(deserialize_weights(serialize_weights(store)) == store);
    }
}

TEST_CASE("receptive field of pack + 3x3 conv") {
    REQUIRE(count_receptive_field(1) == 9);
    REQUIRE(count_receptive_field(2) == 36);
    REQUIRE(count_receptive_field(10) == 900);
}
