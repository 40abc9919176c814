#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace llpack;

TEST_CASE("bench_op validates its arguments") {
    REQUIRE_THROWS_AS(bench_op("warp", {32, 32, 16}, 2, 5), ConfigError);
    REQUIRE_THROWS_AS(bench_op("unpack", {32, 32, 16}, 2, 4), ConfigError);  // reps >= 5
    REQUIRE_THROWS_AS(bench_op("unpack", {32, 32, 15}, 2, 5), ConfigError);  // channels vs alpha^2
}

TEST_CASE("bench_op reports parameter counts") {
    const BenchResult unpack = bench_op("unpack", {16, 16, 32}, 2, 5);
    REQUIRE(unpack.params == 0);
    const BenchResult shuffle = bench_op("pixel_shuffle", {16, 16, 32}, 2, 5);
    REQUIRE(shuffle.params == 0);
    const BenchResult interp = bench_op("interp", {16, 16, 32}, 2, 5);
    REQUIRE(interp.params == 0);

    const BenchResult tconv = bench_op("transposed_conv", {16, 16, 32}, 2, 5);
    REQUIRE(tconv.params == transposed_conv_param_count(2, 2, 32, 8));
    REQUIRE(tconv.params == 1032);
    REQUIRE(transposed_conv_param_count(2, 2, 128, 32) == 16416);
    REQUIRE(transposed_conv_param_count(2, 2, 512, 128) == 262272);
}

TEST_CASE("bench timings are sane") {
    const BenchResult r = bench_op("unpack", {64, 64, 16}, 2, 7);
    REQUIRE(r.reps == 7);
    REQUIRE(r.median_s > 0.0);
    REQUIRE(r.mean_s > 0.0);
    REQUIRE(r.peak_bytes > 0);
}

TEST_CASE("bench CSV row format") {
    const BenchResult r = bench_op("interp", {8, 8, 4}, 2, 5);
    REQUIRE(bench_csv_header() == "op,shape,alpha,reps,median_s,mean_s,peak_bytes,params");
    const std::string row = to_csv(r);
    int commas = 0;
    for (char c : row) {
        if (c == ',') ++commas;
    }
    REQUIRE(commas == 7);
    REQUIRE(row.rfind("interp,8x8x4,2,5,", 0) == 0);
}

TEST_CASE("bench_forward runs a tiny config") {
    ModelConfig cfg = ModelConfig::preset("rgb4");
    cfg.trunk_channels = 6;
    cfg.rdn_blocks = 1;
    cfg.rdn_layers_per_block = 1;
    cfg.growth = 4;
    const BenchResult r = bench_forward(cfg, 16, 16, 5);
    REQUIRE(r.op == "forward");
    REQUIRE(r.median_s > 0.0);
    REQUIRE(r.params == parameter_count(build(cfg, 0)));
}

TEST_CASE("latency grows with pixel count") {
    const BenchResult small = bench_op("unpack", {64, 64, 64}, 2, 5);
    const BenchResult large = bench_op("unpack", {512, 512, 64}, 2, 5);
    REQUIRE(large.median_s > small.median_s);
}
