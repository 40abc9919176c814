#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "llpack/alloc.hpp"
#include "llpack/model.hpp"
#include "llpack/nnops.hpp"
#include "llpack/rearrange.hpp"
#include "llpack/rng.hpp"
#include "llpack/tensor.hpp"
#include "llpack/threads.hpp"

namespace llpack {

struct BenchResult {
    std::string op;
    std::vector<int> input_shape;
    int alpha = 1;
    int reps = 0;
    double median_s = 0.0;
    double mean_s = 0.0;  // trimmed: min and max excluded
    std::size_t peak_bytes = 0;
    std::int64_t params = 0;
};

namespace bench_detail {

inline volatile float g_sink = 0.0f;

template <typename Fn>
double time_once(Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

inline double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline double trimmed_mean(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    if (xs.size() <= 2) {
        double s = 0.0;
        for (double v : xs) s += v;
        return s / static_cast<double>(xs.size());
    }
    double s = 0.0;
    for (std::size_t i = 1; i + 1 < xs.size(); ++i) s += xs[i];
    return s / static_cast<double>(xs.size() - 2);
}

// Independent per-element references used as the correctness gate before
// any timing.
inline Tensor naive_unpack(const Tensor& x, int alpha) {
    const int h = x.height(), w = x.width(), cin = x.channels();
    const int g = cin / (alpha * alpha);
    Tensor out({h * alpha, w * alpha, g});
    for (int y = 0; y < h; ++y) {
        for (int xs = 0; xs < w; ++xs) {
            int count = 0;
            for (int r = 0; r < alpha; ++r) {
                for (int c = 0; c < alpha; ++c) {
                    for (int ch = 0; ch < g; ++ch) {
                        out.at(y * alpha + r, xs * alpha + c, ch) = x.at(y, xs, count + ch);
                    }
                    count += g;
                }
            }
        }
    }
    return out;
}

inline Tensor naive_pixel_shuffle(const Tensor& x, int alpha) {
    const int h = x.height(), w = x.width(), cin = x.channels();
    const int g = cin / (alpha * alpha);
    Tensor out({h * alpha, w * alpha, g});
    for (int y = 0; y < h; ++y) {
        for (int xs = 0; xs < w; ++xs) {
            for (int c = 0; c < g; ++c) {
                for (int i = 0; i < alpha; ++i) {
                    for (int j = 0; j < alpha; ++j) {
                        out.at(y * alpha + i, xs * alpha + j, c) = x.at(y, xs, c * alpha * alpha + i * alpha + j);
                    }
                }
            }
        }
    }
    return out;
}

inline Tensor naive_interp(const Tensor& x, int alpha) {
    const int h = x.height(), w = x.width(), c = x.channels();
    Tensor out({h * alpha, w * alpha, c});
    for (int y = 0; y < h * alpha; ++y) {
        for (int xs = 0; xs < w * alpha; ++xs) {
            for (int ci = 0; ci < c; ++ci) out.at(y, xs, ci) = x.at(y / alpha, xs / alpha, ci);
        }
    }
    return out;
}

inline void require_close(const Tensor& a, const Tensor& b, double tol, const std::string& what) {
    require_same_shape(a, b, what.c_str());
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        if (std::abs(static_cast<double>(a[i]) - b[i]) > tol) {
            throw Error(what + ": correctness gate failed at element " + std::to_string(i));
        }
    }
}

}  // namespace bench_detail

inline std::int64_t transposed_conv_param_count(int kh, int kw, int cin, int cout) {
    return static_cast<std::int64_t>(kh) * kw * cin * cout + cout;
}

// Times one upsampling operator on a pre-generated input. Output correctness
// against an independent reference is checked before any timing. Warm-up is
// two untimed runs. Single-threaded unless `parallel`.
inline BenchResult bench_op(const std::string& op, const std::vector<int>& shape, int alpha, int reps,
                            bool parallel = false, std::uint64_t seed = 0) {
    if (reps < 5) throw ConfigError("bench_op: repetitions must be >= 5");
    if (shape.size() != 3) throw ConfigError("bench_op: expected HxWxC input shape");
    if (op != "unpack" && op != "pixel_shuffle" && op != "transposed_conv" && op != "interp") {
        throw ConfigError("bench_op: unknown op \"" + op + "\"");
    }
    const int cin = shape[2];
    if ((op == "unpack" || op == "pixel_shuffle") && cin % (alpha * alpha) != 0) {
        throw ConfigError("bench_op: channels must be divisible by alpha^2 for " + op);
    }

    Rng rng(seed ^ 0xb37c40ULL);
    Tensor input(shape);
    for (std::int64_t i = 0; i < input.numel(); ++i) input[i] = rng.uniform(-1.0f, 1.0f);

    BenchResult result;
    result.op = op;
    result.input_shape = shape;
    result.alpha = alpha;
    result.reps = reps;

    // Transposed convolution uses the minimal valid alpha-by-alpha kernel
    // with stride alpha and Cout = Cin/alpha^2, mirroring the upsampling
    // shapes of the permutation ops.
    Tensor w, b;
    if (op == "transposed_conv") {
        if (cin % (alpha * alpha) != 0) {
            throw ConfigError("bench_op: channels must be divisible by alpha^2 for transposed_conv");
        }
        const int cout = cin / (alpha * alpha);
        w = ops::he_init({alpha, alpha, cin, cout}, seed + 1);
        b = Tensor({cout}, 0.0f);
        result.params = transposed_conv_param_count(alpha, alpha, cin, cout);
    }

    auto run = [&]() -> Tensor {
        if (op == "unpack") return ops::unpack(input, alpha);
        if (op == "pixel_shuffle") return ops::pixel_shuffle(input, alpha);
        if (op == "interp") return ops::interp_nearest(input, alpha);
        return ops::transposed_conv2d(input, w, b, alpha);
    };

    {
        ThreadLimit limit(parallel ? 0x7fffffff : 1);
        // Correctness gate.
        const Tensor got = run();
        if (op == "unpack") {
            bench_detail::require_close(got, bench_detail::naive_unpack(input, alpha), 0.0, op);
        } else if (op == "pixel_shuffle") {
            bench_detail::require_close(got, bench_detail::naive_pixel_shuffle(input, alpha), 0.0, op);
        } else if (op == "interp") {
            bench_detail::require_close(got, bench_detail::naive_interp(input, alpha), 0.0, op);
        } else {
            // The padded conv over the zero-inserted image covers one extra
            // trailing row/column; the leading window must match exactly.
            const Tensor reference =
                ops::conv2d(ops::zero_insert(input, alpha), ops::flip_kernel(w), b, 1, alpha - 1);
            const int oh = got.height(), ow = got.width(), oc = got.channels();
            Tensor cropped({oh, ow, oc});
            for (int y = 0; y < oh; ++y) {
                for (int x = 0; x < ow; ++x) {
                    for (int c = 0; c < oc; ++c) cropped.at(y, x, c) = reference.at(y, x, c);
                }
            }
            bench_detail::require_close(got, cropped, 0.0, op);
        }

        for (int i = 0; i < 2; ++i) bench_detail::g_sink = run()[0];

        const std::size_t baseline = memory::current_bytes();
        memory::reset_peak();
        std::vector<double> times;
        times.reserve(static_cast<std::size_t>(reps));
        for (int r = 0; r < reps; ++r) {
            times.push_back(bench_detail::time_once([&] { bench_detail::g_sink = run()[0]; }));
        }
        result.peak_bytes = memory::peak_bytes() - baseline;
        result.median_s = bench_detail::median(times);
        result.mean_s = bench_detail::trimmed_mean(times);
    }
    return result;
}

// End-to-end forward latency and peak tracked allocation.
inline BenchResult bench_forward(const ModelConfig& cfg, int height, int width, int reps,
                                 bool parallel = false, std::uint64_t seed = 0) {
    if (reps < 5) throw ConfigError("bench_forward: repetitions must be >= 5");
    cfg.validate();
    WeightStore weights = build(cfg, seed);
    Rng rng(seed + 99);
    Tensor input({height, width, cfg.input_channels()});
    for (std::int64_t i = 0; i < input.numel(); ++i) input[i] = rng.uniform(0.0f, 0.005f);

    BenchResult result;
    result.op = "forward";
    result.input_shape = input.dims();
    result.alpha = cfg.alpha_inner;
    result.reps = reps;
    result.params = weights.param_count();

    ThreadLimit limit(parallel ? 0x7fffffff : 1);
    for (int i = 0; i < 2; ++i) {
        bench_detail::g_sink = forward_with_amplification(input, weights, cfg, 100.0f)[0];
    }
    const std::size_t baseline = memory::current_bytes();
    memory::reset_peak();
    std::vector<double> times;
    for (int r = 0; r < reps; ++r) {
        times.push_back(bench_detail::time_once(
            [&] { bench_detail::g_sink = forward_with_amplification(input, weights, cfg, 100.0f)[0]; }));
    }
    result.peak_bytes = memory::peak_bytes() - baseline;
    result.median_s = bench_detail::median(times);
    result.mean_s = bench_detail::trimmed_mean(times);
    return result;
}

inline std::string bench_csv_header() { return "op,shape,alpha,reps,median_s,mean_s,peak_bytes,params"; }

inline std::string to_csv(const BenchResult& r) {
    std::string shape;
    for (std::size_t i = 0; i < r.input_shape.size(); ++i) {
        if (i) shape += "x";
        shape += std::to_string(r.input_shape[i]);
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%d,%.9f,%.9f,%zu,%lld", r.op.c_str(), shape.c_str(), r.alpha,
                  r.reps, r.median_s, r.mean_s, r.peak_bytes, static_cast<long long>(r.params));
    return buf;
}

}  // namespace llpack
