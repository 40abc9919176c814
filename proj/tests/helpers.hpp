#pragma once

// Shared test utilities: random data, independent double-precision oracles
// and the finite-difference gradient checker. Everything here stays
// independent of the implementation paths it checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "llpack/llpack.hpp"

namespace testutil {

using llpack::Rng;
using llpack::Tape;
using llpack::Tensor;

inline Tensor random_tensor(Rng& rng, const std::vector<int>& dims, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(dims);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Values with |v| >= margin, for checks around |.| and max(.) kinks.
inline Tensor random_tensor_kink_safe(Rng& rng, const std::vector<int>& dims, float margin, float hi = 1.0f) {
    Tensor t(dims);
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const float mag = rng.uniform(margin, hi);
        t[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

// The 2x2x12 worked-example input: channel k holds ((4k+1, 4k+2), (4k+3, 4k+4)).
inline Tensor worked_example_input() {
    Tensor t({2, 2, 12});
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            for (int c = 0; c < 12; ++c) t.at(y, x, c) = static_cast<float>(4 * c + 2 * y + x + 1);
        }
    }
    return t;
}

// Expected 4x4x3 result of unpack 2x on the worked-example input.
inline Tensor worked_example_output() {
    static const float red[4][4] = {
        {1, 13, 2, 14}, {25, 37, 26, 38}, {3, 15, 4, 16}, {27, 39, 28, 40}};
    static const float green[4][4] = {
        {5, 17, 6, 18}, {29, 41, 30, 42}, {7, 19, 8, 20}, {31, 43, 32, 44}};
    static const float blue[4][4] = {
        {9, 21, 10, 22}, {33, 45, 34, 46}, {11, 23, 12, 24}, {35, 47, 36, 48}};
    Tensor t({4, 4, 3});
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            t.at(y, x, 0) = red[y][x];
            t.at(y, x, 1) = green[y][x];
            t.at(y, x, 2) = blue[y][x];
        }
    }
    return t;
}

// Direct nested-loop cross-correlation, double accumulation.
inline Tensor conv2d_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const int h = x.height(), width = x.width(), cin = x.channels();
    const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (width + 2 * pad - kw) / stride + 1;
    Tensor out({oh, ow, cout});
    for (int y = 0; y < oh; ++y) {
        for (int xo = 0; xo < ow; ++xo) {
            for (int co = 0; co < cout; ++co) {
                double acc = b[co];
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = y * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = xo * stride - pad + kx;
                        if (ix < 0 || ix >= width) continue;
                        for (int ci = 0; ci < cin; ++ci) {
                            acc += static_cast<double>(x.at(iy, ix, ci)) *
                                   w[(((static_cast<std::int64_t>(ky) * kw) + kx) * cin + ci) * cout + co];
                        }
                    }
                }
                out.at(y, xo, co) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    }
    return m;
}

// --- finite-difference gradient checking ---------------------------------

// Builds a scalar-rooted graph from a leaf holding `x`; returns the root id.
using GraphBuilder = std::function<int(Tape&, int leaf)>;

// Central finite differences against the tape gradient. Returns the worst
// scaled error max |fd - an| / max(|fd|, |an|, 1e-3); < 1e-3 means every
// element is within 0.1% relative error (absolute floor 1e-6).
inline double grad_check(const Tensor& x0, const GraphBuilder& build, double step) {
    Tape tape;
    const int leaf = tape.leaf(x0, true);
    const int root = build(tape, leaf);
    if (tape.value(root).numel() != 1) throw llpack::ContractError("grad_check: non-scalar root");
    tape.backward(root);
    const Tensor analytic = tape.grad(leaf);

    auto eval = [&](const Tensor& x) -> double {
        Tape t;
        const int l = t.leaf(x, false);
        return t.value(build(t, l))[0];
    };

    double worst = 0.0;
    for (std::int64_t i = 0; i < x0.numel(); ++i) {
        Tensor plus = x0, minus = x0;
        plus[i] = static_cast<float>(plus[i] + step);
        minus[i] = static_cast<float>(minus[i] - step);
        const double fd = (eval(plus) - eval(minus)) / (2.0 * step);
        const double an = analytic[i];
        const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
        worst = std::max(worst, err);
    }
    return worst;
}

struct GradCase {
    std::string name;
    double max_err;
};

// Every differentiable op plus the composite loss, checked against central
// finite differences on small instances. Used by both the unit suite and
// the acceptance gate.
std::vector<GradCase> run_gradient_suite();

}  // namespace testutil
