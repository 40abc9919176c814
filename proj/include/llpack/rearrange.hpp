#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "llpack/tape.hpp"
#include "llpack/tensor.hpp"
#include "llpack/threads.hpp"

namespace llpack {

// Scaling factor and channel grouping for the pack/unpack rearrangements.
// G is the number of channels that stay adjacent per spatial offset: 3 for
// RGB images, 1 for single-channel Bayer planes.
struct RearrangeSpec {
    int alpha = 1;
    int channel_group = 1;
};

namespace ops {

// Pack a-by-a: (H, W, G) -> (H/a, W/a, G*a^2). For offset (r, c) visited in
// row-major order, output channel block [count, count+G) holds the
// subsampled plane x[r::a, c::a, :], count advancing by G per offset.
inline Tensor pack(const Tensor& x, int alpha) {
    if (x.rank() != 3) throw ShapeError("pack: expected rank-3 tensor, got " + shape_string(x.dims()));
    if (alpha < 1) throw ShapeError("pack: alpha must be >= 1");
    if (alpha == 1) return x;
    const int h = x.height(), w = x.width(), g = x.channels();
    if (h % alpha != 0 || w % alpha != 0) {
        throw ShapeError("pack: spatial dims " + shape_string(x.dims()) + " not divisible by alpha " +
                         std::to_string(alpha));
    }
    const int oh = h / alpha, ow = w / alpha, oc = g * alpha * alpha;
    Tensor out({oh, ow, oc});
    const float* src = x.data();
    float* dst = out.data();
    parallel_for(oh, [&](std::int64_t y0, std::int64_t y1) {
        for (std::int64_t y = y0; y < y1; ++y) {
            float* d = dst + y * ow * oc;
            for (int xo = 0; xo < ow; ++xo) {
                for (int r = 0; r < alpha; ++r) {
                    const float* s = src + ((y * alpha + r) * w + static_cast<std::int64_t>(xo) * alpha) * g;
                    for (int c = 0; c < alpha; ++c) {
                        for (int ch = 0; ch < g; ++ch) *d++ = s[c * g + ch];
                    }
                }
            }
        }
    });
    return out;
}

// Exact inverse of pack: (h, w, G*a^2) -> (h*a, w*a, G).
inline Tensor unpack(const Tensor& x, int alpha) {
    if (x.rank() != 3) throw ShapeError("unpack: expected rank-3 tensor, got " + shape_string(x.dims()));
    if (alpha < 1) throw ShapeError("unpack: alpha must be >= 1");
    if (alpha == 1) return x;
    const int h = x.height(), w = x.width(), cin = x.channels();
    const int a2 = alpha * alpha;
    if (cin % a2 != 0) {
        throw ShapeError("unpack: channel count " + std::to_string(cin) + " not divisible by alpha^2 " +
                         std::to_string(a2));
    }
    const int g = cin / a2;
    const int oh = h * alpha, ow = w * alpha;
    Tensor out({oh, ow, g});
    const float* src = x.data();
    float* dst = out.data();
    parallel_for(oh, [&](std::int64_t p0, std::int64_t p1) {
        for (std::int64_t p = p0; p < p1; ++p) {
            const std::int64_t y = p / alpha;
            const int r = static_cast<int>(p % alpha);
            float* d = dst + p * ow * g;
            for (int xo = 0; xo < w; ++xo) {
                const float* s = src + (y * w + xo) * cin + static_cast<std::int64_t>(r) * alpha * g;
                for (int k = 0; k < alpha * g; ++k) *d++ = s[k];
            }
        }
    });
    return out;
}

// Standard depth-to-space: output channel c at offset (i, j) inside each
// a-by-a block reads input channel c*a^2 + i*a + j.
inline Tensor pixel_shuffle(const Tensor& x, int alpha) {
    if (x.rank() != 3) throw ShapeError("pixel_shuffle: expected rank-3 tensor");
    if (alpha < 1) throw ShapeError("pixel_shuffle: alpha must be >= 1");
    if (alpha == 1) return x;
    const int h = x.height(), w = x.width(), cin = x.channels();
    const int a2 = alpha * alpha;
    if (cin % a2 != 0) {
        throw ShapeError("pixel_shuffle: channel count " + std::to_string(cin) +
                         " not divisible by alpha^2 " + std::to_string(a2));
    }
    const int g = cin / a2;
    const int oh = h * alpha, ow = w * alpha;
    Tensor out({oh, ow, g});
    const float* src = x.data();
    float* dst = out.data();
    parallel_for(oh, [&](std::int64_t p0, std::int64_t p1) {
        for (std::int64_t p = p0; p < p1; ++p) {
            const std::int64_t y = p / alpha;
            const int i = static_cast<int>(p % alpha);
            float* d = dst + p * ow * g;
            for (int xo = 0; xo < w; ++xo) {
                const float* s = src + (y * w + xo) * cin;
                for (int j = 0; j < alpha; ++j) {
                    for (int c = 0; c < g; ++c) *d++ = s[c * a2 + i * alpha + j];
                }
            }
        }
    });
    return out;
}

// Inverse of pixel_shuffle (space-to-depth in the same channel layout).
inline Tensor pixel_shuffle_inverse(const Tensor& x, int alpha) {
    if (x.rank() != 3) throw ShapeError("pixel_shuffle_inverse: expected rank-3 tensor");
    if (alpha < 1) throw ShapeError("pixel_shuffle_inverse: alpha must be >= 1");
    if (alpha == 1) return x;
    const int h = x.height(), w = x.width(), g = x.channels();
    if (h % alpha != 0 || w % alpha != 0) {
        throw ShapeError("pixel_shuffle_inverse: spatial dims not divisible by alpha");
    }
    const int a2 = alpha * alpha;
    const int oh = h / alpha, ow = w / alpha, oc = g * a2;
    Tensor out({oh, ow, oc});
    const float* src = x.data();
    float* dst = out.data();
    parallel_for(oh, [&](std::int64_t y0, std::int64_t y1) {
        for (std::int64_t y = y0; y < y1; ++y) {
            for (int xo = 0; xo < ow; ++xo) {
                float* d = dst + (y * ow + xo) * oc;
                for (int c = 0; c < g; ++c) {
                    for (int i = 0; i < alpha; ++i) {
                        const float* s = src + ((y * alpha + i) * w + static_cast<std::int64_t>(xo) * alpha) * g + c;
                        for (int j = 0; j < alpha; ++j) d[c * a2 + i * alpha + j] = s[static_cast<std::int64_t>(j) * g];
                    }
                }
            }
        }
    });
    return out;
}

// Channel permutation relating the two layouts: with
// perm = unpack_as_shuffle_perm(a, G) and
// y[..., m] = x[..., perm[m]], pixel_shuffle(y, a) == unpack(x, a).
inline std::vector<int> unpack_as_shuffle_perm(int alpha, int group) {
    const int a2 = alpha * alpha;
    std::vector<int> perm(static_cast<std::size_t>(a2 * group));
    for (int m = 0; m < a2 * group; ++m) {
        perm[static_cast<std::size_t>(m)] = (m % a2) * group + m / a2;
    }
    return perm;
}

inline Tensor permute_channels(const Tensor& x, const std::vector<int>& perm) {
    if (x.rank() != 3 || static_cast<int>(perm.size()) != x.channels()) {
        throw ShapeError("permute_channels: permutation length must equal channel count");
    }
    const int c = x.channels();
    Tensor out(x.dims());
    const float* src = x.data();
    float* dst = out.data();
    const std::int64_t pixels = static_cast<std::int64_t>(x.height()) * x.width();
    for (std::int64_t p = 0; p < pixels; ++p) {
        for (int m = 0; m < c; ++m) dst[p * c + m] = src[p * c + perm[static_cast<std::size_t>(m)]];
    }
    return out;
}

// Splits an even-sized mosaic into its four 2x2 phase planes; equals
// pack(raw, 2) on a single-channel image. Under the RGGB phase the channel
// order is (R, G1, G2, B).
inline Tensor bayer_split(const Tensor& raw) {
    if (raw.rank() != 3 || raw.channels() != 1) {
        throw ShapeError("bayer_split: expected (H, W, 1) tensor, got " + shape_string(raw.dims()));
    }
    if (raw.height() % 2 != 0 || raw.width() % 2 != 0) {
        throw ShapeError("bayer_split: spatial dims must be even, got " + shape_string(raw.dims()));
    }
    return pack(raw, 2);
}

// Test oracle for the LR-path equivalence: upsample by zero insertion,
// convolve densely with the dilated HR kernel assembled from the a^2*G small
// kernels, then pick each HR pixel's own phase group.
//
// Index map (fixed here, documented once): with small kernels
// k[kh][kw][Cin][(r*a+s)*G + c] and LR padding `pad`, the HR kernel is
//   K[i*a + (a-1-r), j*a + (a-1-s), ci, (r*a+s)*G + c] = k[i, j, ci, (r*a+s)*G + c]
// of spatial size (kh*a, kw*a), applied to the zero-inserted input with
// padding pad*a + a - 1; the regrouping step reads output channel
// ((p%a)*a + q%a)*G + c at HR pixel (p, q). This equals
// unpack(conv2d(t_lr, k, pad), a).
inline Tensor reference_upsample_conv_hr(const Tensor& t_lr, const Tensor& kernels, int alpha, int pad) {
    if (t_lr.rank() != 3 || kernels.rank() != 4) {
        throw ShapeError("reference_upsample_conv_hr: expected rank-3 input and rank-4 kernels");
    }
    const int h = t_lr.height(), w = t_lr.width(), cin = t_lr.channels();
    const int kh = kernels.dim(0), kw = kernels.dim(1);
    if (kernels.dim(2) != cin) throw ShapeError("reference_upsample_conv_hr: kernel Cin mismatch");
    const int cout = kernels.dim(3);
    const int a2 = alpha * alpha;
    if (cout % a2 != 0) throw ShapeError("reference_upsample_conv_hr: kernel count not divisible by alpha^2");
    const int group = cout / a2;

    // Zero-inserted HR input.
    const int hh = h * alpha, hw = w * alpha;
    Tensor up({hh, hw, cin}, 0.0f);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < cin; ++c) up.at(y * alpha, x * alpha, c) = t_lr.at(y, x, c);
        }
    }

    // Dilated HR kernel.
    const int khh = kh * alpha, khw = kw * alpha;
    Tensor hr_kernel({khh, khw, cin, cout}, 0.0f);
    for (int r = 0; r < alpha; ++r) {
        for (int s = 0; s < alpha; ++s) {
            for (int c = 0; c < group; ++c) {
                const int oc = (r * alpha + s) * group + c;
                for (int i = 0; i < kh; ++i) {
                    for (int j = 0; j < kw; ++j) {
                        const int u = i * alpha + (alpha - 1 - r);
                        const int v = j * alpha + (alpha - 1 - s);
                        for (int ci = 0; ci < cin; ++ci) {
                            hr_kernel[(((static_cast<std::int64_t>(u) * khw) + v) * cin + ci) * cout + oc] =
                                kernels[(((static_cast<std::int64_t>(i) * kw) + j) * cin + ci) * cout + oc];
                        }
                    }
                }
            }
        }
    }

    // Dense HR cross-correlation (double accumulation) plus phase regrouping.
    const int hr_pad = pad * alpha + alpha - 1;
    Tensor out({hh, hw, group}, 0.0f);
    for (int p = 0; p < hh; ++p) {
        for (int q = 0; q < hw; ++q) {
            const int phase = (p % alpha) * alpha + (q % alpha);
            for (int c = 0; c < group; ++c) {
                const int oc = phase * group + c;
                double acc = 0.0;
                for (int u = 0; u < khh; ++u) {
                    const int iy = p - hr_pad + u;
                    if (iy < 0 || iy >= hh) continue;
                    for (int v = 0; v < khw; ++v) {
                        const int ix = q - hr_pad + v;
                        if (ix < 0 || ix >= hw) continue;
                        for (int ci = 0; ci < cin; ++ci) {
                            acc += static_cast<double>(
                                       hr_kernel[(((static_cast<std::int64_t>(u) * khw) + v) * cin + ci) * cout + oc]) *
                                   up.at(iy, ix, ci);
                        }
                    }
                }
                out.at(p, q, c) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

}  // namespace ops

namespace ad {

inline int pack(Tape& t, int x, int alpha) {
    return t.push(OpKind::pack, ops::pack(t.value(x), alpha), {x}, [x, alpha](Tape& t, int self) {
        if (!t.needs_grad(x)) return;
        ops::accumulate(t.grad_buffer(x), ops::unpack(t.grad(self), alpha));
    });
}

inline int unpack(Tape& t, int x, int alpha) {
    return t.push(OpKind::unpack, ops::unpack(t.value(x), alpha), {x}, [x, alpha](Tape& t, int self) {
        if (!t.needs_grad(x)) return;
        ops::accumulate(t.grad_buffer(x), ops::pack(t.grad(self), alpha));
    });
}

inline int pixel_shuffle(Tape& t, int x, int alpha) {
    return t.push(OpKind::pixel_shuffle, ops::pixel_shuffle(t.value(x), alpha), {x},
                  [x, alpha](Tape& t, int self) {
                      if (!t.needs_grad(x)) return;
                      ops::accumulate(t.grad_buffer(x), ops::pixel_shuffle_inverse(t.grad(self), alpha));
                  });
}

inline int bayer_split(Tape& t, int x) {
    ops::bayer_split(t.value(x));  // validates shape
    return pack(t, x, 2);
}

}  // namespace ad
}  // namespace llpack
