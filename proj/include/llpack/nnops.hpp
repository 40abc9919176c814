#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "llpack/rng.hpp"
#include "llpack/tape.hpp"
#include "llpack/tensor.hpp"
#include "llpack/threads.hpp"

namespace llpack {

// weights: (kh, kw, Cin, Cout), bias: (Cout).
struct ConvKernel {
    Tensor weights;
    Tensor bias;
    int stride = 1;
    int padding = 0;
};

namespace ops {

namespace detail {
inline void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 3) throw ShapeError("conv2d: expected rank-3 input, got " + shape_string(x.dims()));
    if (w.rank() != 4) throw ShapeError("conv2d: expected rank-4 kernel, got " + shape_string(w.dims()));
    if (w.dim(2) != x.channels()) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(w.dim(2)) + " input channels, got " +
                         std::to_string(x.channels()));
    }
    if (b.rank() != 1 || b.dim(0) != w.dim(3)) {
        throw ShapeError("conv2d: bias length must equal output channels");
    }
}
}  // namespace detail

// Cross-correlation with zero padding. H' = (H + 2p - kh)/stride + 1.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    detail::check_conv_args(x, w, b);
    const int h = x.height(), width = x.width(), cin = x.channels();
    const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (width + 2 * pad - kw) / stride + 1;
    if (oh < 1 || ow < 1) throw ShapeError("conv2d: kernel larger than padded input");
    Tensor out({oh, ow, cout});
    const float* xd = x.data();
    const float* wd = w.data();
    const float* bd = b.data();
    float* od = out.data();
    parallel_for(oh, [&](std::int64_t y0, std::int64_t y1) {
        for (std::int64_t y = y0; y < y1; ++y) {
            for (int xo = 0; xo < ow; ++xo) {
                float* acc = od + (y * ow + xo) * cout;
                std::memcpy(acc, bd, sizeof(float) * static_cast<std::size_t>(cout));
                for (int ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = y * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = static_cast<std::int64_t>(xo) * stride - pad + kx;
                        if (ix < 0 || ix >= width) continue;
                        const float* px = xd + (iy * width + ix) * cin;
                        const float* wk = wd + (static_cast<std::int64_t>(ky) * kw + kx) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci) {
                            const float v = px[ci];
                            const float* wr = wk + static_cast<std::int64_t>(ci) * cout;
                            for (int co = 0; co < cout; ++co) acc[co] += v * wr[co];
                        }
                    }
                }
            }
        }
    });
    return out;
}

inline Tensor conv2d(const Tensor& x, const ConvKernel& k) {
    return conv2d(x, k.weights, k.bias, k.stride, k.padding);
}

inline Tensor conv2d_grad_input(const Tensor& gout, const Tensor& w, const std::vector<int>& xdims,
                                int stride, int pad) {
    const int h = xdims[0], width = xdims[1], cin = xdims[2];
    const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    const int oh = gout.height(), ow = gout.width();
    Tensor gx({h, width, cin}, 0.0f);
    const float* gd = gout.data();
    const float* wd = w.data();
    float* xd = gx.data();
    parallel_for(h, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t iy = r0; iy < r1; ++iy) {
            for (int ky = 0; ky < kh; ++ky) {
                const std::int64_t num = iy + pad - ky;
                if (num < 0 || num % stride != 0) continue;
                const std::int64_t y = num / stride;
                if (y >= oh) continue;
                for (int ix = 0; ix < width; ++ix) {
                    float* gpx = xd + (iy * width + ix) * cin;
                    for (int kx = 0; kx < kw; ++kx) {
                        const std::int64_t numx = ix + pad - kx;
                        if (numx < 0 || numx % stride != 0) continue;
                        const std::int64_t xo = numx / stride;
                        if (xo >= ow) continue;
                        const float* grow = gd + (y * ow + xo) * cout;
                        const float* wk = wd + (static_cast<std::int64_t>(ky) * kw + kx) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci) {
                            const float* wr = wk + static_cast<std::int64_t>(ci) * cout;
                            float acc = 0.0f;
                            for (int co = 0; co < cout; ++co) acc += wr[co] * grow[co];
                            gpx[ci] += acc;
                        }
                    }
                }
            }
        }
    });
    return gx;
}

inline Tensor conv2d_grad_weights(const Tensor& gout, const Tensor& x, const std::vector<int>& wdims,
                                  int stride, int pad) {
    const int kh = wdims[0], kw = wdims[1], cin = wdims[2], cout = wdims[3];
    const int h = x.height(), width = x.width();
    const int oh = gout.height(), ow = gout.width();
    Tensor gw(wdims, 0.0f);
    const float* gd = gout.data();
    const float* xd = x.data();
    float* wd = gw.data();
    // Partitioned by (ky, kx, ci) rows so each worker owns disjoint slices of
    // gw and sums pixels in a fixed order.
    parallel_for(static_cast<std::int64_t>(kh) * kw * cin, [&](std::int64_t t0, std::int64_t t1) {
        for (std::int64_t t = t0; t < t1; ++t) {
            const int ky = static_cast<int>(t / (static_cast<std::int64_t>(kw) * cin));
            const int kx = static_cast<int>((t / cin) % kw);
            const int ci = static_cast<int>(t % cin);
            float* grow_w = wd + t * cout;
            for (int y = 0; y < oh; ++y) {
                const std::int64_t iy = static_cast<std::int64_t>(y) * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int xo = 0; xo < ow; ++xo) {
                    const std::int64_t ix = static_cast<std::int64_t>(xo) * stride - pad + kx;
                    if (ix < 0 || ix >= width) continue;
                    const float v = xd[(iy * width + ix) * cin + ci];
                    const float* grow = gd + (static_cast<std::int64_t>(y) * ow + xo) * cout;
                    for (int co = 0; co < cout; ++co) grow_w[co] += v * grow[co];
                }
            }
        }
    });
    return gw;
}

inline Tensor sum_over_pixels(const Tensor& gout) {
    const int cout = gout.channels();
    Tensor gb({cout}, 0.0f);
    const float* gd = gout.data();
    const std::int64_t pixels = static_cast<std::int64_t>(gout.height()) * gout.width();
    for (std::int64_t p = 0; p < pixels; ++p) {
        for (int co = 0; co < cout; ++co) gb[co] += gd[p * cout + co];
    }
    return gb;
}

// Fractionally-strided convolution (stride = alpha, no output padding):
// out[y*a + u, x*a + v, co] += x[y, x, ci] * w[u, v, ci, co].
// H' = (H - 1)*a + kh. Tap order matches conv2d over the zero-inserted
// image so the two routes agree bit-for-bit.
inline Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int alpha) {
    detail::check_conv_args(x, w, b);
    if (alpha < 1) throw ShapeError("transposed_conv2d: alpha must be >= 1");
    const int h = x.height(), width = x.width(), cin = x.channels();
    const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    const int oh = (h - 1) * alpha + kh;
    const int ow = (width - 1) * alpha + kw;
    Tensor out({oh, ow, cout});
    const float* xd = x.data();
    const float* wd = w.data();
    const float* bd = b.data();
    float* od = out.data();
    parallel_for(oh, [&](std::int64_t p0, std::int64_t p1) {
        for (std::int64_t p = p0; p < p1; ++p) {
            const std::int64_t ylo = std::max<std::int64_t>(0, (p - kh + alpha) / alpha);
            const std::int64_t yhi = std::min<std::int64_t>(h - 1, p / alpha);
            for (int q = 0; q < ow; ++q) {
                float* acc = od + (p * ow + q) * cout;
                std::memcpy(acc, bd, sizeof(float) * static_cast<std::size_t>(cout));
                const std::int64_t xlo = std::max<std::int64_t>(0, (q - kw + alpha) / alpha);
                const std::int64_t xhi = std::min<std::int64_t>(width - 1, q / alpha);
                for (std::int64_t y = ylo; y <= yhi; ++y) {
                    const int u = static_cast<int>(p - y * alpha);
                    for (std::int64_t xs = xlo; xs <= xhi; ++xs) {
                        const int v = static_cast<int>(q - xs * alpha);
                        const float* px = xd + (y * width + xs) * cin;
                        const float* wk = wd + (static_cast<std::int64_t>(u) * kw + v) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci) {
                            const float val = px[ci];
                            const float* wr = wk + static_cast<std::int64_t>(ci) * cout;
                            for (int co = 0; co < cout; ++co) acc[co] += val * wr[co];
                        }
                    }
                }
            }
        }
    });
    return out;
}

inline Tensor transposed_conv2d_grad_input(const Tensor& gout, const Tensor& w, const std::vector<int>& xdims,
                                           int alpha) {
    const int h = xdims[0], width = xdims[1], cin = xdims[2];
    const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    Tensor gx({h, width, cin}, 0.0f);
    const float* gd = gout.data();
    const float* wd = w.data();
    float* xd = gx.data();
    const int ow = gout.width();
    parallel_for(h, [&](std::int64_t y0, std::int64_t y1) {
        for (std::int64_t y = y0; y < y1; ++y) {
            for (int xs = 0; xs < width; ++xs) {
                float* gpx = xd + (y * width + xs) * cin;
                for (int u = 0; u < kh; ++u) {
                    const std::int64_t p = y * alpha + u;
                    for (int v = 0; v < kw; ++v) {
                        const std::int64_t q = static_cast<std::int64_t>(xs) * alpha + v;
                        const float* grow = gd + (p * ow + q) * cout;
                        const float* wk = wd + (static_cast<std::int64_t>(u) * kw + v) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci) {
                            const float* wr = wk + static_cast<std::int64_t>(ci) * cout;
                            float acc = 0.0f;
                            for (int co = 0; co < cout; ++co) acc += wr[co] * grow[co];
                            gpx[ci] += acc;
                        }
                    }
                }
            }
        }
    });
    return gx;
}

inline Tensor transposed_conv2d_grad_weights(const Tensor& gout, const Tensor& x,
                                             const std::vector<int>& wdims, int alpha) {
    const int kh = wdims[0], kw = wdims[1], cin = wdims[2], cout = wdims[3];
    const int h = x.height(), width = x.width();
    const int ow = gout.width();
    Tensor gw(wdims, 0.0f);
    const float* gd = gout.data();
    const float* xd = x.data();
    float* wd = gw.data();
    parallel_for(static_cast<std::int64_t>(kh) * kw * cin, [&](std::int64_t t0, std::int64_t t1) {
        for (std::int64_t t = t0; t < t1; ++t) {
            const int u = static_cast<int>(t / (static_cast<std::int64_t>(kw) * cin));
            const int v = static_cast<int>((t / cin) % kw);
            const int ci = static_cast<int>(t % cin);
            float* grow_w = wd + t * cout;
            for (int y = 0; y < h; ++y) {
                for (int xs = 0; xs < width; ++xs) {
                    const float val = xd[(static_cast<std::int64_t>(y) * width + xs) * cin + ci];
                    const std::int64_t p = static_cast<std::int64_t>(y) * alpha + u;
                    const std::int64_t q = static_cast<std::int64_t>(xs) * alpha + v;
                    const float* grow = gd + (p * ow + q) * cout;
                    for (int co = 0; co < cout; ++co) grow_w[co] += val * grow[co];
                }
            }
        }
    });
    return gw;
}

// Zero insertion: LR samples land at coordinates (y*a, x*a).
inline Tensor zero_insert(const Tensor& x, int alpha) {
    if (x.rank() != 3) throw ShapeError("zero_insert: expected rank-3 tensor");
    const int h = x.height(), w = x.width(), c = x.channels();
    Tensor out({h * alpha, w * alpha, c}, 0.0f);
    for (int y = 0; y < h; ++y) {
        for (int xs = 0; xs < w; ++xs) {
            for (int ci = 0; ci < c; ++ci) out.at(y * alpha, xs * alpha, ci) = x.at(y, xs, ci);
        }
    }
    return out;
}

// Reverses the kernel's spatial axes.
inline Tensor flip_kernel(const Tensor& w) {
    if (w.rank() != 4) throw ShapeError("flip_kernel: expected rank-4 kernel");
    const int kh = w.dim(0), kw = w.dim(1), cin = w.dim(2), cout = w.dim(3);
    Tensor out(w.dims());
    for (int a = 0; a < kh; ++a) {
        for (int b = 0; b < kw; ++b) {
            for (int ci = 0; ci < cin; ++ci) {
                for (int co = 0; co < cout; ++co) {
                    out[(((static_cast<std::int64_t>(kh - 1 - a) * kw) + (kw - 1 - b)) * cin + ci) * cout + co] =
                        w[(((static_cast<std::int64_t>(a) * kw) + b) * cin + ci) * cout + co];
                }
            }
        }
    }
    return out;
}

inline Tensor interp_nearest(const Tensor& x, int alpha) {
    if (x.rank() != 3) throw ShapeError("interp_nearest: expected rank-3 tensor");
    if (alpha < 1) throw ShapeError("interp_nearest: alpha must be >= 1");
    if (alpha == 1) return x;
    const int h = x.height(), w = x.width(), c = x.channels();
    Tensor out({h * alpha, w * alpha, c});
    const float* src = x.data();
    float* dst = out.data();
    const int ow = w * alpha;
    parallel_for(static_cast<std::int64_t>(h) * alpha, [&](std::int64_t p0, std::int64_t p1) {
        for (std::int64_t p = p0; p < p1; ++p) {
            const float* srow = src + (p / alpha) * w * c;
            float* drow = dst + p * ow * c;
            for (int q = 0; q < ow; ++q) {
                const float* s = srow + (q / alpha) * c;
                for (int ci = 0; ci < c; ++ci) drow[q * c + ci] = s[ci];
            }
        }
    });
    return out;
}

inline Tensor leaky_relu(const Tensor& x, float slope) {
    Tensor out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const float v = x[i];
        out[i] = v > 0.0f ? v : slope * v;
    }
    return out;
}

// y = x W + b with x: (n), W: (n, m), b: (m).
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 1 || w.rank() != 2 || b.rank() != 1) {
        throw ShapeError("linear: expected x(n), W(n,m), b(m)");
    }
    const int n = x.dim(0), m = w.dim(1);
    if (w.dim(0) != n || b.dim(0) != m) {
        throw ShapeError("linear: dimension mismatch " + shape_string(x.dims()) + " * " +
                         shape_string(w.dims()) + " + " + shape_string(b.dims()));
    }
    Tensor out({m});
    for (int j = 0; j < m; ++j) out[j] = b[j];
    for (int i = 0; i < n; ++i) {
        const float v = x[i];
        const float* wr = w.data() + static_cast<std::int64_t>(i) * m;
        for (int j = 0; j < m; ++j) out[j] += v * wr[j];
    }
    return out;
}

inline Tensor concat_channels(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: empty input list");
    const int h = xs[0].height(), w = xs[0].width();
    int total = 0;
    for (const Tensor& x : xs) {
        if (x.rank() != 3 || x.height() != h || x.width() != w) {
            throw ShapeError("concat_channels: spatial dims differ");
        }
        total += x.channels();
    }
    Tensor out({h, w, total});
    float* dst = out.data();
    const std::int64_t pixels = static_cast<std::int64_t>(h) * w;
    for (std::int64_t p = 0; p < pixels; ++p) {
        float* d = dst + p * total;
        for (const Tensor& x : xs) {
            const int c = x.channels();
            std::memcpy(d, x.data() + p * c, sizeof(float) * static_cast<std::size_t>(c));
            d += c;
        }
    }
    return out;
}

inline Tensor slice_channels(const Tensor& x, int start, int count) {
    if (x.rank() != 3) throw ShapeError("slice_channels: expected rank-3 tensor");
    if (start < 0 || count < 1 || start + count > x.channels()) {
        throw ShapeError("slice_channels: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + std::to_string(x.channels()) +
                         " channels");
    }
    const int h = x.height(), w = x.width(), c = x.channels();
    Tensor out({h, w, count});
    const std::int64_t pixels = static_cast<std::int64_t>(h) * w;
    for (std::int64_t p = 0; p < pixels; ++p) {
        std::memcpy(out.data() + p * count, x.data() + p * c + start,
                    sizeof(float) * static_cast<std::size_t>(count));
    }
    return out;
}

// 2x average pooling; odd trailing rows/cols use clipped windows averaged
// over the actual element count, so output dims are ceil(H/2) x ceil(W/2).
inline Tensor avg_pool2(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("avg_pool2: expected rank-3 tensor");
    const int h = x.height(), w = x.width(), c = x.channels();
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    Tensor out({oh, ow, c});
    for (int y = 0; y < oh; ++y) {
        const int y2 = std::min(2 * y + 1, h - 1);
        for (int xs = 0; xs < ow; ++xs) {
            const int x2 = std::min(2 * xs + 1, w - 1);
            const int count = (y2 - 2 * y + 1) * (x2 - 2 * xs + 1);
            for (int ci = 0; ci < c; ++ci) {
                float acc = 0.0f;
                for (int iy = 2 * y; iy <= y2; ++iy) {
                    for (int ix = 2 * xs; ix <= x2; ++ix) acc += x.at(iy, ix, ci);
                }
                out.at(y, xs, ci) = acc / static_cast<float>(count);
            }
        }
    }
    return out;
}

// Zero-mean normal draws with variance 2/fan_in; fan_in is the product of
// all dims but the last. Deterministic per seed.
inline Tensor he_init(const std::vector<int>& dims, std::uint64_t seed) {
    Tensor::validate_dims(dims);
    std::int64_t fan_in = 1;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) fan_in *= dims[i];
    if (dims.size() == 1) fan_in = dims[0];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Rng rng(seed);
    Tensor out(dims);
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        out[i] = static_cast<float>(rng.normal() * stddev);
    }
    return out;
}

}  // namespace ops

namespace ad {

inline int conv2d(Tape& t, int x, int w, int b, int stride, int pad) {
    Tensor value = ops::conv2d(t.value(x), t.value(w), t.value(b), stride, pad);
    return t.push(OpKind::conv2d, std::move(value), {x, w, b}, [x, w, b, stride, pad](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        if (t.needs_grad(x)) {
            ops::accumulate(t.grad_buffer(x),
                            ops::conv2d_grad_input(g, t.value(w), t.value(x).dims(), stride, pad));
        }
        if (t.needs_grad(w)) {
            ops::accumulate(t.grad_buffer(w),
                            ops::conv2d_grad_weights(g, t.value(x), t.value(w).dims(), stride, pad));
        }
        if (t.needs_grad(b)) ops::accumulate(t.grad_buffer(b), ops::sum_over_pixels(g));
    });
}

inline int transposed_conv2d(Tape& t, int x, int w, int b, int alpha) {
    Tensor value = ops::transposed_conv2d(t.value(x), t.value(w), t.value(b), alpha);
    return t.push(OpKind::transposed_conv2d, std::move(value), {x, w, b},
                  [x, w, b, alpha](Tape& t, int self) {
                      const Tensor& g = t.grad(self);
                      if (t.needs_grad(x)) {
                          ops::accumulate(t.grad_buffer(x),
                                          ops::transposed_conv2d_grad_input(g, t.value(w), t.value(x).dims(), alpha));
                      }
                      if (t.needs_grad(w)) {
                          ops::accumulate(t.grad_buffer(w), ops::transposed_conv2d_grad_weights(
                                                                g, t.value(x), t.value(w).dims(), alpha));
                      }
                      if (t.needs_grad(b)) ops::accumulate(t.grad_buffer(b), ops::sum_over_pixels(g));
                  });
}

inline int interp_nearest(Tape& t, int x, int alpha) {
    return t.push(OpKind::interp_nearest, ops::interp_nearest(t.value(x), alpha), {x},
                  [x, alpha](Tape& t, int self) {
                      if (!t.needs_grad(x)) return;
                      const Tensor& g = t.grad(self);
                      Tensor& gx = t.grad_buffer(x);
                      const int h = gx.height(), w = gx.width(), c = gx.channels();
                      for (int y = 0; y < h * alpha; ++y) {
                          for (int q = 0; q < w * alpha; ++q) {
                              for (int ci = 0; ci < c; ++ci) gx.at(y / alpha, q / alpha, ci) += g.at(y, q, ci);
                          }
                      }
                  });
}

inline int leaky_relu(Tape& t, int x, float slope) {
    return t.push(OpKind::leaky_relu, ops::leaky_relu(t.value(x), slope), {x},
                  [x, slope](Tape& t, int self) {
                      if (!t.needs_grad(x)) return;
                      const Tensor& g = t.grad(self);
                      const Tensor& vx = t.value(x);
                      Tensor& gx = t.grad_buffer(x);
                      for (std::int64_t i = 0; i < g.numel(); ++i) {
                          gx[i] += g[i] * (vx[i] > 0.0f ? 1.0f : slope);
                      }
                  });
}

inline int relu(Tape& t, int x) { return leaky_relu(t, x, 0.0f); }

inline int linear(Tape& t, int x, int w, int b) {
    Tensor value = ops::linear(t.value(x), t.value(w), t.value(b));
    return t.push(OpKind::linear, std::move(value), {x, w, b}, [x, w, b](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& vx = t.value(x);
        const Tensor& vw = t.value(w);
        const int n = vx.dim(0), m = vw.dim(1);
        if (t.needs_grad(x)) {
            Tensor& gx = t.grad_buffer(x);
            for (int i = 0; i < n; ++i) {
                const float* wr = vw.data() + static_cast<std::int64_t>(i) * m;
                float acc = 0.0f;
                for (int j = 0; j < m; ++j) acc += wr[j] * g[j];
                gx[i] += acc;
            }
        }
        if (t.needs_grad(w)) {
            Tensor& gw = t.grad_buffer(w);
            for (int i = 0; i < n; ++i) {
                const float v = vx[i];
                float* gr = gw.data() + static_cast<std::int64_t>(i) * m;
                for (int j = 0; j < m; ++j) gr[j] += v * g[j];
            }
        }
        if (t.needs_grad(b)) ops::accumulate(t.grad_buffer(b), g);
    });
}

inline int concat_channels(Tape& t, const std::vector<int>& xs) {
    std::vector<Tensor> values;
    values.reserve(xs.size());
    for (int id : xs) values.push_back(t.value(id));
    Tensor value = ops::concat_channels(values);
    return t.push(OpKind::concat, std::move(value), xs, [xs](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const int total = g.channels();
        const std::int64_t pixels = static_cast<std::int64_t>(g.height()) * g.width();
        int offset = 0;
        for (int id : xs) {
            const int c = t.value(id).channels();
            if (t.needs_grad(id)) {
                Tensor& gx = t.grad_buffer(id);
                for (std::int64_t p = 0; p < pixels; ++p) {
                    const float* src = g.data() + p * total + offset;
                    float* dst = gx.data() + p * c;
                    for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
                }
            }
            offset += c;
        }
    });
}

inline int slice_channels(Tape& t, int x, int start, int count) {
    return t.push(OpKind::concat, ops::slice_channels(t.value(x), start, count), {x},
                  [x, start, count](Tape& t, int self) {
                      if (!t.needs_grad(x)) return;
                      const Tensor& g = t.grad(self);
                      Tensor& gx = t.grad_buffer(x);
                      const int c = gx.channels();
                      const std::int64_t pixels = static_cast<std::int64_t>(g.height()) * g.width();
                      for (std::int64_t p = 0; p < pixels; ++p) {
                          const float* src = g.data() + p * count;
                          float* dst = gx.data() + p * c + start;
                          for (int ci = 0; ci < count; ++ci) dst[ci] += src[ci];
                      }
                  });
}

inline int avg_pool2(Tape& t, int x) {
    return t.push(OpKind::avg_pool2, ops::avg_pool2(t.value(x)), {x}, [x](Tape& t, int self) {
        if (!t.needs_grad(x)) return;
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_buffer(x);
        const int h = gx.height(), w = gx.width(), c = gx.channels();
        for (int y = 0; y < g.height(); ++y) {
            const int y2 = std::min(2 * y + 1, h - 1);
            for (int xs = 0; xs < g.width(); ++xs) {
                const int x2 = std::min(2 * xs + 1, w - 1);
                const float inv = 1.0f / static_cast<float>((y2 - 2 * y + 1) * (x2 - 2 * xs + 1));
                for (int ci = 0; ci < c; ++ci) {
                    const float gv = g.at(y, xs, ci) * inv;
                    for (int iy = 2 * y; iy <= y2; ++iy) {
                        for (int ix = 2 * xs; ix <= x2; ++ix) gx.at(iy, ix, ci) += gv;
                    }
                }
            }
        }
    });
}

}  // namespace ad
}  // namespace llpack
