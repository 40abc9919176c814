#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "llpack/nnops.hpp"
#include "llpack/tape.hpp"
#include "llpack/tensor.hpp"
#include "llpack/weights.hpp"

namespace llpack {

struct LossWeights {
    float l1 = 1.0f;
    float feature = 3.0f;
    float smooth = 1.0f;
    float tv = 400.0f;
    float weight_l1 = 1e-6f;
};

// Gaussian smoothing kernel, applied per channel. Border windows renormalize
// by the in-bounds weight so constant images blur to themselves exactly.
struct GaussianBlur {
    int size = 11;
    float sigma = 3.0f;
    std::vector<float> taps_1d;  // separable profile, sums to 1

    static GaussianBlur create(int size = 11, float sigma = 3.0f) {
        GaussianBlur b;
        b.size = size;
        b.sigma = sigma;
        b.taps_1d.resize(static_cast<std::size_t>(size));
        const int half = size / 2;
        double total = 0.0;
        for (int i = 0; i < size; ++i) {
            const double d = i - half;
            const double v = std::exp(-d * d / (2.0 * sigma * sigma));
            b.taps_1d[static_cast<std::size_t>(i)] = static_cast<float>(v);
            total += v;
        }
        for (float& v : b.taps_1d) v = static_cast<float>(v / total);
        return b;
    }

    // Sum of the full 2D kernel (outer product of the 1D profiles).
    double kernel_sum() const {
        double s = 0.0;
        for (float a : taps_1d) {
            for (float b : taps_1d) s += static_cast<double>(a) * b;
        }
        return s;
    }
};

// Frozen stand-in for a pretrained perceptual network: three stages of
// (3x3 conv, leaky, 2x average pool) with channels 3 -> 16 -> 32 -> 64.
// Default weights are seeded He draws; externally trained weights can be
// loaded from a .llpk store under the same names.
struct FeatureExtractor {
    static constexpr std::uint64_t kDefaultSeed = 0x11f0;
    static constexpr float kSlope = 0.2f;
    std::vector<ConvKernel> stages;  // exactly 3

    static FeatureExtractor create(std::uint64_t seed = kDefaultSeed) {
        FeatureExtractor fe;
        const int widths[4] = {3, 16, 32, 64};
        for (int s = 0; s < 3; ++s) {
            ConvKernel k;
            k.weights = ops::he_init({3, 3, widths[s], widths[s + 1]}, seed + static_cast<std::uint64_t>(s));
            k.bias = Tensor({widths[s + 1]}, 0.0f);
            k.stride = 1;
            k.padding = 1;
            fe.stages.push_back(std::move(k));
        }
        return fe;
    }

    static FeatureExtractor from_store(const WeightStore& store) {
        FeatureExtractor fe;
        for (int s = 0; s < 3; ++s) {
            ConvKernel k;
            k.weights = store.get("feat/c" + std::to_string(s) + "/w");
            k.bias = store.get("feat/c" + std::to_string(s) + "/b");
            k.stride = 1;
            k.padding = 1;
            fe.stages.push_back(std::move(k));
        }
        return fe;
    }

    void to_store(WeightStore& store) const {
        for (int s = 0; s < 3; ++s) {
            store.set("feat/c" + std::to_string(s) + "/w", stages[static_cast<std::size_t>(s)].weights);
            store.set("feat/c" + std::to_string(s) + "/b", stages[static_cast<std::size_t>(s)].bias);
        }
    }
};

namespace ops {

// Mean absolute difference (mean, not sum, so loss weights are
// resolution-independent).
inline double l1(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "l1");
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
    return acc / static_cast<double>(a.numel());
}

inline Tensor gaussian_blur(const Tensor& x, const GaussianBlur& blur) {
    if (x.rank() != 3) throw ShapeError("gaussian_blur: expected rank-3 tensor");
    const int h = x.height(), w = x.width(), c = x.channels();
    const int size = blur.size, half = size / 2;
    // Per-axis in-bounds tap sums; the 2D normalizer is their product.
    std::vector<float> row_norm(static_cast<std::size_t>(h)), col_norm(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        double s = 0.0;
        for (int k = 0; k < size; ++k) {
            const int iy = y - half + k;
            if (iy >= 0 && iy < h) s += blur.taps_1d[static_cast<std::size_t>(k)];
        }
        row_norm[static_cast<std::size_t>(y)] = static_cast<float>(s);
    }
    for (int xs = 0; xs < w; ++xs) {
        double s = 0.0;
        for (int k = 0; k < size; ++k) {
            const int ix = xs - half + k;
            if (ix >= 0 && ix < w) s += blur.taps_1d[static_cast<std::size_t>(k)];
        }
        col_norm[static_cast<std::size_t>(xs)] = static_cast<float>(s);
    }
    Tensor out({h, w, c});
    parallel_for(h, [&](std::int64_t y0, std::int64_t y1) {
        std::vector<float> acc(static_cast<std::size_t>(c));
        for (std::int64_t y = y0; y < y1; ++y) {
            for (int xs = 0; xs < w; ++xs) {
                for (int ci = 0; ci < c; ++ci) acc[static_cast<std::size_t>(ci)] = 0.0f;
                for (int ky = 0; ky < size; ++ky) {
                    const std::int64_t iy = y - half + ky;
                    if (iy < 0 || iy >= h) continue;
                    const float wy = blur.taps_1d[static_cast<std::size_t>(ky)];
                    for (int kx = 0; kx < size; ++kx) {
                        const int ix = xs - half + kx;
                        if (ix < 0 || ix >= w) continue;
                        const float wk = wy * blur.taps_1d[static_cast<std::size_t>(kx)];
                        const float* px = x.data() + (iy * w + ix) * c;
                        for (int ci = 0; ci < c; ++ci) acc[static_cast<std::size_t>(ci)] += wk * px[ci];
                    }
                }
                const float inv = 1.0f / (row_norm[static_cast<std::size_t>(y)] * col_norm[static_cast<std::size_t>(xs)]);
                float* po = out.data() + (y * w + xs) * c;
                for (int ci = 0; ci < c; ++ci) po[ci] = acc[static_cast<std::size_t>(ci)] * inv;
            }
        }
    });
    return out;
}

inline double smoothed_l1(const Tensor& a, const Tensor& b, const GaussianBlur& blur) {
    require_same_shape(a, b, "smoothed_l1");
    return l1(gaussian_blur(a, blur), gaussian_blur(b, blur));
}

// Anisotropic total variation, mean-reduced over H*W*C.
inline double tv(const Tensor& a) {
    if (a.rank() != 3) throw ShapeError("tv: expected rank-3 tensor");
    const int h = a.height(), w = a.width(), c = a.channels();
    double acc = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int xs = 0; xs < w; ++xs) {
            for (int ci = 0; ci < c; ++ci) {
                if (xs + 1 < w) acc += std::abs(static_cast<double>(a.at(y, xs + 1, ci)) - a.at(y, xs, ci));
                if (y + 1 < h) acc += std::abs(static_cast<double>(a.at(y + 1, xs, ci)) - a.at(y, xs, ci));
            }
        }
    }
    return acc / (static_cast<double>(h) * w * c);
}

inline double weight_l1(const WeightStore& store) {
    double acc = 0.0;
    for (const auto& [name, t] : store) {
        for (std::int64_t i = 0; i < t.numel(); ++i) acc += std::abs(static_cast<double>(t[i]));
    }
    return acc;
}

inline double feature_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fe) {
    require_same_shape(a, b, "feature_loss");
    if (a.rank() != 3 || a.channels() != 3) throw ShapeError("feature_loss: expected (H, W, 3) inputs");
    Tensor xa = a, xb = b;
    double total = 0.0;
    for (const ConvKernel& k : fe.stages) {
        xa = avg_pool2(leaky_relu(conv2d(xa, k), FeatureExtractor::kSlope));
        xb = avg_pool2(leaky_relu(conv2d(xb, k), FeatureExtractor::kSlope));
        total += l1(xa, xb);
    }
    return total;
}

struct LossBreakdown {
    double l1 = 0.0;
    double feature = 0.0;
    double smooth = 0.0;
    double tv = 0.0;
    double weight_l1 = 0.0;
    double total = 0.0;
};

inline LossBreakdown loss_total(const Tensor& gt, const Tensor& out, const WeightStore& weights,
                                const LossWeights& lw, const FeatureExtractor& fe,
                                const GaussianBlur& blur) {
    require_same_shape(gt, out, "loss_total");
    LossBreakdown r;
    r.l1 = l1(gt, out);
    r.feature = feature_loss(gt, out, fe);
    r.smooth = smoothed_l1(gt, out, blur);
    r.tv = tv(out);
    r.weight_l1 = weight_l1(weights);
    r.total = lw.l1 * r.l1 + lw.feature * r.feature + lw.smooth * r.smooth + lw.tv * r.tv +
              lw.weight_l1 * r.weight_l1;
    return r;
}

// 10 log10(peak^2 / MSE); identical inputs report the 99 dB display cap.
inline double psnr(const Tensor& a, const Tensor& b, double peak = 1.0) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse == 0.0) return 99.0;
    const double value = 10.0 * std::log10(peak * peak / mse);
    return value > 99.0 ? 99.0 : value;
}

// Mean SSIM over valid 11x11 windows (Gaussian weighting, sigma 1.5),
// averaged across channels. K1 = 0.01, K2 = 0.03, peak 1.
inline double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    if (a.rank() != 3) throw ShapeError("ssim: expected rank-3 tensors");
    const int h = a.height(), w = a.width(), c = a.channels();
    const int size = 11, half = size / 2;
    if (h < size || w < size) throw ShapeError("ssim: image smaller than the 11x11 window");
    const double sigma = 1.5;
    double window[11][11];
    double wsum = 0.0;
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            const double dy = i - half, dx = j - half;
            window[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            wsum += window[i][j];
        }
    }
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) window[i][j] /= wsum;
    }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    std::int64_t count = 0;
    for (int ci = 0; ci < c; ++ci) {
        for (int y = half; y < h - half; ++y) {
            for (int xs = half; xs < w - half; ++xs) {
                double mu_a = 0.0, mu_b = 0.0;
                for (int i = 0; i < size; ++i) {
                    for (int j = 0; j < size; ++j) {
                        mu_a += window[i][j] * a.at(y - half + i, xs - half + j, ci);
                        mu_b += window[i][j] * b.at(y - half + i, xs - half + j, ci);
                    }
                }
                double va = 0.0, vb = 0.0, cov = 0.0;
                for (int i = 0; i < size; ++i) {
                    for (int j = 0; j < size; ++j) {
                        const double da = a.at(y - half + i, xs - half + j, ci) - mu_a;
                        const double db = b.at(y - half + i, xs - half + j, ci) - mu_b;
                        va += window[i][j] * da * da;
                        vb += window[i][j] * db * db;
                        cov += window[i][j] * da * db;
                    }
                }
                total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                         ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace ops

namespace ad {

inline int mean_abs_diff(Tape& t, int a, int b) {
    require_same_shape(t.value(a), t.value(b), "mean_abs_diff");
    Tensor value({1});
    value[0] = static_cast<float>(ops::l1(t.value(a), t.value(b)));
    return t.push(OpKind::mean_abs_diff, std::move(value), {a, b}, [a, b](Tape& t, int self) {
        const float g = t.grad(self)[0];
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        const float inv = g / static_cast<float>(va.numel());
        const bool ga = t.needs_grad(a), gb = t.needs_grad(b);
        Tensor* pa = ga ? &t.grad_buffer(a) : nullptr;
        Tensor* pb = gb ? &t.grad_buffer(b) : nullptr;
        for (std::int64_t i = 0; i < va.numel(); ++i) {
            const float d = va[i] - vb[i];
            const float s = d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
            if (pa) (*pa)[i] += s;
            if (pb) (*pb)[i] -= s;
        }
    });
}

inline int gaussian_blur(Tape& t, int x, const GaussianBlur& blur) {
    return t.push(OpKind::gaussian_blur, ops::gaussian_blur(t.value(x), blur), {x},
                  [x, blur](Tape& t, int self) {
                      if (!t.needs_grad(x)) return;
                      // Adjoint of the renormalized blur: redistribute each
                      // output gradient through its window weights.
                      const Tensor& g = t.grad(self);
                      Tensor& gx = t.grad_buffer(x);
                      const int h = g.height(), w = g.width(), c = g.channels();
                      const int size = blur.size, half = size / 2;
                      std::vector<float> row_norm(static_cast<std::size_t>(h)), col_norm(static_cast<std::size_t>(w));
                      for (int y = 0; y < h; ++y) {
                          double s = 0.0;
                          for (int k = 0; k < size; ++k) {
                              const int iy = y - half + k;
                              if (iy >= 0 && iy < h) s += blur.taps_1d[static_cast<std::size_t>(k)];
                          }
                          row_norm[static_cast<std::size_t>(y)] = static_cast<float>(s);
                      }
                      for (int xs = 0; xs < w; ++xs) {
                          double s = 0.0;
                          for (int k = 0; k < size; ++k) {
                              const int ix = xs - half + k;
                              if (ix >= 0 && ix < w) s += blur.taps_1d[static_cast<std::size_t>(k)];
                          }
                          col_norm[static_cast<std::size_t>(xs)] = static_cast<float>(s);
                      }
                      for (int y = 0; y < h; ++y) {
                          for (int xs = 0; xs < w; ++xs) {
                              const float inv = 1.0f / (row_norm[static_cast<std::size_t>(y)] *
                                                        col_norm[static_cast<std::size_t>(xs)]);
                              const float* gp = g.data() + (static_cast<std::int64_t>(y) * w + xs) * c;
                              for (int ky = 0; ky < size; ++ky) {
                                  const int iy = y - half + ky;
                                  if (iy < 0 || iy >= h) continue;
                                  const float wy = blur.taps_1d[static_cast<std::size_t>(ky)];
                                  for (int kx = 0; kx < size; ++kx) {
                                      const int ix = xs - half + kx;
                                      if (ix < 0 || ix >= w) continue;
                                      const float wk = wy * blur.taps_1d[static_cast<std::size_t>(kx)] * inv;
                                      float* gq = gx.data() + (static_cast<std::int64_t>(iy) * w + ix) * c;
                                      for (int ci = 0; ci < c; ++ci) gq[ci] += wk * gp[ci];
                                  }
                              }
                          }
                      }
                  });
}

inline int tv(Tape& t, int x) {
    Tensor value({1});
    value[0] = static_cast<float>(ops::tv(t.value(x)));
    return t.push(OpKind::total_variation, std::move(value), {x}, [x](Tape& t, int self) {
        if (!t.needs_grad(x)) return;
        const float g = t.grad(self)[0];
        const Tensor& v = t.value(x);
        Tensor& gx = t.grad_buffer(x);
        const int h = v.height(), w = v.width(), c = v.channels();
        const float inv = g / static_cast<float>(static_cast<std::int64_t>(h) * w * c);
        for (int y = 0; y < h; ++y) {
            for (int xs = 0; xs < w; ++xs) {
                for (int ci = 0; ci < c; ++ci) {
                    if (xs + 1 < w) {
                        const float d = v.at(y, xs + 1, ci) - v.at(y, xs, ci);
                        const float s = d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
                        gx.at(y, xs + 1, ci) += s;
                        gx.at(y, xs, ci) -= s;
                    }
                    if (y + 1 < h) {
                        const float d = v.at(y + 1, xs, ci) - v.at(y, xs, ci);
                        const float s = d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
                        gx.at(y + 1, xs, ci) += s;
                        gx.at(y, xs, ci) -= s;
                    }
                }
            }
        }
    });
}

// Sum of |w| across all listed parameter nodes.
inline int weight_l1(Tape& t, const std::vector<int>& params) {
    double acc = 0.0;
    for (int id : params) {
        const Tensor& v = t.value(id);
        for (std::int64_t i = 0; i < v.numel(); ++i) acc += std::abs(static_cast<double>(v[i]));
    }
    Tensor value({1});
    value[0] = static_cast<float>(acc);
    return t.push(OpKind::weight_l1, std::move(value), params, [params](Tape& t, int self) {
        const float g = t.grad(self)[0];
        for (int id : params) {
            if (!t.needs_grad(id)) continue;
            const Tensor& v = t.value(id);
            Tensor& gw = t.grad_buffer(id);
            for (std::int64_t i = 0; i < v.numel(); ++i) {
                gw[i] += v[i] > 0.0f ? g : (v[i] < 0.0f ? -g : 0.0f);
            }
        }
    });
}

// total = sum_i coeffs[i] * scalars[i].
inline int weighted_sum(Tape& t, const std::vector<int>& scalars, const std::vector<float>& coeffs) {
    if (scalars.size() != coeffs.size()) throw ContractError("weighted_sum: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        if (t.value(scalars[i]).numel() != 1) throw ContractError("weighted_sum: inputs must be scalars");
        acc += static_cast<double>(coeffs[i]) * t.value(scalars[i])[0];
    }
    Tensor value({1});
    value[0] = static_cast<float>(acc);
    return t.push(OpKind::weighted_sum, std::move(value), scalars, [scalars, coeffs](Tape& t, int self) {
        const float g = t.grad(self)[0];
        for (std::size_t i = 0; i < scalars.size(); ++i) {
            if (t.needs_grad(scalars[i])) t.grad_buffer(scalars[i])[0] += g * coeffs[i];
        }
    });
}

// Sum over the three stage taps of mean absolute feature differences.
// Extractor weights enter as constant leaves and never receive gradients.
inline int feature_loss(Tape& t, int a, int b, const FeatureExtractor& fe) {
    std::vector<int> terms;
    int xa = a, xb = b;
    for (const ConvKernel& k : fe.stages) {
        const int w = t.leaf(k.weights, false);
        const int bias = t.leaf(k.bias, false);
        xa = avg_pool2(t, leaky_relu(t, conv2d(t, xa, w, bias, 1, 1), FeatureExtractor::kSlope));
        xb = avg_pool2(t, leaky_relu(t, conv2d(t, xb, w, bias, 1, 1), FeatureExtractor::kSlope));
        terms.push_back(mean_abs_diff(t, xa, xb));
    }
    return weighted_sum(t, terms, {1.0f, 1.0f, 1.0f});
}

struct LossNodes {
    int l1 = -1;
    int feature = -1;
    int smooth = -1;
    int tv = -1;
    int weight_l1 = -1;
    int total = -1;
};

inline LossNodes loss_total(Tape& t, int gt, int out, const std::vector<int>& params,
                            const LossWeights& lw, const FeatureExtractor& fe, const GaussianBlur& blur) {
    LossNodes n;
    n.l1 = mean_abs_diff(t, gt, out);
    n.feature = feature_loss(t, gt, out, fe);
    n.smooth = mean_abs_diff(t, gaussian_blur(t, gt, blur), gaussian_blur(t, out, blur));
    n.tv = tv(t, out);
    n.weight_l1 = ad::weight_l1(t, params);
    n.total = weighted_sum(t, {n.l1, n.feature, n.smooth, n.tv, n.weight_l1},
                           {lw.l1, lw.feature, lw.smooth, lw.tv, lw.weight_l1});
    return n;
}

}  // namespace ad
}  // namespace llpack
