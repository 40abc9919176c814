#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "llpack/tensor.hpp"

namespace llpack {

namespace ops {

inline void accumulate(Tensor& dst, const Tensor& src) {
    require_same_shape(dst, src, "accumulate");
    float* d = dst.data();
    const float* s = src.data();
    for (std::int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.dims());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.dims());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.dims());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline Tensor scale(const Tensor& x, float s) {
    Tensor out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * s;
    return out;
}

// Scalar sum; accumulates in double, stores f32.
inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) acc += x[i];
    Tensor out({1});
    out[0] = static_cast<float>(acc);
    return out;
}

inline Tensor exp(const Tensor& x) {
    Tensor out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = std::exp(x[i]);
    return out;
}

inline Tensor clamp(const Tensor& x, float lo, float hi) {
    Tensor out(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        out[i] = x[i] < lo ? lo : (x[i] > hi ? hi : x[i]);
    }
    return out;
}

}  // namespace ops

enum class OpKind : std::uint8_t {
    leaf,
    add,
    sub,
    mul,
    scale_const,
    scale_node,
    sum,
    exp,
    clamp,
    leaky_relu,
    relu,
    linear,
    conv2d,
    transposed_conv2d,
    interp_nearest,
    avg_pool2,
    concat,
    pack,
    unpack,
    pixel_shuffle,
    gaussian_blur,
    mean_abs_diff,
    total_variation,
    weight_l1,
    weighted_sum,
};

class Tape;
using BackwardFn = std::function<void(Tape&, int)>;

// One recorded operation. Parent ids are always smaller than the node's own
// id, so a single reverse sweep visits consumers before producers.
struct TapeNode {
    OpKind kind = OpKind::leaf;
    bool requires_grad = false;
    std::vector<int> parents;
    Tensor value;
    Tensor grad;  // allocated by backward(); same dims as value
    BackwardFn backward;
};

class Tape {
public:
    int leaf(Tensor value, bool requires_grad = false) {
        TapeNode n;
        n.kind = OpKind::leaf;
        n.requires_grad = requires_grad;
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int push(OpKind kind, Tensor value, std::vector<int> parents, BackwardFn backward) {
        TapeNode n;
        n.kind = kind;
        for (int p : parents) {
            if (p < 0 || p >= static_cast<int>(nodes_.size())) {
                throw ContractError("tape parent id out of range");
            }
            n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p)].requires_grad;
        }
        n.parents = std::move(parents);
        n.value = std::move(value);
        if (n.requires_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const TapeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }

    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    const Tensor& grad(int id) const {
        const TapeNode& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) throw ContractError("gradient not computed for node " + std::to_string(id));
        return n.grad;
    }

    Tensor& grad_buffer(int id) {
        TapeNode& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) n.grad = Tensor(n.value.dims(), 0.0f);
        return n.grad;
    }

    // Reverse-mode sweep from a scalar root. Gradients of multi-consumer
    // nodes accumulate by summation. Every requires-grad node at or below
    // the root ends up with an allocated gradient (zero if unreachable).
    void backward(int root) {
        if (root < 0 || root >= static_cast<int>(nodes_.size())) {
            throw ContractError("backward root id out of range");
        }
        if (nodes_[static_cast<std::size_t>(root)].value.numel() != 1) {
            throw ContractError("backward requires a scalar root");
        }
        for (int id = 0; id <= root; ++id) {
            if (nodes_[static_cast<std::size_t>(id)].requires_grad) grad_buffer(id);
        }
        grad_buffer(root)[0] = 1.0f;
        for (int id = root; id >= 0; --id) {
            TapeNode& n = nodes_[static_cast<std::size_t>(id)];
            if (n.requires_grad && n.backward) n.backward(*this, id);
        }
    }

private:
    std::vector<TapeNode> nodes_;
};

// Tape-recording wrappers for the elementwise primitives.
namespace ad {

inline int add(Tape& t, int a, int b) {
    return t.push(OpKind::add, ops::add(t.value(a), t.value(b)), {a, b}, [a, b](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        if (t.needs_grad(a)) ops::accumulate(t.grad_buffer(a), g);
        if (t.needs_grad(b)) ops::accumulate(t.grad_buffer(b), g);
    });
}

inline int sub(Tape& t, int a, int b) {
    return t.push(OpKind::sub, ops::sub(t.value(a), t.value(b)), {a, b}, [a, b](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        if (t.needs_grad(a)) ops::accumulate(t.grad_buffer(a), g);
        if (t.needs_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

inline int mul(Tape& t, int a, int b) {
    return t.push(OpKind::mul, ops::mul(t.value(a), t.value(b)), {a, b}, [a, b](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        if (t.needs_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            const Tensor& vb = t.value(b);
            for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb[i];
        }
        if (t.needs_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            const Tensor& va = t.value(a);
            for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
        }
    });
}

inline int scale_const(Tape& t, int x, float s) {
    return t.push(OpKind::scale_const, ops::scale(t.value(x), s), {x}, [x, s](Tape& t, int self) {
        if (!t.needs_grad(x)) return;
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_buffer(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * s;
    });
}

// out = x * s where s is a one-element tape node.
inline int scale_node(Tape& t, int x, int s) {
    if (t.value(s).numel() != 1) throw ContractError("scale_node: scale must be scalar");
    return t.push(OpKind::scale_node, ops::scale(t.value(x), t.value(s)[0]), {x, s},
                  [x, s](Tape& t, int self) {
                      const Tensor& g = t.grad(self);
                      if (t.needs_grad(x)) {
                          const float sv = t.value(s)[0];
                          Tensor& gx = t.grad_buffer(x);
                          for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * sv;
                      }
                      if (t.needs_grad(s)) {
                          const Tensor& vx = t.value(x);
                          double acc = 0.0;
                          for (std::int64_t i = 0; i < g.numel(); ++i) {
                              acc += static_cast<double>(g[i]) * vx[i];
                          }
                          t.grad_buffer(s)[0] += static_cast<float>(acc);
                      }
                  });
}

inline int sum(Tape& t, int x) {
    return t.push(OpKind::sum, ops::sum(t.value(x)), {x}, [x](Tape& t, int self) {
        if (!t.needs_grad(x)) return;
        const float g = t.grad(self)[0];
        Tensor& gx = t.grad_buffer(x);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

inline int exp(Tape& t, int x) {
    return t.push(OpKind::exp, ops::exp(t.value(x)), {x}, [x](Tape& t, int self) {
        if (!t.needs_grad(x)) return;
        const Tensor& g = t.grad(self);
        const Tensor& v = t.value(self);
        Tensor& gx = t.grad_buffer(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * v[i];
    });
}

// Subgradient convention: zero outside the open interval (lo, hi).
inline int clamp(Tape& t, int x, float lo, float hi) {
    return t.push(OpKind::clamp, ops::clamp(t.value(x), lo, hi), {x}, [x, lo, hi](Tape& t, int self) {
        if (!t.needs_grad(x)) return;
        const Tensor& g = t.grad(self);
        const Tensor& vx = t.value(x);
        Tensor& gx = t.grad_buffer(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            if (vx[i] > lo && vx[i] < hi) gx[i] += g[i];
        }
    });
}

}  // namespace ad
}  // namespace llpack
