#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "llpack/alloc.hpp"
#include "llpack/common.hpp"

namespace llpack {

// Dense rank-1..4 float32 tensor, row-major, channels-last. Rank-3 data is
// (height, width, channels); rank-4 convolution kernels are
// (kh, kw, in_channels, out_channels).
class Tensor {
public:
    using Storage = std::vector<float, memory::TrackingAllocator<float>>;

    Tensor() = default;

    explicit Tensor(std::vector<int> dims, float fill = 0.0f) : dims_(std::move(dims)) {
        validate_dims(dims_);
        data_.assign(static_cast<std::size_t>(numel_of(dims_)), fill);
    }

    static Tensor from(std::vector<int> dims, const std::vector<float>& values) {
        validate_dims(dims);
        if (static_cast<std::int64_t>(values.size()) != numel_of(dims)) {
            throw ShapeError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape product " + std::to_string(numel_of(dims)));
        }
        Tensor t;
        t.dims_ = std::move(dims);
        t.data_.assign(values.begin(), values.end());
        return t;
    }

    int rank() const { return static_cast<int>(dims_.size()); }
    int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& dims() const { return dims_; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    // Rank-3 conveniences.
    int height() const { return dims_[0]; }
    int width() const { return dims_[1]; }
    int channels() const { return dims_[2]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    float& at(int y, int x, int c) {
        return data_[static_cast<std::size_t>((static_cast<std::int64_t>(y) * dims_[1] + x) * dims_[2] + c)];
    }
    float at(int y, int x, int c) const {
        return data_[static_cast<std::size_t>((static_cast<std::int64_t>(y) * dims_[1] + x) * dims_[2] + c)];
    }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

    static std::int64_t numel_of(const std::vector<int>& dims) {
        std::int64_t n = 1;
        for (int d : dims) n *= d;
        return n;
    }

    static void validate_dims(const std::vector<int>& dims) {
        if (dims.empty() || dims.size() > 4) {
            throw ShapeError("tensor rank must be 1..4, got " + std::to_string(dims.size()));
        }
        for (int d : dims) {
            if (d < 1) throw ShapeError("tensor dimensions must be positive, got " + std::to_string(d));
        }
    }

private:
    std::vector<int> dims_;
    Storage data_;
};

inline Tensor tensor_new(std::vector<int> dims, float fill) { return Tensor(std::move(dims), fill); }

inline std::string shape_string(const std::vector<int>& dims) {
    std::string s = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + ")";
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.dims()) + " vs " +
                         shape_string(b.dims()));
    }
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

}  // namespace llpack
