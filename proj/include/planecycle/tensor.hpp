#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "planecycle/error.hpp"

namespace planecycle {

struct Shape {
    std::vector<int64_t> dims;

    Shape() = default;
    Shape(std::initializer_list<int64_t> d) : dims(d) {}
    explicit Shape(std::vector<int64_t> d) : dims(std::move(d)) {}

    int64_t rank() const { return static_cast<int64_t>(dims.size()); }

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : dims) n *= d;
        return n;
    }

    int64_t operator[](size_t i) const { return dims[i]; }

    bool operator==(const Shape& other) const { return dims == other.dims; }
    bool operator!=(const Shape& other) const { return dims != other.dims; }

    std::string str() const {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < dims.size(); ++i) {
            if (i) os << ',';
            os << dims[i];
        }
        os << ']';
        return os.str();
    }
};

inline void validate_shape(const Shape& s) {
    for (int64_t d : s.dims) {
        if (d < 1) throw ShapeMismatch("shape " + s.str() + " has a non-positive extent");
    }
}

// Checked mode rejects NaN/Inf at tensor construction. Off by default; tests
// and the selftest command flip it on around sensitive sections.
inline std::atomic<bool>& checked_mode_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}

inline void set_checked_mode(bool on) { checked_mode_flag().store(on); }
inline bool checked_mode() { return checked_mode_flag().load(); }

// Dense row-major (last axis fastest) float32 tensor. The single canonical
// layout: every reshape/plane contract in the library is defined against it.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape(shape_);
        data_.assign(static_cast<size_t>(shape_.numel()), 0.0f);
    }

    Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape(shape_);
        if (static_cast<int64_t>(data_.size()) != shape_.numel()) {
            throw ShapeMismatch("data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_.str());
        }
        if (checked_mode()) check_finite();
    }

    static Tensor full(Shape shape, float value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const Shape& shape() const { return shape_; }
    int64_t rank() const { return shape_.rank(); }
    int64_t dim(size_t i) const { return shape_[i]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    float& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    float at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

    float& at(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    float at(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }

    float& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    float at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    void check_finite() const {
        for (float v : data_) {
            if (!std::isfinite(v)) throw NonFiniteValue("tensor contains NaN or Inf");
        }
    }

    bool operator==(const Tensor& other) const {
        if (shape_ != other.shape_) return false;
        // bitwise comparison, so NaN == NaN and -0 != +0
        for (size_t i = 0; i < data_.size(); ++i) {
            uint32_t a, b;
            static_assert(sizeof(float) == sizeof(uint32_t));
            std::memcpy(&a, &data_[i], 4);
            std::memcpy(&b, &other.data_[i], 4);
            if (a != b) return false;
        }
        return true;
    }

private:
    Shape shape_;
    std::vector<float> data_;
};

// Same element sequence, relabeled extents. No data movement beyond the copy
// implied by value semantics.
inline Tensor reshape(const Tensor& t, Shape new_shape) {
    validate_shape(new_shape);
    if (new_shape.numel() != t.numel()) {
        throw ShapeMismatch("cannot reshape " + t.shape().str() + " (" + std::to_string(t.numel()) +
                            " elements) to " + new_shape.str());
    }
    return Tensor(std::move(new_shape), t.vec());
}

inline Tensor reshape(Tensor&& t, Shape new_shape) {
    validate_shape(new_shape);
    if (new_shape.numel() != t.numel()) {
        throw ShapeMismatch("cannot reshape " + t.shape().str() + " to " + new_shape.str());
    }
    return Tensor(std::move(new_shape), std::move(t.vec()));
}

// Materialized transpose: output[i_{axes[0]}, i_{axes[1]}, ...] = input[i_0, i_1, ...].
inline Tensor permute(const Tensor& t, const std::vector<int64_t>& axes) {
    const int64_t r = t.rank();
    if (static_cast<int64_t>(axes.size()) != r) {
        throw InvalidPermutation("permutation has " + std::to_string(axes.size()) +
                                 " axes, tensor has rank " + std::to_string(r));
    }
    std::vector<bool> seen(static_cast<size_t>(r), false);
    for (int64_t a : axes) {
        if (a < 0 || a >= r || seen[static_cast<size_t>(a)]) {
            throw InvalidPermutation("axes are not a permutation of 0.." + std::to_string(r - 1));
        }
        seen[static_cast<size_t>(a)] = true;
    }

    Shape out_shape;
    out_shape.dims.resize(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) out_shape.dims[static_cast<size_t>(i)] = t.dim(static_cast<size_t>(axes[static_cast<size_t>(i)]));

    std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
    for (int64_t i = r - 2; i >= 0; --i) {
        in_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i + 1)] * t.dim(static_cast<size_t>(i + 1));
    }

    Tensor out(out_shape);
    std::vector<int64_t> idx(static_cast<size_t>(r), 0);
    const int64_t n = t.numel();
    for (int64_t lin = 0; lin < n; ++lin) {
        int64_t src = 0;
        for (int64_t i = 0; i < r; ++i) {
            src += idx[static_cast<size_t>(i)] * in_strides[static_cast<size_t>(axes[static_cast<size_t>(i)])];
        }
        out[lin] = t[src];
        for (int64_t i = r - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < out_shape.dims[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return out;
}

inline std::vector<int64_t> inverse_permutation(const std::vector<int64_t>& axes) {
    std::vector<int64_t> inv(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) inv[static_cast<size_t>(axes[i])] = static_cast<int64_t>(i);
    return inv;
}

// a[m,k] * b[k,n]. Accumulates per output element in ascending-k order (double
// accumulator), so repeated and parallel runs are bit-identical.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeMismatch("matmul expects rank-2 tensors, got " + a.shape().str() + " and " + b.shape().str());
    }
    if (a.dim(1) != b.dim(0)) {
        throw ShapeMismatch("matmul inner dims disagree: " + a.shape().str() + " vs " + b.shape().str());
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out(Shape{m, n});
    std::vector<double> acc(static_cast<size_t>(n));
    const float* ap = a.data();
    const float* bp = b.data();
    float* op = out.data();
    for (int64_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int64_t p = 0; p < k; ++p) {
            const double av = static_cast<double>(ap[i * k + p]);
            const float* brow = bp + p * n;
            for (int64_t j = 0; j < n; ++j) {
                acc[static_cast<size_t>(j)] += av * static_cast<double>(brow[j]);
            }
        }
        for (int64_t j = 0; j < n; ++j) op[i * n + j] = static_cast<float>(acc[static_cast<size_t>(j)]);
    }
    return out;
}

// Adaptive 1D average pooling over rows of a [L, C] tensor.
// Output row i averages input rows [floor(i*L/P), ceil((i+1)*L/P)), summed in
// ascending row order. P == L is the identity; L == 1 broadcasts.
inline Tensor adaptive_avg_pool_1d(const Tensor& t, int64_t out_len) {
    if (t.rank() != 2) throw ShapeMismatch("adaptive_avg_pool_1d expects [L, C], got " + t.shape().str());
    const int64_t L = t.dim(0), C = t.dim(1);
    if (L < 1 || out_len < 1) throw InvalidLength("pool lengths must be >= 1");

    Tensor out(Shape{out_len, C});
    for (int64_t i = 0; i < out_len; ++i) {
        const int64_t start = (i * L) / out_len;
        const int64_t end = ((i + 1) * L + out_len - 1) / out_len; // ceil
        const double count = static_cast<double>(end - start);
        for (int64_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (int64_t r = start; r < end; ++r) s += static_cast<double>(t.at(r, c));
            out.at(i, c) = static_cast<float>(s / count);
        }
    }
    return out;
}

} // namespace planecycle
