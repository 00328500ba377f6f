#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "axnn/common.hpp"

namespace axnn {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major float32 tensor. The one value carrier of the whole
// toolkit; every public kernel keeps the finiteness invariant.
struct Tensor {
    Shape shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match data size " +
                                        std::to_string(data.size()));
        for (int64_t d : shape)
            if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension in " + shape_str(shape));
    }

    static Tensor zeros(const Shape& s) { return Tensor(s, std::vector<float>(shape_numel(s), 0.0f)); }
    static Tensor full(const Shape& s, float v) { return Tensor(s, std::vector<float>(shape_numel(s), v)); }
    static Tensor scalar(float v) { return Tensor({1}, {v}); }

    static Tensor uniform(const Shape& s, float lo, float hi, Rng& rng) {
        Tensor t = zeros(s);
        for (float& v : t.data) v = rng.uniform(lo, hi);
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape.at(i); }
    bool empty() const { return data.empty(); }

    float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // NCHW accessors for the conv kernels.
    float at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    float& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    float at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    float& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }

    float max_abs() const {
        float m = 0.0f;
        for (float v : data) m = std::max(m, std::fabs(v));
        return m;
    }
    float max_value() const {
        float m = -std::numeric_limits<float>::infinity();
        for (float v : data) m = std::max(m, v);
        return m;
    }
    float min_value() const {
        float m = std::numeric_limits<float>::infinity();
        for (float v : data) m = std::min(m, v);
        return m;
    }

    void ensure_finite(const char* who) const {
        for (float v : data)
            if (!std::isfinite(v)) throw std::runtime_error(std::string(who) + ": non-finite value in tensor");
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline void require_shape(const Tensor& t, const Shape& s, const char* who) {
    if (t.shape != s)
        throw std::invalid_argument(std::string(who) + ": expected shape " + shape_str(s) + ", got " +
                                    shape_str(t.shape));
}

inline void require_rank(const Tensor& t, int r, const char* who) {
    if (t.rank() != r)
        throw std::invalid_argument(std::string(who) + ": expected rank " + std::to_string(r) + ", got " +
                                    shape_str(t.shape));
}

// Signed 8-bit companion tensor used by the quantized kernels
// (sign-magnitude convention: values in [-127, 127], -128 never produced).
struct TensorI8 {
    Shape shape;
    std::vector<int8_t> data;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

}  // namespace axnn
