#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "axnn/autograd.hpp"
#include "axnn/nn.hpp"
#include "axnn/tensor.hpp"

namespace axnn {

// ---------------------------------------------------------------------------
// 7-bit unsigned multiplier core with a pluggable product table.
// ---------------------------------------------------------------------------

inline constexpr int kMultInputs = 128;  // 7-bit unsigned operands
inline constexpr int kMultEntries = kMultInputs * kMultInputs;

struct MultTable {
    std::vector<uint16_t> products;  // row-major, a-major: products[a*128 + b]
    std::string name;
    int bit_width = 7;

    uint16_t lookup(int a, int b) const { return products[static_cast<size_t>(a * kMultInputs + b)]; }
};

// Exact partial-product array with the drop_k least-significant columns
// (partial products at weight < 2^drop_k) omitted. drop_k = 0 is exact.
inline uint16_t default_truncated_mul(uint32_t a, uint32_t b, int drop_k) {
    if (a > 127 || b > 127) throw std::invalid_argument("default_truncated_mul: operands must be 7-bit");
    if (drop_k < 0 || drop_k > 6) throw std::invalid_argument("default_truncated_mul: drop_k must be in [0,6]");
    uint32_t acc = 0;
    for (int i = 0; i < 7; ++i) {
        if (!((a >> i) & 1)) continue;
        for (int j = 0; j < 7; ++j) {
            if (!((b >> j) & 1)) continue;
            if (i + j < drop_k) continue;
            acc += 1u << (i + j);
        }
    }
    return static_cast<uint16_t>(acc);
}

inline MultTable make_truncated_table(int drop_k) {
    MultTable t;
    t.name = "default:" + std::to_string(drop_k);
    t.products.resize(kMultEntries);
    for (int a = 0; a < kMultInputs; ++a)
        for (int b = 0; b < kMultInputs; ++b)
            t.products[static_cast<size_t>(a * kMultInputs + b)] =
                default_truncated_mul(static_cast<uint32_t>(a), static_cast<uint32_t>(b), drop_k);
    return t;
}

struct MultErrorStats {
    double mean_rel_error = 0.0;  // over pairs with nonzero exact product
    double max_abs_error = 0.0;
    double mean_error = 0.0;  // signed bias over all pairs
    double error_variance = 0.0;
};

// Exhaustive characterization over the full 128x128 grid.
inline MultErrorStats characterize(const MultTable& table) {
    MultErrorStats s;
    double sum_rel = 0.0, sum_err = 0.0, sum_err2 = 0.0;
    long nonzero = 0;
    for (int a = 0; a < kMultInputs; ++a) {
        for (int b = 0; b < kMultInputs; ++b) {
            const double exact = static_cast<double>(a) * b;
            const double err = static_cast<double>(table.lookup(a, b)) - exact;
            sum_err += err;
            sum_err2 += err * err;
            s.max_abs_error = std::max(s.max_abs_error, std::fabs(err));
            if (exact != 0.0) {
                sum_rel += std::fabs(err) / exact;
                ++nonzero;
            }
        }
    }
    const double n = static_cast<double>(kMultEntries);
    s.mean_rel_error = sum_rel / static_cast<double>(nonzero);
    s.mean_error = sum_err / n;
    s.error_variance = sum_err2 / n - s.mean_error * s.mean_error;
    return s;
}

// Table file IO. Binary: magic "MTBL" then 16384 u16 little-endian in
// a-major order. Text: one "a b product" line per pair, any order.
inline void save_mult_table(const MultTable& table, const std::string& path, bool binary) {
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw std::runtime_error("save_mult_table: cannot open " + path);
    if (binary) {
        os.write("MTBL", 4);
        for (uint16_t v : table.products) {
            const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
            os.write(reinterpret_cast<const char*>(b), 2);
        }
    } else {
        for (int a = 0; a < kMultInputs; ++a)
            for (int b = 0; b < kMultInputs; ++b) os << a << " " << b << " " << table.lookup(a, b) << "\n";
    }
    if (!os) throw std::runtime_error("save_mult_table: write failed for " + path);
}

inline MultTable load_mult_table(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_mult_table: cannot open " + path);
    char magic[4] = {0, 0, 0, 0};
    is.read(magic, 4);
    MultTable t;
    t.name = path;
    if (is.gcount() == 4 && std::memcmp(magic, "MTBL", 4) == 0) {
        t.products.resize(kMultEntries);
        for (int i = 0; i < kMultEntries; ++i) {
            unsigned char b[2];
            if (!is.read(reinterpret_cast<char*>(b), 2))
                throw std::runtime_error("load_mult_table: truncated binary table at entry " + std::to_string(i));
            t.products[static_cast<size_t>(i)] = static_cast<uint16_t>(b[0] | (b[1] << 8));
        }
        if (is.peek() != std::char_traits<char>::eof())
            throw std::runtime_error("load_mult_table: trailing data after entry 16383");
    } else {
        is.clear();
        is.seekg(0);
        t.products.assign(kMultEntries, 0);
        std::vector<bool> seen(kMultEntries, false);
        std::string line;
        long line_no = 0, filled = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream ls(line);
            long a, b, p;
            if (!(ls >> a >> b >> p))
                throw std::runtime_error("load_mult_table: parse failure at line " + std::to_string(line_no));
            if (a < 0 || a > 127 || b < 0 || b > 127 || p < 0 || p > 65535)
                throw std::runtime_error("load_mult_table: out-of-range entry at line " + std::to_string(line_no));
            const size_t idx = static_cast<size_t>(a * kMultInputs + b);
            if (seen[idx]) throw std::runtime_error("load_mult_table: duplicate entry at line " + std::to_string(line_no));
            seen[idx] = true;
            t.products[idx] = static_cast<uint16_t>(p);
            ++filled;
        }
        if (filled != kMultEntries) {
            long missing = -1;
            for (int i = 0; i < kMultEntries; ++i)
                if (!seen[static_cast<size_t>(i)]) {
                    missing = i;
                    break;
                }
            throw std::runtime_error("load_mult_table: expected 16384 entries, got " + std::to_string(filled) +
                                     " (first missing entry " + std::to_string(missing) + ")");
        }
    }
    for (size_t i = 0; i < t.products.size(); ++i)
        if (t.products[i] > 16129)
            throw std::runtime_error("load_mult_table: entry " + std::to_string(i) + " exceeds 127*127");
    return t;
}

// Sign-magnitude multiply: result sign = XOR of operand signs, magnitude
// from the table. Operand domain is [-127, 127].
inline int32_t approx_mul_signed(int a, int b, const MultTable& table) {
    const int32_t mag = table.lookup(std::abs(a), std::abs(b));
    return ((a < 0) != (b < 0)) ? -mag : mag;
}

// ---------------------------------------------------------------------------
// Symmetric 8-bit sign-magnitude quantization.
// ---------------------------------------------------------------------------

struct QuantParams {
    float scale = 1.0f;
};

inline float round_half_away(float v) { return v >= 0.0f ? std::floor(v + 0.5f) : std::ceil(v - 0.5f); }

inline std::pair<TensorI8, QuantParams> quantize8(const Tensor& x) {
    QuantParams qp;
    const float max_abs = x.max_abs();
    qp.scale = max_abs > 0.0f ? max_abs / 127.0f : 1.0f;  // all-zero convention
    TensorI8 q;
    q.shape = x.shape;
    q.data.resize(x.data.size());
    for (size_t i = 0; i < x.data.size(); ++i) {
        float r = round_half_away(x.data[i] / qp.scale);
        r = std::min(127.0f, std::max(-127.0f, r));
        q.data[i] = static_cast<int8_t>(r);
    }
    return {std::move(q), qp};
}

inline Tensor dequantize(const TensorI8& q, const QuantParams& qp) {
    Tensor t = Tensor::zeros(q.shape);
    for (size_t i = 0; i < q.data.size(); ++i) t.data[i] = static_cast<float>(q.data[i]) * qp.scale;
    return t;
}

// ---------------------------------------------------------------------------
// Approximate-multiplier conv/linear kernels: 8-bit quantize, table-driven
// products, exact 32-bit integer accumulation, dequantize, float bias.
// ---------------------------------------------------------------------------

inline Tensor am_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, const MultTable& table, int64_t stride,
                        int64_t pad) {
    check_conv_args(x, w, bias, "am_conv2d");
    counters().am_kernel_calls++;
    const auto [xq, xs] = quantize8(x);
    const auto [wq, ws] = quantize8(w);
    const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wid = x.shape[3];
    const int64_t k = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int64_t oh = conv_out_dim(h, kh, stride, pad, "am_conv2d");
    const int64_t ow = conv_out_dim(wid, kw, stride, pad, "am_conv2d");
    if (c * kh * kw > (1ll << 31) / 16129)
        throw internal_error("am_conv2d: receptive field too large for 32-bit accumulation");

    const float out_scale = xs.scale * ws.scale;
    Tensor y = Tensor::zeros({n, k, oh, ow});
    for (int64_t img = 0; img < n; ++img)
        for (int64_t f = 0; f < k; ++f)
            for (int64_t i = 0; i < oh; ++i)
                for (int64_t j = 0; j < ow; ++j) {
                    int32_t acc = 0;
                    for (int64_t ch = 0; ch < c; ++ch)
                        for (int64_t ki = 0; ki < kh; ++ki)
                            for (int64_t kj = 0; kj < kw; ++kj) {
                                const int64_t ih = i * stride - pad + ki;
                                const int64_t iw = j * stride - pad + kj;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= wid) continue;
                                const int8_t a = xq.data[static_cast<size_t>(((img * c + ch) * h + ih) * wid + iw)];
                                const int8_t b = wq.data[static_cast<size_t>(((f * c + ch) * kh + ki) * kw + kj)];
                                acc += approx_mul_signed(a, b, table);
                            }
                    float v = static_cast<float>(acc) * out_scale;
                    if (!bias.empty()) v += bias[f];
                    y.at4(img, f, i, j) = v;
                }
    y.ensure_finite("am_conv2d");
    return y;
}

inline Tensor am_linear(const Tensor& x, const Tensor& w, const Tensor& bias, const MultTable& table) {
    require_rank(x, 2, "am_linear");
    require_rank(w, 2, "am_linear");
    if (x.shape[1] != w.shape[1]) throw std::invalid_argument("am_linear: inner dim mismatch");
    counters().am_kernel_calls++;
    const auto [xq, xs] = quantize8(x);
    const auto [wq, ws] = quantize8(w);
    const int64_t n = x.shape[0], d = x.shape[1], m = w.shape[0];
    if (d > (1ll << 31) / 16129) throw internal_error("am_linear: inner dim too large for 32-bit accumulation");
    const float out_scale = xs.scale * ws.scale;
    Tensor y = Tensor::zeros({n, m});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) {
            int32_t acc = 0;
            for (int64_t t = 0; t < d; ++t)
                acc += approx_mul_signed(xq.data[static_cast<size_t>(i * d + t)],
                                         wq.data[static_cast<size_t>(j * d + t)], table);
            float v = static_cast<float>(acc) * out_scale;
            if (!bias.empty()) v += bias[j];
            y.at2(i, j) = v;
        }
    y.ensure_finite("am_linear");
    return y;
}

// Fake-quantize node (quantize8 + dequantize) with a straight-through
// gradient; this is the proxy-path stand-in for 8-bit operands.
inline Tensor fake_quant8_eval(const Tensor& x) {
    const auto [q, qp] = quantize8(x);
    return dequantize(q, qp);
}

inline NodePtr fake_quant8(NodePtr x) {
    auto n = std::make_shared<Node>();
    n->op = "fake_quant8";
    n->value = fake_quant8_eval(x->value);
    n->requires_grad = x->requires_grad;
    n->parents = {std::move(x)};
    n->backward_fn = [](Node& self) { self.parents[0]->accumulate_grad(self.grad); };
    return n;
}

}  // namespace axnn
