#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

#include "axnn/nn.hpp"
#include "axnn/tensor.hpp"

namespace axnn {

// ---------------------------------------------------------------------------
// LFSR stream generation.
// ---------------------------------------------------------------------------

// Fibonacci LFSR: output = parity(state & taps), shifted in at the top bit.
struct LfsrConfig {
    int width = 16;
    uint32_t taps = 0xB400;  // x^16 + x^14 + x^13 + x^11 + 1
    uint32_t seed = 1;
};

// Shift-left Fibonacci step; tap position t (1-indexed) is mask bit t-1,
// so taps {4,3} are mask 0b1100.
inline uint32_t lfsr_step(uint32_t state, uint32_t taps, int width) {
    const uint32_t out = static_cast<uint32_t>(std::popcount(state & taps) & 1);
    return ((state << 1) | out) & ((1u << width) - 1);
}

inline uint32_t lfsr_next(uint32_t state, const LfsrConfig& cfg) {
    if (state == 0) throw std::invalid_argument("lfsr_next: zero state is a degenerate fixed point");
    return lfsr_step(state, cfg.taps, cfg.width);
}

// Maximal-length check by cycle enumeration; cheap for width <= 16.
inline bool lfsr_is_maximal(const LfsrConfig& cfg) {
    if (cfg.width < 2 || cfg.width > 16) return false;
    const uint32_t period = (1u << cfg.width) - 1;
    uint32_t s = 1;
    for (uint32_t i = 0; i < period; ++i) {
        s = lfsr_step(s, cfg.taps, cfg.width);
        if (s == 0) return false;
        if (s == 1) return i + 1 == period;
    }
    return false;
}

inline LfsrConfig make_lfsr_config(int width, uint32_t taps, uint32_t seed) {
    if (seed == 0) throw std::invalid_argument("LfsrConfig: seed must be nonzero");
    LfsrConfig cfg{width, taps, seed};
    if (width <= 16 && !lfsr_is_maximal(cfg))
        throw std::invalid_argument("LfsrConfig: taps 0x" + std::to_string(taps) + " are not maximal for width " +
                                    std::to_string(width));
    return cfg;
}

// Primitive-polynomial tap masks per width, one pair per width so the
// activation and weight comparison sources never share a sequence.
inline uint32_t default_taps(int width) {
    switch (width) {
        case 3: return 0b110;                // x^3+x^2+1
        case 4: return 0b1100;               // x^4+x^3+1
        case 5: return 0b10100;              // x^5+x^3+1
        case 6: return 0b110000;             // x^6+x^5+1
        case 16: return 0xB400;
        default: throw std::invalid_argument("default_taps: unsupported width " + std::to_string(width));
    }
}

inline uint32_t alternate_taps(int width) {
    switch (width) {
        case 3: return 0b101;                // x^3+x+1
        case 4: return 0b1001;               // x^4+x+1
        case 5: return 0b10010;              // x^5+x^2+1
        case 6: return 0b100001;             // x^6+x+1
        case 16: return 0xD008;              // x^16+x^15+x^13+x^4+1
        default: throw std::invalid_argument("alternate_taps: unsupported width " + std::to_string(width));
    }
}

// ---------------------------------------------------------------------------
// Unipolar bitstreams.
// ---------------------------------------------------------------------------

struct PackedStream {
    std::vector<uint64_t> words;
    int length = 0;

    static PackedStream zeros(int length) {
        PackedStream s;
        s.length = length;
        s.words.assign(static_cast<size_t>((length + 63) / 64), 0);
        return s;
    }

    int popcount() const {
        int n = 0;
        for (uint64_t w : words) n += std::popcount(w);
        return n;
    }
};

inline double decode_stream(const PackedStream& s) {
    return static_cast<double>(s.popcount()) / static_cast<double>(s.length);
}

// Single-word fast path used by the conv/linear kernels (L <= 64).
inline uint64_t lfsr_encode_word(uint32_t seed, uint32_t taps, int width, int length, uint32_t threshold) {
    uint64_t bits = 0;
    uint32_t s = seed;
    for (int i = 0; i < length; ++i) {
        bits |= static_cast<uint64_t>(s <= threshold) << i;
        s = lfsr_step(s, taps, width);
    }
    return bits;
}

// bit_i = 1 iff lfsr_state_i <= round(v * (2^width - 1)), state_0 = seed.
inline PackedStream encode_stream(double v, int length, const LfsrConfig& cfg) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("encode_stream: value outside [0,1], caller must pre-scale");
    if (cfg.seed == 0) throw std::invalid_argument("encode_stream: zero seed");
    const uint32_t period_max = (1u << cfg.width) - 1;
    const uint32_t threshold = static_cast<uint32_t>(std::lround(v * static_cast<double>(period_max)));
    PackedStream out = PackedStream::zeros(length);
    uint32_t s = cfg.seed;
    for (int i = 0; i < length; ++i) {
        if (s <= threshold) out.words[static_cast<size_t>(i) >> 6] |= 1ull << (i & 63);
        s = lfsr_step(s, cfg.taps, cfg.width);
    }
    return out;
}

// AND multiplication; expectation of decorrelated inputs is the product.
inline PackedStream sc_mul(const PackedStream& a, const PackedStream& b) {
    if (a.length != b.length) throw std::invalid_argument("sc_mul: stream length mismatch");
    PackedStream out = a;
    for (size_t i = 0; i < out.words.size(); ++i) out.words[i] &= b.words[i];
    return out;
}

// OR accumulation; expectation of decorrelated inputs is 1 - prod(1 - a_i).
inline PackedStream sc_or_accumulate(const std::vector<PackedStream>& streams) {
    if (streams.empty()) throw std::invalid_argument("sc_or_accumulate: empty stream list");
    PackedStream out = streams[0];
    for (size_t s = 1; s < streams.size(); ++s) {
        if (streams[s].length != out.length) throw std::invalid_argument("sc_or_accumulate: stream length mismatch");
        for (size_t i = 0; i < out.words.size(); ++i) out.words[i] |= streams[s].words[i];
    }
    return out;
}

inline double expected_or(const std::vector<double>& values) {
    double keep = 1.0;
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("expected_or: value outside [0,1]");
        keep *= 1.0 - v;
    }
    return 1.0 - keep;
}

// ---------------------------------------------------------------------------
// Split-unipolar SC conv/linear kernels.
// ---------------------------------------------------------------------------

struct ScConfig {
    int stream_length = 32;
    LfsrConfig input_lfsr;
    LfsrConfig weight_lfsr;
    float value_scale = 1.0f;  // activation scale; weights carry their own scale
    uint64_t base_seed = 0x5eedULL;
    int layer_id = 0;
};

// Stream LFSR width is tied to the stream length: with L = 2^w the window
// covers the full period plus one state, so popcount(encode(v)) equals the
// comparator threshold to within one bit and the decode-encode error bound
// 1/L + 2^-width holds for every v.
inline int sc_stream_width(int length) {
    switch (length) {
        case 8: return 3;
        case 16: return 4;
        case 32: return 5;
        case 64: return 6;
        default: throw std::invalid_argument("ScConfig: stream length must be one of {8,16,32,64}");
    }
}

inline ScConfig make_sc_config(int stream_length, uint64_t base_seed = 0x5eedULL, int layer_id = 0) {
    const int w = sc_stream_width(stream_length);
    ScConfig cfg;
    cfg.stream_length = stream_length;
    cfg.input_lfsr = make_lfsr_config(w, default_taps(w), 1);
    cfg.weight_lfsr = make_lfsr_config(w, alternate_taps(w), 2);
    cfg.base_seed = base_seed;
    cfg.layer_id = layer_id;
    return cfg;
}

// Mean decoded value of encode_stream(v) over a uniform nonzero seed:
// exactly threshold / (2^width - 1). Oracles compare against this rather
// than v itself so stream quantization does not bias the test.
inline double sc_effective_prob(double v, int width) {
    const double period = static_cast<double>((1u << width) - 1);
    return std::lround(v * period) / period;
}

inline uint32_t sc_fold_seed(uint64_t key, int width) {
    const uint32_t period = (1u << width) - 1;
    return 1u + static_cast<uint32_t>(key % period);
}

namespace detail {

struct ScAccum {
    uint64_t pos = 0, neg = 0;
};

// One multiply-accumulate lane: encode the scaled activation and |weight|,
// AND them, OR the product into the polarity accumulator. Lane seeds are
// positional so results are independent of evaluation order.
inline void sc_lane(double a_scaled, float wval, double inv_weight_scale, const ScConfig& cfg, int width,
                    uint64_t elem_key, int64_t lane, ScAccum& acc) {
    if (wval == 0.0f || a_scaled == 0.0) return;  // zero stream contributes nothing to the OR
    if (a_scaled < 0.0) throw std::invalid_argument("sc_conv2d: negative activation (inputs must be post-ReLU)");
    if (a_scaled > 1.0 + 1e-6) throw std::invalid_argument("sc_conv2d: activation exceeds value_scale");
    const double wmag = std::fabs(static_cast<double>(wval)) * inv_weight_scale;
    if (wmag > 1.0 + 1e-6) throw std::invalid_argument("sc_conv2d: weight exceeds weight scale");
    const double period = static_cast<double>((1u << width) - 1);
    const uint32_t ta = static_cast<uint32_t>(std::lround(std::min(a_scaled, 1.0) * period));
    const uint32_t tw = static_cast<uint32_t>(std::lround(std::min(wmag, 1.0) * period));
    const uint32_t seed_a = sc_fold_seed(mix(elem_key, static_cast<uint64_t>(lane), 0xAC7ull), width);
    const uint32_t seed_w = sc_fold_seed(mix(elem_key, static_cast<uint64_t>(lane), 0x3E1ull), width);
    const uint64_t sa = lfsr_encode_word(seed_a, cfg.input_lfsr.taps, width, cfg.stream_length, ta);
    const uint64_t sw = lfsr_encode_word(seed_w, cfg.weight_lfsr.taps, width, cfg.stream_length, tw);
    const uint64_t prod = sa & sw;
    if (wval > 0.0f)
        acc.pos |= prod;
    else
        acc.neg |= prod;
}

inline float sc_decode_diff(const detail::ScAccum& acc, int length, double out_scale) {
    const double pos = static_cast<double>(std::popcount(acc.pos)) / length;
    const double neg = static_cast<double>(std::popcount(acc.neg)) / length;
    return static_cast<float>(out_scale * (pos - neg));
}

}  // namespace detail

// Accurate split-unipolar SC forward conv. Activations divided by
// input_scale, weight magnitudes by weight_scale; positive-weight products
// OR into one stream, negative-weight products into the other; output is
// input_scale*weight_scale*(decode(pos) - decode(neg)) plus exact bias.
// Pass input_scale/weight_scale <= 0 to derive them from the operands.
inline Tensor sc_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, const ScConfig& cfg, int64_t stride,
                        int64_t pad, float input_scale = -1.0f, float weight_scale = -1.0f) {
    check_conv_args(x, w, bias, "sc_conv2d");
    counters().sc_kernel_calls++;
    const int width = sc_stream_width(cfg.stream_length);
    if (input_scale <= 0.0f) input_scale = std::max(x.max_value(), 1e-12f);
    if (weight_scale <= 0.0f) weight_scale = std::max(w.max_abs(), 1e-12f);
    const double inv_in = 1.0 / input_scale, inv_w = 1.0 / weight_scale;
    const double out_scale = static_cast<double>(input_scale) * weight_scale;

    const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wid = x.shape[3];
    const int64_t k = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int64_t oh = conv_out_dim(h, kh, stride, pad, "sc_conv2d");
    const int64_t ow = conv_out_dim(wid, kw, stride, pad, "sc_conv2d");

    Tensor y = Tensor::zeros({n, k, oh, ow});
    int64_t elem = 0;
    for (int64_t img = 0; img < n; ++img)
        for (int64_t f = 0; f < k; ++f)
            for (int64_t i = 0; i < oh; ++i)
                for (int64_t j = 0; j < ow; ++j, ++elem) {
                    const uint64_t elem_key =
                        mix(cfg.base_seed, static_cast<uint64_t>(cfg.layer_id), static_cast<uint64_t>(elem));
                    detail::ScAccum acc;
                    int64_t lane = 0;
                    for (int64_t ch = 0; ch < c; ++ch)
                        for (int64_t ki = 0; ki < kh; ++ki)
                            for (int64_t kj = 0; kj < kw; ++kj, ++lane) {
                                const int64_t ih = i * stride - pad + ki;
                                const int64_t iw = j * stride - pad + kj;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= wid) continue;
                                const double a = static_cast<double>(x.at4(img, ch, ih, iw)) * inv_in;
                                detail::sc_lane(a, w.at4(f, ch, ki, kj), inv_w, cfg, width, elem_key, lane, acc);
                            }
                    float v = detail::sc_decode_diff(acc, cfg.stream_length, out_scale);
                    if (!bias.empty()) v += bias[f];
                    y.at4(img, f, i, j) = v;
                }
    y.ensure_finite("sc_conv2d");
    return y;
}

inline Tensor sc_linear(const Tensor& x, const Tensor& w, const Tensor& bias, const ScConfig& cfg,
                        float input_scale = -1.0f, float weight_scale = -1.0f) {
    require_rank(x, 2, "sc_linear");
    require_rank(w, 2, "sc_linear");
    if (x.shape[1] != w.shape[1]) throw std::invalid_argument("sc_linear: inner dim mismatch");
    counters().sc_kernel_calls++;
    const int width = sc_stream_width(cfg.stream_length);
    if (input_scale <= 0.0f) input_scale = std::max(x.max_value(), 1e-12f);
    if (weight_scale <= 0.0f) weight_scale = std::max(w.max_abs(), 1e-12f);
    const double inv_in = 1.0 / input_scale, inv_w = 1.0 / weight_scale;
    const double out_scale = static_cast<double>(input_scale) * weight_scale;

    const int64_t n = x.shape[0], d = x.shape[1], m = w.shape[0];
    Tensor y = Tensor::zeros({n, m});
    int64_t elem = 0;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j, ++elem) {
            const uint64_t elem_key =
                mix(cfg.base_seed, static_cast<uint64_t>(cfg.layer_id), static_cast<uint64_t>(elem));
            detail::ScAccum acc;
            for (int64_t t = 0; t < d; ++t) {
                const double a = static_cast<double>(x.at2(i, t)) * inv_in;
                detail::sc_lane(a, w.at2(j, t), inv_w, cfg, width, elem_key, t, acc);
            }
            float v = detail::sc_decode_diff(acc, cfg.stream_length, out_scale);
            if (!bias.empty()) v += bias[j];
            y.at2(i, j) = v;
        }
    y.ensure_finite("sc_linear");
    return y;
}

}  // namespace axnn
