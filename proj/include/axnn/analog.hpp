#pragma once

#include <algorithm>
#include <cmath>

#include "axnn/mult.hpp"
#include "axnn/nn.hpp"
#include "axnn/tensor.hpp"

namespace axnn {

// ---------------------------------------------------------------------------
// ADC model: clamp to full scale, uniform quantization to 2^bits levels.
// ---------------------------------------------------------------------------

struct AdcConfig {
    int bits = 4;
    float clip = 1.0f;     // full scale of one partial sum
    int group_size = 9;    // products per analog partial sum (linear layers)
};

inline void check_adc_config(const AdcConfig& cfg, const char* who) {
    if (cfg.bits < 2 || cfg.bits > 8) throw std::invalid_argument(std::string(who) + ": ADC bits must be in [2,8]");
    if (!(cfg.clip > 0.0f)) throw std::invalid_argument(std::string(who) + ": clip must be positive");
    if (cfg.group_size < 1) throw std::invalid_argument(std::string(who) + ": group_size must be >= 1");
}

// v' = min(v, clip); q = round(v' * (2^bits - 1) / clip) * clip / (2^bits - 1)
inline float adc_quantize(float v, const AdcConfig& cfg) {
    check_adc_config(cfg, "adc_quantize");
    if (v < 0.0f) throw std::invalid_argument("adc_quantize: negative input violates the unipolar contract");
    const float levels = static_cast<float>((1 << cfg.bits) - 1);
    const float clamped = std::min(v, cfg.clip);
    return round_half_away(clamped * levels / cfg.clip) * cfg.clip / levels;
}

// Per-layer ADC ranges, one per polarity pipeline.
struct AnalogLayerState {
    float clip_pos = -1.0f;
    float clip_neg = -1.0f;
    std::string calib_method = "percentile99.9";

    bool calibrated() const { return clip_pos > 0.0f && clip_neg > 0.0f; }
};

// Linear-interpolated percentile (rank = q/100 * (n-1)).
inline double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile: empty sample");
    std::sort(values.begin(), values.end());
    const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(rank));
    const size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

inline float clip_from_sums(const std::vector<double>& sums) {
    if (sums.empty()) return 1e-6f;
    return std::max(static_cast<float>(percentile(sums, 99.9)), 1e-6f);
}

namespace detail {

// Walks every analog partial-sum group of a conv: one group per
// (output element, input channel) covering that channel's kh x kw window.
template <typename Fn>
inline void for_each_conv_group(const Tensor& xq, const Tensor& wq, int64_t stride, int64_t pad, Fn&& fn) {
    const int64_t n = xq.shape[0], c = xq.shape[1], h = xq.shape[2], wid = xq.shape[3];
    const int64_t k = wq.shape[0], kh = wq.shape[2], kw = wq.shape[3];
    const int64_t oh = conv_out_dim(h, kh, stride, pad, "analog_conv2d");
    const int64_t ow = conv_out_dim(wid, kw, stride, pad, "analog_conv2d");
    for (int64_t img = 0; img < n; ++img)
        for (int64_t f = 0; f < k; ++f)
            for (int64_t i = 0; i < oh; ++i)
                for (int64_t j = 0; j < ow; ++j) {
                    const int64_t out_idx = ((img * k + f) * oh + i) * ow + j;
                    for (int64_t ch = 0; ch < c; ++ch) {
                        float sum_pos = 0.0f, sum_neg = 0.0f;
                        for (int64_t ki = 0; ki < kh; ++ki)
                            for (int64_t kj = 0; kj < kw; ++kj) {
                                const int64_t ih = i * stride - pad + ki;
                                const int64_t iw = j * stride - pad + kj;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= wid) continue;
                                const float a = xq.at4(img, ch, ih, iw);
                                const float wv = wq.at4(f, ch, ki, kj);
                                if (wv > 0.0f)
                                    sum_pos += a * wv;
                                else if (wv < 0.0f)
                                    sum_neg += a * (-wv);
                            }
                        fn(out_idx, sum_pos, sum_neg);
                    }
                }
}

template <typename Fn>
inline void for_each_linear_group(const Tensor& xq, const Tensor& wq, int64_t group_size, Fn&& fn) {
    const int64_t n = xq.shape[0], d = xq.shape[1], m = wq.shape[0];
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) {
            const int64_t out_idx = i * m + j;
            for (int64_t g = 0; g < d; g += group_size) {
                float sum_pos = 0.0f, sum_neg = 0.0f;
                const int64_t end = std::min(g + group_size, d);
                for (int64_t t = g; t < end; ++t) {
                    const float a = xq.at2(i, t);
                    const float wv = wq.at2(j, t);
                    if (wv > 0.0f)
                        sum_pos += a * wv;
                    else if (wv < 0.0f)
                        sum_neg += a * (-wv);
                }
                fn(out_idx, sum_pos, sum_neg);
            }
        }
}

}  // namespace detail

// Split-unipolar analog conv: inputs and weights fake-quantized to 8-bit,
// each channel-window partial sum clamped and quantized by the ADC, then
// accumulated exactly in the digital domain; output = pos - neg + bias.
inline Tensor analog_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, const AdcConfig& cfg,
                            float clip_pos, float clip_neg, int64_t stride, int64_t pad) {
    check_conv_args(x, w, bias, "analog_conv2d");
    check_adc_config(cfg, "analog_conv2d");
    if (x.min_value() < 0.0f) throw std::invalid_argument("analog_conv2d: negative input (unipolar activations required)");
    counters().analog_kernel_calls++;
    const Tensor xq = fake_quant8_eval(x);
    const Tensor wq = fake_quant8_eval(w);
    AdcConfig pos_cfg = cfg, neg_cfg = cfg;
    pos_cfg.clip = std::max(clip_pos, 1e-6f);
    neg_cfg.clip = std::max(clip_neg, 1e-6f);

    const int64_t oh = conv_out_dim(x.shape[2], w.shape[2], stride, pad, "analog_conv2d");
    const int64_t ow = conv_out_dim(x.shape[3], w.shape[3], stride, pad, "analog_conv2d");
    Tensor y = Tensor::zeros({x.shape[0], w.shape[0], oh, ow});
    detail::for_each_conv_group(xq, wq, stride, pad, [&](int64_t out_idx, float sp, float sn) {
        y[out_idx] += adc_quantize(sp, pos_cfg) - adc_quantize(sn, neg_cfg);
    });
    if (!bias.empty()) {
        const int64_t k = w.shape[0], hw = oh * ow;
        for (int64_t img = 0; img < x.shape[0]; ++img)
            for (int64_t f = 0; f < k; ++f)
                for (int64_t t = 0; t < hw; ++t) y[(img * k + f) * hw + t] += bias[f];
    }
    y.ensure_finite("analog_conv2d");
    return y;
}

inline Tensor analog_linear(const Tensor& x, const Tensor& w, const Tensor& bias, const AdcConfig& cfg,
                            float clip_pos, float clip_neg) {
    require_rank(x, 2, "analog_linear");
    require_rank(w, 2, "analog_linear");
    if (x.shape[1] != w.shape[1]) throw std::invalid_argument("analog_linear: inner dim mismatch");
    check_adc_config(cfg, "analog_linear");
    if (x.min_value() < 0.0f) throw std::invalid_argument("analog_linear: negative input");
    counters().analog_kernel_calls++;
    const Tensor xq = fake_quant8_eval(x);
    const Tensor wq = fake_quant8_eval(w);
    AdcConfig pos_cfg = cfg, neg_cfg = cfg;
    pos_cfg.clip = std::max(clip_pos, 1e-6f);
    neg_cfg.clip = std::max(clip_neg, 1e-6f);
    Tensor y = Tensor::zeros({x.shape[0], w.shape[0]});
    detail::for_each_linear_group(xq, wq, cfg.group_size, [&](int64_t out_idx, float sp, float sn) {
        y[out_idx] += adc_quantize(sp, pos_cfg) - adc_quantize(sn, neg_cfg);
    });
    if (!bias.empty())
        for (int64_t i = 0; i < y.shape[0]; ++i)
            for (int64_t j = 0; j < y.shape[1]; ++j) y.at2(i, j) += bias[j];
    y.ensure_finite("analog_linear");
    return y;
}

// clip = 99.9th percentile of the observed unquantized group sums over the
// batch, separately per polarity, with a 1e-6 floor.
inline AnalogLayerState calibrate_clip_conv(const Tensor& x, const Tensor& w, const AdcConfig& cfg, int64_t stride,
                                            int64_t pad) {
    check_conv_args(x, w, Tensor{}, "calibrate_clip");
    check_adc_config(cfg, "calibrate_clip");
    const Tensor xq = fake_quant8_eval(x);
    const Tensor wq = fake_quant8_eval(w);
    std::vector<double> pos, neg;
    detail::for_each_conv_group(xq, wq, stride, pad, [&](int64_t, float sp, float sn) {
        pos.push_back(sp);
        neg.push_back(sn);
    });
    AnalogLayerState st;
    st.clip_pos = clip_from_sums(pos);
    st.clip_neg = clip_from_sums(neg);
    return st;
}

inline AnalogLayerState calibrate_clip_linear(const Tensor& x, const Tensor& w, const AdcConfig& cfg) {
    const Tensor xq = fake_quant8_eval(x);
    const Tensor wq = fake_quant8_eval(w);
    std::vector<double> pos, neg;
    detail::for_each_linear_group(xq, wq, cfg.group_size, [&](int64_t, float sp, float sn) {
        pos.push_back(sp);
        neg.push_back(sn);
    });
    AnalogLayerState st;
    st.clip_pos = clip_from_sums(pos);
    st.clip_neg = clip_from_sums(neg);
    return st;
}

}  // namespace axnn
