#pragma once

#include <cmath>

#include "axnn/autograd.hpp"
#include "axnn/nn.hpp"

namespace axnn {

// Backward-pass proxy activations applied to split positive/negative layer
// outputs. Training-time only; evaluation never touches these.

struct SplitOutput {
    Tensor pos;  // output of positive weights, >= 0 for non-negative inputs
    Tensor neg;  // output of negative weights (magnitudes), >= 0
};

inline void check_split(const Tensor& pos, const Tensor& neg, const char* who) {
    if (!same_shape(pos, neg))
        throw std::invalid_argument(std::string(who) + ": pos/neg shape mismatch");
    for (float v : pos.data)
        if (v < 0.0f) throw std::invalid_argument(std::string(who) + ": negative pos component");
    for (float v : neg.data)
        if (v < 0.0f) throw std::invalid_argument(std::string(who) + ": negative neg component");
}

// Exact split conv: pos = conv(x, max(w,0)), neg = conv(x, max(-w,0)).
// pos - neg equals the exact conv output; bias is carried separately.
inline SplitOutput split_conv_forward(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad) {
    if (x.min_value() < 0.0f) throw std::invalid_argument("split_forward: negative input");
    Tensor wpos = w, wneg = w;
    for (int64_t i = 0; i < w.numel(); ++i) {
        wpos[i] = std::max(w[i], 0.0f);
        wneg[i] = std::max(-w[i], 0.0f);
    }
    return {conv2d_exact(x, wpos, Tensor{}, stride, pad), conv2d_exact(x, wneg, Tensor{}, stride, pad)};
}

inline SplitOutput split_linear_forward(const Tensor& x, const Tensor& w) {
    if (x.min_value() < 0.0f) throw std::invalid_argument("split_forward: negative input");
    Tensor wpos = w, wneg = w;
    for (int64_t i = 0; i < w.numel(); ++i) {
        wpos[i] = std::max(w[i], 0.0f);
        wneg[i] = std::max(-w[i], 0.0f);
    }
    return {linear_exact(x, wpos, Tensor{}), linear_exact(x, wneg, Tensor{})};
}

// SC_act(x) = (1 - e^-pos) - (1 - e^-neg)
inline Tensor sc_act_eval(const Tensor& pos, const Tensor& neg) {
    check_split(pos, neg, "sc_act");
    counters().proxy_act_calls++;
    Tensor out = Tensor::zeros(pos.shape);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::exp(-neg[i]) - std::exp(-pos[i]);
    return out;
}

// Analog_act(x) = min(pos, clip_pos) - min(neg, clip_neg); the boundary
// x == clip carries zero gradient.
inline Tensor analog_act_eval(const Tensor& pos, const Tensor& neg, float clip_pos, float clip_neg) {
    check_split(pos, neg, "analog_act");
    if (!(clip_pos > 0.0f) || !(clip_neg > 0.0f)) throw std::invalid_argument("analog_act: clip must be positive");
    counters().proxy_act_calls++;
    Tensor out = Tensor::zeros(pos.shape);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::min(pos[i], clip_pos) - std::min(neg[i], clip_neg);
    return out;
}

// Pointwise-op descriptions so the trainer can route these through
// checkpointed_apply.
inline PointwiseFn sc_act_fn() {
    PointwiseFn fn;
    fn.name = "sc_act";
    fn.forward = [](const std::vector<Tensor>& in) { return sc_act_eval(in[0], in[1]); };
    fn.backward = [](const std::vector<Tensor>& in, const Tensor& g) {
        const Tensor& pos = in[0];
        const Tensor& neg = in[1];
        Tensor dp = Tensor::zeros(pos.shape), dn = Tensor::zeros(neg.shape);
        for (int64_t i = 0; i < g.numel(); ++i) {
            dp[i] = g[i] * std::exp(-pos[i]);
            dn[i] = -g[i] * std::exp(-neg[i]);
        }
        return std::vector<Tensor>{dp, dn};
    };
    return fn;
}

inline PointwiseFn analog_act_fn(float clip_pos, float clip_neg) {
    PointwiseFn fn;
    fn.name = "analog_act";
    fn.forward = [clip_pos, clip_neg](const std::vector<Tensor>& in) {
        return analog_act_eval(in[0], in[1], clip_pos, clip_neg);
    };
    fn.backward = [clip_pos, clip_neg](const std::vector<Tensor>& in, const Tensor& g) {
        const Tensor& pos = in[0];
        const Tensor& neg = in[1];
        Tensor dp = Tensor::zeros(pos.shape), dn = Tensor::zeros(neg.shape);
        for (int64_t i = 0; i < g.numel(); ++i) {
            dp[i] = pos[i] < clip_pos ? g[i] : 0.0f;
            dn[i] = neg[i] < clip_neg ? -g[i] : 0.0f;
        }
        return std::vector<Tensor>{dp, dn};
    };
    return fn;
}

inline NodePtr sc_act(NodePtr pos, NodePtr neg, bool checkpoint = false) {
    return apply_pointwise(sc_act_fn(), {std::move(pos), std::move(neg)}, checkpoint);
}

inline NodePtr analog_act(NodePtr pos, NodePtr neg, float clip_pos, float clip_neg, bool checkpoint = false) {
    return apply_pointwise(analog_act_fn(clip_pos, clip_neg), {std::move(pos), std::move(neg)}, checkpoint);
}

}  // namespace axnn
