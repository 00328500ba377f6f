#pragma once

#include <optional>

#include "axnn/analog.hpp"
#include "axnn/checkpoint_io.hpp"
#include "axnn/error_inject.hpp"
#include "axnn/mult.hpp"
#include "axnn/nn.hpp"
#include "axnn/optim.hpp"
#include "axnn/proxy_act.hpp"
#include "axnn/sc.hpp"

namespace axnn {

enum class KernelMode { Exact, Sc, ApproxMult, Analog };
enum class LayerKind { Conv2d, Relu, MaxPool2x2, Flatten, Linear };

inline std::string kernel_mode_name(KernelMode m) {
    switch (m) {
        case KernelMode::Exact: return "exact";
        case KernelMode::Sc: return "sc";
        case KernelMode::ApproxMult: return "approx-mult";
        case KernelMode::Analog: return "analog";
    }
    return "?";
}

inline KernelMode kernel_mode_from_name(const std::string& s) {
    if (s == "exact") return KernelMode::Exact;
    if (s == "sc") return KernelMode::Sc;
    if (s == "approx-mult") return KernelMode::ApproxMult;
    if (s == "analog") return KernelMode::Analog;
    throw std::invalid_argument("unknown kernel mode '" + s + "'");
}

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int64_t in_channels = 0, out_channels = 0;
    int64_t kernel = 3, stride = 1, pad = 1;
    int64_t in_features = 0, out_features = 0;
    KernelMode mode = KernelMode::Exact;

    bool has_params() const { return kind == LayerKind::Conv2d || kind == LayerKind::Linear; }
};

inline void validate_layer_spec(const LayerSpec& s) {
    if (s.kind == LayerKind::Conv2d) {
        if (s.kernel != 1 && s.kernel != 3 && s.kernel != 5)
            throw std::invalid_argument("LayerSpec: conv kernel size must be 1, 3 or 5");
        if (s.in_channels < 1 || s.out_channels < 1 || s.stride < 1)
            throw std::invalid_argument("LayerSpec: bad conv dimensions");
    }
    if (s.kind == LayerKind::Linear && (s.in_features < 1 || s.out_features < 1))
        throw std::invalid_argument("LayerSpec: bad linear dimensions");
}

// Shared approximate-hardware parameters.
struct ApproxConfig {
    int sc_stream_length = 32;
    MultTable mult_table;  // empty products -> default truncated table, drop_k 3
    int mult_drop_k = 3;
    int adc_bits = 4;
    int adc_group_size = 9;
    int error_bins = 32;
    int error_degree = 3;

    const MultTable& table() const {
        if (mult_table.products.empty()) {
            static thread_local MultTable cache;
            static thread_local int cached_k = -1;
            if (cached_k != mult_drop_k) {
                cache = make_truncated_table(mult_drop_k);
                cached_k = mult_drop_k;
            }
            return cache;
        }
        return mult_table;
    }
};

// Mutable per-layer calibration state.
struct LayerState {
    float input_scale = -1.0f;   // running max of activations (SC value scale)
    float weight_scale = -1.0f;  // maxabs of weights (SC value scale)
    AnalogLayerState analog;
    ErrorModelType1 em1;
    ErrorModelType2 em2;
};

struct Model {
    std::vector<LayerSpec> specs;
    std::vector<Tensor> weights;  // empty tensors for non-param layers
    std::vector<Tensor> biases;
    std::vector<LayerState> states;
    ApproxConfig approx;
    uint64_t noise_seed = 1;  // base seed for SC streams and injected noise
    int num_classes = 10;

    void init_params(uint64_t seed) {
        weights.assign(specs.size(), Tensor{});
        biases.assign(specs.size(), Tensor{});
        states.assign(specs.size(), LayerState{});
        for (size_t i = 0; i < specs.size(); ++i) {
            const LayerSpec& s = specs[i];
            validate_layer_spec(s);
            Rng rng(mix(seed, static_cast<uint64_t>(i), 0x1417ull));
            if (s.kind == LayerKind::Conv2d) {
                const int64_t fan_in = s.in_channels * s.kernel * s.kernel;
                weights[i] = kaiming_uniform({s.out_channels, s.in_channels, s.kernel, s.kernel}, fan_in, rng);
                biases[i] = Tensor::zeros({s.out_channels});
            } else if (s.kind == LayerKind::Linear) {
                weights[i] = kaiming_uniform({s.out_features, s.in_features}, s.in_features, rng);
                biases[i] = Tensor::zeros({s.out_features});
            }
        }
    }

    std::vector<Tensor*> param_tensors() {
        std::vector<Tensor*> out;
        for (size_t i = 0; i < specs.size(); ++i)
            if (specs[i].has_params()) {
                out.push_back(&weights[i]);
                out.push_back(&biases[i]);
            }
        return out;
    }
};

// conv(32)-relu-pool-conv(32)-relu-pool-conv(64)-relu-flatten-linear by
// default; channel widths are configuration, not architecture.
inline Model make_tinyconv(int64_t in_channels, int64_t height, int64_t width, int num_classes,
                           std::vector<int64_t> channels = {32, 32, 64}, KernelMode mode = KernelMode::Exact,
                           std::optional<KernelMode> linear_mode = std::nullopt) {
    if (channels.size() != 3) throw std::invalid_argument("make_tinyconv: need 3 channel widths");
    Model m;
    m.num_classes = num_classes;
    auto conv = [&](int64_t ic, int64_t oc) {
        LayerSpec s;
        s.kind = LayerKind::Conv2d;
        s.in_channels = ic;
        s.out_channels = oc;
        s.kernel = 3;
        s.stride = 1;
        s.pad = 1;
        s.mode = mode;
        return s;
    };
    m.specs.push_back(conv(in_channels, channels[0]));
    m.specs.push_back({.kind = LayerKind::Relu});
    m.specs.push_back({.kind = LayerKind::MaxPool2x2});
    m.specs.push_back(conv(channels[0], channels[1]));
    m.specs.push_back({.kind = LayerKind::Relu});
    m.specs.push_back({.kind = LayerKind::MaxPool2x2});
    m.specs.push_back(conv(channels[1], channels[2]));
    m.specs.push_back({.kind = LayerKind::Relu});
    m.specs.push_back({.kind = LayerKind::Flatten});
    LayerSpec fc;
    fc.kind = LayerKind::Linear;
    fc.in_features = channels[2] * (height / 4) * (width / 4);
    fc.out_features = num_classes;
    fc.mode = linear_mode.value_or(mode);
    m.specs.push_back(fc);
    return m;
}

// ---------------------------------------------------------------------------
// Accurate evaluation forward (value-only, no autograd, no proxies).
// ---------------------------------------------------------------------------

inline ScConfig layer_sc_config(const Model& m, int layer_id) {
    ScConfig cfg = make_sc_config(m.approx.sc_stream_length, m.noise_seed, layer_id);
    return cfg;
}

inline Tensor model_eval_forward(const Model& m, const Tensor& x) {
    Tensor a = x;
    for (size_t i = 0; i < m.specs.size(); ++i) {
        const LayerSpec& s = m.specs[i];
        const LayerState& st = m.states[i];
        switch (s.kind) {
            case LayerKind::Relu: a = relu_eval(a); break;
            case LayerKind::MaxPool2x2: a = maxpool2x2_eval(a); break;
            case LayerKind::Flatten: a = Tensor({a.shape[0], a.numel() / a.shape[0]}, a.data); break;
            case LayerKind::Conv2d: {
                const Tensor& w = m.weights[i];
                const Tensor& b = m.biases[i];
                switch (s.mode) {
                    case KernelMode::Exact: a = conv2d_exact(a, w, b, s.stride, s.pad); break;
                    case KernelMode::Sc: {
                        const float sx = std::max(st.input_scale, std::max(a.max_value(), 1e-12f));
                        a = sc_conv2d(a, w, b, layer_sc_config(m, static_cast<int>(i)), s.stride, s.pad, sx,
                                      std::max(w.max_abs(), 1e-12f));
                        break;
                    }
                    case KernelMode::ApproxMult: a = am_conv2d(a, w, b, m.approx.table(), s.stride, s.pad); break;
                    case KernelMode::Analog: {
                        AdcConfig cfg{m.approx.adc_bits, 1.0f, m.approx.adc_group_size};
                        AnalogLayerState clips = st.analog.calibrated()
                                                     ? st.analog
                                                     : calibrate_clip_conv(a, w, cfg, s.stride, s.pad);
                        a = analog_conv2d(a, w, b, cfg, clips.clip_pos, clips.clip_neg, s.stride, s.pad);
                        break;
                    }
                }
                break;
            }
            case LayerKind::Linear: {
                const Tensor& w = m.weights[i];
                const Tensor& b = m.biases[i];
                switch (s.mode) {
                    case KernelMode::Exact: a = linear_exact(a, w, b); break;
                    case KernelMode::Sc: {
                        const float sx = std::max(st.input_scale, std::max(a.max_value(), 1e-12f));
                        a = sc_linear(a, w, b, layer_sc_config(m, static_cast<int>(i)), sx,
                                      std::max(w.max_abs(), 1e-12f));
                        break;
                    }
                    case KernelMode::ApproxMult: a = am_linear(a, w, b, m.approx.table()); break;
                    case KernelMode::Analog: {
                        AdcConfig cfg{m.approx.adc_bits, 1.0f, m.approx.adc_group_size};
                        AnalogLayerState clips =
                            st.analog.calibrated() ? st.analog : calibrate_clip_linear(a, w, cfg);
                        a = analog_linear(a, w, b, cfg, clips.clip_pos, clips.clip_neg);
                        break;
                    }
                }
                break;
            }
        }
    }
    return a;
}

// ---------------------------------------------------------------------------
// Training forward graph.
// ---------------------------------------------------------------------------

enum class ForwardPhase {
    Injection,  // proxy forward + calibrated error injection
    Accurate,   // accurate kernel forward, proxy-path gradients
};

struct ForwardOpts {
    ForwardPhase phase = ForwardPhase::Injection;
    uint32_t batch_index = 0;  // global step index, keys the injected noise
    bool use_proxy_act = true;
    bool checkpoint_pointwise = true;
    bool inject = true;  // Injection phase only; off = plain proxy forward
    // Per-layer accurate pre-bias outputs computed during calibration,
    // reused as straight-through values to avoid a second accurate pass.
    const std::vector<Tensor>* precomputed_accurate = nullptr;
};

struct ForwardResult {
    NodePtr logits;
    std::vector<NodePtr> params;  // weight/bias node per compute layer, in order
};

namespace detail {

inline float sc_out_scale(const LayerState& st) { return st.input_scale * st.weight_scale; }

// Pre-bias accurate kernel output for one compute layer.
inline Tensor accurate_core(const Model& m, size_t i, const Tensor& x_val) {
    const LayerSpec& s = m.specs[i];
    const LayerState& st = m.states[i];
    const Tensor& w = m.weights[i];
    switch (s.mode) {
        case KernelMode::Exact:
            return s.kind == LayerKind::Conv2d ? conv2d_exact(x_val, w, Tensor{}, s.stride, s.pad)
                                               : linear_exact(x_val, w, Tensor{});
        case KernelMode::Sc: {
            if (st.input_scale <= 0.0f || st.weight_scale <= 0.0f)
                throw internal_error("accurate_core: SC layer has no calibrated value scales");
            return s.kind == LayerKind::Conv2d
                       ? sc_conv2d(x_val, w, Tensor{}, layer_sc_config(m, static_cast<int>(i)), s.stride, s.pad,
                                   st.input_scale, st.weight_scale)
                       : sc_linear(x_val, w, Tensor{}, layer_sc_config(m, static_cast<int>(i)), st.input_scale,
                                   st.weight_scale);
        }
        case KernelMode::ApproxMult:
            return s.kind == LayerKind::Conv2d ? am_conv2d(x_val, w, Tensor{}, m.approx.table(), s.stride, s.pad)
                                               : am_linear(x_val, w, Tensor{}, m.approx.table());
        case KernelMode::Analog: {
            if (!st.analog.calibrated()) throw internal_error("accurate_core: analog layer has no calibrated clips");
            AdcConfig cfg{m.approx.adc_bits, 1.0f, m.approx.adc_group_size};
            return s.kind == LayerKind::Conv2d ? analog_conv2d(x_val, w, Tensor{}, cfg, st.analog.clip_pos,
                                                               st.analog.clip_neg, s.stride, s.pad)
                                               : analog_linear(x_val, w, Tensor{}, cfg, st.analog.clip_pos,
                                                               st.analog.clip_neg);
        }
    }
    throw internal_error("accurate_core: unreachable");
}

}  // namespace detail

// Builds the training graph: proxy forward per layer, optionally wrapped in
// straight-through accurate values (Accurate phase) or followed by error
// injection (Injection phase). Bias is added after injection in exact float.
inline ForwardResult model_train_forward(Model& m, const Tensor& images, const ForwardOpts& opts) {
    ForwardResult res;
    NodePtr a = make_const(images);
    for (size_t i = 0; i < m.specs.size(); ++i) {
        const LayerSpec& s = m.specs[i];
        LayerState& st = m.states[i];
        switch (s.kind) {
            case LayerKind::Relu: a = relu(a); break;
            case LayerKind::MaxPool2x2: a = maxpool2x2(a); break;
            case LayerKind::Flatten: a = flatten(a); break;
            case LayerKind::Conv2d:
            case LayerKind::Linear: {
                const bool is_conv = s.kind == LayerKind::Conv2d;
                NodePtr wn = make_param(m.weights[i]);
                NodePtr bn = make_param(m.biases[i]);
                res.params.push_back(wn);
                res.params.push_back(bn);

                // SC forward rejects activations above the running input
                // scale; raise the floor before the kernels see the batch.
                if (s.mode == KernelMode::Sc) {
                    st.input_scale = std::max({st.input_scale, a->value.max_value(), 1e-12f});
                    if (st.weight_scale <= 0.0f) st.weight_scale = std::max(m.weights[i].max_abs(), 1e-12f);
                }

                NodePtr core;  // pre-bias proxy output
                switch (s.mode) {
                    case KernelMode::Exact:
                        core = is_conv ? conv2d(a, wn, nullptr, s.stride, s.pad) : linear(a, wn, nullptr);
                        break;
                    case KernelMode::Sc: {
                        if (opts.use_proxy_act) {
                            NodePtr wpos = relu(wn), wneg = relu(neg(wn));
                            NodePtr pos = is_conv ? conv2d(a, wpos, nullptr, s.stride, s.pad) : linear(a, wpos, nullptr);
                            NodePtr ng = is_conv ? conv2d(a, wneg, nullptr, s.stride, s.pad) : linear(a, wneg, nullptr);
                            const float sscale = detail::sc_out_scale(st);
                            NodePtr act = sc_act(scale(pos, 1.0f / sscale), scale(ng, 1.0f / sscale),
                                                 opts.checkpoint_pointwise);
                            core = scale(act, sscale);
                        } else {
                            core = is_conv ? conv2d(a, wn, nullptr, s.stride, s.pad) : linear(a, wn, nullptr);
                        }
                        break;
                    }
                    case KernelMode::ApproxMult: {
                        NodePtr xq = fake_quant8(a), wq = fake_quant8(wn);
                        core = is_conv ? conv2d(xq, wq, nullptr, s.stride, s.pad) : linear(xq, wq, nullptr);
                        break;
                    }
                    case KernelMode::Analog: {
                        NodePtr xq = fake_quant8(a), wq = fake_quant8(wn);
                        if (opts.use_proxy_act) {
                            if (!st.analog.calibrated())
                                throw internal_error("model_train_forward: analog layer not calibrated");
                            NodePtr wpos = relu(wq), wneg = relu(neg(wq));
                            NodePtr pos = is_conv ? conv2d(xq, wpos, nullptr, s.stride, s.pad) : linear(xq, wpos, nullptr);
                            NodePtr ng = is_conv ? conv2d(xq, wneg, nullptr, s.stride, s.pad) : linear(xq, wneg, nullptr);
                            // The whole split accumulation saturates at
                            // group_clip * group_count, not at one group.
                            const float groups = static_cast<float>(
                                is_conv ? s.in_channels : (s.in_features + m.approx.adc_group_size - 1) /
                                                              m.approx.adc_group_size);
                            core = analog_act(pos, ng, st.analog.clip_pos * groups, st.analog.clip_neg * groups,
                                              opts.checkpoint_pointwise);
                        } else {
                            core = is_conv ? conv2d(xq, wq, nullptr, s.stride, s.pad) : linear(xq, wq, nullptr);
                        }
                        break;
                    }
                }

                if (opts.phase == ForwardPhase::Accurate && s.mode != KernelMode::Exact) {
                    Tensor acc = (opts.precomputed_accurate && !(*opts.precomputed_accurate)[i].empty())
                                     ? (*opts.precomputed_accurate)[i]
                                     : detail::accurate_core(m, i, a->value);
                    core = straight_through(core, std::move(acc));
                } else if (opts.phase == ForwardPhase::Injection && opts.inject) {
                    if (s.mode == KernelMode::Sc || s.mode == KernelMode::ApproxMult) {
                        core = inject_type1(core, st.em1, m.noise_seed, static_cast<uint32_t>(i), opts.batch_index,
                                            opts.checkpoint_pointwise);
                    } else if (s.mode == KernelMode::Analog) {
                        core = inject_type2(core, st.em2, m.noise_seed, static_cast<uint32_t>(i), opts.batch_index,
                                            opts.checkpoint_pointwise);
                    }
                }
                a = is_conv ? add_channel_bias(core, bn) : add_row_bias(core, bn);
                break;
            }
        }
    }
    res.logits = a;
    return res;
}

// ---------------------------------------------------------------------------
// Calibration pass: refresh value scales / ADC clips / error models on one
// batch, using the accurate kernels. Returns per-layer accurate pre-bias
// outputs so the subsequent training step can reuse them.
// ---------------------------------------------------------------------------

struct CalibrationResult {
    std::vector<Tensor> accurate_core;  // indexed by layer, empty for non-approx layers
};

inline CalibrationResult calibrate_model(Model& m, const Tensor& images, long global_batch_index,
                                         bool use_proxy_act = true) {
    CalibrationResult out;
    out.accurate_core.assign(m.specs.size(), Tensor{});
    Tensor a = images;
    for (size_t i = 0; i < m.specs.size(); ++i) {
        const LayerSpec& s = m.specs[i];
        LayerState& st = m.states[i];
        switch (s.kind) {
            case LayerKind::Relu: a = relu_eval(a); break;
            case LayerKind::MaxPool2x2: a = maxpool2x2_eval(a); break;
            case LayerKind::Flatten: a = Tensor({a.shape[0], a.numel() / a.shape[0]}, a.data); break;
            case LayerKind::Conv2d:
            case LayerKind::Linear: {
                const bool is_conv = s.kind == LayerKind::Conv2d;
                const Tensor& w = m.weights[i];
                const Tensor& b = m.biases[i];
                if (s.mode == KernelMode::Exact) {
                    a = is_conv ? conv2d_exact(a, w, b, s.stride, s.pad) : linear_exact(a, w, b);
                    break;
                }
                if (s.mode == KernelMode::Sc) {
                    st.input_scale = std::max({st.input_scale, a.max_value(), 1e-12f});
                    st.weight_scale = std::max(w.max_abs(), 1e-12f);
                    Tensor y_acc = detail::accurate_core(m, i, a);
                    Tensor y_prox;
                    if (use_proxy_act) {
                        SplitOutput split = is_conv ? split_conv_forward(a, w, s.stride, s.pad)
                                                    : split_linear_forward(a, w);
                        const float sscale = detail::sc_out_scale(st);
                        Tensor pos = split.pos, ng = split.neg;
                        for (float& v : pos.data) v /= sscale;
                        for (float& v : ng.data) v /= sscale;
                        y_prox = sc_act_eval(pos, ng);
                        for (float& v : y_prox.data) v *= sscale;
                    } else {
                        y_prox = is_conv ? conv2d_exact(a, w, Tensor{}, s.stride, s.pad) : linear_exact(a, w, Tensor{});
                    }
                    st.em1 = calibrate_type1(y_acc, y_prox, m.approx.error_bins, m.approx.error_degree);
                    st.em1.last_calibration_batch = global_batch_index;
                    out.accurate_core[i] = y_acc;
                    a = y_acc;
                } else if (s.mode == KernelMode::ApproxMult) {
                    Tensor y_acc = detail::accurate_core(m, i, a);
                    Tensor y_prox = is_conv ? conv2d_exact(fake_quant8_eval(a), fake_quant8_eval(w), Tensor{},
                                                           s.stride, s.pad)
                                            : linear_exact(fake_quant8_eval(a), fake_quant8_eval(w), Tensor{});
                    st.em1 = calibrate_type1(y_acc, y_prox, m.approx.error_bins, m.approx.error_degree);
                    st.em1.last_calibration_batch = global_batch_index;
                    out.accurate_core[i] = y_acc;
                    a = y_acc;
                } else {  // Analog, Type 2
                    AdcConfig cfg{m.approx.adc_bits, 1.0f, m.approx.adc_group_size};
                    st.analog = is_conv ? calibrate_clip_conv(a, w, cfg, s.stride, s.pad)
                                        : calibrate_clip_linear(a, w, cfg);
                    Tensor y_acc = detail::accurate_core(m, i, a);
                    Tensor y_ref = is_conv ? conv2d_exact(fake_quant8_eval(a), fake_quant8_eval(w), Tensor{},
                                                          s.stride, s.pad)
                                           : linear_exact(fake_quant8_eval(a), fake_quant8_eval(w), Tensor{});
                    st.em2 = calibrate_type2(y_acc, y_ref);
                    st.em2.last_calibration_batch = global_batch_index;
                    out.accurate_core[i] = y_acc;
                    a = y_acc;
                }
                // bias in exact float, after the pre-bias comparison
                if (!b.empty()) {
                    if (is_conv) {
                        const int64_t k = b.shape[0], hw = a.shape[2] * a.shape[3];
                        for (int64_t img = 0; img < a.shape[0]; ++img)
                            for (int64_t f = 0; f < k; ++f)
                                for (int64_t t = 0; t < hw; ++t) a[(img * k + f) * hw + t] += b[f];
                    } else {
                        for (int64_t r = 0; r < a.shape[0]; ++r)
                            for (int64_t cix = 0; cix < a.shape[1]; ++cix) a.at2(r, cix) += b[cix];
                    }
                }
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint integration (tensor records plus "errmodel." entries).
// ---------------------------------------------------------------------------

inline std::map<std::string, Tensor> model_to_records(const Model& m) {
    std::map<std::string, Tensor> rec;
    auto key = [](size_t i, const char* what) { return "layer" + std::to_string(i) + "." + what; };
    for (size_t i = 0; i < m.specs.size(); ++i) {
        if (!m.specs[i].has_params()) continue;
        rec[key(i, "weight")] = m.weights[i];
        rec[key(i, "bias")] = m.biases[i];
        const LayerState& st = m.states[i];
        auto em_key = [&](const char* what) { return "errmodel." + std::to_string(i) + "." + what; };
        if (st.input_scale > 0.0f)
            rec[em_key("sc_scales")] = Tensor({2}, {st.input_scale, st.weight_scale});
        if (st.analog.calibrated())
            rec[em_key("adc_clips")] = Tensor({2}, {st.analog.clip_pos, st.analog.clip_neg});
        if (st.em1.valid()) {
            std::vector<float> mc(st.em1.mean_coeffs.begin(), st.em1.mean_coeffs.end());
            std::vector<float> sc(st.em1.std_coeffs.begin(), st.em1.std_coeffs.end());
            rec[em_key("type1_mean")] = Tensor({static_cast<int64_t>(mc.size())}, mc);
            rec[em_key("type1_std")] = Tensor({static_cast<int64_t>(sc.size())}, sc);
            rec[em_key("type1_domain")] =
                Tensor({2}, {static_cast<float>(st.em1.lo), static_cast<float>(st.em1.hi)});
        }
        if (st.em2.valid())
            rec[em_key("type2_stats")] =
                Tensor({2}, {static_cast<float>(st.em2.mean), static_cast<float>(st.em2.var)});
    }
    return rec;
}

inline void model_from_records(Model& m, const std::map<std::string, Tensor>& rec) {
    for (size_t i = 0; i < m.specs.size(); ++i) {
        if (!m.specs[i].has_params()) continue;
        const std::string wkey = "layer" + std::to_string(i) + ".weight";
        const std::string bkey = "layer" + std::to_string(i) + ".bias";
        auto wit = rec.find(wkey);
        auto bit = rec.find(bkey);
        if (wit == rec.end() || bit == rec.end())
            throw std::runtime_error("checkpoint missing tensor for layer " + std::to_string(i));
        require_shape(wit->second, m.weights[i].shape, "load checkpoint weight");
        require_shape(bit->second, m.biases[i].shape, "load checkpoint bias");
        m.weights[i] = wit->second;
        m.biases[i] = bit->second;
        auto em_key = [&](const char* what) { return "errmodel." + std::to_string(i) + "." + what; };
        LayerState& st = m.states[i];
        if (auto it = rec.find(em_key("sc_scales")); it != rec.end()) {
            st.input_scale = it->second[0];
            st.weight_scale = it->second[1];
        }
        if (auto it = rec.find(em_key("adc_clips")); it != rec.end()) {
            st.analog.clip_pos = it->second[0];
            st.analog.clip_neg = it->second[1];
        }
        if (auto it = rec.find(em_key("type1_mean")); it != rec.end()) {
            st.em1.mean_coeffs.assign(it->second.data.begin(), it->second.data.end());
            const Tensor& sc = rec.at(em_key("type1_std"));
            st.em1.std_coeffs.assign(sc.data.begin(), sc.data.end());
            const Tensor& dom = rec.at(em_key("type1_domain"));
            st.em1.lo = dom[0];
            st.em1.hi = dom[1];
            st.em1.last_calibration_batch = 0;
        }
        if (auto it = rec.find(em_key("type2_stats")); it != rec.end()) {
            st.em2.mean = it->second[0];
            st.em2.var = it->second[1];
            st.em2.last_calibration_batch = 0;
        }
    }
}

inline void save_model(const Model& m, const std::string& path) { save_checkpoint(path, model_to_records(m)); }

inline void load_model(Model& m, const std::string& path) { model_from_records(m, load_checkpoint(path)); }

}  // namespace axnn
