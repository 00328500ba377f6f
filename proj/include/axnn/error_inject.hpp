#pragma once

#include <cmath>
#include <numbers>

#include "axnn/autograd.hpp"
#include "axnn/tensor.hpp"

namespace axnn {

// ---------------------------------------------------------------------------
// Counter-based normal sampler: same key, same sample, regardless of
// evaluation order. This is what makes injected noise replayable by the
// checkpointing recompute.
// ---------------------------------------------------------------------------

struct NoiseKey {
    uint64_t base_seed = 0;
    uint32_t layer_id = 0;
    uint32_t batch_index = 0;
    uint64_t element_index = 0;
};

inline double gaussian_from_key(const NoiseKey& key) {
    const uint64_t h = mix(key.base_seed, key.layer_id, key.batch_index, key.element_index);
    const uint64_t h1 = splitmix64(h ^ 0xc0ffee0000000001ull);
    const uint64_t h2 = splitmix64(h ^ 0xc0ffee0000000002ull);
    // u1 in (0,1], u2 in [0,1)
    const double u1 = (static_cast<double>(h1 >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// ---------------------------------------------------------------------------
// Least-squares polynomial fit (normal equations, ridge 1e-8).
// ---------------------------------------------------------------------------

inline double polyval(const std::vector<double>& coeffs, double x) {
    double acc = 0.0;
    for (size_t i = coeffs.size(); i-- > 0;) acc = acc * x + coeffs[i];
    return acc;
}

// coeffs[i] multiplies x^i.
inline std::vector<double> polyfit(const std::vector<double>& xs, const std::vector<double>& ys, int degree) {
    if (degree < 0) throw std::invalid_argument("polyfit: negative degree");
    if (xs.size() != ys.size()) throw std::invalid_argument("polyfit: xs/ys size mismatch");
    if (static_cast<int>(xs.size()) <= degree)
        throw std::invalid_argument("polyfit: need more than degree points, got " + std::to_string(xs.size()));
    if (degree >= 1) {
        bool all_equal = true;
        for (double x : xs)
            if (x != xs[0]) {
                all_equal = false;
                break;
            }
        if (all_equal) throw std::invalid_argument("polyfit: degenerate xs (all equal)");
    }

    const int m = degree + 1;
    std::vector<double> a(static_cast<size_t>(m * m), 0.0), b(static_cast<size_t>(m), 0.0);
    std::vector<double> powers(static_cast<size_t>(2 * degree + 1), 0.0);
    for (size_t s = 0; s < xs.size(); ++s) {
        double p = 1.0;
        for (int e = 0; e <= 2 * degree; ++e) {
            powers[static_cast<size_t>(e)] += p;
            if (e <= degree) b[static_cast<size_t>(e)] += p * ys[s];
            p *= xs[s];
        }
    }
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) a[static_cast<size_t>(i * m + j)] = powers[static_cast<size_t>(i + j)];
    for (int i = 0; i < m; ++i) a[static_cast<size_t>(i * m + i)] += 1e-8;

    // Gaussian elimination with partial pivoting on the (m x m) system.
    std::vector<double> coeffs(static_cast<size_t>(m), 0.0);
    for (int col = 0; col < m; ++col) {
        int pivot = col;
        for (int r = col + 1; r < m; ++r)
            if (std::fabs(a[static_cast<size_t>(r * m + col)]) > std::fabs(a[static_cast<size_t>(pivot * m + col)]))
                pivot = r;
        if (std::fabs(a[static_cast<size_t>(pivot * m + col)]) < 1e-300)
            throw std::invalid_argument("polyfit: singular normal equations");
        if (pivot != col) {
            for (int c = 0; c < m; ++c) std::swap(a[static_cast<size_t>(col * m + c)], a[static_cast<size_t>(pivot * m + c)]);
            std::swap(b[static_cast<size_t>(col)], b[static_cast<size_t>(pivot)]);
        }
        for (int r = col + 1; r < m; ++r) {
            const double f = a[static_cast<size_t>(r * m + col)] / a[static_cast<size_t>(col * m + col)];
            for (int c = col; c < m; ++c) a[static_cast<size_t>(r * m + c)] -= f * a[static_cast<size_t>(col * m + c)];
            b[static_cast<size_t>(r)] -= f * b[static_cast<size_t>(col)];
        }
    }
    for (int r = m - 1; r >= 0; --r) {
        double acc = b[static_cast<size_t>(r)];
        for (int c = r + 1; c < m; ++c) acc -= a[static_cast<size_t>(r * m + c)] * coeffs[static_cast<size_t>(c)];
        coeffs[static_cast<size_t>(r)] = acc / a[static_cast<size_t>(r * m + r)];
    }
    return coeffs;
}

// ---------------------------------------------------------------------------
// Error models.
// ---------------------------------------------------------------------------

// Type 1 (SC / approximate multiplication): error mean and std as
// polynomials of the proxy output value, fit over binned statistics.
struct ErrorModelType1 {
    std::vector<double> mean_coeffs;
    std::vector<double> std_coeffs;
    double lo = 0.0, hi = 0.0;  // fit domain; inputs are clamped into it
    long last_calibration_batch = -1;

    bool valid() const { return !mean_coeffs.empty(); }
};

// Type 2 (analog): one scalar mean/variance per layer.
struct ErrorModelType2 {
    double mean = 0.0;
    double var = 0.0;
    long last_calibration_batch = -1;

    bool valid() const { return last_calibration_batch >= 0; }
};

// Per-bin error statistics of e = y_accurate - y_proxy, binned by the proxy
// output value over its observed range. Shared by calibration and the
// calibrate-dump CSV emitter.
struct BinnedError {
    double lo = 0.0, hi = 0.0;
    std::vector<double> centers;
    std::vector<double> means;
    std::vector<double> stds;  // population
    std::vector<long> counts;  // nonempty bins only
};

inline BinnedError bin_errors(const Tensor& y_accurate, const Tensor& y_proxy, int bins) {
    if (!same_shape(y_accurate, y_proxy)) throw std::invalid_argument("bin_errors: shape mismatch");
    if (bins < 1) throw std::invalid_argument("bin_errors: bins must be >= 1");
    BinnedError out;
    const int64_t n = y_proxy.numel();
    double lo = y_proxy[0], hi = y_proxy[0];
    for (int64_t i = 0; i < n; ++i) {
        lo = std::min(lo, static_cast<double>(y_proxy[i]));
        hi = std::max(hi, static_cast<double>(y_proxy[i]));
    }
    out.lo = lo;
    out.hi = hi;
    if (hi - lo < 1e-12) bins = 1;
    std::vector<double> count(static_cast<size_t>(bins), 0.0);
    std::vector<double> sum(static_cast<size_t>(bins), 0.0);
    std::vector<double> sum2(static_cast<size_t>(bins), 0.0);
    const double inv_width = hi - lo >= 1e-12 ? static_cast<double>(bins) / (hi - lo) : 0.0;
    for (int64_t i = 0; i < n; ++i) {
        int b = static_cast<int>((y_proxy[i] - lo) * inv_width);
        b = std::min(std::max(b, 0), bins - 1);
        const double e = static_cast<double>(y_accurate[i]) - y_proxy[i];
        count[static_cast<size_t>(b)] += 1.0;
        sum[static_cast<size_t>(b)] += e;
        sum2[static_cast<size_t>(b)] += e * e;
    }
    for (int b = 0; b < bins; ++b) {
        if (count[static_cast<size_t>(b)] < 1.0) continue;
        const double c = count[static_cast<size_t>(b)];
        const double mean = sum[static_cast<size_t>(b)] / c;
        const double var = std::max(sum2[static_cast<size_t>(b)] / c - mean * mean, 0.0);
        out.centers.push_back(lo + (b + 0.5) * (hi - lo) / bins);
        out.means.push_back(mean);
        out.stds.push_back(std::sqrt(var));
        out.counts.push_back(static_cast<long>(c));
    }
    return out;
}

// Fit per-bin mean and per-bin std with polyfit. Falls back to a degree-0
// fit when fewer than 2 bins are nonempty.
inline ErrorModelType1 calibrate_type1(const Tensor& y_accurate, const Tensor& y_proxy, int bins = 32,
                                       int degree = 3) {
    if (degree < 0) throw std::invalid_argument("calibrate_type1: negative degree");
    counters().type1_calibrations++;
    const BinnedError binned = bin_errors(y_accurate, y_proxy, bins);
    ErrorModelType1 model;
    model.lo = binned.lo;
    model.hi = binned.hi;
    if (binned.centers.size() < 2) {
        double sum = 0.0, sum2 = 0.0;
        const int64_t n = y_proxy.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double e = static_cast<double>(y_accurate[i]) - y_proxy[i];
            sum += e;
            sum2 += e * e;
        }
        const double mean = sum / static_cast<double>(n);
        const double var = std::max(sum2 / static_cast<double>(n) - mean * mean, 0.0);
        model.mean_coeffs = {mean};
        model.std_coeffs = {std::sqrt(var)};
        return model;
    }
    const int d = std::min<int>(degree, static_cast<int>(binned.centers.size()) - 1);
    model.mean_coeffs = polyfit(binned.centers, binned.means, d);
    model.std_coeffs = polyfit(binned.centers, binned.stds, d);
    return model;
}

// e = y_accurate - y_reference; population mean and variance.
inline ErrorModelType2 calibrate_type2(const Tensor& y_accurate, const Tensor& y_reference) {
    if (!same_shape(y_accurate, y_reference)) throw std::invalid_argument("calibrate_type2: shape mismatch");
    counters().type2_calibrations++;
    ErrorModelType2 model;
    double sum = 0.0, sum2 = 0.0;
    const int64_t n = y_accurate.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double e = static_cast<double>(y_accurate[i]) - y_reference[i];
        sum += e;
        sum2 += e * e;
    }
    model.mean = sum / static_cast<double>(n);
    model.var = std::max(sum2 / static_cast<double>(n) - model.mean * model.mean, 0.0);
    model.last_calibration_batch = 0;
    return model;
}

// y + mean_poly(y) + max(std_poly(y), 0) * z, arguments clamped into the fit
// domain, z drawn per element from the keyed generator.
inline Tensor inject_type1_eval(const Tensor& y_proxy, const ErrorModelType1& model, uint64_t base_seed,
                                uint32_t layer_id, uint32_t batch_index) {
    if (!model.valid()) throw std::runtime_error("inject_type1: error model has never been calibrated");
    counters().inject_calls++;
    Tensor out = y_proxy;
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double yc = std::min(std::max(static_cast<double>(y_proxy[i]), model.lo), model.hi);
        const double mean = polyval(model.mean_coeffs, yc);
        const double sd = std::max(polyval(model.std_coeffs, yc), 0.0);
        const double z = gaussian_from_key({base_seed, layer_id, batch_index, static_cast<uint64_t>(i)});
        out[i] = static_cast<float>(y_proxy[i] + mean + sd * z);
    }
    out.ensure_finite("inject_type1");
    return out;
}

inline Tensor inject_type2_eval(const Tensor& y, const ErrorModelType2& model, uint64_t base_seed, uint32_t layer_id,
                                uint32_t batch_index) {
    if (!model.valid()) throw std::runtime_error("inject_type2: error model has never been calibrated");
    counters().inject_calls++;
    const double sd = std::sqrt(model.var);
    Tensor out = y;
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double z = gaussian_from_key({base_seed, layer_id, batch_index, static_cast<uint64_t>(i)});
        out[i] = static_cast<float>(y[i] + model.mean + sd * z);
    }
    out.ensure_finite("inject_type2");
    return out;
}

// Injection as a pointwise graph op. The correction terms are treated as
// constants in the backward pass (straight-through identity); the keyed
// generator makes the forward replayable under checkpointing.
inline PointwiseFn inject_type1_fn(ErrorModelType1 model, uint64_t base_seed, uint32_t layer_id,
                                   uint32_t batch_index) {
    PointwiseFn fn;
    fn.name = "inject_type1";
    fn.forward = [model, base_seed, layer_id, batch_index](const std::vector<Tensor>& in) {
        return inject_type1_eval(in[0], model, base_seed, layer_id, batch_index);
    };
    fn.backward = [](const std::vector<Tensor>&, const Tensor& g) { return std::vector<Tensor>{g}; };
    return fn;
}

inline PointwiseFn inject_type2_fn(ErrorModelType2 model, uint64_t base_seed, uint32_t layer_id,
                                   uint32_t batch_index) {
    PointwiseFn fn;
    fn.name = "inject_type2";
    fn.forward = [model, base_seed, layer_id, batch_index](const std::vector<Tensor>& in) {
        return inject_type2_eval(in[0], model, base_seed, layer_id, batch_index);
    };
    fn.backward = [](const std::vector<Tensor>&, const Tensor& g) { return std::vector<Tensor>{g}; };
    return fn;
}

inline NodePtr inject_type1(NodePtr y, const ErrorModelType1& model, uint64_t base_seed, uint32_t layer_id,
                            uint32_t batch_index, bool checkpoint = false) {
    return apply_pointwise(inject_type1_fn(model, base_seed, layer_id, batch_index), {std::move(y)}, checkpoint);
}

inline NodePtr inject_type2(NodePtr y, const ErrorModelType2& model, uint64_t base_seed, uint32_t layer_id,
                            uint32_t batch_index, bool checkpoint = false) {
    return apply_pointwise(inject_type2_fn(model, base_seed, layer_id, batch_index), {std::move(y)}, checkpoint);
}

}  // namespace axnn
