#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "axnn/data.hpp"
#include "axnn/model.hpp"
#include "axnn/optim.hpp"

namespace axnn {

struct TrainPlan {
    std::string method = "exact";  // sc | approx-mult | analog | exact
    double injection_epochs = 0.0;
    double finetune_epochs = 0.0;  // fractional allowed
    int batch_size = 16;
    float lr = 0.05f;
    float momentum = 0.9f;
    float weight_decay = 0.0f;
    float finetune_lr_factor = 0.1f;  // constant LR in injection, LR/10 in fine-tuning
    uint64_t seed = 1;
    int eval_every = 1;
    std::string pretrained;  // checkpoint path, optional
    bool use_checkpointing = true;
    bool use_proxy_act = true;
    int type1_per_epoch = 5;
    int type2_every = 10;
};

inline void validate_plan(const TrainPlan& plan) {
    if (plan.injection_epochs < 0.0 || plan.finetune_epochs < 0.0)
        throw std::invalid_argument("TrainPlan: negative epoch counts");
    if (plan.injection_epochs + plan.finetune_epochs <= 0.0)
        throw std::invalid_argument("TrainPlan: injection_epochs + finetune_epochs must be > 0");
    if (plan.injection_epochs != std::floor(plan.injection_epochs))
        throw std::invalid_argument("TrainPlan: fractional epochs are only allowed for fine-tuning");
    if (plan.batch_size < 1) throw std::invalid_argument("TrainPlan: batch_size must be >= 1");
    if (!(plan.lr > 0.0f)) throw std::invalid_argument("TrainPlan: lr must be > 0");
    if (plan.type1_per_epoch < 1 || plan.type2_every < 1)
        throw std::invalid_argument("TrainPlan: calibration cadences must be >= 1");
    kernel_mode_from_name(plan.method);
}

struct EpochRow {
    int epoch = 0;
    std::string phase;  // "injection" or "finetune"
    double train_loss = 0.0;
    double eval_accuracy = -1.0;  // -1 when evaluation was skipped this epoch
    double sec_per_iter = 0.0;
    long calibrations = 0;
    int64_t stored_activation_bytes = 0;
};

struct RunReport {
    std::vector<EpochRow> rows;
    double final_accuracy = 0.0;
    long total_steps = 0;
    int64_t peak_stored_activation_bytes = 0;
    bool diverged = false;
    std::string divergence_note;
};

inline const char* kReportCsvHeader =
    "epoch,phase,train_loss,eval_accuracy,sec_per_iter,calibrations,stored_activation_bytes";

inline void write_report_csv(const RunReport& r, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_report_csv: cannot open " + path);
    os << kReportCsvHeader << "\n";
    for (const auto& row : r.rows)
        os << row.epoch << "," << row.phase << "," << row.train_loss << "," << row.eval_accuracy << ","
           << row.sec_per_iter << "," << row.calibrations << "," << row.stored_activation_bytes << "\n";
    os << "# final_accuracy=" << r.final_accuracy << " total_steps=" << r.total_steps
       << " peak_stored_activation_bytes=" << r.peak_stored_activation_bytes << " diverged=" << r.diverged << "\n";
}

// Top-1 accuracy with accurate forward kernels; no proxies, no injection.
inline double evaluate(const Model& model, const Dataset& ds, int batch_size = 64) {
    if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
    long correct = 0;
    for (int64_t start = 0; start < ds.size(); start += batch_size) {
        const int64_t end = std::min<int64_t>(start + batch_size, ds.size());
        std::vector<int64_t> idx(static_cast<size_t>(end - start));
        std::iota(idx.begin(), idx.end(), start);
        const Tensor logits = model_eval_forward(model, ds.batch_images(idx));
        for (int64_t i = 0; i < logits.shape[0]; ++i) {
            int64_t best = 0;
            for (int64_t j = 1; j < logits.shape[1]; ++j)
                if (logits.at2(i, j) > logits.at2(i, best)) best = j;
            if (static_cast<int>(best) == ds.labels[static_cast<size_t>(start + i)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

namespace detail {

inline std::vector<int64_t> epoch_permutation(int64_t n, uint64_t seed, long epoch) {
    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix(seed, static_cast<uint64_t>(epoch), 0x0BA7Cull));
    for (int64_t i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.next_below(static_cast<uint64_t>(i + 1)))]);
    return perm;
}

// Batch indices within an epoch at which Type-1 calibration runs:
// floor(i*B/k) for i = 0..k-1.
inline std::vector<long> type1_calibration_indices(long batches, int per_epoch) {
    std::vector<long> out;
    for (int i = 0; i < per_epoch; ++i) {
        const long idx = static_cast<long>(static_cast<long long>(i) * batches / per_epoch);
        if (out.empty() || out.back() != idx) out.push_back(idx);
    }
    return out;
}

struct StepStats {
    double loss = 0.0;
    bool calibrated = false;
    int64_t stored_bytes = 0;
};

// One optimizer step on one batch. `accurate_forward` selects the phase.
inline StepStats train_step(Model& model, Sgd& opt, const Tensor& images, const std::vector<int>& labels,
                            const TrainPlan& plan, long global_step, bool accurate_forward, bool calibrate,
                            bool inject = true) {
    StepStats stats;
    const KernelMode mode = kernel_mode_from_name(plan.method);

    CalibrationResult calib;
    if (calibrate && mode != KernelMode::Exact) {
        calib = calibrate_model(model, images, global_step, plan.use_proxy_act);
        stats.calibrated = true;
    }

    ForwardOpts opts;
    opts.phase = (accurate_forward || stats.calibrated) ? ForwardPhase::Accurate : ForwardPhase::Injection;
    opts.batch_index = static_cast<uint32_t>(global_step);
    opts.use_proxy_act = plan.use_proxy_act;
    opts.checkpoint_pointwise = plan.use_checkpointing;
    opts.inject = inject;
    if (stats.calibrated) opts.precomputed_accurate = &calib.accurate_core;

    ForwardResult fw = model_train_forward(model, images, opts);
    NodePtr loss = softmax_cross_entropy(fw.logits, labels);
    stats.loss = loss->value[0];
    if (!std::isfinite(stats.loss)) return stats;  // divergence handled by caller

    release_checkpoints(loss);
    stats.stored_bytes = stored_activation_bytes(loss);
    backward(loss);

    std::vector<Tensor*> params;
    std::vector<const Tensor*> grads;
    size_t pi = 0;
    for (size_t i = 0; i < model.specs.size(); ++i) {
        if (!model.specs[i].has_params()) continue;
        params.push_back(&model.weights[i]);
        grads.push_back(&fw.params[pi]->grad);
        params.push_back(&model.biases[i]);
        grads.push_back(&fw.params[pi + 1]->grad);
        pi += 2;
    }
    for (const Tensor* g : grads)
        if (g->empty()) throw internal_error("train_step: parameter received no gradient");
    opt.step(params, grads);
    return stats;
}

}  // namespace detail

// Full training pipeline: injection phase (proxy forward + calibrated error
// injection, accurate kernels on calibration batches) followed by an
// accurate-model fine-tuning phase at reduced LR. Evaluation always runs the
// accurate kernels.
inline RunReport train(const TrainPlan& plan, Model& model, const Dataset& train_ds, const Dataset& eval_ds) {
    validate_plan(plan);
    if (train_ds.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (!plan.pretrained.empty()) load_model(model, plan.pretrained);

    const KernelMode mode = kernel_mode_from_name(plan.method);
    const long batches = (train_ds.size() + plan.batch_size - 1) / plan.batch_size;
    const long inj_epochs = static_cast<long>(plan.injection_epochs);
    const long ft_steps = static_cast<long>(std::ceil(plan.finetune_epochs * static_cast<double>(batches)));

    RunReport report;
    Sgd opt{plan.lr, plan.momentum, plan.weight_decay};
    long global_step = 0;

    auto run_epoch = [&](long epoch, bool finetune, long max_steps) -> bool {
        opt.lr = finetune ? plan.lr * plan.finetune_lr_factor : plan.lr;
        const auto perm = detail::epoch_permutation(train_ds.size(), plan.seed, epoch);
        const auto calib_idx = detail::type1_calibration_indices(batches, plan.type1_per_epoch);
        EpochRow row;
        row.epoch = static_cast<int>(epoch);
        row.phase = finetune ? "finetune" : "injection";
        double loss_sum = 0.0;
        long steps = 0;
        const auto t0 = std::chrono::steady_clock::now();
        for (long b = 0; b < batches && steps < max_steps; ++b) {
            const int64_t start = b * plan.batch_size;
            const int64_t end = std::min<int64_t>(start + plan.batch_size, train_ds.size());
            std::vector<int64_t> idx(perm.begin() + start, perm.begin() + end);
            const Tensor images = train_ds.batch_images(idx);
            const std::vector<int> labels = train_ds.batch_labels(idx);

            bool calibrate = false;
            if (!finetune && mode != KernelMode::Exact) {
                if (mode == KernelMode::Analog)
                    calibrate = (b % plan.type2_every) == 0;
                else
                    calibrate = std::find(calib_idx.begin(), calib_idx.end(), b) != calib_idx.end();
            }
            auto stats = detail::train_step(model, opt, images, labels, plan, global_step, finetune, calibrate);
            if (!std::isfinite(stats.loss)) {
                report.diverged = true;
                report.divergence_note = "non-finite loss at step " + std::to_string(global_step);
                row.train_loss = stats.loss;
                report.rows.push_back(row);
                return false;
            }
            loss_sum += stats.loss;
            if (stats.calibrated) ++row.calibrations;
            report.peak_stored_activation_bytes =
                std::max(report.peak_stored_activation_bytes, stats.stored_bytes);
            row.stored_activation_bytes = std::max(row.stored_activation_bytes, stats.stored_bytes);
            ++global_step;
            ++steps;
        }
        const auto t1 = std::chrono::steady_clock::now();
        row.train_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
        row.sec_per_iter = steps > 0 ? std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(steps)
                                     : 0.0;
        if (eval_ds.size() > 0 && (epoch % std::max(plan.eval_every, 1)) == 0)
            row.eval_accuracy = evaluate(model, eval_ds);
        report.rows.push_back(row);
        report.total_steps += steps;
        return true;
    };

    for (long e = 0; e < inj_epochs; ++e)
        if (!run_epoch(e, /*finetune=*/false, batches)) return report;

    long remaining = ft_steps;
    long epoch = inj_epochs;
    while (remaining > 0) {
        const long steps = std::min(remaining, batches);
        if (!run_epoch(epoch, /*finetune=*/true, steps)) return report;
        remaining -= steps;
        ++epoch;
    }

    if (report.total_steps != inj_epochs * batches + ft_steps)
        throw internal_error("train: phase accounting mismatch");
    report.final_accuracy = eval_ds.size() > 0 ? evaluate(model, eval_ds) : 0.0;
    return report;
}

// Accurate-model training on the first ceil(fraction*B) batches of one epoch.
inline RunReport finetune_fraction(const TrainPlan& plan, Model& model, const Dataset& train_ds,
                                   const Dataset& eval_ds, double fraction) {
    if (fraction <= 0.0 || fraction > 1.0) throw std::invalid_argument("finetune_fraction: fraction in (0,1]");
    TrainPlan p = plan;
    p.injection_epochs = 0.0;
    p.finetune_epochs = fraction;
    return train(p, model, train_ds, eval_ds);
}

// ---------------------------------------------------------------------------
// Iteration-time benchmark: normal training ("without model"), accurate
// modeling ("with model"), and error injection at its calibration cadence,
// each on a copy of the same model and the same fixed batch.
// ---------------------------------------------------------------------------

struct BenchResult {
    double sec_without_model = 0.0;
    double sec_with_model = 0.0;
    double sec_injection = 0.0;

    double injection_speedup() const { return sec_with_model / std::max(sec_injection, 1e-12); }
};

inline BenchResult bench_iterations(const TrainPlan& plan, const Model& model_in, const Dataset& ds, int iters) {
    if (iters < 1) throw std::invalid_argument("bench_iterations: iters must be >= 1");
    const KernelMode mode = kernel_mode_from_name(plan.method);
    std::vector<int64_t> idx(static_cast<size_t>(std::min<int64_t>(plan.batch_size, ds.size())));
    std::iota(idx.begin(), idx.end(), 0);
    const Tensor images = ds.batch_images(idx);
    const std::vector<int> labels = ds.batch_labels(idx);

    enum Arm { WithoutModel = 0, WithModel = 1, ErrorInjection = 2 };
    auto run_arm = [&](Arm arm) {
        Model m = model_in;
        Sgd opt{plan.lr, plan.momentum, plan.weight_decay};
        if (mode != KernelMode::Exact)
            calibrate_model(m, images, /*global_batch_index=*/0, plan.use_proxy_act);  // prime scales/clips/models
        const auto calib_idx = detail::type1_calibration_indices(iters, plan.type1_per_epoch);
        detail::train_step(m, opt, images, labels, plan, 0, arm == WithModel, false, arm == ErrorInjection);
        double total = 0.0;
        for (int i = 0; i < iters; ++i) {
            bool calibrate = false;
            if (arm == ErrorInjection && mode != KernelMode::Exact) {
                calibrate = mode == KernelMode::Analog
                                ? (i % plan.type2_every) == 0
                                : std::find(calib_idx.begin(), calib_idx.end(), static_cast<long>(i)) != calib_idx.end();
            }
            const auto t0 = std::chrono::steady_clock::now();
            detail::train_step(m, opt, images, labels, plan, i + 1, arm == WithModel, calibrate,
                               arm == ErrorInjection);
            total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        return total / static_cast<double>(iters);
    };

    BenchResult out;
    out.sec_without_model = run_arm(WithoutModel);
    out.sec_with_model = run_arm(WithModel);
    out.sec_injection = run_arm(ErrorInjection);
    return out;
}

}  // namespace axnn
