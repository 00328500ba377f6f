// Command-line driver: training, evaluation, multiplier characterization,
// calibration-curve dumps and the iteration-time benchmark.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "axnn/axnn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

void write_manifest(const axnn::RunConfig& cfg, const std::string& command, const fs::path& dir) {
    json m;
    m["version"] = kVersion;
    m["command"] = command;
    m["seed"] = cfg.plan.seed;
    m["config_hash"] = axnn::fnv1a_hex(axnn::serialize_config(cfg).dump());
    std::ofstream os(dir / "manifest.json");
    os << m.dump(2) << "\n";
}

void print_mult_stats(const axnn::MultErrorStats& s) {
    std::cout << "mean_rel_error=" << s.mean_rel_error << "\n"
              << "max_abs_error=" << s.max_abs_error << "\n"
              << "mean_error=" << s.mean_error << "\n"
              << "error_variance=" << s.error_variance << "\n";
}

int cmd_train(const std::string& config_path, const std::string& output_dir_override) {
    axnn::RunConfig cfg = axnn::parse_config_file(config_path);
    if (!output_dir_override.empty()) cfg.output_dir = output_dir_override;
    fs::create_directories(cfg.output_dir);

    axnn::Model model = axnn::build_model(cfg);
    axnn::Dataset train_ds = axnn::build_dataset(cfg, /*train_split=*/true);
    axnn::Dataset eval_ds = axnn::build_dataset(cfg, /*train_split=*/false);

    axnn::RunReport report = axnn::train(cfg.plan, model, train_ds, eval_ds);
    const fs::path dir(cfg.output_dir);
    axnn::write_report_csv(report, (dir / "report.csv").string());
    axnn::save_model(model, (dir / "checkpoint.axtn").string());
    write_manifest(cfg, "train", dir);

    std::ofstream summary(dir / "summary.txt");
    summary << "method=" << cfg.plan.method << "\n"
            << "final_accuracy=" << report.final_accuracy << "\n"
            << "total_steps=" << report.total_steps << "\n"
            << "peak_stored_activation_bytes=" << report.peak_stored_activation_bytes << "\n"
            << "diverged=" << (report.diverged ? report.divergence_note : std::string("no")) << "\n";

    std::cout << "final_accuracy=" << report.final_accuracy << "\n";
    if (report.diverged) std::cout << "diverged: " << report.divergence_note << "\n";
    std::cout << "artifacts written to " << cfg.output_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path) {
    axnn::RunConfig cfg = axnn::parse_config_file(config_path);
    axnn::Model model = axnn::build_model(cfg);
    axnn::load_model(model, ckpt_path);
    axnn::Dataset eval_ds = axnn::build_dataset(cfg, /*train_split=*/false);
    std::cout << "accuracy=" << axnn::evaluate(model, eval_ds) << "\n";
    return 0;
}

int cmd_characterize(const std::string& table_spec) {
    axnn::MultTable t = axnn::mult_table_from_spec(table_spec);
    std::cout << "table=" << (t.name.empty() ? table_spec : t.name) << "\n";
    print_mult_stats(axnn::characterize(t));
    return 0;
}

int cmd_calibrate_dump(const std::string& config_path, const std::string& output_dir_override) {
    axnn::RunConfig cfg = axnn::parse_config_file(config_path);
    if (!output_dir_override.empty()) cfg.output_dir = output_dir_override;
    fs::create_directories(cfg.output_dir);

    axnn::Model model = axnn::build_model(cfg);
    if (!cfg.plan.pretrained.empty()) axnn::load_model(model, cfg.plan.pretrained);
    axnn::Dataset ds = axnn::build_dataset(cfg, /*train_split=*/true);
    std::vector<int64_t> idx(static_cast<size_t>(std::min<int64_t>(cfg.plan.batch_size, ds.size())));
    std::iota(idx.begin(), idx.end(), 0);
    const axnn::Tensor images = ds.batch_images(idx);

    // Calibrate all layers once, then walk the net again the same way
    // calibration does, dumping the binned error curve and the fitted
    // polynomials per approximate layer.
    const fs::path dir(cfg.output_dir);
    axnn::calibrate_model(model, images, 0, cfg.plan.use_proxy_act);
    axnn::Tensor a = images;
    int dumped = 0;
    for (size_t i = 0; i < model.specs.size(); ++i) {
        const axnn::LayerSpec& s = model.specs[i];
        switch (s.kind) {
            case axnn::LayerKind::Relu: a = axnn::relu_eval(a); break;
            case axnn::LayerKind::MaxPool2x2: a = axnn::maxpool2x2_eval(a); break;
            case axnn::LayerKind::Flatten: a = axnn::Tensor({a.shape[0], a.numel() / a.shape[0]}, a.data); break;
            case axnn::LayerKind::Conv2d:
            case axnn::LayerKind::Linear: {
                const bool is_conv = s.kind == axnn::LayerKind::Conv2d;
                const axnn::Tensor& w = model.weights[i];
                axnn::LayerState& st = model.states[i];
                if (s.mode == axnn::KernelMode::Sc || s.mode == axnn::KernelMode::ApproxMult) {
                    axnn::Tensor y_acc = axnn::detail::accurate_core(model, i, a);
                    axnn::Tensor y_prox;
                    if (s.mode == axnn::KernelMode::Sc && cfg.plan.use_proxy_act) {
                        axnn::SplitOutput split = is_conv ? axnn::split_conv_forward(a, w, s.stride, s.pad)
                                                          : axnn::split_linear_forward(a, w);
                        const float sscale = st.input_scale * st.weight_scale;
                        for (float& v : split.pos.data) v /= sscale;
                        for (float& v : split.neg.data) v /= sscale;
                        y_prox = axnn::sc_act_eval(split.pos, split.neg);
                        for (float& v : y_prox.data) v *= sscale;
                    } else {
                        y_prox = is_conv ? axnn::conv2d_exact(axnn::fake_quant8_eval(a), axnn::fake_quant8_eval(w),
                                                              axnn::Tensor{}, s.stride, s.pad)
                                         : axnn::linear_exact(axnn::fake_quant8_eval(a), axnn::fake_quant8_eval(w),
                                                              axnn::Tensor{});
                    }
                    const axnn::BinnedError binned = axnn::bin_errors(y_acc, y_prox, model.approx.error_bins);
                    std::ofstream os(dir / ("errmodel_layer" + std::to_string(i) + ".csv"));
                    os << "bin_center,count,error_mean,error_std,poly_mean,poly_std\n";
                    for (size_t b = 0; b < binned.centers.size(); ++b)
                        os << binned.centers[b] << "," << binned.counts[b] << "," << binned.means[b] << ","
                           << binned.stds[b] << "," << axnn::polyval(st.em1.mean_coeffs, binned.centers[b]) << ","
                           << std::max(axnn::polyval(st.em1.std_coeffs, binned.centers[b]), 0.0) << "\n";
                    ++dumped;
                    a = y_acc;
                } else if (s.mode == axnn::KernelMode::Analog) {
                    axnn::Tensor y_acc = axnn::detail::accurate_core(model, i, a);
                    std::ofstream os(dir / ("errmodel_layer" + std::to_string(i) + ".csv"));
                    os << "mean,var,clip_pos,clip_neg\n";
                    os << st.em2.mean << "," << st.em2.var << "," << st.analog.clip_pos << "," << st.analog.clip_neg
                       << "\n";
                    ++dumped;
                    a = y_acc;
                } else {
                    a = is_conv ? axnn::conv2d_exact(a, w, axnn::Tensor{}, s.stride, s.pad)
                                : axnn::linear_exact(a, w, axnn::Tensor{});
                }
                // bias after the pre-bias dump, matching the calibration walk
                const axnn::Tensor& b = model.biases[i];
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
    write_manifest(cfg, "calibrate-dump", dir);
    std::cout << "wrote " << dumped << " per-layer error-model curves to " << cfg.output_dir << "\n";
    return 0;
}

int cmd_bench(const std::string& config_path, int batch, int iters) {
    axnn::RunConfig cfg = axnn::parse_config_file(config_path);
    cfg.plan.batch_size = batch;
    axnn::Model model = axnn::build_model(cfg);
    axnn::Dataset ds = axnn::build_dataset(cfg, /*train_split=*/true);
    const axnn::BenchResult r = axnn::bench_iterations(cfg.plan, model, ds, iters);
    std::cout << std::fixed << std::setprecision(6);
    std::cout << "method=" << cfg.plan.method << " batch=" << batch << " iters=" << iters << "\n";
    std::cout << "without_model_sec_per_iter=" << r.sec_without_model << "\n";
    std::cout << "with_model_sec_per_iter=" << r.sec_with_model << "\n";
    std::cout << "error_injection_sec_per_iter=" << r.sec_injection << "\n";
    std::cout << "injection_speedup_vs_model=" << r.injection_speedup() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"axnn: training toolkit for approximate-hardware inference"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, ckpt_path, table_spec, output_dir;
    int bench_batch = 64, bench_iters = 50;

    auto* train = app.add_subcommand("train", "train a model per config and write report + checkpoint");
    train->add_option("config", config_path, "JSON run config")->required();
    train->add_option("--output-dir", output_dir, "override config output_dir");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with accurate kernels");
    eval->add_option("checkpoint", ckpt_path, "checkpoint file (.axtn)")->required();
    eval->add_option("config", config_path, "JSON run config")->required();

    auto* charac = app.add_subcommand("characterize-mult", "exhaustive multiplier error characterization");
    charac->add_option("table", table_spec, "table file or default:<drop_k>")->required();

    auto* calib = app.add_subcommand("calibrate-dump", "dump per-layer error-model curves as CSV");
    calib->add_option("config", config_path, "JSON run config")->required();
    calib->add_option("--output-dir", output_dir, "override config output_dir");

    auto* bench = app.add_subcommand("bench", "time exact vs accurate vs injection iterations");
    bench->add_option("config", config_path, "JSON run config")->required();
    bench->add_option("--batch", bench_batch, "batch size (default 64)");
    bench->add_option("--iters", bench_iters, "iterations per arm (default 50)");

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(config_path, output_dir);
        if (eval->parsed()) return cmd_eval(ckpt_path, config_path);
        if (charac->parsed()) return cmd_characterize(table_spec);
        if (calib->parsed()) return cmd_calibrate_dump(config_path, output_dir);
        if (bench->parsed()) return cmd_bench(config_path, bench_batch, bench_iters);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const axnn::internal_error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
