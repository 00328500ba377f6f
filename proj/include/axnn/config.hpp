#pragma once

#include <fstream>
#include <set>

#include "json.hpp"

#include "axnn/data.hpp"
#include "axnn/model.hpp"
#include "axnn/trainer.hpp"

namespace axnn {

// Everything a run needs, parsed from a JSON config file. Unknown keys are
// rejected so that parse -> serialize -> parse is an identity on the
// validated schema.
struct RunConfig {
    TrainPlan plan;

    // model
    std::vector<int64_t> channels = {32, 32, 64};
    int classes = 10;
    std::string linear_mode = "method";  // "method" or "exact"

    // dataset
    std::string dataset_kind = "synth";  // synth | idx | cifar
    std::string dataset_path;
    std::string labels_path;
    int64_t train_n = 800;
    int64_t eval_n = 200;
    int64_t image_channels = 1, image_height = 12, image_width = 12;
    float synth_noise = 0.3f;

    // approximate-hardware parameters
    int sc_stream_length = 32;
    std::string mult_table = "default:3";  // "default:<k>" or a table file path
    int adc_bits = 4;
    int adc_group_size = 9;

    std::string output_dir = "out";
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
    RunConfig c;
    detail::check_keys(j, {"method", "model", "dataset", "train", "sc", "mult", "analog", "output_dir"}, "root");
    if (j.contains("method")) c.plan.method = j.at("method").get<std::string>();
    kernel_mode_from_name(c.plan.method);

    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::check_keys(m, {"channels", "classes", "linear_mode"}, "model");
        if (m.contains("channels")) c.channels = m.at("channels").get<std::vector<int64_t>>();
        if (m.contains("classes")) c.classes = m.at("classes").get<int>();
        if (m.contains("linear_mode")) c.linear_mode = m.at("linear_mode").get<std::string>();
        if (c.channels.size() != 3) throw std::invalid_argument("config: model.channels needs 3 entries");
        if (c.linear_mode != "method" && c.linear_mode != "exact")
            throw std::invalid_argument("config: model.linear_mode must be 'method' or 'exact'");
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::check_keys(d, {"kind", "path", "labels_path", "train_n", "eval_n", "image", "noise"}, "dataset");
        if (d.contains("kind")) c.dataset_kind = d.at("kind").get<std::string>();
        if (c.dataset_kind != "synth" && c.dataset_kind != "idx" && c.dataset_kind != "cifar")
            throw std::invalid_argument("config: dataset.kind must be synth|idx|cifar");
        if (d.contains("path")) c.dataset_path = d.at("path").get<std::string>();
        if (d.contains("labels_path")) c.labels_path = d.at("labels_path").get<std::string>();
        if (d.contains("train_n")) c.train_n = d.at("train_n").get<int64_t>();
        if (d.contains("eval_n")) c.eval_n = d.at("eval_n").get<int64_t>();
        if (d.contains("image")) {
            auto img = d.at("image").get<std::vector<int64_t>>();
            if (img.size() != 3) throw std::invalid_argument("config: dataset.image must be [C,H,W]");
            c.image_channels = img[0];
            c.image_height = img[1];
            c.image_width = img[2];
        }
        if (d.contains("noise")) c.synth_noise = d.at("noise").get<float>();
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::check_keys(t,
                           {"injection_epochs", "finetune_epochs", "batch_size", "lr", "momentum", "weight_decay",
                            "finetune_lr_factor", "seed", "eval_every", "pretrained", "use_checkpointing",
                            "use_proxy_act", "type1_per_epoch", "type2_every"},
                           "train");
        auto& p = c.plan;
        if (t.contains("injection_epochs")) p.injection_epochs = t.at("injection_epochs").get<double>();
        if (t.contains("finetune_epochs")) p.finetune_epochs = t.at("finetune_epochs").get<double>();
        if (t.contains("batch_size")) p.batch_size = t.at("batch_size").get<int>();
        if (t.contains("lr")) p.lr = t.at("lr").get<float>();
        if (t.contains("momentum")) p.momentum = t.at("momentum").get<float>();
        if (t.contains("weight_decay")) p.weight_decay = t.at("weight_decay").get<float>();
        if (t.contains("finetune_lr_factor")) p.finetune_lr_factor = t.at("finetune_lr_factor").get<float>();
        if (t.contains("seed")) p.seed = t.at("seed").get<uint64_t>();
        if (t.contains("eval_every")) p.eval_every = t.at("eval_every").get<int>();
        if (t.contains("pretrained")) p.pretrained = t.at("pretrained").get<std::string>();
        if (t.contains("use_checkpointing")) p.use_checkpointing = t.at("use_checkpointing").get<bool>();
        if (t.contains("use_proxy_act")) p.use_proxy_act = t.at("use_proxy_act").get<bool>();
        if (t.contains("type1_per_epoch")) p.type1_per_epoch = t.at("type1_per_epoch").get<int>();
        if (t.contains("type2_every")) p.type2_every = t.at("type2_every").get<int>();
    }
    if (j.contains("sc")) {
        detail::check_keys(j.at("sc"), {"stream_length"}, "sc");
        if (j.at("sc").contains("stream_length")) c.sc_stream_length = j.at("sc").at("stream_length").get<int>();
        sc_stream_width(c.sc_stream_length);
    }
    if (j.contains("mult")) {
        detail::check_keys(j.at("mult"), {"table"}, "mult");
        if (j.at("mult").contains("table")) c.mult_table = j.at("mult").at("table").get<std::string>();
    }
    if (j.contains("analog")) {
        const auto& a = j.at("analog");
        detail::check_keys(a, {"adc_bits", "group_size"}, "analog");
        if (a.contains("adc_bits")) c.adc_bits = a.at("adc_bits").get<int>();
        if (a.contains("group_size")) c.adc_group_size = a.at("group_size").get<int>();
        if (c.adc_bits < 2 || c.adc_bits > 8) throw std::invalid_argument("config: analog.adc_bits must be in [2,8]");
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    validate_plan(c.plan);
    return c;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: JSON parse error in " + path + ": " + e.what());
    }
    return parse_config(j);
}

inline nlohmann::json serialize_config(const RunConfig& c) {
    nlohmann::json j;
    j["method"] = c.plan.method;
    j["model"] = {{"channels", c.channels}, {"classes", c.classes}, {"linear_mode", c.linear_mode}};
    j["dataset"] = {{"kind", c.dataset_kind},
                    {"path", c.dataset_path},
                    {"labels_path", c.labels_path},
                    {"train_n", c.train_n},
                    {"eval_n", c.eval_n},
                    {"image", std::vector<int64_t>{c.image_channels, c.image_height, c.image_width}},
                    {"noise", c.synth_noise}};
    j["train"] = {{"injection_epochs", c.plan.injection_epochs},
                  {"finetune_epochs", c.plan.finetune_epochs},
                  {"batch_size", c.plan.batch_size},
                  {"lr", c.plan.lr},
                  {"momentum", c.plan.momentum},
                  {"weight_decay", c.plan.weight_decay},
                  {"finetune_lr_factor", c.plan.finetune_lr_factor},
                  {"seed", c.plan.seed},
                  {"eval_every", c.plan.eval_every},
                  {"pretrained", c.plan.pretrained},
                  {"use_checkpointing", c.plan.use_checkpointing},
                  {"use_proxy_act", c.plan.use_proxy_act},
                  {"type1_per_epoch", c.plan.type1_per_epoch},
                  {"type2_every", c.plan.type2_every}};
    j["sc"] = {{"stream_length", c.sc_stream_length}};
    j["mult"] = {{"table", c.mult_table}};
    j["analog"] = {{"adc_bits", c.adc_bits}, {"group_size", c.adc_group_size}};
    j["output_dir"] = c.output_dir;
    return j;
}

// Instantiate the pieces a run needs from the parsed config.

inline MultTable mult_table_from_spec(const std::string& spec) {
    if (spec.rfind("default:", 0) == 0) {
        const int k = std::stoi(spec.substr(8));
        return make_truncated_table(k);
    }
    MultTable t = load_mult_table(spec);
    return t;
}

inline Model build_model(const RunConfig& c) {
    const KernelMode mode = kernel_mode_from_name(c.plan.method);
    const KernelMode lin_mode = c.linear_mode == "exact" ? KernelMode::Exact : mode;
    Model m = make_tinyconv(c.image_channels, c.image_height, c.image_width, c.classes, c.channels, mode, lin_mode);
    m.approx.sc_stream_length = c.sc_stream_length;
    m.approx.mult_table = mult_table_from_spec(c.mult_table);
    m.approx.adc_bits = c.adc_bits;
    m.approx.adc_group_size = c.adc_group_size;
    m.noise_seed = c.plan.seed;
    m.init_params(c.plan.seed);
    return m;
}

inline Dataset build_dataset(const RunConfig& c, bool train_split) {
    if (c.dataset_kind == "synth") {
        const uint64_t seed = mix(c.plan.seed, train_split ? 0x7124ull : 0xE7A1ull);
        Dataset ds = synth_dataset(c.classes, train_split ? c.train_n : c.eval_n, seed, c.image_channels,
                                   c.image_height, c.image_width, c.synth_noise);
        ds.split = train_split ? "train" : "eval";
        return ds;
    }
    if (c.dataset_kind == "idx") {
        Dataset ds = load_idx(c.dataset_path, c.labels_path);
        ds.split = train_split ? "train" : "eval";
        return ds;
    }
    Dataset ds = load_cifar_bin(c.dataset_path);
    ds.split = train_split ? "train" : "eval";
    return ds;
}

}  // namespace axnn
