#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "axnn/config.hpp"
#include "axnn/data.hpp"
#include "axnn/model.hpp"
#include "axnn/trainer.hpp"

using namespace axnn;

namespace {

TrainPlan small_plan(const std::string& method, double inj, double ft, uint64_t seed = 1) {
    TrainPlan p;
    p.method = method;
    p.injection_epochs = inj;
    p.finetune_epochs = ft;
    p.batch_size = 8;
    p.lr = 0.03f;
    p.momentum = 0.9f;
    p.seed = seed;
    return p;
}

Model small_model(const std::string& method, int classes = 4, uint64_t seed = 1) {
    Model m = make_tinyconv(1, 8, 8, classes, {2, 2, 4}, kernel_mode_from_name(method));
    m.approx.sc_stream_length = 16;
    m.noise_seed = seed;
    m.init_params(seed);
    return m;
}

}  // namespace

TEST_CASE("plan validation") {
    REQUIRE_THROWS_AS(validate_plan(small_plan("sc", 0.0, 0.0)), std::invalid_argument);
    REQUIRE_THROWS_AS(validate_plan(small_plan("sc", 1.5, 0.0)), std::invalid_argument);  // fractional injection
    REQUIRE_THROWS_AS(validate_plan(small_plan("warp-drive", 1.0, 0.0)), std::invalid_argument);
    TrainPlan bad_lr = small_plan("sc", 1.0, 0.0);
    bad_lr.lr = 0.0f;
    REQUIRE_THROWS_AS(validate_plan(bad_lr), std::invalid_argument);
    REQUIRE_NOTHROW(validate_plan(small_plan("analog", 1.0, 0.25)));
}

TEST_CASE("calibration cadence: exactly 5 Type-1 calibrations per epoch") {
    Dataset ds = synth_dataset(4, 80, 3, 1, 8, 8, 0.2f);  // B = 10 batches of 8
    Dataset ev = synth_dataset(4, 16, 4, 1, 8, 8, 0.2f);
    Model m = small_model("sc");
    counters().reset();
    TrainPlan plan = small_plan("sc", 2.0, 0.0);
    RunReport r = train(plan, m, ds, ev);
    REQUIRE(!r.diverged);
    REQUIRE(counters().type1_calibrations == 10);  // 5 per epoch x 2 epochs
    REQUIRE(r.rows.size() == 2);
    REQUIRE(r.rows[0].calibrations == 5);
    REQUIRE(r.rows[1].calibrations == 5);
}

TEST_CASE("calibration cadence: Type-2 every 10 batches") {
    Dataset ds = synth_dataset(4, 200, 3, 1, 8, 8, 0.2f);  // B = 25
    Dataset ev = synth_dataset(4, 16, 4, 1, 8, 8, 0.2f);
    Model m = small_model("analog");
    counters().reset();
    TrainPlan plan = small_plan("analog", 1.0, 0.0);
    RunReport r = train(plan, m, ds, ev);
    REQUIRE(!r.diverged);
    // batches 0, 10, 20 within the epoch
    REQUIRE(counters().type2_calibrations > 0);
    REQUIRE(r.rows[0].calibrations == 3);
}

TEST_CASE("deterministic replay: identical reports and checkpoints") {
    namespace fs = std::filesystem;
    auto run = [](const std::string& path) {
        Dataset ds = synth_dataset(4, 48, 3, 1, 8, 8, 0.2f);
        Dataset ev = synth_dataset(4, 16, 4, 1, 8, 8, 0.2f);
        Model m = small_model("sc", 4, 21);
        TrainPlan plan = small_plan("sc", 1.0, 0.25, 21);
        RunReport r = train(plan, m, ds, ev);
        save_model(m, path);
        return r;
    };
    const std::string p1 = (fs::temp_directory_path() / "axnn_replay1.axtn").string();
    const std::string p2 = (fs::temp_directory_path() / "axnn_replay2.axtn").string();
    RunReport a = run(p1);
    RunReport b = run(p2);
    REQUIRE(a.rows.size() == b.rows.size());
    for (size_t i = 0; i < a.rows.size(); ++i) {
        REQUIRE(a.rows[i].train_loss == b.rows[i].train_loss);
        REQUIRE(a.rows[i].eval_accuracy == b.rows[i].eval_accuracy);
        REQUIRE(a.rows[i].calibrations == b.rows[i].calibrations);
    }
    REQUIRE(a.final_accuracy == b.final_accuracy);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    REQUIRE(!s1.empty());
    REQUIRE(s1 == s2);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("seed sensitivity: different seeds change the trajectory") {
    Dataset ds = synth_dataset(4, 48, 3, 1, 8, 8, 0.2f);
    Dataset ev = synth_dataset(4, 16, 4, 1, 8, 8, 0.2f);
    Model m1 = small_model("sc", 4, 1);
    Model m2 = small_model("sc", 4, 2);
    RunReport r1 = train(small_plan("sc", 1.0, 0.0, 1), m1, ds, ev);
    RunReport r2 = train(small_plan("sc", 1.0, 0.0, 2), m2, ds, ev);
    REQUIRE(r1.rows[0].train_loss != r2.rows[0].train_loss);
}

TEST_CASE("checkpointed_apply: recompute determinism and memory accounting") {
    Rng rng(17);
    Tensor pos = Tensor::uniform({1, 64}, 0.0f, 2.0f, rng);
    Tensor ng = Tensor::uniform({1, 64}, 0.0f, 2.0f, rng);
    ErrorModelType1 em;
    em.mean_coeffs = {0.05, 0.1};
    em.std_coeffs = {0.02};
    em.lo = -2.0;
    em.hi = 2.0;

    auto build = [&](bool ckpt) {
        NodePtr p = make_param(pos);
        NodePtr n = make_param(ng);
        // 3-proxy pointwise chain
        NodePtr h = sc_act(p, n, ckpt);
        h = inject_type1(h, em, 11, 0, 0, ckpt);
        h = apply_pointwise(sc_act_fn(), {h, make_const(Tensor::zeros(pos.shape))}, ckpt);
        static Tensor w = Tensor::full({1, 64}, 0.5f);
        NodePtr loss = linear(h, make_const(w), nullptr);
        if (ckpt) release_checkpoints(loss);
        const int64_t bytes = stored_activation_bytes(loss);
        backward(loss);
        return std::make_tuple(p->grad, n->grad, bytes, loss->value[0]);
    };

    auto [gp1, gn1, bytes_ckpt, v1] = build(true);
    auto [gp2, gn2, bytes_plain, v2] = build(false);
    REQUIRE(v1 == v2);
    REQUIRE(gp1.data == gp2.data);  // bit-identical gradients
    REQUIRE(gn1.data == gn2.data);
    REQUIRE(bytes_ckpt < bytes_plain);
}

TEST_CASE("checkpointed_apply rejects non-deterministic functions at registration") {
    PointwiseFn fn;
    fn.name = "entropy_source";
    fn.deterministic = false;
    fn.forward = [](const std::vector<Tensor>& in) { return in[0]; };
    fn.backward = [](const std::vector<Tensor>&, const Tensor& g) { return std::vector<Tensor>{g}; };
    NodePtr x = make_param(Tensor::full({4}, 1.0f));
    REQUIRE_THROWS_AS(checkpointed_apply(fn, {x}), std::invalid_argument);
    REQUIRE_NOTHROW(apply_pointwise(fn, {x}, /*checkpoint=*/false));
}

TEST_CASE("training with checkpointing on/off gives bit-identical trajectories") {
    auto run = [](bool ckpt) {
        Dataset ds = synth_dataset(4, 32, 3, 1, 8, 8, 0.2f);
        Dataset ev = synth_dataset(4, 16, 4, 1, 8, 8, 0.2f);
        Model m = small_model("sc", 4, 9);
        TrainPlan plan = small_plan("sc", 1.0, 0.0, 9);
        plan.use_checkpointing = ckpt;
        RunReport r = train(plan, m, ds, ev);
        return std::make_pair(r, m.weights[0].data);
    };
    auto [ra, wa] = run(true);
    auto [rb, wb] = run(false);
    REQUIRE(wa == wb);
    REQUIRE(ra.final_accuracy == rb.final_accuracy);
    REQUIRE(ra.peak_stored_activation_bytes < rb.peak_stored_activation_bytes);
}

TEST_CASE("finetune_fraction: step counts") {
    Dataset ds = synth_dataset(4, 800, 3, 1, 8, 8, 0.2f);  // B = 100
    Dataset ev = synth_dataset(4, 16, 4, 1, 8, 8, 0.2f);
    Model m = small_model("approx-mult");
    TrainPlan plan = small_plan("approx-mult", 0.0, 0.0);
    RunReport r = finetune_fraction(plan, m, ds, ev, 0.25);
    REQUIRE(r.total_steps == 25);

    Model m2 = small_model("approx-mult");
    RunReport r2 = finetune_fraction(plan, m2, ds, ev, 1.0);
    REQUIRE(r2.total_steps == 100);
}

TEST_CASE("phase accounting: total steps") {
    Dataset ds = synth_dataset(4, 40, 3, 1, 8, 8, 0.2f);  // B = 5
    Dataset ev = synth_dataset(4, 16, 4, 1, 8, 8, 0.2f);
    Model m = small_model("approx-mult");
    TrainPlan plan = small_plan("approx-mult", 2.0, 0.5);
    RunReport r = train(plan, m, ds, ev);
    REQUIRE(r.total_steps == 2 * 5 + 3);  // ceil(0.5 * 5) = 3
}

TEST_CASE("evaluate: purity, determinism, chance level, perfect model") {
    Dataset ev = synth_dataset(4, 200, 5, 1, 8, 8, 0.2f);
    Model m = small_model("sc");
    counters().reset();
    const double a1 = evaluate(m, ev);
    const double a2 = evaluate(m, ev);
    REQUIRE(a1 == a2);
    REQUIRE(counters().proxy_act_calls == 0);
    REQUIRE(counters().inject_calls == 0);

    // random model on balanced classes is near chance
    Dataset big = synth_dataset(4, 1000, 6, 1, 8, 8, 0.3f);
    Model rm = small_model("exact", 4, 123);
    const double chance = evaluate(rm, big);
    REQUIRE(chance >= 0.05);
    REQUIRE(chance <= 0.60);  // untrained nets cluster, but stay far from perfect

    REQUIRE_THROWS_AS(evaluate(m, Dataset{}), std::invalid_argument);

    // template-matching linear model classifies noiseless patterns perfectly
    Dataset pure = synth_dataset(4, 40, 7, 1, 8, 8, 0.0f);
    Model tm;
    LayerSpec fl;
    fl.kind = LayerKind::Flatten;
    tm.specs.push_back(fl);
    LayerSpec lin;
    lin.kind = LayerKind::Linear;
    lin.in_features = 64;
    lin.out_features = 4;
    lin.mode = KernelMode::Exact;
    tm.specs.push_back(lin);
    tm.num_classes = 4;
    tm.init_params(1);
    for (int c = 0; c < 4; ++c) {
        // weight row = class template
        for (int64_t p = 0; p < 64; ++p) tm.weights[1].at2(c, p) = pure.images[static_cast<int64_t>(c) * 64 + p];
        tm.biases[1][c] = 0.0f;
    }
    REQUIRE(evaluate(tm, pure) == 1.0);
}

TEST_CASE("divergence aborts with a partial report") {
    Dataset ds = synth_dataset(4, 32, 3, 1, 8, 8, 0.2f);
    Dataset ev = synth_dataset(4, 16, 4, 1, 8, 8, 0.2f);
    Model m = small_model("exact");
    TrainPlan plan = small_plan("exact", 2.0, 0.0);
    plan.lr = 1e18f;  // guaranteed blow-up
    RunReport r = train(plan, m, ds, ev);
    REQUIRE(r.diverged);
    REQUIRE(!r.divergence_note.empty());
    REQUIRE(r.rows.size() >= 1);
}

TEST_CASE("injection-phase iteration is cheaper than accurate-model iteration (sc)") {
    Dataset ds = synth_dataset(4, 64, 3, 1, 8, 8, 0.25f);
    Model m = small_model("sc");
    TrainPlan plan = small_plan("sc", 1.0, 0.0);
    plan.batch_size = 16;
    BenchResult r = bench_iterations(plan, m, ds, 10);
    REQUIRE(r.sec_injection < r.sec_with_model);
}

TEST_CASE("report CSV has the documented header") {
    namespace fs = std::filesystem;
    RunReport r;
    EpochRow row;
    row.epoch = 0;
    row.phase = "injection";
    row.train_loss = 1.5;
    r.rows.push_back(row);
    const std::string path = (fs::temp_directory_path() / "axnn_report.csv").string();
    write_report_csv(r, path);
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    REQUIRE(header == kReportCsvHeader);
    fs::remove(path);
}
