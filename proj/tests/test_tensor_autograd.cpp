#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "axnn/autograd.hpp"
#include "axnn/checkpoint_io.hpp"
#include "axnn/model.hpp"
#include "axnn/nn.hpp"
#include "axnn/optim.hpp"

using namespace axnn;

namespace {

// Independent naive triple-loop conv oracle (no im2col, no gemm).
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride, int64_t pad) {
    const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wid = x.shape[3];
    const int64_t k = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int64_t oh = (h + 2 * pad - kh) / stride + 1;
    const int64_t ow = (wid + 2 * pad - kw) / stride + 1;
    Tensor y = Tensor::zeros({n, k, oh, ow});
    for (int64_t img = 0; img < n; ++img)
        for (int64_t f = 0; f < k; ++f)
            for (int64_t i = 0; i < oh; ++i)
                for (int64_t j = 0; j < ow; ++j) {
                    double acc = bias.empty() ? 0.0 : bias[f];
                    for (int64_t ch = 0; ch < c; ++ch)
                        for (int64_t ki = 0; ki < kh; ++ki)
                            for (int64_t kj = 0; kj < kw; ++kj) {
                                const int64_t ih = i * stride - pad + ki;
                                const int64_t iw = j * stride - pad + kj;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= wid) continue;
                                acc += static_cast<double>(x.at4(img, ch, ih, iw)) * w.at4(f, ch, ki, kj);
                            }
                    y.at4(img, f, i, j) = static_cast<float>(acc);
                }
    return y;
}

Tensor naive_linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    Tensor y = Tensor::zeros({x.shape[0], w.shape[0]});
    for (int64_t i = 0; i < x.shape[0]; ++i)
        for (int64_t j = 0; j < w.shape[0]; ++j) {
            double acc = bias.empty() ? 0.0 : bias[j];
            for (int64_t t = 0; t < x.shape[1]; ++t)
                acc += static_cast<double>(x.at2(i, t)) * w.at2(j, t);
            y.at2(i, j) = static_cast<float>(acc);
        }
    return y;
}

// Central finite differences of a scalar-valued graph builder with respect
// to one tensor, evaluated via forward passes only.
bool fd_check(Tensor& theta, const std::function<NodePtr(NodePtr)>& graph, float h = 1e-3f, float tol = 1e-3f) {
    NodePtr p = make_param(theta);
    NodePtr loss = graph(p);
    backward(loss);
    REQUIRE(!p->grad.empty());
    auto fd_at = [&](int64_t i, float step) {
        const float orig = theta[i];
        theta[i] = orig + step;
        const float up = graph(make_param(theta))->value[0];
        theta[i] = orig - step;
        const float down = graph(make_param(theta))->value[0];
        theta[i] = orig;
        return (up - down) / (2.0f * step);
    };
    for (int64_t i = 0; i < theta.numel(); ++i) {
        const float fd = fd_at(i, h);
        const float an = p->grad[i];
        const float denom = std::max({1.0f, std::fabs(fd), std::fabs(an)});
        if (std::fabs(fd - an) > tol * denom) {
            // non-smoothness probe: if FD is inconsistent across step sizes
            // the coordinate sits on a relu/maxpool kink, not a grad bug
            const float fd2 = fd_at(i, h / 8.0f);
            const float fd_denom = std::max({1e-3f, std::fabs(fd), std::fabs(fd2)});
            if (std::fabs(fd - fd2) > 0.2f * fd_denom) continue;
            const float denom2 = std::max({1.0f, std::fabs(fd2), std::fabs(an)});
            if (std::fabs(fd2 - an) <= tol * denom2) continue;
            UNSCOPED_INFO("fd mismatch at " << i << ": analytic " << an << " vs fd " << fd << " / " << fd2);
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("conv2d_exact: 1x1 identity-scale case") {
    Tensor x({1, 1, 1, 1}, {1.0f});
    Tensor w({1, 1, 1, 1}, {2.0f});
    Tensor b({1}, {0.0f});
    Tensor y = conv2d_exact(x, w, b, 1, 0);
    REQUIRE(y.shape == Shape{1, 1, 1, 1});
    REQUIRE(y[0] == Catch::Approx(2.0f));
}

TEST_CASE("conv2d_exact: 2x2 ones sum") {
    Tensor x = Tensor::full({1, 1, 2, 2}, 1.0f);
    Tensor w = Tensor::full({1, 1, 2, 2}, 1.0f);
    Tensor y = conv2d_exact(x, w, Tensor{}, 1, 0);
    REQUIRE(y.shape == Shape{1, 1, 1, 1});
    REQUIRE(y[0] == Catch::Approx(4.0f));
}

TEST_CASE("conv2d_exact matches naive triple-loop oracle") {
    Rng rng(42);
    Tensor x = Tensor::uniform({1, 3, 8, 8}, -1.0f, 1.0f, rng);
    Tensor w = Tensor::uniform({4, 3, 3, 3}, -1.0f, 1.0f, rng);
    Tensor b = Tensor::uniform({4}, -0.5f, 0.5f, rng);
    for (auto [stride, pad] : std::vector<std::pair<int64_t, int64_t>>{{1, 0}, {1, 1}, {2, 1}}) {
        Tensor got = conv2d_exact(x, w, b, stride, pad);
        Tensor want = naive_conv2d(x, w, b, stride, pad);
        REQUIRE(got.shape == want.shape);
        for (int64_t i = 0; i < got.numel(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-5));
    }
}

TEST_CASE("conv2d_exact rejects shape mismatches") {
    Tensor x = Tensor::full({1, 2, 4, 4}, 1.0f);
    Tensor w = Tensor::full({1, 3, 3, 3}, 1.0f);
    REQUIRE_THROWS_AS(conv2d_exact(x, w, Tensor{}, 1, 0), std::invalid_argument);
    Tensor w2 = Tensor::full({2, 2, 3, 3}, 1.0f);
    Tensor bad_bias = Tensor::full({3}, 0.0f);
    REQUIRE_THROWS_AS(conv2d_exact(x, w2, bad_bias, 1, 0), std::invalid_argument);
}

TEST_CASE("linear_exact basics and oracle") {
    Tensor x({1, 2}, {1.0f, 0.0f});
    Tensor w({1, 2}, {3.0f, 5.0f});
    Tensor b({1}, {1.0f});
    REQUIRE(linear_exact(x, w, b)[0] == Catch::Approx(4.0f));

    // identity weight, zero bias
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(7);
    Tensor xr = Tensor::uniform({2, 3}, -1.0f, 1.0f, rng);
    Tensor y = linear_exact(xr, eye, Tensor{});
    for (int64_t i = 0; i < y.numel(); ++i) REQUIRE(y[i] == Catch::Approx(xr[i]));

    Tensor x4 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    Tensor w4 = Tensor::uniform({5, 8}, -1.0f, 1.0f, rng);
    Tensor b4 = Tensor::uniform({5}, -1.0f, 1.0f, rng);
    Tensor got = linear_exact(x4, w4, b4);
    Tensor want = naive_linear(x4, w4, b4);
    for (int64_t i = 0; i < got.numel(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-5));

    REQUIRE_THROWS_AS(linear_exact(Tensor::zeros({1, 3}), Tensor::zeros({2, 4}), Tensor{}), std::invalid_argument);
}

TEST_CASE("backward: dloss/dw == x for loss = sum(w*x)") {
    Tensor xv({1, 4}, {1.0f, 2.0f, 3.0f, 4.0f});
    Tensor wv({1, 4}, {0.5f, -0.5f, 1.0f, 2.0f});
    NodePtr w = make_param(wv);
    NodePtr x = make_const(xv);
    // sum(w*x) via linear with weight=x: y[0,0] = w . x
    NodePtr y = linear(w, x, nullptr);
    backward(y);
    REQUIRE(!w->grad.empty());
    for (int64_t i = 0; i < 4; ++i) REQUIRE(w->grad[i] == Catch::Approx(xv[i]));
}

TEST_CASE("backward rejects non-scalar loss") {
    NodePtr w = make_param(Tensor::full({2, 2}, 1.0f));
    NodePtr y = relu(w);
    REQUIRE_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("backward: detached subgraph receives no grad") {
    NodePtr w = make_param(Tensor::full({1, 2}, 1.0f));
    NodePtr detached = make_const(Tensor::full({1, 2}, 3.0f));
    NodePtr y = linear(detached, w, nullptr);  // only w requires grad
    backward(y);
    REQUIRE(!w->grad.empty());
    REQUIRE(detached->grad.empty());
}

TEST_CASE("gradient check: composed conv net vs finite differences") {
    Rng rng(1234);
    int failures = 0;
    for (int trial = 0; trial < 25; ++trial) {
        Tensor x = Tensor::uniform({1, 2, 4, 4}, 0.0f, 1.0f, rng);
        Tensor w = Tensor::uniform({2, 2, 3, 3}, -0.7f, 0.7f, rng);
        Tensor b = Tensor::uniform({2}, -0.3f, 0.3f, rng);
        std::vector<int> labels = {static_cast<int>(rng.next_below(2))};
        auto graph = [&](NodePtr wp) {
            NodePtr h = conv2d(make_const(x), wp, make_param(b), 1, 1);
            h = relu(h);
            h = maxpool2x2(h);
            h = flatten(h);
            // collapse to logits with a fixed random matrix
            Rng wrng(99);
            static Tensor w2 = Tensor::uniform({2, 8}, -0.5f, 0.5f, wrng);
            NodePtr logits = linear(h, make_const(w2), nullptr);
            return softmax_cross_entropy(logits, labels);
        };
        if (!fd_check(w, graph)) ++failures;
    }
    REQUIRE(failures == 0);
}

TEST_CASE("gradient check: every primitive op, 100+ random trials") {
    Rng rng(777);
    int failures = 0;
    int trials = 0;
    for (int t = 0; t < 30; ++t) {
        // linear + bias + cross entropy
        Tensor x = Tensor::uniform({2, 5}, -1.0f, 1.0f, rng);
        Tensor w = Tensor::uniform({3, 5}, -1.0f, 1.0f, rng);
        std::vector<int> labels = {static_cast<int>(rng.next_below(3)), static_cast<int>(rng.next_below(3))};
        auto g1 = [&](NodePtr wp) { return softmax_cross_entropy(linear(make_const(x), wp, nullptr), labels); };
        if (!fd_check(w, g1)) ++failures;
        ++trials;

        // relu path (values away from the kink)
        Tensor xr = Tensor::uniform({1, 6}, 0.2f, 1.5f, rng);
        auto g2 = [&](NodePtr xp) {
            NodePtr h = relu(xp);
            Rng wrng(5);
            static Tensor wf = Tensor::uniform({2, 6}, -0.5f, 0.5f, wrng);
            return softmax_cross_entropy(linear(h, make_const(wf), nullptr), std::vector<int>{1});
        };
        if (!fd_check(xr, g2)) ++failures;
        ++trials;

        // conv2d weight grads
        Tensor xc = Tensor::uniform({1, 1, 4, 4}, 0.0f, 1.0f, rng);
        Tensor wc = Tensor::uniform({2, 1, 3, 3}, -0.6f, 0.6f, rng);
        auto g3 = [&](NodePtr wp) {
            NodePtr h = flatten(conv2d(make_const(xc), wp, nullptr, 1, 0));
            Rng wrng(6);
            static Tensor wf = Tensor::uniform({2, 8}, -0.5f, 0.5f, wrng);
            return softmax_cross_entropy(linear(h, make_const(wf), nullptr), std::vector<int>{0});
        };
        if (!fd_check(wc, g3)) ++failures;
        ++trials;

        // maxpool input grads
        Tensor xm = Tensor::uniform({1, 1, 4, 4}, 0.0f, 1.0f, rng);
        auto g4 = [&](NodePtr xp) {
            NodePtr h = flatten(maxpool2x2(xp));
            Rng wrng(8);
            static Tensor wf = Tensor::uniform({2, 4}, -0.5f, 0.5f, wrng);
            return softmax_cross_entropy(linear(h, make_const(wf), nullptr), std::vector<int>{1});
        };
        if (!fd_check(xm, g4)) ++failures;
        ++trials;
    }
    REQUIRE(trials >= 100);
    REQUIRE(failures == 0);
}

TEST_CASE("softmax cross entropy: uniform logits give ln(classes)") {
    NodePtr logits = make_const(Tensor::full({2, 10}, 0.37f));
    NodePtr loss = softmax_cross_entropy(logits, {3, 7});
    REQUIRE(loss->value[0] == Catch::Approx(std::log(10.0)).epsilon(1e-5));

    REQUIRE_THROWS_AS(softmax_cross_entropy(logits, {3, 10}), std::invalid_argument);
    REQUIRE_THROWS_AS(softmax_cross_entropy(logits, {-1, 0}), std::invalid_argument);
}

TEST_CASE("relu basics") {
    Tensor x({2}, {-1.0f, 2.0f});
    Tensor y = relu_eval(x);
    REQUIRE(y[0] == 0.0f);
    REQUIRE(y[1] == 2.0f);
}

TEST_CASE("sgd_step examples") {
    Tensor p({1}, {1.0f});
    Tensor g({1}, {1.0f});
    Tensor v;
    sgd_step(p, g, 0.1f, 0.0f, 0.0f, v);
    REQUIRE(p[0] == Catch::Approx(0.9f));

    Tensor p2({3}, {1.0f, -2.0f, 0.5f});
    Tensor g0 = Tensor::zeros({3});
    Tensor v2;
    sgd_step(p2, g0, 0.1f, 0.0f, 0.0f, v2);
    REQUIRE(p2[0] == 1.0f);
    REQUIRE(p2[1] == -2.0f);
    REQUIRE(p2[2] == 0.5f);

    // two momentum steps match the hand-unrolled recurrence
    float pv = 2.0f;
    const float lr = 0.1f, mom = 0.9f, grad = 0.5f;
    float vel = 0.0f;
    vel = mom * vel + grad;
    const float p_after1 = pv - lr * vel;
    vel = mom * vel + grad;
    const float p_after2 = p_after1 - lr * vel;

    Tensor pp({1}, {2.0f});
    Tensor gg({1}, {grad});
    Sgd opt{lr, mom, 0.0f};
    opt.step({&pp}, {&gg});
    REQUIRE(pp[0] == Catch::Approx(p_after1));
    opt.step({&pp}, {&gg});
    REQUIRE(pp[0] == Catch::Approx(p_after2));
}

TEST_CASE("sgd_step aborts on non-finite grad") {
    Tensor p({1}, {1.0f});
    Tensor g({1}, {std::numeric_limits<float>::quiet_NaN()});
    Tensor v;
    REQUIRE_THROWS_AS(sgd_step(p, g, 0.1f, 0.0f, 0.0f, v), std::runtime_error);
}

TEST_CASE("single-thread determinism: identical seeds give identical params") {
    auto run = [] {
        Model m = make_tinyconv(1, 8, 8, 3, {4, 4, 8});
        m.init_params(11);
        return m;
    };
    Model a = run(), b = run();
    for (size_t i = 0; i < a.weights.size(); ++i) REQUIRE(a.weights[i].data == b.weights[i].data);
}

TEST_CASE("checkpoint roundtrip and validation") {
    const std::string path = (std::filesystem::temp_directory_path() / "axnn_test_ckpt.axtn").string();
    Rng rng(3);
    std::map<std::string, Tensor> rec;
    rec["layer0.weight"] = Tensor::uniform({2, 3}, -1.0f, 1.0f, rng);
    rec["layer0.bias"] = Tensor::uniform({2}, -1.0f, 1.0f, rng);
    save_checkpoint(path, rec);
    auto loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == 2);
    REQUIRE(loaded.at("layer0.weight").data == rec.at("layer0.weight").data);
    REQUIRE(loaded.at("layer0.bias").shape == rec.at("layer0.bias").shape);

    // wrong magic
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE1234";
    }
    REQUIRE_THROWS_AS(load_checkpoint(path), std::runtime_error);

    // wrong version
    {
        std::ofstream os(path, std::ios::binary);
        os << "AXTN";
        const uint32_t bad_version = 999;
        os.write(reinterpret_cast<const char*>(&bad_version), 4);
    }
    REQUIRE_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("model checkpoint roundtrips error-model records") {
    Model m = make_tinyconv(1, 8, 8, 3, {2, 2, 4}, KernelMode::Sc);
    m.init_params(5);
    m.states[0].input_scale = 0.9f;
    m.states[0].weight_scale = 0.4f;
    m.states[0].em1.mean_coeffs = {0.1, 0.2};
    m.states[0].em1.std_coeffs = {0.05, 0.0};
    m.states[0].em1.lo = -1.0;
    m.states[0].em1.hi = 2.0;
    m.states[0].em1.last_calibration_batch = 3;
    const std::string path = (std::filesystem::temp_directory_path() / "axnn_test_model.axtn").string();
    save_model(m, path);

    Model m2 = make_tinyconv(1, 8, 8, 3, {2, 2, 4}, KernelMode::Sc);
    m2.init_params(99);
    load_model(m2, path);
    REQUIRE(m2.weights[0].data == m.weights[0].data);
    REQUIRE(m2.states[0].input_scale == Catch::Approx(0.9f));
    REQUIRE(m2.states[0].em1.mean_coeffs.size() == 2);
    REQUIRE(m2.states[0].em1.mean_coeffs[1] == Catch::Approx(0.2).margin(1e-6));
    std::filesystem::remove(path);
}
