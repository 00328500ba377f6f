#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "axnn/error_inject.hpp"

using namespace axnn;

TEST_CASE("polyfit: exact line, constant, error paths") {
    std::vector<double> xs, ys;
    for (int i = 0; i < 10; ++i) {
        xs.push_back(i * 0.37 - 1.0);
        ys.push_back(2.0 * xs.back() + 1.0);
    }
    auto c = polyfit(xs, ys, 1);
    REQUIRE(c.size() == 2);
    REQUIRE(c[0] == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(c[1] == Catch::Approx(2.0).margin(1e-6));

    auto c0 = polyfit(xs, ys, 0);
    double mean = 0.0;
    for (double y : ys) mean += y;
    mean /= static_cast<double>(ys.size());
    REQUIRE(c0[0] == Catch::Approx(mean).margin(1e-9));

    REQUIRE_THROWS_AS(polyfit({1.0, 2.0}, {1.0, 2.0}, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(polyfit({3.0, 3.0, 3.0}, {1.0, 2.0, 3.0}, 1), std::invalid_argument);
    // degree-0 fit of constant xs is fine (calibration fallback path)
    REQUIRE(polyfit({3.0, 3.0, 3.0}, {1.0, 2.0, 3.0}, 0)[0] == Catch::Approx(2.0));
}

TEST_CASE("polyfit: noisy cubic recovered") {
    const std::vector<double> truth = {0.3, -1.2, 0.5, 2.0};
    Rng rng(19);
    std::vector<double> xs, ys;
    for (int i = 0; i < 4000; ++i) {
        const double x = rng.next_double() * 2.0 - 1.0;
        double z = std::sqrt(-2.0 * std::log(rng.next_double() + 1e-300)) *
                   std::cos(2.0 * 3.14159265358979 * rng.next_double());
        xs.push_back(x);
        ys.push_back(polyval(truth, x) + 0.05 * z);
    }
    auto c = polyfit(xs, ys, 3);
    for (size_t i = 0; i < 4; ++i) REQUIRE(c[i] == Catch::Approx(truth[i]).margin(0.05));
}

TEST_CASE("calibrate_type1: zero-error degeneracy") {
    Rng rng(2);
    Tensor y = Tensor::uniform({2048}, -1.0f, 1.0f, rng);
    ErrorModelType1 m = calibrate_type1(y, y);
    for (double c : m.mean_coeffs) REQUIRE(std::fabs(c) <= 1e-4);
    for (double c : m.std_coeffs) REQUIRE(std::fabs(c) <= 1e-4);
}

TEST_CASE("calibrate_type1: synthetic slope and noise recovery") {
    Rng rng(4);
    Tensor y_prox = Tensor::uniform({20000}, 0.0f, 2.0f, rng);
    Tensor y_acc = y_prox;
    for (int64_t i = 0; i < y_acc.numel(); ++i) {
        const double z = gaussian_from_key({99, 0, 0, static_cast<uint64_t>(i)});
        y_acc[i] = y_prox[i] + 0.1f * y_prox[i] + static_cast<float>(0.05 * z);
    }
    ErrorModelType1 m = calibrate_type1(y_acc, y_prox);
    for (double x : {0.25, 0.5, 1.0, 1.5, 1.75}) {
        REQUIRE(polyval(m.mean_coeffs, x) == Catch::Approx(0.1 * x).margin(0.02));
        REQUIRE(polyval(m.std_coeffs, x) == Catch::Approx(0.05).margin(0.02));
    }
    // deterministic: same inputs, same model
    ErrorModelType1 m2 = calibrate_type1(y_acc, y_prox);
    REQUIRE(m.mean_coeffs == m2.mean_coeffs);
    REQUIRE(m.std_coeffs == m2.std_coeffs);
}

TEST_CASE("calibrate_type1: single-bin fallback to degree 0") {
    Tensor y_prox = Tensor::full({100}, 1.0f);
    Tensor y_acc = Tensor::full({100}, 1.5f);
    ErrorModelType1 m = calibrate_type1(y_acc, y_prox);
    REQUIRE(m.mean_coeffs.size() == 1);
    REQUIRE(m.mean_coeffs[0] == Catch::Approx(0.5).margin(1e-6));
    REQUIRE(m.std_coeffs[0] == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("inject_type1: identities and model-absent error") {
    Rng rng(6);
    Tensor y = Tensor::uniform({128}, -1.0f, 1.0f, rng);
    ErrorModelType1 zero_model;
    zero_model.mean_coeffs = {0.0};
    zero_model.std_coeffs = {0.0};
    zero_model.lo = -1.0;
    zero_model.hi = 1.0;
    Tensor out = inject_type1_eval(y, zero_model, 1, 0, 0);
    REQUIRE(out.data == y.data);

    ErrorModelType1 shift = zero_model;
    shift.mean_coeffs = {0.25};
    Tensor shifted = inject_type1_eval(y, shift, 1, 0, 0);
    for (int64_t i = 0; i < y.numel(); ++i) REQUIRE(shifted[i] == Catch::Approx(y[i] + 0.25f).margin(1e-6));

    ErrorModelType1 absent;
    REQUIRE_THROWS_AS(inject_type1_eval(y, absent, 1, 0, 0), std::runtime_error);
}

TEST_CASE("inject_type1: empirical statistics match the polynomials within 1%") {
    // constant proxy value pins the polynomial evaluation point
    const float y0 = 0.8f;
    Tensor y = Tensor::full({100000}, y0);
    ErrorModelType1 m;
    m.mean_coeffs = {0.1, 0.25};  // mean(y0) = 0.1 + 0.25*0.8 = 0.3
    m.std_coeffs = {0.2, 0.5};    // std(y0) = 0.2 + 0.5*0.8 = 0.6
    m.lo = 0.0;
    m.hi = 1.0;
    Tensor out = inject_type1_eval(y, m, 123, 3, 7);
    double sum = 0.0, sum2 = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double e = out[i] - y0;
        sum += e;
        sum2 += e * e;
    }
    const double n = static_cast<double>(out.numel());
    const double mean = sum / n;
    const double sd = std::sqrt(sum2 / n - mean * mean);
    REQUIRE(mean == Catch::Approx(0.3).epsilon(0.01));
    REQUIRE(sd == Catch::Approx(0.6).epsilon(0.01));
}

TEST_CASE("calibrate_type2: examples and the two-pass oracle") {
    // identical tensors: zero mean and variance
    Rng rng(8);
    Tensor y = Tensor::uniform({512}, -1.0f, 1.0f, rng);
    ErrorModelType2 zero = calibrate_type2(y, y);
    REQUIRE(std::fabs(zero.mean) <= 1e-6);
    REQUIRE(zero.var <= 1e-6);

    // constructed e = {-1, +1}: population mean 0, variance 1
    Tensor ref({2}, {0.0f, 0.0f});
    Tensor acc({2}, {-1.0f, 1.0f});
    ErrorModelType2 m = calibrate_type2(acc, ref);
    REQUIRE(m.mean == Catch::Approx(0.0).margin(1e-9));
    REQUIRE(m.var == Catch::Approx(1.0).margin(1e-9));

    // random layer vs an independent two-pass oracle
    Tensor a = Tensor::uniform({4096}, -2.0f, 2.0f, rng);
    Tensor b = Tensor::uniform({4096}, -2.0f, 2.0f, rng);
    ErrorModelType2 got = calibrate_type2(a, b);
    double mean = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) mean += static_cast<double>(a[i]) - b[i];
    mean /= static_cast<double>(a.numel());
    double var = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = (static_cast<double>(a[i]) - b[i]) - mean;
        var += d * d;
    }
    var /= static_cast<double>(a.numel());
    REQUIRE(got.mean == Catch::Approx(mean).margin(1e-6));
    REQUIRE(got.var == Catch::Approx(var).margin(1e-6));
}

TEST_CASE("inject_type2: identities and statistics") {
    Rng rng(10);
    Tensor y = Tensor::uniform({1000}, -1.0f, 1.0f, rng);
    ErrorModelType2 ident;
    ident.mean = 0.0;
    ident.var = 0.0;
    ident.last_calibration_batch = 0;
    REQUIRE(inject_type2_eval(y, ident, 5, 0, 0).data == y.data);

    ErrorModelType2 shift = ident;
    shift.mean = -0.5;
    Tensor out = inject_type2_eval(y, shift, 5, 0, 0);
    for (int64_t i = 0; i < y.numel(); ++i) REQUIRE(out[i] == Catch::Approx(y[i] - 0.5f).margin(1e-6));

    ErrorModelType2 absent;
    REQUIRE_THROWS_AS(inject_type2_eval(y, absent, 5, 0, 0), std::runtime_error);

    ErrorModelType2 noisy;
    noisy.mean = 0.4;
    noisy.var = 0.49;  // sd 0.7
    noisy.last_calibration_batch = 0;
    Tensor big = Tensor::zeros({100000});
    Tensor noised = inject_type2_eval(big, noisy, 77, 1, 2);
    double sum = 0.0, sum2 = 0.0;
    for (float v : noised.data) {
        sum += v;
        sum2 += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(noised.numel());
    const double mean = sum / n;
    const double sd = std::sqrt(sum2 / n - mean * mean);
    REQUIRE(mean == Catch::Approx(0.4).epsilon(0.02));
    REQUIRE(sd == Catch::Approx(0.7).epsilon(0.02));
}

TEST_CASE("gaussian_from_key: determinism, moments, key sensitivity") {
    const NoiseKey k{42, 3, 17, 123456};
    REQUIRE(gaussian_from_key(k) == gaussian_from_key(k));

    double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const double z = gaussian_from_key({9001, 0, 0, static_cast<uint64_t>(i)});
        sum += z;
        sum2 += z * z;
        sum4 += z * z * z * z;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double kurt = (sum4 / n) / (var * var);
    REQUIRE(std::fabs(mean) <= 0.004);
    REQUIRE(var == Catch::Approx(1.0).margin(0.01));
    REQUIRE(kurt == Catch::Approx(3.0).margin(0.05));

    // changing any key field changes the sample (no collision in 1e5 trials)
    int collisions = 0;
    for (int i = 0; i < 100000; ++i) {
        const NoiseKey base{static_cast<uint64_t>(i), 1, 2, 3};
        const double z = gaussian_from_key(base);
        NoiseKey k1 = base;
        k1.base_seed ^= 1;
        NoiseKey k2 = base;
        k2.layer_id ^= 1;
        NoiseKey k3 = base;
        k3.batch_index ^= 1;
        NoiseKey k4 = base;
        k4.element_index ^= 1;
        if (gaussian_from_key(k1) == z || gaussian_from_key(k2) == z || gaussian_from_key(k3) == z ||
            gaussian_from_key(k4) == z)
            ++collisions;
    }
    REQUIRE(collisions == 0);
}
