#include <doctest.h>

#include <cmath>
#include <vector>

#include "../support/gradcheck.hpp"
#include "../support/op_catalog.hpp"
#include "ude/errors.hpp"
#include "ude/numerics/adam.hpp"
#include "ude/numerics/tape.hpp"

using namespace ude;

namespace {

// Naive triple loop; the oracle for matmul.
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

// Sliding-window cross-correlation oracle for one input/output channel.
std::vector<double> sliding_window(const std::vector<double>& x, const std::vector<double>& w, int pad, int stride) {
    const int t = static_cast<int>(x.size()), k = static_cast<int>(w.size());
    std::vector<double> out;
    for (int start = -pad; start + k <= t + pad; start += stride) {
        double s = 0.0;
        for (int i = 0; i < k; ++i) {
            const int src = start + i;
            if (src >= 0 && src < t) s += x[static_cast<std::size_t>(src)] * w[static_cast<std::size_t>(i)];
        }
        out.push_back(s);
    }
    return out;
}

}  // namespace

TEST_CASE("matmul examples") {
    Tape tape(false);
    const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
    const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
    CHECK(tape.matmul(eye, a).to_vector() == a.to_vector());

    const Tensor col = Tensor::matrix(2, 1, {5, 6});
    const auto expected = naive_matmul({1, 2, 3, 4}, {5, 6}, 2, 2, 1);
    CHECK(expected == std::vector<double>{17, 39});
    CHECK(tape.matmul(a, col).to_vector() == expected);

    const Tensor zero = Tensor::zeros({3, 2});
    const Tensor prod = tape.matmul(zero, a);
    for (double v : prod.values()) CHECK(v == 0.0);

    CHECK_THROWS_AS(tape.matmul(a, Tensor::zeros({3, 1})), DimensionError);
}

TEST_CASE("matmul agrees with naive oracle on random shapes") {
    Rng rng(3);
    Tape tape(false);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.index(5), k = 1 + rng.index(5), n = 1 + rng.index(5);
        auto in = testing::random_inputs({{m, k}, {k, n}}, rng);
        const auto got = tape.matmul(in[0], in[1]).to_vector();
        const auto want = naive_matmul(in[0].to_vector(), in[1].to_vector(), m, k, n);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
    }
}

TEST_CASE("softmax examples and properties") {
    Tape tape(false);
    auto s = tape.softmax(Tensor({3}, {0, 0, 0}));
    for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    s = tape.softmax(Tensor({2}, {1000, 1000}));
    CHECK(s[0] == 0.5);
    CHECK(s[1] == 0.5);

    s = tape.softmax(Tensor({2}, {0.0, std::log(3.0)}));
    CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-14));

    CHECK_THROWS_AS(tape.softmax(Tensor({2, 0}, {})), DimensionError);

    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = testing::random_inputs({{4, 7}}, rng, -5, 5)[0];
        const double c = rng.uniform(-100, 100);
        const auto y = tape.softmax(x);
        const auto ys = tape.softmax(tape.add_scalar(x, c));
        for (std::size_t r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 7; ++j) sum += y.at(r, j);
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
        for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y[i] - ys[i]) < 1e-12);
    }
}

TEST_CASE("layer_norm examples") {
    Tape tape(false);
    const Tensor ones = Tensor({2}, {1, 1});
    const Tensor zeros = Tensor({2}, {0, 0});

    auto y = tape.layer_norm(Tensor::matrix(1, 3, {2, 2, 2}), Tensor({3}, {1, 1, 1}), Tensor({3}, {0, 0, 0}));
    for (double v : y.values()) CHECK(v == 0.0);

    y = tape.layer_norm(Tensor::matrix(1, 2, {1, 3}), ones, zeros);
    // (x - mu) / sqrt(var + eps) with mu = 2, var = 1
    CHECK(y[0] == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
    CHECK(std::abs(y[0] + 1.0) < 1e-5);

    y = tape.layer_norm(Tensor::matrix(2, 2, {5, -1, 0.2, 7}), zeros, Tensor({2}, {0.4, 0.4}));
    for (double v : y.values()) CHECK(v == 0.4);
}

TEST_CASE("conv1d examples") {
    Tape tape(false);
    // W = 1 identity kernel
    const Tensor x = Tensor::matrix(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
    const Tensor ident({1, 2, 2}, {1, 0, 0, 1});
    CHECK(tape.conv1d(x, ident, 1, 0).to_vector() == x.to_vector());

    const auto oracle = sliding_window({1, 2, 3}, {1, 1, 1}, 1, 1);
    CHECK(oracle == std::vector<double>{3, 6, 5});
    const auto got = tape.conv1d(Tensor::matrix(3, 1, {1, 2, 3}), Tensor({3, 1, 1}, {1, 1, 1}), 1, 1);
    CHECK(got.to_vector() == oracle);

    // Two stride-2 layers on T = 64 give T / 4.
    Tensor h = Tensor::zeros({64, 3});
    h = tape.conv1d(h, Tensor::zeros({4, 3, 3}), 2, 1);
    h = tape.conv1d(h, Tensor::zeros({4, 3, 3}), 2, 1);
    CHECK(h.shape() == Shape{16, 3});

    CHECK_THROWS_AS(tape.conv1d(Tensor::zeros({1, 1}), Tensor::zeros({5, 1, 1}), 1, 0), DimensionError);
}

TEST_CASE("conv1d matches sliding-window oracle on random single-channel input") {
    Rng rng(5);
    Tape tape(false);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = 5 + rng.index(10);
        const std::size_t stride = 1 + rng.index(2);
        auto in = testing::random_inputs({{t, 1}, {3, 1, 1}}, rng);
        const auto got = tape.conv1d(in[0], in[1], stride, 1).to_vector();
        const auto want = sliding_window(in[0].to_vector(), in[1].to_vector(), 1, static_cast<int>(stride));
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
    }
}

TEST_CASE("stride-2 conv twice gives floor(T/4) for even T") {
    Tape tape(false);
    for (std::size_t t = 4; t <= 80; t += 2) {
        // Downsampling layers use W = 4, pad = 1.
        Tensor h = Tensor::zeros({t, 1});
        h = tape.conv1d(h, Tensor::zeros({4, 1, 1}), 2, 1);
        h = tape.conv1d(h, Tensor::zeros({4, 1, 1}), 2, 1);
        CHECK(h.rows() == t / 4);
    }
}

TEST_CASE("backprop examples") {
    Tensor x({2}, {1, 2}, true);
    Tape tape;
    tape.backward(tape.sum(tape.mul(x, x)));
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 4.0);

    Tensor y({2}, {1, 2}, true);
    Tape t2;
    const Tensor d = t2.detach(y);
    t2.backward(t2.sum(t2.mul(d, d)));
    CHECK(y.grad()[0] == 0.0);
    CHECK(y.grad()[1] == 0.0);

    Tape t3;
    CHECK_THROWS_AS(t3.backward(t3.add(x, x)), ContractError);
}

TEST_CASE("gradients accumulate across fan-out and calls") {
    Tensor x = Tensor::scalar(3.0, true);
    Tape tape;
    tape.backward(tape.add(tape.mul(x, x), x));  // d/dx (x^2 + x) = 7
    CHECK(x.grad()[0] == 7.0);
    Tape again;
    again.backward(again.scale(x, 2.0));
    CHECK(x.grad()[0] == 9.0);
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("unreachable parameter receives zero gradient") {
    Tensor used({2}, {1, 2}, true);
    Tensor unused({2}, {3, 4}, true);
    Tape tape;
    tape.backward(tape.sum(used));
    CHECK(unused.grad()[0] == 0.0);
    CHECK(unused.grad()[1] == 0.0);
}

TEST_CASE("tape records ops in topological order") {
    Tensor a({2}, {1, 2}, true);
    Tape tape;
    const Tensor b = tape.scale(a, 2.0);
    const Tensor c = tape.add(b, a);
    tape.sum(c);
    CHECK(tape.op_names() == std::vector<std::string>{"scale", "add", "sum"});

    Tape inference(false);
    inference.sum(inference.scale(a, 2.0));
    CHECK(inference.size() == 0);
}

TEST_CASE("non-finite forward value is an error") {
    Tape tape(false);
    CHECK_THROWS_AS(tape.scale(Tensor({1}, {1e300}), 1e300), NumericError);
}

TEST_CASE("finite-difference agreement for every differentiable op") {
    Rng rng(2024);
    for (const auto& op : testing::differentiable_ops()) {
        for (int trial = 0; trial < 3; ++trial) {
            auto inputs = testing::random_inputs(op.shapes, rng);
            const auto r = testing::check_gradients(op.fn, inputs, rng);
            INFO(op.name);
            CHECK(r.rel_error < 1e-4);
        }
    }
}

TEST_CASE("adam examples") {
    AdamConfig cfg;
    CHECK(cfg.lr == 1e-4);

    std::vector<double> p{0.5, -0.25};
    AdamState st;
    adam_step(st, p, std::vector<double>{0.0, 0.0}, cfg);
    CHECK(p == std::vector<double>{0.5, -0.25});

    std::vector<double> s{1.0};
    AdamState st1;
    adam_step(st1, s, std::vector<double>{1.0}, cfg);
    // m_hat = 1, v_hat = 1 -> delta = -lr / (1 + eps)
    CHECK(s[0] - 1.0 == doctest::Approx(-cfg.lr / (1.0 + cfg.eps)).epsilon(1e-12));
    CHECK(st1.t == 1);

    AdamConfig frozen;
    frozen.lr = 0.0;
    std::vector<double> q{0.1, 0.2, 0.3};
    AdamState st2;
    for (int i = 0; i < 5; ++i) adam_step(st2, q, std::vector<double>{1.0, -3.0, 0.5}, frozen);
    CHECK(q == std::vector<double>{0.1, 0.2, 0.3});

    std::vector<double> bad{1.0};
    AdamState st3;
    try {
        adam_step(st3, bad, std::vector<double>{std::nan("")}, cfg, "utt.head.w");
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("utt.head.w") != std::string::npos);
    }
}

TEST_CASE("Adam optimizer drives a quadratic to its minimum") {
    Tensor w = Tensor::parameter("w", {2}, {3.0, -2.0});
    AdamConfig cfg;
    cfg.lr = 0.05;
    Adam opt({w}, cfg);
    for (int i = 0; i < 500; ++i) {
        opt.zero_grad();
        Tape tape;
        tape.backward(tape.sum(tape.mul(w, w)));
        opt.step();
    }
    CHECK(std::abs(w[0]) < 1e-2);
    CHECK(std::abs(w[1]) < 1e-2);
    CHECK(opt.steps() == 500);
}
