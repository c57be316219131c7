#include <cmath>
#include <random>

#include "doctest.h"
#include "hgt/tensor.hpp"

using namespace hgt;

TEST_CASE("softmax of uniform logits is uniform") {
    Tensor x({1, 3}, {0.0, 0.0, 0.0});
    Tensor y = softmax_lastdim(x);
    for (int j = 0; j < 3; ++j) CHECK(y.data()[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("matmul identity") {
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    std::mt19937_64 rng(7);
    Tensor x = Tensor::randn({3, 5}, 1.0, rng);
    Tensor y = matmul(eye, x);
    for (int i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("bilinear sample exact at lattice points") {
    Tensor map = Tensor::zeros({5, 6, 1});
    map.data_mut()[(3 * 6 + 2) * 1] = 7.5;  // (x=2, y=3)
    Tensor coords({1, 2}, {2.0, 3.0});
    Tensor s = bilinear_sample(map, coords);
    CHECK(s.data()[0] == doctest::Approx(7.5).epsilon(1e-9));
}

TEST_CASE("bilinear sample rejects far out-of-range coordinates") {
    Tensor map = Tensor::zeros({4, 4, 1});
    Tensor coords({1, 2}, {5.2, 1.0});
    CHECK_THROWS_AS(bilinear_sample(map, coords), TensorError);
    // Within half a pixel of the border: clamped, not an error.
    Tensor near({1, 2}, {3.4, 0.0});
    CHECK_NOTHROW(bilinear_sample(map, near));
}

TEST_CASE("backward of sum fills unit gradients") {
    Tensor x({4}, {1.0, 2.0, 3.0, 4.0}, true);
    Tensor loss = sum(x);
    loss.backward();
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of sigmoid at zero gives quarter") {
    Tensor x = Tensor::scalar(0.0, true);
    Tensor loss = sigmoid(x);
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("backward through softmax pick at uniform point") {
    Tensor x({1, 2}, {0.3, 0.3}, true);
    Tensor y = softmax_lastdim(x);
    Tensor picked = matmul(y, Tensor({2, 1}, {1.0, 0.0}));
    Tensor loss = sum(picked);
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("backward errors") {
    Tensor x({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(x.backward(), TensorError);  // non-scalar
    Tensor c = Tensor::scalar(3.0);
    CHECK_THROWS_AS(c.backward(), TensorError);  // detached
}

TEST_CASE("unused leaves keep zero gradients") {
    Tensor x = Tensor::scalar(2.0, true);
    Tensor unused = Tensor::scalar(5.0, true);
    Tensor loss = mul_scalar(x, 3.0);
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(3.0));
    CHECK(unused.grad()[0] == 0.0);
}

TEST_CASE("grad_check on square and relu") {
    Tensor x = Tensor::scalar(3.0, true);
    auto sq = [&] { return matmul(reshape(x, {1, 1}), reshape(x, {1, 1})); };
    auto rep = grad_check([&] { return reshape(sq(), {1}); }, {x}, 1e-5, 1e-5);
    CHECK(rep.pass);
    Tensor loss = reshape(sq(), {1});
    x.zero_grad();
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));

    Tensor neg = Tensor::scalar(-1.0, true);
    auto rep2 = grad_check([&] { return relu(neg); }, {neg}, 1e-5, 1e-5);
    CHECK(rep2.pass);
    CHECK(rep2.max_relative_error == 0.0);
}

TEST_CASE("grad_check across randomized primitive compositions") {
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        int n = 2 + static_cast<int>(rng() % 3);
        int d = 2 + static_cast<int>(rng() % 3);
        Tensor x = Tensor::randn({n, d}, 1.0, rng, true);
        Tensor w = Tensor::randn({d, d}, 0.5, rng, true);
        Tensor b = Tensor::randn({d}, 0.5, rng, true);
        auto f = [&] {
            Tensor h = relu(linear(x, w, b));
            Tensor s = softmax_lastdim(h);
            Tensor g = sigmoid(matmul(s, w));
            return sum(concat_lastdim({g, s}));
        };
        auto rep = grad_check(f, {x, w, b}, 1e-5, 1e-5);
        CHECK_MESSAGE(rep.pass, "seed ", seed, " err ", rep.max_relative_error);
    }
}

TEST_CASE("grad_check through bilinear sample, gather and scatter") {
    std::mt19937_64 rng(11);
    Tensor map = Tensor::randn({4, 5, 3}, 1.0, rng, true);
    Tensor coords({2, 2}, {1.3, 2.1, 3.2, 0.7}, true);
    Tensor msgs = Tensor::randn({4, 3}, 1.0, rng, true);
    Tensor wts = Tensor::randn({4}, 0.5, rng, true);
    std::vector<int> sinks{0, 1, 1, 2};
    auto f = [&] {
        Tensor s = bilinear_sample(map, coords);
        Tensor g = gather_rows(msgs, {0, 2, 3});
        Tensor sc = scatter_weighted_sum(msgs, wts, sinks, 3);
        return add(sum(add(s, gather_rows(sc, {0, 1}))), sum(sigmoid(g)));
    };
    auto rep = grad_check(f, {map, coords, msgs, wts}, 1e-5, 1e-5);
    CHECK_MESSAGE(rep.pass, "err ", rep.max_relative_error);
}

TEST_CASE("softmax rows sum to one and lie in [0,1]") {
    std::mt19937_64 rng(3);
    for (int it = 0; it < 50; ++it) {
        int r = 1 + static_cast<int>(rng() % 4), c = 1 + static_cast<int>(rng() % 6);
        Tensor x = Tensor::randn({r, c}, 3.0, rng);
        Tensor y = softmax_lastdim(x);
        for (int i = 0; i < r; ++i) {
            double s = 0.0;
            for (int j = 0; j < c; ++j) {
                double v = y.data()[i * c + j];
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("backward is linear in the loss") {
    std::mt19937_64 rng(5);
    Tensor x = Tensor::randn({3, 3}, 1.0, rng, true);
    auto f = [&] { return sum(sigmoid(x)); };
    auto g = [&] { return sum(relu(matmul(x, x))); };

    x.zero_grad();
    f().backward();
    auto gf = x.grad();
    x.zero_grad();
    g().backward();
    auto gg = x.grad();
    x.zero_grad();
    add(mul_scalar(f(), 2.5), mul_scalar(g(), -1.5)).backward();
    auto gc = x.grad();
    for (int i = 0; i < x.size(); ++i)
        CHECK(std::abs(gc[i] - (2.5 * gf[i] - 1.5 * gg[i])) < 1e-10);
}

TEST_CASE("forward evaluation is bitwise deterministic") {
    std::mt19937_64 rng(9);
    Tensor x = Tensor::randn({4, 4}, 1.0, rng);
    Tensor w = Tensor::randn({4, 4}, 1.0, rng);
    Tensor a = softmax_lastdim(sigmoid(matmul(x, w)));
    Tensor b = softmax_lastdim(sigmoid(matmul(x, w)));
    for (int i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("forward_op dispatcher covers the primitive set") {
    Tensor x({1, 3}, {0.0, 0.0, 0.0});
    Tensor y = forward_op(OpKind::SoftmaxLastdim, {x});
    CHECK(y.data()[0] == doctest::Approx(1.0 / 3.0));
    Tensor a({2}, {1.0, 2.0}), b({2}, {3.0, 4.0});
    CHECK(forward_op(OpKind::Add, {a, b}).data()[1] == 6.0);
    CHECK(forward_op(OpKind::MulScalar, {a, Tensor::scalar(2.0)}).data()[1] == 4.0);
    CHECK_THROWS_AS(forward_op(OpKind::Matmul, {a}), TensorError);
    CHECK_THROWS_AS(matmul(Tensor({2, 2}, {1, 2, 3, 4}), Tensor({3, 2}, {1, 2, 3, 4, 5, 6})),
                    TensorError);
}

TEST_CASE("grad_check rejects a non-deterministic function") {
    Tensor x = Tensor::scalar(1.0, true);
    int calls = 0;
    auto f = [&] {
        ++calls;
        return mul_scalar(x, static_cast<double>(calls));
    };
    CHECK_THROWS_AS(grad_check(f, {x}, 1e-5, 1e-5), TensorError);
}
