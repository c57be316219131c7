#include <cmath>
#include <random>

#include "doctest.h"
#include "hgt/losses.hpp"

using namespace hgt;

TEST_CASE("focal loss is zero on a perfect binary prediction") {
    Tensor y({2, 2, 1}, {1.0, 0.0, 0.0, 1.0});
    Tensor l = focal_loss(y, y, 2.0, 4.0);
    CHECK(l.value() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("focal loss single-pixel point values") {
    // Positive branch: -(1-0.5)^2 ln(0.5).
    Tensor pos = focal_loss(Tensor({1, 1, 1}, {0.5}), Tensor({1, 1, 1}, {1.0}), 2.0, 4.0);
    CHECK(pos.value() == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
    CHECK(pos.value() == doctest::Approx(0.17329).epsilon(1e-4));
    // Negative branch with no positives: -(1-0)^4 (0.5)^2 ln(1-0.5), norm 1.
    Tensor neg = focal_loss(Tensor({1, 1, 1}, {0.5}), Tensor({1, 1, 1}, {0.0}), 2.0, 4.0);
    CHECK(neg.value() == doctest::Approx(pos.value()).epsilon(1e-12));
}

TEST_CASE("focal loss monotone in the prediction") {
    auto at = [](double c, double y) {
        return focal_loss(Tensor({1, 1, 1}, {c}), Tensor({1, 1, 1}, {y}), 2.0, 4.0).value();
    };
    CHECK(at(0.6, 1.0) < at(0.5, 1.0));   // decreasing at positives
    CHECK(at(0.6, 0.0) > at(0.5, 0.0));   // increasing at negatives
    CHECK(at(0.3, 1.0) >= 0.0);
    CHECK(at(0.3, 0.2) >= 0.0);
}

TEST_CASE("focal loss rejects mismatched shapes and passes grad_check") {
    CHECK_THROWS_AS(focal_loss(Tensor::zeros({2, 2, 1}), Tensor::zeros({2, 1, 1}), 2.0, 4.0),
                    TensorError);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.15, 0.85);
    Tensor c = Tensor::zeros({3, 3, 2}, true);
    for (auto& v : c.data_mut()) v = u(rng);
    Tensor y = Tensor::zeros({3, 3, 2});
    y.data_mut()[4] = 1.0;
    y.data_mut()[11] = 0.4;
    auto rep = grad_check([&] { return focal_loss(c, y, 2.0, 4.0); }, {c}, 1e-5, 1e-5);
    CHECK_MESSAGE(rep.pass, "err ", rep.max_relative_error);
}

TEST_CASE("gaussian radius has a floor of one") {
    CHECK(gaussian_radius(0.5, 0.5) == 1.0);
    CHECK(gaussian_radius(30, 30) > 1.0);
}

TEST_CASE("rendered heatmap peaks exactly at centers and is symmetric") {
    std::vector<GtTarget> ts{{{8.4, 8.6}, 48.0, 48.0, 2}};
    Tensor y = render_heatmap(ts, 16, 16, 7);
    auto at = [&](int yy, int xx, int c) { return y.data()[(yy * 16 + xx) * 7 + c]; };
    CHECK(at(8, 8, 2) == 1.0);
    CHECK(at(8, 8, 0) == 0.0);  // other channels untouched
    for (int d = 1; d <= 3; ++d) {
        CHECK(at(8, 8 + d, 2) == doctest::Approx(at(8, 8 - d, 2)));
        CHECK(at(8 + d, 8, 2) == doctest::Approx(at(8 - d, 8, 2)));
        CHECK(at(8, 8 + d, 2) < 1.0);
        CHECK(at(8, 8 + d, 2) > 0.0);
    }
    CHECK_THROWS_AS(render_heatmap({{{20, 2}, 2, 2, 0}}, 16, 16, 7), TensorError);
    CHECK_THROWS_AS(render_heatmap({{{2, 2}, 2, 2, 9}}, 16, 16, 7), TensorError);
}

TEST_CASE("overlapping splats max-combine, never sum past one") {
    std::vector<GtTarget> ts{{{5.0, 5.0}, 8, 8, 0}, {{6.0, 5.0}, 8, 8, 0}};
    Tensor y = render_heatmap(ts, 12, 12, 1);
    for (double v : y.data()) {
        CHECK(v <= 1.0);
        CHECK(v >= 0.0);
    }
    CHECK(y.data()[(5 * 12 + 5)] == 1.0);
    CHECK(y.data()[(5 * 12 + 6)] == 1.0);
}

TEST_CASE("sparse l1 hand case and empty convention") {
    Tensor pred = Tensor::zeros({36, 2});
    pred.data_mut()[5 * 2 + 0] = 3.0;
    pred.data_mut()[5 * 2 + 1] = 4.0;
    Tensor l = sparse_l1(pred, {{5, {2.0, 4.5}}});
    CHECK(l.value() == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(sparse_l1(pred, {}).value() == 0.0);
    CHECK(sparse_l1(pred, {{5, {3.0, 4.0}}}).value() == 0.0);
    CHECK_THROWS_AS(sparse_l1(pred, {{40, {0.0, 0.0}}}), TensorError);
    CHECK_THROWS_AS(sparse_l1(pred, {{1, {0.0}}}), TensorError);
}

TEST_CASE("sparse l1 passes grad_check away from kinks") {
    std::mt19937_64 rng(5);
    Tensor pred = Tensor::randn({6, 3}, 1.0, rng, true);
    std::vector<SparseTarget> ts{{1, {9.0, -9.0, 9.0}}, {4, {-9.0, 9.0, -9.0}}};
    auto rep = grad_check([&] { return sparse_l1(pred, ts); }, {pred}, 1e-5, 1e-5);
    CHECK_MESSAGE(rep.pass, "err ", rep.max_relative_error);
}

TEST_CASE("matching loss point values") {
    Tensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
    CHECK(matching_loss_bce(eye).value() == doctest::Approx(0.0).epsilon(1e-9));
    double ce = matching_loss_ce(eye).value();
    CHECK(ce == doctest::Approx(2.0 * std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(ce == doctest::Approx(0.62652).epsilon(1e-4));

    Tensor half({1, 1}, {0.5});
    CHECK(matching_loss_bce(half).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(matching_loss_ce(half).value() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(matching_loss(half).value() == doctest::Approx(0.69315).epsilon(1e-4));

    CHECK_THROWS_AS(matching_loss(Tensor({1, 2}, {0.1, 0.2})), TensorError);
}

TEST_CASE("matching loss is minimized near identity over random matrices") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    for (int n : {2, 3}) {
        Tensor eye = Tensor::zeros({n, n});
        for (int i = 0; i < n; ++i) eye.data_mut()[i * n + i] = 1.0;
        double base = matching_loss(eye).value();
        for (int it = 0; it < 50; ++it) {
            Tensor a = Tensor::zeros({n, n});
            for (auto& v : a.data_mut()) v = u(rng);
            CHECK(matching_loss(a).value() > base);
        }
    }
}

TEST_CASE("matching losses pass grad_check") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    for (int n : {1, 2, 4}) {
        Tensor a = Tensor::zeros({n, n}, true);
        for (auto& v : a.data_mut()) v = u(rng);
        auto r1 = grad_check([&] { return matching_loss_bce(a); }, {a}, 1e-5, 1e-5);
        CHECK_MESSAGE(r1.pass, "bce n=", n, " err ", r1.max_relative_error);
        auto r2 = grad_check([&] { return matching_loss_ce(a); }, {a}, 1e-5, 1e-5);
        CHECK_MESSAGE(r2.pass, "ce n=", n, " err ", r2.max_relative_error);
        auto r3 = grad_check([&] { return matching_loss_ce(a, true); }, {a}, 1e-5, 1e-5);
        CHECK_MESSAGE(r3.pass, "ce-id n=", n, " err ", r3.max_relative_error);
        auto r4 = grad_check([&] { return matching_loss(a); }, {a}, 1e-5, 1e-5);
        CHECK_MESSAGE(r4.pass, "match n=", n, " err ", r4.max_relative_error);
    }
}

TEST_CASE("total loss weights components linearly") {
    Tensor a = Tensor::scalar(2.0, true), b = Tensor::scalar(3.0, true);
    LossComponents c{a, b, Tensor::scalar(0.0), Tensor::scalar(0.0), Tensor::scalar(0.0)};
    LossWeights w;  // defaults 1, 0.1, 1, 1, 1
    Tensor t = total_loss(c, w);
    CHECK(t.value() == doctest::Approx(2.0 + 0.3).epsilon(1e-12));
    t.backward();
    CHECK(a.grad()[0] == doctest::Approx(1.0));
    CHECK(b.grad()[0] == doctest::Approx(0.1));

    LossComponents zeros{Tensor::scalar(0.0), Tensor::scalar(0.0), Tensor::scalar(0.0),
                         Tensor::scalar(0.0), Tensor::scalar(0.0)};
    CHECK(total_loss(zeros, w).value() == 0.0);
    LossComponents only{Tensor::scalar(7.0), Tensor::scalar(5.0), Tensor::scalar(5.0),
                        Tensor::scalar(5.0), Tensor::scalar(5.0)};
    CHECK(total_loss(only, LossWeights{1, 0, 0, 0, 0}).value() == 7.0);
}
