#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hgt/assoc.hpp"

using namespace hgt;

namespace {

// Exhaustive-permutation oracle for square matrices.
double brute_min_cost(const std::vector<std::vector<double>>& cost) {
    int n = static_cast<int>(cost.size());
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double t = 0.0;
        for (int i = 0; i < n; ++i) t += cost[i][perm[i]];
        best = std::min(best, t);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double total_cost(const std::vector<std::vector<double>>& cost, const Assignment& a) {
    double t = 0.0;
    for (auto [r, c] : a.matches) t += cost[r][c];
    return t;
}

void check_coverage(const Assignment& a, int m, int n) {
    std::vector<int> rows(m, 0), cols(n, 0);
    for (auto [r, c] : a.matches) {
        ++rows[r];
        ++cols[c];
    }
    for (int r : a.unmatched_rows) ++rows[r];
    for (int c : a.unmatched_cols) ++cols[c];
    for (int v : rows) CHECK(v == 1);
    for (int v : cols) CHECK(v == 1);
}

}  // namespace

TEST_CASE("iou basics") {
    Box a{5, 5, 10, 10};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    Box b{10, 5, 10, 10};
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
    Box c{50, 50, 4, 4};
    CHECK(iou(a, c) == 0.0);
    CHECK_THROWS_AS(iou(a, Box{0, 0, 0, 1}), AssocError);
}

TEST_CASE("iou symmetry on random boxes") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.5, 30.0);
    for (int i = 0; i < 200; ++i) {
        Box a{u(rng), u(rng), u(rng), u(rng)};
        Box b{u(rng), u(rng), u(rng), u(rng)};
        CHECK(iou(a, b) == iou(b, a));
        CHECK(iou(a, a) == doctest::Approx(1.0));
    }
}

TEST_CASE("hungarian picks the cheap diagonal") {
    Assignment a = hungarian({{1, 2}, {2, 1}}, 1e18);
    REQUIRE(a.matches.size() == 2);
    CHECK(a.matches[0] == std::pair<int, int>(0, 0));
    CHECK(a.matches[1] == std::pair<int, int>(1, 1));
}

TEST_CASE("hungarian gating leaves pairs unmatched") {
    Assignment a = hungarian({{0.9}}, 0.7);
    CHECK(a.matches.empty());
    CHECK(a.unmatched_rows == std::vector<int>{0});
    CHECK(a.unmatched_cols == std::vector<int>{0});
}

TEST_CASE("hungarian empty matrix") {
    Assignment a = hungarian({}, 1.0, 3);
    CHECK(a.matches.empty());
    CHECK(a.unmatched_cols == std::vector<int>{0, 1, 2});
}

TEST_CASE("hungarian equals brute force on random square matrices") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int it = 0; it < 300; ++it) {
        int n = 1 + static_cast<int>(rng() % 7);
        std::vector<std::vector<double>> cost(n, std::vector<double>(n));
        for (auto& row : cost)
            for (auto& v : row) v = u(rng);
        Assignment a = hungarian(cost, 1e18);
        REQUIRE(static_cast<int>(a.matches.size()) == n);
        CHECK(total_cost(cost, a) == doctest::Approx(brute_min_cost(cost)).epsilon(1e-12));
        check_coverage(a, n, n);
    }
}

TEST_CASE("rectangular matrices leave extras unmatched with full coverage") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int it = 0; it < 100; ++it) {
        int m = 1 + static_cast<int>(rng() % 5), n = 1 + static_cast<int>(rng() % 5);
        std::vector<std::vector<double>> cost(m, std::vector<double>(n));
        for (auto& row : cost)
            for (auto& v : row) v = u(rng);
        Assignment a = hungarian(cost, 1e18);
        CHECK(static_cast<int>(a.matches.size()) == std::min(m, n));
        check_coverage(a, m, n);
    }
}

TEST_CASE("shrinking the gate never increases the match count") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int it = 0; it < 50; ++it) {
        int m = 1 + static_cast<int>(rng() % 5), n = 1 + static_cast<int>(rng() % 5);
        std::vector<std::vector<double>> cost(m, std::vector<double>(n));
        for (auto& row : cost)
            for (auto& v : row) v = u(rng);
        size_t prev = hungarian(cost, 1.1).matches.size();
        for (double gate : {0.8, 0.6, 0.4, 0.2, 0.05}) {
            size_t cur = hungarian(cost, gate).matches.size();
            CHECK(cur <= prev);
            prev = cur;
        }
    }
}

TEST_CASE("cross-modal matching labels visibility") {
    Detection d;
    d.box = Box{10, 10, 4, 4};
    SUBCASE("identical singletons") {
        auto r = cross_modal_match({d}, {d});
        REQUIRE(r.assignment.matches.size() == 1);
        CHECK(r.thermal_labels[0] == Visibility::Both);
        CHECK(r.visible_labels[0] == Visibility::Both);
    }
    SUBCASE("disjoint boxes never match") {
        Detection far = d;
        far.box.x = 100;
        auto r = cross_modal_match({d}, {far});
        CHECK(r.assignment.matches.empty());
        CHECK(r.thermal_labels[0] == Visibility::TOnly);
        CHECK(r.visible_labels[0] == Visibility::VOnly);
    }
    SUBCASE("two thermal against one visible minimizes total distance") {
        Detection t1 = d, t2 = d, v = d;
        t1.box = Box{10, 10, 4, 4};
        t2.box = Box{11, 10, 4, 4};
        v.box = Box{11, 10, 4, 4};  // exact overlap with t2
        auto r = cross_modal_match({t1, t2}, {v});
        REQUIRE(r.assignment.matches.size() == 1);
        CHECK(r.assignment.matches[0] == std::pair<int, int>(1, 0));
    }
}

TEST_CASE("associate on affinity matrices") {
    SUBCASE("near-identity affinity matches the diagonal") {
        auto a = associate({{0.99, 0.01}, {0.01, 0.99}}, 0.5);
        REQUIRE(a.matches.size() == 2);
        CHECK(a.matches[0] == std::pair<int, int>(0, 0));
    }
    SUBCASE("all below threshold leaves everything unmatched") {
        auto a = associate({{0.2, 0.3}, {0.1, 0.4}}, 0.5);
        CHECK(a.matches.empty());
        CHECK(a.unmatched_rows.size() == 2);
        CHECK(a.unmatched_cols.size() == 2);
    }
    SUBCASE("no detections leaves all tracklets unmatched") {
        auto a = associate({}, 0.5, 4);
        CHECK(a.matches.empty());
        CHECK(a.unmatched_cols.size() == 4);
    }
}
