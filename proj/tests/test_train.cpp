#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "hgt/io.hpp"
#include "hgt/train.hpp"

using namespace hgt;

namespace {

SynthResult tiny_sequence() {
    ScenarioSpec s;
    s.seed = 5;
    s.duration = 4;
    s.width = s.height = 32;
    TargetScript a;
    a.class_id = 2;
    a.spawn = 1;
    a.despawn = 4;
    a.start = {10, 12};
    a.vel = {1.5, 0.5};
    a.w = a.h = 5;
    TargetScript b;
    b.class_id = 5;
    b.spawn = 1;
    b.despawn = 4;
    b.start = {22, 20};
    b.vel = {-1, 1};
    b.w = b.h = 4;
    s.targets = {a, b};
    return synth(s);
}

Model small_model(unsigned seed) {
    ModelConfig mc;
    mc.dim = 8;
    mc.heads = 2;
    return Model(mc, seed);
}

}  // namespace

TEST_CASE("frame losses are finite and positive on fresh weights") {
    SynthResult seq = tiny_sequence();
    Model m = small_model(1);
    LossComponents c = frame_losses(m, seq, 2);
    for (const Tensor* t : {&c.cf, &c.bs, &c.r, &c.td, &c.match}) {
        REQUIRE(t->defined());
        CHECK(std::isfinite(t->value()));
        CHECK(t->value() >= 0.0);
    }
    CHECK(c.cf.value() > 0.0);
    CHECK(c.match.value() > 0.0);
    CHECK_THROWS(frame_losses(m, seq, 1));
    CHECK_THROWS(frame_losses(m, seq, 5));
}

TEST_CASE("zero learning rate keeps the loss constant") {
    SynthResult seq = tiny_sequence();
    Model m = small_model(2);
    TrainResult r = train(m, seq, 7, 0.0);
    REQUIRE(r.steps_run == 7);
    CHECK(!r.diverged);
    // steps cycle frames 2,3,4,2,...; same frame pair must repeat exactly
    CHECK(r.curve[0] == doctest::Approx(r.curve[3]).epsilon(1e-12));
    CHECK(r.curve[1] == doctest::Approx(r.curve[4]).epsilon(1e-12));
}

TEST_CASE("a few sgd steps reduce the loss") {
    SynthResult seq = tiny_sequence();
    Model m = small_model(3);
    TrainResult r = train(m, seq, 30, 1e-3);
    REQUIRE(r.steps_run == 30);
    double head = (r.curve[0] + r.curve[1] + r.curve[2]) / 3.0;
    double tail = (r.curve[27] + r.curve[28] + r.curve[29]) / 3.0;
    CHECK(tail < head);
}

TEST_CASE("divergence aborts and keeps the last finite weights") {
    SynthResult seq = tiny_sequence();
    Model m = small_model(4);
    auto td = std::filesystem::temp_directory_path() /
              ("hgt_train_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(td);
    std::string curve = (td / "curve.txt").string();
    std::string ckpt = (td / "last.ckpt").string();

    TrainResult r = train(m, seq, 50, 1e6, 0.9, LossWeights{}, curve, ckpt);
    CHECK(r.diverged);
    CHECK(r.steps_run < 50);

    // the saved checkpoint reproduces a finite loss
    Model fresh = small_model(99);
    auto params = fresh.named_params();
    load_into(params, checkpoint_load(ckpt));
    CHECK(std::isfinite(total_loss(frame_losses(fresh, seq, 2), LossWeights{}).value()));

    std::string text = read_file(curve);
    CHECK(!text.empty());
    CHECK(text.find("1 ") == 0);
    std::filesystem::remove_all(td);
}

TEST_CASE("curve file has one line per step") {
    SynthResult seq = tiny_sequence();
    Model m = small_model(6);
    auto td = std::filesystem::temp_directory_path() /
              ("hgt_curve_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(td);
    std::string curve = (td / "c.txt").string();
    train(m, seq, 5, 1e-4, 0.9, LossWeights{}, curve);
    std::string text = read_file(curve);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
    std::filesystem::remove_all(td);
}
