// Optimizer pieces: schedule shape, global-norm clipping, a hand-checked
// AdamW step, decay exemptions, and frozen-slot behavior.
#include <doctest.h>

#include <cmath>

#include "decor/optim.hpp"

using namespace decor;

TEST_CASE("lr schedule ramps linearly then decays by cosine") {
    LrSchedule s;
    s.base_lr = 0.1;
    s.warmup_steps = 10;
    s.total_steps = 110;

    CHECK(s.at(0) == doctest::Approx(0.01));
    CHECK(s.at(4) == doctest::Approx(0.05));
    CHECK(s.at(9) == doctest::Approx(0.1));
    // halfway through the decay span: cos(pi/2) -> base/2
    CHECK(s.at(60) == doctest::Approx(0.05).epsilon(1e-9));
    // end of schedule: cos(pi) -> 0
    CHECK(s.at(110) == doctest::Approx(0.0).epsilon(1e-12));
    // monotone decay after warmup
    for (int64_t t = 10; t < 110; ++t) CHECK(s.at(t) >= s.at(t + 1));

    LrSchedule flat;  // no warmup, single step
    flat.base_lr = 0.5;
    flat.total_steps = 1;
    CHECK(flat.at(0) == doctest::Approx(0.5));
}

TEST_CASE("global-norm clipping rescales exactly at the threshold") {
    Parameter<float> a("a", {2, 2}, {3, 0, 0, 0});
    Parameter<float> b("b", {1, 2}, {0, 4});
    ParamSet<float> params;
    params.add(a);
    params.add(b);
    GradBuffers<float> grads(params);
    grads.slots[0] = {3, 0, 0, 0};
    grads.slots[1] = {0, 4};

    double norm = clip_global_norm(grads, 2.5);  // pre-clip norm is 5
    CHECK(norm == doctest::Approx(5.0));
    CHECK(grads.slots[0][0] == doctest::Approx(1.5));
    CHECK(grads.slots[1][1] == doctest::Approx(2.0));

    // under the threshold nothing moves
    GradBuffers<float> g2(params);
    g2.slots[0] = {0.3f, 0, 0, 0};
    g2.slots[1] = {0, 0.4f};
    clip_global_norm(g2, 2.5);
    CHECK(g2.slots[0][0] == doctest::Approx(0.3));
    CHECK(g2.slots[1][1] == doctest::Approx(0.4));
}

TEST_CASE("adamw first step matches the closed form") {
    Parameter<double> w("w", {1, 2}, {1.0, -2.0});
    ParamSet<double> params;
    params.add(w);
    AdamW<double> opt(params, {.beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.1});
    GradBuffers<double> grads(params);
    grads.slots[0] = {0.5, -1.0};

    double lr = 0.01;
    opt.step(params, grads, lr);
    // bias-corrected first step: update = g / (|g| + eps), decay decoupled
    for (int i = 0; i < 2; ++i) {
        double g = grads.slots[0][static_cast<size_t>(i)];
        double w0 = i == 0 ? 1.0 : -2.0;
        double expect = (w0 - lr * 0.1 * w0) - lr * (g / (std::abs(g) + 1e-8));
        CHECK(w.values()[static_cast<size_t>(i)] == doctest::Approx(expect).epsilon(1e-9));
    }
    CHECK(opt.step_count() == 1);
}

TEST_CASE("vectors are exempt from decay and frozen slots never move") {
    Parameter<double> mat("mat", {2, 2}, {1, 1, 1, 1});
    Parameter<double> vec("vec", {2}, {1, 1});
    Parameter<double> ice("ice", {2}, {5, 5}, /*frozen=*/true);
    ParamSet<double> params;
    params.add(mat);
    params.add(vec);
    params.add(ice);
    AdamW<double> opt(params, {.weight_decay = 0.5});
    GradBuffers<double> grads(params);  // zero gradients

    opt.step(params, grads, 0.1);
    CHECK(mat.values()[0] < 1.0);                    // decayed
    CHECK(vec.values()[0] == doctest::Approx(1.0));  // 1-d: exempt
    CHECK(ice.values() == std::vector<double>({5, 5}));
    CHECK(grads.slots[2].empty());  // no buffer allocated for frozen slots
}
