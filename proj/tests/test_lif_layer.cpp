#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "srcnet/autodiff.hpp"
#include "srcnet/lif_layer.hpp"
#include "srcnet/rng.hpp"
#include "test_helpers.hpp"

using namespace srcnet;
using Catch::Approx;

TEST_CASE("threshold crossing spikes and resets", "[lif_layer]") {
    LifParams p = LifParams::make(1, 1);
    p.W[0] = 1.2;
    LifState s = LifState::zeros(1);
    auto [next, out] = lif_step(p, s, Tensor::vector({1.0}));
    CHECK(out[0] == 1.0);
    CHECK(next.V[0] == 0.0); // hard reset to V_rest
}

TEST_CASE("zero input never spikes", "[lif_layer]") {
    LifParams p = LifParams::make(2, 3);
    LifState s = LifState::zeros(3);
    for (int t = 0; t < 50; ++t) {
        auto [next, out] = lif_step(p, s, Tensor::zeros({2}));
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(out[k] == 0.0);
            CHECK(next.V[k] == 0.0);
        }
        s = std::move(next);
    }
}

TEST_CASE("subthreshold membrane decays geometrically", "[lif_layer]") {
    LifParams p = LifParams::make(1, 1); // W stays zero
    LifState s = LifState::zeros(1);
    s.V[0] = 1.0;
    // V_thresh is 1.0 and the condition is strict, so no spike fires
    auto [next, out] = lif_step(p, s, Tensor::vector({0.0}));
    CHECK(out[0] == 0.0);
    CHECK(next.V[0] == Approx(0.9));

    double v = 1.0;
    LifState state = LifState::zeros(1);
    state.V[0] = v;
    for (int t = 1; t <= 20; ++t) {
        auto [n2, o2] = lif_step(p, state, Tensor::vector({0.0}));
        state = std::move(n2);
        CHECK(state.V[0] == Approx(std::pow(0.9, t) * 1.0).epsilon(1e-12));
    }
}

TEST_CASE("outputs are exactly binary", "[lif_layer]") {
    LifParams p = LifParams::make(4, 5);
    Rng rng(99);
    for (double& w : p.W.data) w = rng.uniform(-2.0, 2.0);
    LifState s = LifState::zeros(5);
    for (int t = 0; t < 200; ++t) {
        Tensor in = Tensor::zeros({4});
        for (double& v : in.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        auto [next, out] = lif_step(p, s, in);
        for (double v : out.data) CHECK((v == 0.0 || v == 1.0));
        s = std::move(next);
    }
}

TEST_CASE("surrogate gradient peaks at the threshold and is symmetric",
          "[lif_layer]") {
    auto surrogate = [](double u, double slope) {
        return slope / (kPi * (1.0 + (slope * u) * (slope * u)));
    };
    double peak = surrogate(0.0, 2.0);
    for (double d : {0.1, 0.5, 1.0, 3.0}) {
        CHECK(surrogate(d, 2.0) < peak);
        CHECK(surrogate(d, 2.0) == Approx(surrogate(-d, 2.0)));
    }

    // the tape node applies the same rule around V - V_thresh
    Tape tape;
    Var u = tape.leaf(Tensor::vector({0.0, 0.3, -0.3}));
    tape.backward(sum(atan_spike(u, 2.0)));
    Tensor g = tape.grad(u);
    CHECK(g[0] == Approx(peak));
    CHECK(g[1] == Approx(g[2]));
    CHECK(g[1] < g[0]);
}

TEST_CASE("tape forward matches the plain step", "[lif_layer]") {
    LifParams p = LifParams::make(3, 4);
    Rng rng(17);
    for (double& w : p.W.data) w = rng.uniform(-1.5, 1.5);

    LifState s = LifState::zeros(4);
    Tape tape;
    LifTapeRefs refs{tape.leaf(p.W), tape.leaf(p.alpha_V), tape.leaf(p.V_thresh)};
    LifTapeState ts = lif_tape_initial_state(tape, p);
    for (int t = 0; t < 15; ++t) {
        Tensor in = Tensor::zeros({3});
        for (double& v : in.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        auto [next, out] = lif_step(p, s, in);
        Var v_out = lif_step_tape(tape, p, refs, ts, tape.constant(in));
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(tape.value(v_out)[k] == out[k]);
            CHECK(tape.value(ts.V)[k] == Approx(next.V[k]).margin(1e-14));
        }
        s = std::move(next);
    }
}

TEST_CASE("gradients flow to W, alpha_V and V_thresh", "[lif_layer]") {
    LifParams p = LifParams::make(2, 4);
    Rng rng(3);
    for (double& w : p.W.data) w = rng.uniform(-1.5, 1.5);

    Tape tape;
    LifTapeRefs refs{tape.leaf(p.W), tape.leaf(p.alpha_V), tape.leaf(p.V_thresh)};
    LifTapeState ts = lif_tape_initial_state(tape, p);
    Var acc = tape.constant(Tensor::scalar(0.0));
    Var reader = tape.constant(Tensor::matrix(1, 4, {0.7, -0.4, 1.1, 0.2}));
    for (int t = 0; t < 10; ++t) {
        Tensor in = Tensor::vector({rng.bernoulli(0.7) ? 1.0 : 0.0,
                                    rng.bernoulli(0.7) ? 1.0 : 0.0});
        Var out = lif_step_tape(tape, p, refs, ts, tape.constant(in));
        acc = add(acc, matvec(reader, out));
    }
    tape.backward(sum(acc));

    double wnorm = 0.0;
    for (double v : tape.grad(refs.W).data) wnorm += std::abs(v);
    CHECK(wnorm > 0.0);
    CHECK(std::abs(tape.grad(refs.alpha_V)[0]) > 0.0);
    CHECK(std::abs(tape.grad(refs.V_thresh)[0]) > 0.0);
}

TEST_CASE("width mismatch is rejected", "[lif_layer]") {
    LifParams p = LifParams::make(3, 4);
    CHECK_THROWS_AS(lif_step(p, LifState::zeros(4), Tensor::vector({1.0})), Error);
    CHECK_THROWS_AS(lif_step(p, LifState::zeros(5), Tensor::zeros({3})), Error);
}
