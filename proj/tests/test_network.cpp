#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "srcnet/network.hpp"
#include "test_helpers.hpp"

using namespace srcnet;
using Catch::Approx;

namespace {

NetworkConfig small_src_cfg() {
    NetworkConfig cfg;
    cfg.kind = NeuronKind::SRC;
    cfg.input_size = 12;
    cfg.num_classes = 10;
    cfg.num_layers = 1;
    cfg.hidden_width = 16;
    return cfg;
}

SpikeTensor one_spike_at(std::size_t T, std::size_t features, std::size_t t,
                         std::size_t f) {
    SpikeTensor st = SpikeTensor::zeros(T, features);
    st.at(t, f) = 1.0;
    return st;
}

} // namespace

TEST_CASE("readout has the documented block structure", "[network]") {
    NetworkConfig cfg = small_src_cfg(); // final width 100
    Rng rng(1);
    Network net = build_network(cfg, rng);
    REQUIRE(net.readout_W.shape == std::vector<std::size_t>({10, 100}));
    for (std::size_t c = 0; c < 10; ++c)
        for (std::size_t j = 0; j < 100; ++j) {
            bool in_group = j >= 10 * c && j < 10 * (c + 1);
            CHECK(net.readout_W.at(c, j) == (in_group ? 1.0 : -0.1));
        }
}

TEST_CASE("xavier bound matches the fan rule", "[network]") {
    double bound = std::sqrt(6.0 / (784.0 + 512.0));
    Rng rng(3);
    Tensor W = Tensor::zeros({512, 784});
    xavier_uniform(W, rng);
    double hi = 0.0;
    for (double v : W.data) hi = std::max(hi, std::abs(v));
    CHECK(hi <= bound);
    CHECK(hi > 0.9 * bound); // the draw actually spans the range
}

TEST_CASE("same seed builds identical networks", "[network]") {
    NetworkConfig cfg = small_src_cfg();
    Rng r1(42), r2(42), r3(43);
    Network a = build_network(cfg, r1);
    Network b = build_network(cfg, r2);
    Network c = build_network(cfg, r3);
    CHECK(a.src_layers[0].W_s.data == b.src_layers[0].W_s.data);
    CHECK(a.src_layers[0].W_s.data != c.src_layers[0].W_s.data);
}

TEST_CASE("silent input yields zero logits", "[network]") {
    NetworkConfig cfg = small_src_cfg();
    Rng rng(5);
    Network net = build_network(cfg, rng);
    // weights can't matter if nothing ever spikes into the readout: use a
    // fresh SRC net and an all-zero input; the layer itself stays silent
    // (bias -6), so the integrators never move
    SpikeTensor quiet = SpikeTensor::zeros(40, 12);
    ForwardResult res = forward_sequence(net, quiet);
    for (double v : res.logits.data) CHECK(v == 0.0);
    CHECK(res.activity.size() == 1);
    CHECK(res.activity[0].T == 40);
}

TEST_CASE("readout integrates a single spike as traced by hand", "[network]") {
    // drive the readout directly with a hand-made last-layer spike train
    NetworkConfig cfg = small_src_cfg();
    Tensor W = make_readout_weights(cfg);

    auto integrate = [&](const SpikeTensor& s) {
        Tensor u = Tensor::zeros({cfg.num_classes});
        Tensor step = Tensor::zeros({cfg.final_width()});
        for (std::size_t t = 0; t < s.T; ++t) {
            std::copy(s.step(t), s.step(t) + s.features, step.data.begin());
            readout_step(W, cfg.readout_leak, u, step);
        }
        return u;
    };

    const std::size_t T = 30;
    // spike of value 1 from a neuron of group 3 at the final timestep
    Tensor at_end = integrate(one_spike_at(T, cfg.final_width(), T - 1, 3 * 10 + 2));
    CHECK(at_end[3] == Approx(1.0));
    for (std::size_t c = 0; c < 10; ++c)
        if (c != 3) CHECK(at_end[c] == Approx(-0.1));

    // same spike one step earlier leaks once
    Tensor earlier = integrate(one_spike_at(T, cfg.final_width(), T - 2, 3 * 10 + 2));
    CHECK(earlier[3] == Approx(0.99));
    CHECK(predict(earlier) == 3);
}

TEST_CASE("cross entropy against frozen values", "[network]") {
    Tensor uniform = Tensor::full({10}, 1.7);
    CHECK(cross_entropy_loss(uniform, 6) == Approx(std::log(10.0)).epsilon(1e-12));

    Tensor big = Tensor::vector({1000.0, 0.0});
    CHECK(std::isfinite(cross_entropy_loss(big, 0)));
    CHECK(cross_entropy_loss(big, 0) == Approx(0.0).margin(1e-9));

    Tensor three = Tensor::vector({1.0, 0.0, 0.0});
    CHECK(cross_entropy_loss(three, 0) == Approx(0.55144).margin(1e-5));

    CHECK_THROWS_AS(cross_entropy_loss(three, 5), Error);
}

TEST_CASE("loss is invariant under logit shifts", "[network]") {
    Tensor logits = Tensor::vector({0.3, -1.2, 4.0, 0.9});
    double base = cross_entropy_loss(logits, 2);
    for (double shift : {-500.0, -3.0, 7.5, 300.0}) {
        Tensor shifted = logits;
        for (double& v : shifted.data) v += shift;
        CHECK(cross_entropy_loss(shifted, 2) == Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("predict breaks ties toward the lowest index", "[network]") {
    CHECK(predict(Tensor::vector({0.1, 0.9, 0.3})) == 1);
    CHECK(predict(Tensor::vector({0.5, 0.5})) == 0);
    CHECK(predict(Tensor::zeros({10})) == 0);

    // invariance under positive affine rescale
    Tensor logits = Tensor::vector({0.2, -0.4, 1.9, 1.2});
    int base = predict(logits);
    Tensor scaled = logits;
    for (double& v : scaled.data) v = 3.7 * v + 11.0;
    CHECK(predict(scaled) == base);
}

TEST_CASE("gradients reach every learnable of a stacked SRC net", "[network]") {
    NetworkConfig cfg;
    cfg.kind = NeuronKind::SRC;
    cfg.input_size = 6;
    cfg.num_classes = 2;
    cfg.group_size = 3; // final width 6
    cfg.num_layers = 3;
    cfg.hidden_width = 5;
    Rng rng(9);
    Network net = build_network(cfg, rng);
    // warm the biases into the firing regime so every layer emits spikes;
    // a silent layer legitimately passes zero gradient into its fan-in
    for (auto& layer : net.src_layers) layer.b_h.fill(-4.0);

    SpikeTensor spikes = SpikeTensor::zeros(40, 6);
    Rng srng(17);
    for (double& v : spikes.data) v = srng.bernoulli(0.5) ? 1.0 : 0.0;

    Tape tape;
    TapeForward fw = network_loss_tape(tape, net, spikes, 1);
    tape.backward(fw.loss);
    REQUIRE(fw.binding.leaves.size() == 6); // W_s + b_h per layer
    for (std::size_t k = 0; k < fw.binding.leaves.size(); ++k) {
        Tensor g = tape.grad(fw.binding.leaves[k]);
        double sum = 0.0;
        for (double v : g.data) sum += std::abs(v);
        INFO("leaf " << k);
        CHECK(sum > 0.0); // no all-zero gradient block
    }
}

TEST_CASE("readout stays bit-identical through training updates", "[network]") {
    NetworkConfig cfg = small_src_cfg();
    Rng rng(21);
    Network net = build_network(cfg, rng);
    Tensor before = net.readout_W;

    // poke every learnable; the readout must not be among them
    for (auto& p : net.params())
        for (double& v : p.tensor->data) v += 0.123;
    CHECK(net.readout_W.data == before.data);
}

TEST_CASE("checkpoint round trip preserves parameters and config", "[network]") {
    NetworkConfig cfg;
    cfg.kind = NeuronKind::LIF;
    cfg.input_size = 9;
    cfg.num_classes = 3;
    cfg.group_size = 4;
    cfg.num_layers = 2;
    cfg.hidden_width = 7;
    Rng rng(33);
    Network net = build_network(cfg, rng);

    auto path = (std::filesystem::temp_directory_path() / "srcnet_ckpt.json").string();
    save_checkpoint(net, path);
    Network back = load_checkpoint(path);

    CHECK(back.cfg.kind == NeuronKind::LIF);
    CHECK(back.cfg.hidden_width == 7);
    REQUIRE(back.lif_layers.size() == 2);
    CHECK(back.lif_layers[0].W.data == net.lif_layers[0].W.data);
    CHECK(back.lif_layers[1].alpha_V[0] == net.lif_layers[1].alpha_V[0]);
    CHECK(back.readout_W.data == net.readout_W.data);

    // forward agreement on a random input
    SpikeTensor spikes = SpikeTensor::zeros(10, 9);
    Rng srng(3);
    for (double& v : spikes.data) v = srng.bernoulli(0.3) ? 1.0 : 0.0;
    ForwardResult a = forward_sequence(net, spikes);
    ForwardResult b = forward_sequence(back, spikes);
    CHECK(a.logits.data == b.logits.data);
}

TEST_CASE("mismatched input width is rejected", "[network]") {
    NetworkConfig cfg = small_src_cfg();
    Rng rng(2);
    Network net = build_network(cfg, rng);
    SpikeTensor wrong = SpikeTensor::zeros(5, 13);
    CHECK_THROWS_AS(forward_sequence(net, wrong), Error);
}
