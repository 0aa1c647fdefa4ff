#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "srcnet/autodiff.hpp"
#include "srcnet/coding.hpp"
#include "srcnet/lif_layer.hpp"
#include "srcnet/metrics.hpp"
#include "srcnet/rng.hpp"
#include "srcnet/src_layer.hpp"

namespace srcnet {

enum class NeuronKind { SRC, LIF };

inline const char* neuron_name(NeuronKind k) {
    return k == NeuronKind::SRC ? "src" : "lif";
}

inline NeuronKind neuron_from_name(const std::string& s) {
    if (s == "src" || s == "SRC") return NeuronKind::SRC;
    if (s == "lif" || s == "LIF") return NeuronKind::LIF;
    usage_error("unknown neuron kind '" + s + "' (expected src or lif)");
}

// Stack of spiking layers followed by a frozen readout of leaky
// integrators, one per class. Hidden layers use hidden_width; the final
// spiking layer always has group_size neurons per class. Readout row c
// carries weight +1 for the neurons of group c and -0.1 elsewhere.
struct NetworkConfig {
    NeuronKind kind = NeuronKind::SRC;
    std::size_t input_size = 0;
    std::size_t num_classes = 10;
    std::size_t num_layers = 1;
    std::size_t hidden_width = 512;
    std::size_t group_size = 10;
    double readout_leak = 0.99;
    double excitatory = 1.0;
    double inhibitory = -0.1;
    double alpha = 0.9;           // integrator / membrane leak init
    double noise_sigma = 0.0;     // SRC: training-time noise on r, r_s
    double surrogate_slope = 2.0; // LIF

    std::size_t final_width() const { return group_size * num_classes; }

    std::size_t layer_in(std::size_t l) const {
        return l == 0 ? input_size : hidden_width;
    }
    std::size_t layer_out(std::size_t l) const {
        return l + 1 == num_layers ? final_width() : hidden_width;
    }

    void validate() const {
        if (input_size == 0 || num_classes == 0 || num_layers == 0 ||
            hidden_width == 0 || group_size == 0)
            config_error("network: sizes must be positive");
    }
};

struct Network {
    NetworkConfig cfg;
    std::vector<SrcParams> src_layers;
    std::vector<LifParams> lif_layers;
    Tensor readout_W; // frozen, (num_classes, final_width)

    std::size_t num_layers() const { return cfg.num_layers; }

    // learnable parameter registry, in a fixed order shared by the
    // optimizer, checkpoints and tape bindings
    struct ParamRef {
        std::string name;
        Tensor* tensor;
        bool is_src_bias;
    };

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        for (std::size_t l = 0; l < src_layers.size(); ++l) {
            out.push_back({"layer" + std::to_string(l) + ".W_s", &src_layers[l].W_s, false});
            out.push_back({"layer" + std::to_string(l) + ".b_h", &src_layers[l].b_h, true});
        }
        for (std::size_t l = 0; l < lif_layers.size(); ++l) {
            auto tag = "layer" + std::to_string(l);
            out.push_back({tag + ".W", &lif_layers[l].W, false});
            out.push_back({tag + ".alpha_V", &lif_layers[l].alpha_V, false});
            out.push_back({tag + ".V_thresh", &lif_layers[l].V_thresh, false});
        }
        return out;
    }

    // post-optimizer constraint: b_h never exceeds b_h_max
    void clamp_biases() {
        for (auto& layer : src_layers) clamp_bias(layer);
    }
};

inline Tensor make_readout_weights(const NetworkConfig& cfg) {
    Tensor W = Tensor::full({cfg.num_classes, cfg.final_width()}, cfg.inhibitory);
    for (std::size_t c = 0; c < cfg.num_classes; ++c)
        for (std::size_t k = 0; k < cfg.group_size; ++k)
            W.at(c, c * cfg.group_size + k) = cfg.excitatory;
    return W;
}

// one leaky-integrator update: u <- leak * u + W_readout * spikes
inline void readout_step(const Tensor& readout_W, double leak, Tensor& u,
                         const Tensor& spikes) {
    std::size_t classes = readout_W.shape[0], width = readout_W.shape[1];
    for (std::size_t c = 0; c < classes; ++c) {
        double acc = 0.0;
        const double* row = readout_W.data.data() + c * width;
        for (std::size_t j = 0; j < width; ++j) acc += row[j] * spikes[j];
        u[c] = leak * u[c] + acc;
    }
}

inline void xavier_uniform(Tensor& W, Rng& rng) {
    double fan_in = static_cast<double>(W.shape[1]);
    double fan_out = static_cast<double>(W.shape[0]);
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : W.data) v = rng.uniform(-bound, bound);
}

inline Network build_network(const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    Network net;
    net.cfg = cfg;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        std::size_t in = cfg.layer_in(l), out = cfg.layer_out(l);
        if (cfg.kind == NeuronKind::SRC) {
            SrcParams p = SrcParams::make(in, out, cfg.alpha);
            p.noise_sigma = cfg.noise_sigma;
            xavier_uniform(p.W_s, rng);
            net.src_layers.push_back(std::move(p));
        } else {
            LifParams p = LifParams::make(in, out, cfg.alpha);
            p.surrogate_slope = cfg.surrogate_slope;
            xavier_uniform(p.W, rng);
            net.lif_layers.push_back(std::move(p));
        }
    }
    net.readout_W = make_readout_weights(cfg);
    return net;
}

inline int predict(const Tensor& logits) {
    int best = 0;
    for (std::size_t i = 1; i < logits.numel(); ++i)
        if (logits[i] > logits[best]) best = static_cast<int>(i);
    return best; // ties keep the lowest index
}

inline double cross_entropy_loss(const Tensor& logits, int target) {
    if (target < 0 || static_cast<std::size_t>(target) >= logits.numel())
        data_error("cross_entropy_loss: target " + std::to_string(target) +
                   " out of range for " + std::to_string(logits.numel()) + " classes");
    double m = logits[0];
    for (double v : logits.data) m = std::max(m, v);
    double lse = 0.0;
    for (double v : logits.data) lse += std::exp(v - m);
    return m + std::log(lse) - logits[static_cast<std::size_t>(target)];
}

struct ForwardResult {
    Tensor logits;
    std::vector<ActivityRecord> activity; // one record per spiking layer
};

// Inference path: plain numeric steps, no tape. Noise on r/r_s is a
// training-time device, so this path always uses the fixed gains.
inline ForwardResult forward_sequence(const Network& net, const SpikeTensor& spikes,
                                      bool record_activity = true) {
    if (spikes.features != net.cfg.input_size)
        data_error("forward_sequence: input features " + std::to_string(spikes.features) +
                   " != network input size " + std::to_string(net.cfg.input_size));

    std::size_t L = net.num_layers();
    ForwardResult res;
    res.logits = Tensor::zeros({net.cfg.num_classes});
    if (record_activity) {
        res.activity.reserve(L);
        for (std::size_t l = 0; l < L; ++l)
            res.activity.push_back(
                ActivityRecord::zeros(spikes.T, net.cfg.layer_out(l)));
    }

    std::vector<SrcState> src_states;
    std::vector<LifState> lif_states;
    for (std::size_t l = 0; l < L; ++l) {
        if (net.cfg.kind == NeuronKind::SRC)
            src_states.push_back(SrcState::zeros(net.cfg.layer_out(l)));
        else
            lif_states.push_back(LifState::zeros(net.cfg.layer_out(l)));
    }

    Tensor u = Tensor::zeros({net.cfg.num_classes});
    Tensor s = Tensor::zeros({spikes.features});
    for (std::size_t t = 0; t < spikes.T; ++t) {
        std::copy(spikes.step(t), spikes.step(t) + spikes.features, s.data.begin());
        Tensor cur = s;
        for (std::size_t l = 0; l < L; ++l) {
            if (net.cfg.kind == NeuronKind::SRC) {
                auto [ns, out] = src_step(net.src_layers[l], src_states[l], cur);
                src_states[l] = std::move(ns);
                cur = std::move(out);
            } else {
                auto [ns, out] = lif_step(net.lif_layers[l], lif_states[l], cur);
                lif_states[l] = std::move(ns);
                cur = std::move(out);
            }
            if (record_activity)
                std::copy(cur.data.begin(), cur.data.end(),
                          res.activity[l].data.begin() + t * cur.numel());
        }
        // frozen leaky-integrator readout
        readout_step(net.readout_W, net.cfg.readout_leak, u, cur);
    }
    res.logits = std::move(u);
    return res;
}

// ------------------------------------------------------------------------
// tape path for training

// Leaves are created in the same order as Network::params(), so gradients
// can be collected positionally after backward.
struct TapeBinding {
    std::vector<Var> leaves;
};

struct TapeForward {
    Var loss;
    Var logits;
    TapeBinding binding;
};

// Builds the full unrolled sequence, loss included. When the network is a
// noisy SRC (noise_sigma > 0) and an rng is supplied, fresh r/r_s draws are
// injected per timestep per layer.
inline TapeForward network_loss_tape(Tape& tape, Network& net, const SpikeTensor& spikes,
                                     int target, Rng* noise_rng = nullptr) {
    if (spikes.features != net.cfg.input_size)
        data_error("network_loss_tape: input features " +
                   std::to_string(spikes.features) + " != network input size " +
                   std::to_string(net.cfg.input_size));

    std::size_t L = net.num_layers();
    TapeForward fw;

    std::vector<SrcTapeRefs> src_refs;
    std::vector<LifTapeRefs> lif_refs;
    if (net.cfg.kind == NeuronKind::SRC) {
        for (auto& layer : net.src_layers) {
            SrcTapeRefs r{tape.leaf(layer.W_s), tape.leaf(layer.b_h)};
            fw.binding.leaves.push_back(r.W);
            fw.binding.leaves.push_back(r.b);
            src_refs.push_back(r);
        }
    } else {
        for (auto& layer : net.lif_layers) {
            LifTapeRefs r{tape.leaf(layer.W), tape.leaf(layer.alpha_V),
                          tape.leaf(layer.V_thresh)};
            fw.binding.leaves.push_back(r.W);
            fw.binding.leaves.push_back(r.alpha_V);
            fw.binding.leaves.push_back(r.V_thresh);
            lif_refs.push_back(r);
        }
    }

    // readout weights are frozen: a constant, not a leaf
    Var w_readout = tape.constant(net.readout_W);

    std::vector<SrcTapeState> src_states;
    std::vector<LifTapeState> lif_states;
    for (std::size_t l = 0; l < L; ++l) {
        if (net.cfg.kind == NeuronKind::SRC)
            src_states.push_back(src_tape_initial_state(tape, net.src_layers[l]));
        else
            lif_states.push_back(lif_tape_initial_state(tape, net.lif_layers[l]));
    }

    const bool noisy = net.cfg.kind == NeuronKind::SRC && net.cfg.noise_sigma > 0.0 &&
                       noise_rng != nullptr;

    Var u = tape.constant(Tensor::zeros({net.cfg.num_classes}));
    for (std::size_t t = 0; t < spikes.T; ++t) {
        Tensor step(Tensor::zeros({spikes.features}));
        std::copy(spikes.step(t), spikes.step(t) + spikes.features, step.data.begin());
        Var cur = tape.constant(std::move(step));
        for (std::size_t l = 0; l < L; ++l) {
            if (net.cfg.kind == NeuronKind::SRC) {
                const SrcParams& p = net.src_layers[l];
                if (noisy) {
                    Tensor r_draw(Tensor::zeros({p.out_size}));
                    Tensor rs_draw(Tensor::zeros({p.out_size}));
                    for (std::size_t k = 0; k < p.out_size; ++k) {
                        r_draw[k] = noise_rng->normal(p.mu_r, p.noise_sigma);
                        rs_draw[k] = noise_rng->normal(p.mu_rs, p.noise_sigma);
                    }
                    cur = src_step_tape(tape, p, src_refs[l], src_states[l], cur,
                                        &r_draw, &rs_draw);
                } else {
                    cur = src_step_tape(tape, p, src_refs[l], src_states[l], cur);
                }
            } else {
                cur = lif_step_tape(tape, net.lif_layers[l], lif_refs[l], lif_states[l],
                                    cur);
            }
        }
        u = add(scale(u, net.cfg.readout_leak), matvec(w_readout, cur));
    }

    fw.logits = u;
    fw.loss = softmax_cross_entropy(u, target);
    return fw;
}

// ------------------------------------------------------------------------
// checkpoints

inline nlohmann::json network_config_json(const NetworkConfig& cfg) {
    return nlohmann::json{{"kind", neuron_name(cfg.kind)},
                          {"input_size", cfg.input_size},
                          {"num_classes", cfg.num_classes},
                          {"num_layers", cfg.num_layers},
                          {"hidden_width", cfg.hidden_width},
                          {"group_size", cfg.group_size},
                          {"readout_leak", cfg.readout_leak},
                          {"excitatory", cfg.excitatory},
                          {"inhibitory", cfg.inhibitory},
                          {"alpha", cfg.alpha},
                          {"noise_sigma", cfg.noise_sigma},
                          {"surrogate_slope", cfg.surrogate_slope}};
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
    NetworkConfig cfg;
    cfg.kind = neuron_from_name(j.at("kind").get<std::string>());
    cfg.input_size = j.at("input_size").get<std::size_t>();
    cfg.num_classes = j.at("num_classes").get<std::size_t>();
    cfg.num_layers = j.at("num_layers").get<std::size_t>();
    cfg.hidden_width = j.at("hidden_width").get<std::size_t>();
    cfg.group_size = j.at("group_size").get<std::size_t>();
    cfg.readout_leak = j.at("readout_leak").get<double>();
    cfg.excitatory = j.at("excitatory").get<double>();
    cfg.inhibitory = j.at("inhibitory").get<double>();
    cfg.alpha = j.at("alpha").get<double>();
    cfg.noise_sigma = j.value("noise_sigma", 0.0);
    cfg.surrogate_slope = j.value("surrogate_slope", 2.0);
    return cfg;
}

constexpr int kCheckpointVersion = 1;

// JSON container: config echo + named learnable blobs. The readout is
// reconstructed from the config (it is deterministic and frozen).
inline void save_checkpoint(Network& net, const std::string& path) {
    nlohmann::json j;
    j["format"] = "srcnet-checkpoint";
    j["version"] = kCheckpointVersion;
    j["config"] = network_config_json(net.cfg);
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : net.params()) {
        params.push_back({{"name", p.name},
                          {"shape", p.tensor->shape},
                          {"data", p.tensor->data}});
    }
    j["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) data_error("cannot write checkpoint: " + path);
    out << j.dump(1, '\t') << "\n";
}

inline Network load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) data_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        data_error("malformed checkpoint " + path + ": " + e.what());
    }
    if (j.value("format", "") != "srcnet-checkpoint")
        data_error("not a srcnet checkpoint: " + path);
    if (j.value("version", 0) != kCheckpointVersion)
        data_error("unsupported checkpoint version in " + path);

    NetworkConfig cfg = network_config_from_json(j.at("config"));
    Rng dummy(0);
    Network net = build_network(cfg, dummy);
    auto refs = net.params();
    const auto& params = j.at("params");
    if (params.size() != refs.size())
        data_error("checkpoint parameter count mismatch in " + path);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto& pj = params[i];
        if (pj.at("name").get<std::string>() != refs[i].name)
            data_error("checkpoint parameter order mismatch: expected " + refs[i].name);
        auto shape = pj.at("shape").get<std::vector<std::size_t>>();
        auto data = pj.at("data").get<std::vector<double>>();
        if (shape != refs[i].tensor->shape)
            data_error("checkpoint shape mismatch for " + refs[i].name);
        if (data.size() != Tensor::numel_of(shape))
            data_error("checkpoint data length mismatch for " + refs[i].name);
        refs[i].tensor->data = std::move(data);
    }
    return net;
}

} // namespace srcnet
