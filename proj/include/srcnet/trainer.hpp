#pragma once

#include <algorithm>
#include <atomic>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "srcnet/coding.hpp"
#include "srcnet/data.hpp"
#include "srcnet/metrics.hpp"
#include "srcnet/network.hpp"
#include "srcnet/rng.hpp"

namespace srcnet {

struct TrainConfig {
    int epochs = 100;
    std::size_t batch_size = 64;
    double lr_init = 0.005;
    double clip_norm = 1.0;
    double valid_fraction = 0.10;
    std::uint64_t seed = 1;
    std::size_t threads = 0; // 0 = hardware concurrency

    CodingKind coding = CodingKind::rate;
    CodingConfig coding_cfg; // T, gain, tau, v_th
};

// Deterministic shuffled index split: disjoint, exhaustive, 90/10 default.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double valid_fraction, std::uint64_t seed) {
    if (n == 0) data_error("split_dataset: empty dataset");
    if (valid_fraction <= 0.0 || valid_fraction >= 1.0)
        config_error("split_dataset: valid_fraction must be in (0, 1)");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, 0x5917));
    shuffle_in_place(idx, rng);
    auto n_valid = static_cast<std::size_t>(std::llround(valid_fraction * n));
    n_valid = std::min(std::max<std::size_t>(n_valid, 1), n - 1);
    std::vector<std::size_t> valid(idx.begin(), idx.begin() + n_valid);
    std::vector<std::size_t> train(idx.begin() + n_valid, idx.end());
    return {std::move(train), std::move(valid)};
}

inline std::pair<ImageDataset, ImageDataset> split_dataset(const ImageDataset& data,
                                                           double valid_fraction,
                                                           std::uint64_t seed) {
    auto [train_idx, valid_idx] = split_indices(data.n, valid_fraction, seed);
    return {data.subset(train_idx), data.subset(valid_idx)};
}

// Global-norm clipping: if ||g||_2 > clip_norm, scale every gradient by
// clip_norm / ||g||_2.
inline void clip_gradients(std::vector<Tensor>& grads, double clip_norm) {
    if (clip_norm <= 0.0) config_error("clip_gradients: clip_norm must be positive");
    double sq = 0.0;
    for (const Tensor& g : grads) sq += l2_norm_squared(g);
    double norm = std::sqrt(sq);
    if (norm <= clip_norm) return;
    double s = clip_norm / norm;
    for (Tensor& g : grads)
        for (double& v : g.data) v *= s;
}

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int step_count = 0;
    std::vector<Tensor> m, v;

    void init_shapes(const std::vector<Tensor*>& params) {
        m.clear();
        v.clear();
        for (const Tensor* p : params) {
            m.push_back(Tensor::zeros(p->shape));
            v.push_back(Tensor::zeros(p->shape));
        }
        step_count = 0;
    }

    void init(const std::vector<Network::ParamRef>& params) {
        std::vector<Tensor*> t;
        for (const auto& p : params) t.push_back(p.tensor);
        init_shapes(t);
    }
};

// Standard Adam update with bias correction.
inline void adam_update(AdamState& state, const std::vector<Tensor*>& params,
                        const std::vector<Tensor>& grads, double lr) {
    if (state.m.size() != params.size()) state.init_shapes(params);
    if (grads.size() != params.size())
        config_error("adam_update: gradient count mismatch");
    state.step_count += 1;
    double bc1 = 1.0 - std::pow(state.beta1, state.step_count);
    double bc2 = 1.0 - std::pow(state.beta2, state.step_count);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& w = *params[k];
        const Tensor& g = grads[k];
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < w.numel(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

// Network-level step: Adam update followed by the SRC bias clamp, so the
// b_h <= b_h_max invariant holds between steps.
inline void adam_step(AdamState& state, Network& net,
                      const std::vector<Tensor>& grads, double lr) {
    auto refs = net.params();
    std::vector<Tensor*> params;
    for (const auto& p : refs) params.push_back(p.tensor);
    adam_update(state, params, grads, lr);
    net.clamp_biases();
}

inline double cosine_lr(int epoch, int total_epochs, double lr_init) {
    if (epoch < 0 || epoch > total_epochs) config_error("cosine_lr: epoch out of range");
    return lr_init * (1.0 + std::cos(kPi * epoch / total_epochs)) / 2.0;
}

// ------------------------------------------------------------------------

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    double valid_acc = 0.0;
    double epoch_seconds = 0.0;
    std::vector<double> layer_activity; // mean spiking-time fraction per layer
};

struct RunReport {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_valid_acc = 0.0;
    double best_valid_loss = 0.0;

    // filled when a test set is provided
    bool has_test = false;
    double final_test_acc = 0.0;
    double final_test_loss = 0.0;
    double best_test_acc = 0.0;
    double best_test_loss = 0.0;
    std::vector<double> test_activity;

    nlohmann::json to_json() const {
        nlohmann::json j;
        auto arr = [this](auto proj) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& e : epochs) a.push_back(proj(e));
            return a;
        };
        j["train_loss"] = arr([](const EpochStats& e) { return e.train_loss; });
        j["valid_loss"] = arr([](const EpochStats& e) { return e.valid_loss; });
        j["valid_acc"] = arr([](const EpochStats& e) { return e.valid_acc; });
        j["lr"] = arr([](const EpochStats& e) { return e.lr; });
        j["epoch_seconds"] = arr([](const EpochStats& e) { return e.epoch_seconds; });
        nlohmann::json act = nlohmann::json::array();
        for (const auto& e : epochs) act.push_back(e.layer_activity);
        j["mean_spiking_activity"] = std::move(act);
        j["best_epoch"] = best_epoch;
        j["best_valid_acc"] = best_valid_acc;
        j["best_valid_loss"] = best_valid_loss;
        if (has_test) {
            j["final_test_acc"] = final_test_acc;
            j["final_test_loss"] = final_test_loss;
            j["best_test_acc"] = best_test_acc;
            j["best_test_loss"] = best_test_loss;
            j["test_mean_spiking_activity"] = test_activity;
        }
        return j;
    }

    void write_json(const std::string& path) const {
        std::ofstream out(path);
        if (!out) data_error("cannot write report: " + path);
        out << to_json().dump(1, '\t') << "\n";
    }

    // Deterministic columns only: wall-clock timings live in the JSON
    // report, so two runs with the same seed produce byte-identical CSV.
    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) data_error("cannot write report: " + path);
        std::size_t layers = epochs.empty() ? 0 : epochs.front().layer_activity.size();
        out << "epoch,lr,train_loss,valid_loss,valid_acc";
        for (std::size_t l = 0; l < layers; ++l) out << ",activity_layer" << l;
        out << "\r\n";
        char buf[64];
        auto num = [&buf](double v) {
            std::snprintf(buf, sizeof buf, "%.12g", v);
            return std::string(buf);
        };
        for (const auto& e : epochs) {
            out << e.epoch << "," << num(e.lr) << "," << num(e.train_loss) << ","
                << num(e.valid_loss) << "," << num(e.valid_acc);
            for (double a : e.layer_activity) out << "," << num(a);
            out << "\r\n";
        }
    }
};

struct TrainHooks {
    // called after every optimizer step (gradient update + bias clamp)
    std::function<void(const Network&, int step_index)> after_optimizer_step;
};

namespace detail {

inline std::size_t resolve_threads(std::size_t requested, std::size_t jobs) {
    std::size_t t = requested;
    if (t == 0) {
        unsigned hc = std::thread::hardware_concurrency();
        t = hc == 0 ? 1 : hc;
    }
    return std::max<std::size_t>(1, std::min({t, jobs, std::size_t{16}}));
}

// Runs fn(i) for i in [0, jobs) on a small thread pool. Work items are
// independent; determinism comes from each item writing only its own slot.
template <typename Fn>
void parallel_for(std::size_t jobs, std::size_t threads, Fn&& fn) {
    threads = resolve_threads(threads, jobs);
    if (threads <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= jobs) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// per-sample encoding seed: training draws differ across epochs,
// evaluation draws depend only on the sample
inline std::uint64_t encode_seed(std::uint64_t base, std::uint64_t epoch,
                                 std::uint64_t sample) {
    return derive_seed(base, 0xC0D1 + epoch, sample);
}

inline SpikeTensor encode_sample(const ImageDataset& ds, std::size_t i,
                                 CodingKind kind, const CodingConfig& cfg,
                                 std::uint64_t seed) {
    if (kind == CodingKind::rate) {
        Rng rng(seed);
        return rate_encode(ds.image(i), cfg, rng);
    }
    return latency_encode(ds.image(i), cfg);
}

struct EvalResult {
    double loss = 0.0;
    double acc = 0.0;
    std::vector<double> activity;
    std::vector<int> predictions;
};

inline EvalResult evaluate(Network& net, const ImageDataset& ds, CodingKind kind,
                           const CodingConfig& coding_cfg, std::uint64_t seed,
                           std::size_t threads) {
    if (ds.n == 0) data_error("evaluate: empty dataset");
    EvalResult res;
    std::size_t L = net.num_layers();
    std::vector<double> losses(ds.n, 0.0);
    std::vector<int> preds(ds.n, 0);
    std::vector<std::vector<double>> acts(ds.n);
    parallel_for(ds.n, threads, [&](std::size_t i) {
        SpikeTensor spikes = encode_sample(ds, i, kind, coding_cfg,
                                           encode_seed(seed, 0, i));
        ForwardResult fr = forward_sequence(net, spikes, true);
        losses[i] = cross_entropy_loss(fr.logits, ds.labels[i]);
        preds[i] = predict(fr.logits);
        acts[i] = mean_activity(fr.activity);
    });
    res.activity.assign(L, 0.0);
    for (std::size_t i = 0; i < ds.n; ++i) {
        res.loss += losses[i];
        for (std::size_t l = 0; l < L; ++l) res.activity[l] += acts[i][l];
    }
    res.loss /= static_cast<double>(ds.n);
    for (double& a : res.activity) a /= static_cast<double>(ds.n);
    res.acc = accuracy(preds, ds.labels);
    res.predictions = std::move(preds);
    return res;
}

} // namespace detail

// Full training loop: shuffle, batch, forward/backward per sample on worker
// threads, deterministic in-order gradient reduction, clip, Adam, bias
// clamp, per-epoch validation, best-checkpoint retention.
//
// Aborts with a numeric error naming the first non-finite tensor if the
// loss stops being finite.
inline RunReport train(Network& net, const ImageDataset& data,
                       const ImageDataset* test_data, const TrainConfig& cfg,
                       const std::string& checkpoint_path = "",
                       const TrainHooks* hooks = nullptr) {
    if (cfg.epochs <= 0) config_error("train: epochs must be positive");
    if (cfg.batch_size == 0) config_error("train: batch_size must be positive");
    data.validate(static_cast<int>(net.cfg.num_classes));
    if (data.features() != net.cfg.input_size)
        config_error("train: dataset features " + std::to_string(data.features()) +
                     " != network input size " + std::to_string(net.cfg.input_size));

    auto [train_set, valid_set] = split_dataset(data, cfg.valid_fraction, cfg.seed);

    auto params = net.params();
    AdamState adam;
    adam.init(params);

    RunReport report;
    int step_index = 0;
    std::vector<Tensor> best_params;
    const bool noisy = net.cfg.kind == NeuronKind::SRC && net.cfg.noise_sigma > 0.0;

    std::vector<std::size_t> order(train_set.n);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t_start = std::chrono::steady_clock::now();
        double lr = cosine_lr(epoch, cfg.epochs, cfg.lr_init);

        Rng shuffle_rng(derive_seed(cfg.seed, 0x5F0F + epoch));
        shuffle_in_place(order, shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < train_set.n; start += cfg.batch_size) {
            std::size_t count = std::min(cfg.batch_size, train_set.n - start);

            std::vector<double> sample_loss(count, 0.0);
            std::vector<std::vector<Tensor>> sample_grads(count);
            std::vector<std::string> bad_tensor(count);

            detail::parallel_for(count, cfg.threads, [&](std::size_t s) {
                std::size_t di = order[start + s];
                std::uint64_t eseed =
                    detail::encode_seed(cfg.seed, 1 + epoch, di);
                SpikeTensor spikes = detail::encode_sample(
                    train_set, di, cfg.coding, cfg.coding_cfg, eseed);
                Rng noise_rng(derive_seed(cfg.seed, 0xA01 + epoch, di));
                Tape tape;
                TapeForward fw = network_loss_tape(tape, net, spikes,
                                                   train_set.labels[di],
                                                   noisy ? &noise_rng : nullptr);
                double loss = tape.value(fw.loss)[0];
                sample_loss[s] = loss;
                if (!std::isfinite(loss)) {
                    int bad = tape.first_nonfinite();
                    bad_tensor[s] = bad >= 0
                        ? tape.describe(static_cast<std::uint32_t>(bad))
                        : "loss";
                    return;
                }
                tape.backward(fw.loss);
                auto& grads = sample_grads[s];
                grads.reserve(fw.binding.leaves.size());
                for (Var leaf : fw.binding.leaves) grads.push_back(tape.grad(leaf));
            });

            for (std::size_t s = 0; s < count; ++s) {
                if (!std::isfinite(sample_loss[s]))
                    numeric_error("non-finite loss at epoch " + std::to_string(epoch) +
                                  ", step " + std::to_string(step_index) +
                                  "; first non-finite tensor: " + bad_tensor[s]);
            }

            // reduce in sample order: deterministic regardless of thread count
            std::vector<Tensor> grads;
            grads.reserve(params.size());
            for (std::size_t k = 0; k < params.size(); ++k)
                grads.push_back(Tensor::zeros(params[k].tensor->shape));
            for (std::size_t s = 0; s < count; ++s)
                for (std::size_t k = 0; k < params.size(); ++k) {
                    const Tensor& g = sample_grads[s][k];
                    Tensor& acc = grads[k];
                    for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
                }
            // mean-loss convention: average gradients over the batch
            for (Tensor& g : grads)
                for (double& v : g.data) v /= static_cast<double>(count);

            clip_gradients(grads, cfg.clip_norm);
            adam_step(adam, net, grads, lr);
            ++step_index;
#ifndef NDEBUG
            for (const auto& layer : net.src_layers)
                for (double b : layer.b_h.data) assert(b <= layer.b_h_max + 1e-15);
#endif
            if (hooks && hooks->after_optimizer_step)
                hooks->after_optimizer_step(net, step_index);

            for (std::size_t s = 0; s < count; ++s) epoch_loss += sample_loss[s];
            seen += count;
        }

        detail::EvalResult val = detail::evaluate(net, valid_set, cfg.coding,
                                                  cfg.coding_cfg, cfg.seed,
                                                  cfg.threads);

        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        es.train_loss = epoch_loss / static_cast<double>(seen);
        es.valid_loss = val.loss;
        es.valid_acc = val.acc;
        es.layer_activity = val.activity;
        es.epoch_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                .count();
        report.epochs.push_back(es);

        bool improved = report.best_epoch < 0 || val.acc > report.best_valid_acc ||
                        (val.acc == report.best_valid_acc &&
                         val.loss < report.best_valid_loss);
        if (improved) {
            report.best_epoch = epoch;
            report.best_valid_acc = val.acc;
            report.best_valid_loss = val.loss;
            best_params.clear();
            for (const auto& p : params) best_params.push_back(*p.tensor);
            if (!checkpoint_path.empty()) save_checkpoint(net, checkpoint_path);
        }
    }

    if (test_data) {
        report.has_test = true;
        detail::EvalResult fin = detail::evaluate(net, *test_data, cfg.coding,
                                                  cfg.coding_cfg, cfg.seed,
                                                  cfg.threads);
        report.final_test_acc = fin.acc;
        report.final_test_loss = fin.loss;
        report.test_activity = fin.activity;

        // swap in the best-validation weights for the second measurement
        std::vector<Tensor> final_params;
        for (const auto& p : params) final_params.push_back(*p.tensor);
        for (std::size_t k = 0; k < params.size(); ++k) *params[k].tensor = best_params[k];
        detail::EvalResult best = detail::evaluate(net, *test_data, cfg.coding,
                                                   cfg.coding_cfg, cfg.seed,
                                                   cfg.threads);
        report.best_test_acc = best.acc;
        report.best_test_loss = best.loss;
        for (std::size_t k = 0; k < params.size(); ++k) *params[k].tensor = final_params[k];
    }

    return report;
}

} // namespace srcnet
