#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srcnet/data.hpp"
#include "srcnet/metrics.hpp"
#include "srcnet/network.hpp"
#include "srcnet/simulate.hpp"
#include "srcnet/trainer.hpp"

namespace srcnet {

// Experiment configuration shared by the train / eval / noise-sweep
// commands; defaults follow the reference hyperparameters.
struct RunConfig {
    // dataset: either IDX paths or the builtin synthetic generator
    std::string train_images, train_labels;
    std::string test_images, test_labels;
    bool synthetic = false;
    std::size_t synth_samples = 200;
    std::size_t synth_classes = 2;
    std::size_t synth_image_size = 8;
    std::size_t subset_train = 0; // 0 = use everything
    std::size_t subset_test = 0;

    CodingKind coding = CodingKind::rate;
    CodingConfig coding_cfg;

    NeuronKind neuron = NeuronKind::SRC;
    std::size_t layers = 1;
    std::size_t hidden_width = 512;
    double alpha = 0.9;
    double noise_sigma = 0.0;

    TrainConfig train_cfg;

    std::string out_dir; // empty -> $SRCNET_OUT or "."
    std::uint64_t seed = 1;

    std::string resolved_out_dir() const {
        if (!out_dir.empty()) return out_dir;
        if (const char* env = std::getenv("SRCNET_OUT")) return env;
        return ".";
    }
};

namespace detail {

inline ImageDataset take_subset(const ImageDataset& ds, std::size_t count,
                                std::uint64_t seed) {
    if (count == 0 || count >= ds.n) return ds;
    std::vector<std::size_t> idx(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, 0x5B5E7));
    shuffle_in_place(idx, rng);
    idx.resize(count);
    return ds.subset(idx);
}

struct LoadedData {
    ImageDataset train;
    ImageDataset test;
    bool has_test = false;
};

inline LoadedData load_run_data(const RunConfig& cfg) {
    LoadedData out;
    if (cfg.synthetic) {
        ImageDataset all = synthetic_dataset(cfg.synth_samples, cfg.synth_classes,
                                             cfg.synth_image_size, cfg.seed);
        // hold out a quarter as the test set
        std::vector<std::size_t> idx(all.n);
        for (std::size_t i = 0; i < all.n; ++i) idx[i] = i;
        std::size_t n_test = all.n / 4;
        std::vector<std::size_t> test_idx(idx.end() - n_test, idx.end());
        idx.resize(all.n - n_test);
        out.train = all.subset(idx);
        if (n_test > 0) {
            out.test = all.subset(test_idx);
            out.has_test = true;
        }
        return out;
    }
    if (cfg.train_images.empty() || cfg.train_labels.empty())
        usage_error("no dataset: pass --images/--labels or --synthetic");
    out.train = load_idx(cfg.train_images, cfg.train_labels);
    out.train = take_subset(out.train, cfg.subset_train, cfg.seed);
    if (!cfg.test_images.empty()) {
        out.test = load_idx(cfg.test_images, cfg.test_labels);
        out.test = take_subset(out.test, cfg.subset_test, derive_seed(cfg.seed, 2));
        out.has_test = true;
    }
    return out;
}

inline std::size_t count_classes(const ImageDataset& ds) {
    int top = 0;
    for (int l : ds.labels) top = std::max(top, l);
    return static_cast<std::size_t>(top) + 1;
}

inline NetworkConfig network_config_for(const RunConfig& cfg, const ImageDataset& train) {
    NetworkConfig nc;
    nc.kind = cfg.neuron;
    nc.input_size = train.features();
    nc.num_classes = count_classes(train);
    nc.num_layers = cfg.layers;
    nc.hidden_width = cfg.hidden_width;
    nc.alpha = cfg.alpha;
    nc.noise_sigma = cfg.noise_sigma;
    return nc;
}

} // namespace detail

struct TrainOutcome {
    RunReport report;
    std::string report_json, report_csv, checkpoint;
};

// Loads data, builds the network, trains, writes report.json / report.csv /
// checkpoint.json into the output directory.
inline TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log = std::cout,
                              const TrainHooks* hooks = nullptr) {
    detail::LoadedData data = detail::load_run_data(cfg);
    data.train.validate();

    NetworkConfig nc = detail::network_config_for(cfg, data.train);
    Rng init_rng(derive_seed(cfg.seed, 0x1417));
    Network net = build_network(nc, init_rng);

    TrainConfig tc = cfg.train_cfg;
    tc.seed = cfg.seed;
    tc.coding = cfg.coding;
    tc.coding_cfg = cfg.coding_cfg;

    std::filesystem::create_directories(cfg.resolved_out_dir());
    TrainOutcome out;
    out.report_json = cfg.resolved_out_dir() + "/report.json";
    out.report_csv = cfg.resolved_out_dir() + "/report.csv";
    out.checkpoint = cfg.resolved_out_dir() + "/checkpoint.json";

    out.report = train(net, data.train, data.has_test ? &data.test : nullptr, tc,
                       out.checkpoint, hooks);
    out.report.write_json(out.report_json);
    out.report.write_csv(out.report_csv);

    if (out.report.has_test) {
        log << "final test accuracy: " << out.report.final_test_acc << "\n";
        log << "best-checkpoint test accuracy: " << out.report.best_test_acc << "\n";
        log << "mean spiking activity per layer:";
        for (double a : out.report.test_activity) log << " " << a;
        log << "\n";
    } else if (!out.report.epochs.empty()) {
        log << "final validation accuracy: " << out.report.epochs.back().valid_acc
            << "\n";
    }
    return out;
}

// Evaluates a checkpoint on a dataset: accuracy, per-layer mean activity,
// confusion matrix.
inline nlohmann::json cmd_eval(const std::string& checkpoint_path,
                               const std::string& images, const std::string& labels,
                               CodingKind coding, const CodingConfig& coding_cfg,
                               std::uint64_t seed, const std::string& out_path = "",
                               std::size_t threads = 0) {
    Network net = load_checkpoint(checkpoint_path);
    ImageDataset ds = load_idx(images, labels);
    if (ds.features() != net.cfg.input_size)
        config_error("checkpoint expects " + std::to_string(net.cfg.input_size) +
                     " inputs but dataset has " + std::to_string(ds.features()));
    ds.validate(static_cast<int>(net.cfg.num_classes));

    detail::EvalResult res =
        detail::evaluate(net, ds, coding, coding_cfg, seed, threads);

    nlohmann::json j;
    j["accuracy"] = res.acc;
    j["loss"] = res.loss;
    j["mean_spiking_activity"] = res.activity;
    j["confusion_matrix"] =
        confusion_matrix(res.predictions, ds.labels,
                         static_cast<int>(net.cfg.num_classes));
    j["samples"] = ds.n;
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) data_error("cannot write metrics: " + out_path);
        out << j.dump(1, '\t') << "\n";
    }
    return j;
}

struct SweepRow {
    double sigma = 0.0;
    double final_test_acc = 0.0;
    double best_test_acc = 0.0;
    double final_valid_acc = 0.0;
};

// Trains one model per sigma with a shared seed and reports accuracy per
// noise level.
inline std::vector<SweepRow> cmd_noise_sweep(const RunConfig& base,
                                             const std::vector<double>& sigmas,
                                             const std::string& csv_path,
                                             std::ostream& log = std::cout) {
    for (double s : sigmas)
        if (s < 0.0) usage_error("noise sweep: sigma must be >= 0");
    std::vector<SweepRow> rows;
    for (double sigma : sigmas) {
        RunConfig cfg = base;
        cfg.noise_sigma = sigma;
        cfg.out_dir = base.resolved_out_dir() + "/sigma_" + std::to_string(sigma);
        TrainOutcome out = cmd_train(cfg, log);
        SweepRow row;
        row.sigma = sigma;
        row.final_valid_acc =
            out.report.epochs.empty() ? 0.0 : out.report.epochs.back().valid_acc;
        if (out.report.has_test) {
            row.final_test_acc = out.report.final_test_acc;
            row.best_test_acc = out.report.best_test_acc;
        }
        rows.push_back(row);
        log << "sigma " << sigma << ": test acc " << row.final_test_acc << "\n";
    }
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) data_error("cannot write sweep: " + csv_path);
        out << "sigma,final_test_acc,best_test_acc,final_valid_acc\r\n";
        char buf[64];
        auto num = [&buf](double v) {
            std::snprintf(buf, sizeof buf, "%.12g", v);
            return std::string(buf);
        };
        for (const auto& r : rows)
            out << num(r.sigma) << "," << num(r.final_test_acc) << ","
                << num(r.best_test_acc) << "," << num(r.final_valid_acc) << "\r\n";
    }
    return rows;
}

// Emits the trace CSV for a builtin protocol and prints the spiking-time
// fraction per variant.
inline void cmd_simulate(const SimulateConfig& cfg, const std::string& csv_path,
                         std::ostream& log = std::cout) {
    auto traces = run_protocol(cfg);
    if (!csv_path.empty()) write_trace_csv(csv_path, traces);
    for (const auto& [name, trace] : traces)
        log << name << ": spiking fraction " << trace_spiking_fraction(trace) << "\n";
}

} // namespace srcnet
