#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "srcnet/rng.hpp"
#include "srcnet/src_layer.hpp"

namespace srcnet {

// Single-neuron dynamics traces for the builtin stimulation protocols.
// The neuron is a width-1 SRC layer with W_s = [[1]] and alpha = 0, so the
// drive value is the integrator state and x = rho * tanh(drive / rho).
//
//   fig1       zero drive, then a plateau of 0.2, then zero again. With
//              bias -4 the neuron fires spontaneously; with bias -5 it
//              stays silent for the whole trace.
//   appendixB  a sub-threshold plateau (0.5) that does not trigger a
//              spike, then a sustained supra-threshold plateau (2.5) that
//              produces repeated spikes separated by refractory gaps.
//              Emitted twice: once with the variable z_s gate (0.9/0) and
//              once with z_s fixed at 0.9.

struct TraceRow {
    int t = 0;
    double x = 0, i = 0, h = 0, h_s = 0, s_out = 0;
    double fb_pos = 0; // r * h
    double fb_neg = 0; // r_s * h_s
    double z_s = 0;
};

using Trace = std::vector<TraceRow>;

struct SimulateConfig {
    std::string protocol = "fig1";
    std::optional<double> bias; // protocol default when unset
    int steps = 300;
    double noise_sigma = 0.0;
    std::uint64_t seed = 7;
};

namespace detail {

inline double fig1_drive(int t, int steps) {
    int a = steps / 3, b = 2 * steps / 3;
    return (t >= a && t < b) ? 0.2 : 0.0;
}

inline double appendix_b_drive(int t, int steps) {
    (void)steps;
    if (t < 30) return 0.0;
    if (t < 70) return 0.5;  // sub-threshold
    if (t < 100) return 0.0;
    return 2.5;              // sustained supra-threshold
}

template <typename DriveFn>
Trace run_single_neuron(const SrcParams& base, int steps, DriveFn drive,
                        double noise_sigma, std::uint64_t seed) {
    SrcParams p = base;
    p.noise_sigma = noise_sigma;
    SrcState state = SrcState::zeros(1);
    Rng rng(seed);
    Trace trace;
    trace.reserve(steps);
    for (int t = 0; t < steps; ++t) {
        Tensor s_in = Tensor::vector({drive(t, steps)});
        double zs = src_gate(p, state.h[0]);
        auto [next, s_out] = noise_sigma > 0.0 ? src_step_noisy(p, state, s_in, rng)
                                               : src_step(p, state, s_in);
        TraceRow row;
        row.t = t;
        row.i = next.i[0];
        row.x = p.rho * std::tanh(next.i[0] / p.rho);
        row.h = next.h[0];
        row.h_s = next.h_s[0];
        row.s_out = s_out[0];
        row.fb_pos = p.r * next.h[0];
        row.fb_neg = p.r_s * next.h_s[0];
        row.z_s = zs;
        trace.push_back(row);
        state = std::move(next);
    }
    return trace;
}

} // namespace detail

inline SrcParams single_neuron_params(double bias) {
    SrcParams p = SrcParams::make(1, 1, /*alpha=*/0.0);
    p.W_s[0] = 1.0;
    p.b_h.fill(bias);
    return p;
}

// protocol -> list of (variant name, trace)
inline std::vector<std::pair<std::string, Trace>> run_protocol(
    const SimulateConfig& cfg) {
    if (cfg.steps <= 0) usage_error("simulate: steps must be positive");
    if (cfg.protocol == "fig1") {
        SrcParams p = single_neuron_params(cfg.bias.value_or(-4.0));
        return {{"default", detail::run_single_neuron(p, cfg.steps, detail::fig1_drive,
                                                      cfg.noise_sigma, cfg.seed)}};
    }
    if (cfg.protocol == "appendixB") {
        SrcParams variable = single_neuron_params(cfg.bias.value_or(-6.0));
        SrcParams fixed = variable;
        fixed.z_s_dep = fixed.z_s_hyp; // gate pinned at 0.9
        return {{"variable",
                 detail::run_single_neuron(variable, cfg.steps, detail::appendix_b_drive,
                                           cfg.noise_sigma, cfg.seed)},
                {"fixed",
                 detail::run_single_neuron(fixed, cfg.steps, detail::appendix_b_drive,
                                           cfg.noise_sigma, derive_seed(cfg.seed, 1))}};
    }
    usage_error("unknown protocol '" + cfg.protocol +
                "' (builtin protocols: fig1, appendixB)");
}

// (start, end) index pairs of maximal runs with s_out > 0
inline std::vector<std::pair<int, int>> spike_intervals(const Trace& trace) {
    std::vector<std::pair<int, int>> runs;
    int start = -1;
    for (std::size_t t = 0; t < trace.size(); ++t) {
        bool on = trace[t].s_out > 0.0;
        if (on && start < 0) start = static_cast<int>(t);
        if (!on && start >= 0) {
            runs.emplace_back(start, static_cast<int>(t));
            start = -1;
        }
    }
    if (start >= 0) runs.emplace_back(start, static_cast<int>(trace.size()));
    return runs;
}

inline double trace_spiking_fraction(const Trace& trace) {
    if (trace.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& row : trace)
        if (row.s_out > 0.0) ++n;
    return static_cast<double>(n) / static_cast<double>(trace.size());
}

inline void write_trace_csv(const std::string& path,
                            const std::vector<std::pair<std::string, Trace>>& traces) {
    std::ofstream out(path);
    if (!out) data_error("cannot write trace: " + path);
    out << "variant,t,x,i,h,h_s,s_out,fb_pos,fb_neg,z_s\r\n";
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.12g", v);
        return std::string(buf);
    };
    for (const auto& [name, trace] : traces)
        for (const auto& r : trace)
            out << name << "," << r.t << "," << num(r.x) << "," << num(r.i) << ","
                << num(r.h) << "," << num(r.h_s) << "," << num(r.s_out) << ","
                << num(r.fb_pos) << "," << num(r.fb_neg) << "," << num(r.z_s) << "\r\n";
}

} // namespace srcnet
