#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "srcnet/errors.hpp"
#include "srcnet/rng.hpp"

namespace srcnet {

// Time-major spike sequence, data[t * features + f] in [0, 1].
struct SpikeTensor {
    std::size_t T = 0;
    std::size_t features = 0;
    std::vector<double> data;

    static SpikeTensor zeros(std::size_t T, std::size_t features) {
        return SpikeTensor{T, features, std::vector<double>(T * features, 0.0)};
    }

    double at(std::size_t t, std::size_t f) const { return data[t * features + f]; }
    double& at(std::size_t t, std::size_t f) { return data[t * features + f]; }
    const double* step(std::size_t t) const { return data.data() + t * features; }
};

struct CodingConfig {
    std::size_t T = 200; // sequence length
    double gain = 0.25;  // rate coding: per-step spike probability scale
    double tau = 10.0;   // latency coding: RC time constant
    double v_th = 0.01;  // latency coding: threshold cutting off dark pixels

    void validate() const {
        if (T == 0) config_error("coding: T must be >= 1");
        if (gain <= 0.0 || gain > 1.0) config_error("coding: need 0 < gain <= 1");
        if (tau <= 0.0) config_error("coding: tau must be positive");
        if (v_th <= 0.0 || v_th >= 1.0) config_error("coding: need 0 < v_th < 1");
    }
};

enum class CodingKind { rate, latency };

inline const char* coding_name(CodingKind k) {
    return k == CodingKind::rate ? "rate" : "latency";
}

inline CodingKind coding_from_name(const std::string& s) {
    if (s == "rate") return CodingKind::rate;
    if (s == "latency") return CodingKind::latency;
    usage_error("unknown coding '" + s + "' (expected rate or latency)");
}

namespace detail {
inline void check_pixels(std::span<const double> pixels) {
    for (std::size_t i = 0; i < pixels.size(); ++i)
        if (!(pixels[i] >= 0.0 && pixels[i] <= 1.0))
            data_error("pixel " + std::to_string(i) + " = " + std::to_string(pixels[i]) +
                       " outside [0, 1]");
}
} // namespace detail

// Each pixel p emits an independent Bernoulli(gain * p) spike per timestep.
inline SpikeTensor rate_encode(std::span<const double> pixels, const CodingConfig& cfg,
                               Rng& rng) {
    cfg.validate();
    detail::check_pixels(pixels);
    SpikeTensor out = SpikeTensor::zeros(cfg.T, pixels.size());
    for (std::size_t t = 0; t < cfg.T; ++t)
        for (std::size_t f = 0; f < pixels.size(); ++f)
            if (rng.bernoulli(cfg.gain * pixels[f])) out.at(t, f) = 1.0;
    return out;
}

// One spike per pixel at a time antitone in brightness: raw charge time
// tau * (1 - p), with pixels below v_th pinned to the maximal raw time
// tau * (1 - v_th). Raw times map linearly onto timesteps [0, T-1] (floor
// rounding) and spikes landing on the final timestep are removed, which is
// what silences sub-threshold pixels.
inline SpikeTensor latency_encode(std::span<const double> pixels,
                                  const CodingConfig& cfg) {
    cfg.validate();
    detail::check_pixels(pixels);
    SpikeTensor out = SpikeTensor::zeros(cfg.T, pixels.size());
    const double max_raw = cfg.tau * (1.0 - cfg.v_th);
    for (std::size_t f = 0; f < pixels.size(); ++f) {
        double p = pixels[f];
        double raw = (p >= cfg.v_th) ? cfg.tau * (1.0 - p) : max_raw;
        auto t = static_cast<std::size_t>(
            std::floor(raw / max_raw * static_cast<double>(cfg.T - 1)));
        if (t >= cfg.T - 1) continue; // last-timestep removal
        out.at(t, f) = 1.0;
    }
    return out;
}

} // namespace srcnet
