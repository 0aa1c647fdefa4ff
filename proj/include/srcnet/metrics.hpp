#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "srcnet/coding.hpp"
#include "srcnet/errors.hpp"

namespace srcnet {

// Per-layer record of outputs over time; same layout as a SpikeTensor
// (T x width), values >= 0 after the output ReLU.
using ActivityRecord = SpikeTensor;

// Fraction of timesteps at which the neuron output is strictly positive.
// An exact 0 means no spike, so it does not count.
inline double spiking_time_fraction(std::span<const double> s) {
    if (s.empty()) data_error("spiking_time_fraction: empty sequence");
    std::size_t active = 0;
    for (double v : s)
        if (v > 0.0) ++active;
    return static_cast<double>(active) / static_cast<double>(s.size());
}

// Mean spiking-time fraction over every neuron of one record.
inline double mean_activity(const ActivityRecord& rec) {
    if (rec.T == 0 || rec.features == 0) return 0.0;
    std::size_t active = 0;
    for (double v : rec.data)
        if (v > 0.0) ++active;
    return static_cast<double>(active) / static_cast<double>(rec.T * rec.features);
}

// Per-layer mean over a set of records (one per layer).
inline std::vector<double> mean_activity(const std::vector<ActivityRecord>& layers) {
    std::vector<double> out;
    out.reserve(layers.size());
    for (const auto& rec : layers) out.push_back(mean_activity(rec));
    return out;
}

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        data_error("accuracy: " + std::to_string(predictions.size()) +
                   " predictions vs " + std::to_string(labels.size()) + " labels");
    if (predictions.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == labels[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(predictions.size());
}

// row = true label, column = prediction
inline std::vector<std::vector<std::size_t>> confusion_matrix(
    std::span<const int> predictions, std::span<const int> labels, int num_classes) {
    if (predictions.size() != labels.size())
        data_error("confusion_matrix: size mismatch");
    std::vector<std::vector<std::size_t>> m(
        num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < predictions.size(); ++i)
        m[labels[i]][predictions[i]] += 1;
    return m;
}

} // namespace srcnet
