#pragma once

#include <cstddef>
#include <utility>

#include "srcnet/autodiff.hpp"
#include "srcnet/tensor.hpp"

namespace srcnet {

// Leaky Integrate-and-Fire layer:
//
//   V[t] = alpha_V * V[t-1] + W * s_in[t]
//   if V[t] > V_thresh: s = 1, V reset to V_rest (hard reset)
//
// alpha_V and V_thresh are scalar learnables. The backward pass replaces the
// threshold step with the ATan surrogate
//   ds/dV = slope / (pi * (1 + (slope * (V - V_thresh))^2))
// and the reset is applied through a detached spike, so no gradient flows
// along the reset path.
struct LifParams {
    std::size_t in_size = 0;
    std::size_t out_size = 0;

    Tensor W;                      // (out, in), learnable
    Tensor alpha_V;                // scalar, learnable
    Tensor V_thresh;               // scalar, learnable
    double V_rest = 0.0;
    double surrogate_slope = 2.0;

    static LifParams make(std::size_t in, std::size_t out, double alpha = 0.9) {
        LifParams p;
        p.in_size = in;
        p.out_size = out;
        p.W = Tensor::zeros({out, in});
        p.alpha_V = Tensor::scalar(alpha);
        p.V_thresh = Tensor::scalar(1.0);
        return p;
    }
};

struct LifState {
    Tensor V;

    static LifState zeros(std::size_t width) { return LifState{Tensor::zeros({width})}; }
};

inline std::pair<LifState, Tensor> lif_step(const LifParams& p, const LifState& state,
                                            const Tensor& s_in) {
    if (s_in.numel() != p.in_size)
        config_error("lif_step: input width " + std::to_string(s_in.numel()) +
                     " != layer input size " + std::to_string(p.in_size));
    if (state.V.numel() != p.out_size)
        config_error("lif_step: state width " + std::to_string(state.V.numel()) +
                     " != layer width " + std::to_string(p.out_size));

    std::size_t w = p.out_size, n = p.in_size;
    double aV = p.alpha_V[0], vth = p.V_thresh[0];
    LifState next = LifState::zeros(w);
    Tensor spikes = Tensor::zeros({w});
    for (std::size_t k = 0; k < w; ++k) {
        const double* row = p.W.data.data() + k * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * s_in[j];
        double v = aV * state.V[k] + acc;
        if (v > vth) {
            spikes[k] = 1.0;
            next.V[k] = p.V_rest;
        } else {
            next.V[k] = v;
        }
    }
    return {std::move(next), std::move(spikes)};
}

// ------------------------------------------------------------------------
// tape-based step for training

struct LifTapeRefs {
    Var W;        // leaf
    Var alpha_V;  // scalar leaf
    Var V_thresh; // scalar leaf
};

struct LifTapeState {
    Var V;
};

inline LifTapeState lif_tape_initial_state(Tape& tape, const LifParams& p) {
    return LifTapeState{tape.constant(Tensor::zeros({p.out_size}))};
}

inline Var lif_step_tape(Tape& tape, const LifParams& p, const LifTapeRefs& refs,
                         LifTapeState& state, Var s_in) {
    if (tape.value(s_in).numel() != p.in_size)
        config_error("lif_step_tape: input width " +
                     std::to_string(tape.value(s_in).numel()) + " != layer input size " +
                     std::to_string(p.in_size));
    if (p.V_rest != 0.0)
        config_error("lif_step_tape: only V_rest == 0 is supported");
    Var v_pre = add(bmul(state.V, refs.alpha_V), matvec(refs.W, s_in));
    Var spikes = atan_spike(bsub(v_pre, refs.V_thresh), p.surrogate_slope);
    // hard reset to V_rest = 0 via a detached mask
    Var keep = sub(tape.constant(Tensor::full({p.out_size}, 1.0)), detach(spikes));
    state.V = mul(v_pre, keep);
    return spikes;
}

} // namespace srcnet
