#pragma once

#include <cstddef>
#include <utility>

#include "srcnet/autodiff.hpp"
#include "srcnet/rng.hpp"
#include "srcnet/tensor.hpp"

namespace srcnet {

// One layer of Spiking Recurrent Cells. Dynamics per step:
//
//   i[t]   = alpha * i[t-1] + W_s * s_in[t]
//   x[t]   = rho * tanh(i[t] / rho)
//   z_s    = z_s_hyp + (z_s_dep - z_s_hyp) * H(h[t-1] - 0.5)
//   h[t]   = tanh(x[t] + r (.) h[t-1] + r_s (.) h_s[t-1] + b_h)
//   h_s[t] = z_s (.) h_s[t-1] + (1 - z_s) (.) h[t-1]
//   s_out  = relu(h[t])
//
// The z_s gate is evaluated on h[t-1]: the published form references h[t]
// before it exists, and the slow-state update is already driven by h[t-1].
// H(0) = 1, so the gate switches exactly at h = 0.5.
//
// During training, h[t-1] and h_s[t-1] enter through detach nodes and the
// output ReLU backpropagates as identity; the integrator i is the only
// state that carries gradient through time.
struct SrcParams {
    std::size_t in_size = 0;
    std::size_t out_size = 0;

    double alpha = 0.9;    // integrator leak, [0, 1)
    double rho = 3.0;      // tanh rescale, > 0
    double r = 2.0;        // fast positive feedback
    double r_s = -7.0;     // slow negative feedback
    double z = 0.0;        // fast-state gate, fixed at 0
    double z_s_hyp = 0.9;  // slow gate at subthreshold h
    double z_s_dep = 0.0;  // slow gate at depolarized h
    double b_h_init = -6.0;
    double b_h_max = -4.0; // upper clamp applied after every optimizer step

    double noise_sigma = 0.0; // sigma of per-step noise on r and r_s
    double mu_r = 2.0;        // noise means; track r / r_s by default
    double mu_rs = -7.0;

    Tensor W_s; // (out, in), learnable
    Tensor b_h; // (out), learnable

    static SrcParams make(std::size_t in, std::size_t out, double alpha = 0.9) {
        SrcParams p;
        p.in_size = in;
        p.out_size = out;
        p.alpha = alpha;
        p.W_s = Tensor::zeros({out, in});
        p.b_h = Tensor::full({out}, p.b_h_init);
        p.validate();
        return p;
    }

    void validate() const {
        if (alpha < 0.0 || alpha >= 1.0)
            config_error("src: alpha must be in [0, 1), got " + std::to_string(alpha));
        if (rho <= 0.0) config_error("src: rho must be positive");
        if (z != 0.0) config_error("src: z gate is fixed at 0");
        if (z_s_dep < 0.0 || z_s_dep > z_s_hyp || z_s_hyp >= 1.0)
            config_error("src: need 0 <= z_s_dep <= z_s_hyp < 1");
        if (noise_sigma < 0.0) config_error("src: noise_sigma must be >= 0");
    }
};

struct SrcState {
    Tensor i, h, h_s;

    static SrcState zeros(std::size_t width) {
        return SrcState{Tensor::zeros({width}), Tensor::zeros({width}),
                        Tensor::zeros({width})};
    }
};

namespace detail {

// z_s as a function of the previous fast state; H(0) = 1
inline double src_gate(const SrcParams& p, double h_prev) {
    return (h_prev - 0.5 >= 0.0) ? p.z_s_dep : p.z_s_hyp;
}

// shared forward core; r_vec/rs_vec override the fixed feedback gains when
// the noisy variant is running
inline std::pair<SrcState, Tensor> src_step_impl(const SrcParams& p,
                                                 const SrcState& state,
                                                 const Tensor& s_in,
                                                 const double* r_vec,
                                                 const double* rs_vec) {
    if (s_in.numel() != p.in_size)
        config_error("src_step: input width " + std::to_string(s_in.numel()) +
                     " != layer input size " + std::to_string(p.in_size));
    if (state.h.numel() != p.out_size)
        config_error("src_step: state width " + std::to_string(state.h.numel()) +
                     " != layer width " + std::to_string(p.out_size));

    std::size_t w = p.out_size, n = p.in_size;
    SrcState next = SrcState::zeros(w);
    Tensor s_out = Tensor::zeros({w});
    for (std::size_t k = 0; k < w; ++k) {
        const double* row = p.W_s.data.data() + k * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * s_in[j];
        double i_t = p.alpha * state.i[k] + acc;
        double x_t = p.rho * std::tanh(i_t / p.rho);
        double rk = r_vec ? r_vec[k] : p.r;
        double rsk = rs_vec ? rs_vec[k] : p.r_s;
        double h_prev = state.h[k], hs_prev = state.h_s[k];
        double h_t = std::tanh(x_t + rk * h_prev + rsk * hs_prev + p.b_h[k]);
        double zs = src_gate(p, h_prev);
        next.i[k] = i_t;
        next.h[k] = h_t;
        next.h_s[k] = zs * hs_prev + (1.0 - zs) * h_prev;
        s_out[k] = h_t > 0.0 ? h_t : 0.0;
    }
    return {std::move(next), std::move(s_out)};
}

} // namespace detail

inline std::pair<SrcState, Tensor> src_step(const SrcParams& p, const SrcState& state,
                                            const Tensor& s_in) {
    return detail::src_step_impl(p, state, s_in, nullptr, nullptr);
}

// r ~ N(mu_r, sigma), r_s ~ N(mu_rs, sigma), fresh per timestep per neuron.
// sigma == 0 short-circuits to the deterministic step without consuming rng
// state, so the trace is bitwise identical to src_step.
inline std::pair<SrcState, Tensor> src_step_noisy(const SrcParams& p,
                                                  const SrcState& state,
                                                  const Tensor& s_in, Rng& rng) {
    if (p.noise_sigma == 0.0) return src_step(p, state, s_in);
    std::vector<double> r_vec(p.out_size), rs_vec(p.out_size);
    for (std::size_t k = 0; k < p.out_size; ++k) {
        r_vec[k] = rng.normal(p.mu_r, p.noise_sigma);
        rs_vec[k] = rng.normal(p.mu_rs, p.noise_sigma);
    }
    return detail::src_step_impl(p, state, s_in, r_vec.data(), rs_vec.data());
}

inline void clamp_bias(SrcParams& p) {
    for (double& b : p.b_h.data)
        if (b > p.b_h_max) b = p.b_h_max;
}

// ------------------------------------------------------------------------
// tape-based step for training

struct SrcTapeRefs {
    Var W; // leaf
    Var b; // leaf
};

struct SrcTapeState {
    Var i, h, h_s;
};

inline SrcTapeState src_tape_initial_state(Tape& tape, const SrcParams& p) {
    return SrcTapeState{tape.constant(Tensor::zeros({p.out_size})),
                        tape.constant(Tensor::zeros({p.out_size})),
                        tape.constant(Tensor::zeros({p.out_size}))};
}

// Builds one timestep onto the tape, advances the state vars, and returns
// s_out. Feedback gains arrive as tensors so the noisy variant can inject
// per-neuron draws; pass nullptr for the fixed values.
inline Var src_step_tape(Tape& tape, const SrcParams& p, const SrcTapeRefs& refs,
                         SrcTapeState& state, Var s_in, const Tensor* r_draw = nullptr,
                         const Tensor* rs_draw = nullptr) {
    std::size_t w = p.out_size;
    if (tape.value(s_in).numel() != p.in_size)
        config_error("src_step_tape: input width " +
                     std::to_string(tape.value(s_in).numel()) + " != layer input size " +
                     std::to_string(p.in_size));

    Var i_t = add(scale(state.i, p.alpha), matvec(refs.W, s_in));
    Var x_t = scale(tanh(scale(i_t, 1.0 / p.rho)), p.rho);

    // recurrent h / h_s enter through detach: gradient does not flow
    // through time along these paths
    Var h_prev = detach(state.h);
    Var hs_prev = detach(state.h_s);

    const Tensor& hp = tape.value(state.h);
    Tensor zs(Tensor::zeros({w})), one_minus_zs(Tensor::zeros({w}));
    for (std::size_t k = 0; k < w; ++k) {
        double g = detail::src_gate(p, hp[k]);
        zs[k] = g;
        one_minus_zs[k] = 1.0 - g;
    }

    Var r_gain = tape.constant(r_draw ? *r_draw : Tensor::full({w}, p.r));
    Var rs_gain = tape.constant(rs_draw ? *rs_draw : Tensor::full({w}, p.r_s));

    Var pre = add(add(x_t, mul(r_gain, h_prev)), add(mul(rs_gain, hs_prev), refs.b));
    Var h_t = tanh(pre);
    Var hs_t = add(mul(tape.constant(std::move(zs)), hs_prev),
                   mul(tape.constant(std::move(one_minus_zs)), h_prev));

    state.i = i_t;
    state.h = h_t;
    state.h_s = hs_t;
    return relu_bypass(h_t);
}

} // namespace srcnet
