#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "srcnet/errors.hpp"
#include "srcnet/tensor.hpp"

namespace srcnet {

inline constexpr double kPi = 3.14159265358979323846;

// Reverse-mode differentiation over a flat tape of nodes. The op set is the
// minimum a spiking recurrent network needs, plus three custom-gradient
// nodes whose backward rules deliberately disagree with their forward math:
//
//   relu_bypass  forward max(x,0), backward identity
//   detach       forward copy, backward blocked
//   atan_spike   forward step, backward ATan surrogate
//
// Nodes are appended in creation order; backward() walks the tape in
// reverse, which visits every node after all of its consumers.
enum class Op : std::uint8_t {
    leaf,       // learnable parameter (gradient target)
    constant,   // input data, frozen weights, per-step gate values
    add,
    sub,
    mul,        // elementwise
    matvec,     // (m,n) matrix times (n) vector
    tanh_fn,
    sigmoid_fn,
    relu,
    relu_bypass,
    detach,
    scale,      // multiply by a fixed double (aux)
    sum,        // reduce to scalar
    softmax_ce, // fused softmax + negative log likelihood vs target (aux_i)
    atan_spike, // Heaviside forward, ATan surrogate backward (aux = slope)
    bmul,       // vector times scalar node, broadcast
    bsub,       // vector minus scalar node, broadcast
};

inline const char* op_name(Op op) {
    switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::matvec: return "matvec";
    case Op::tanh_fn: return "tanh";
    case Op::sigmoid_fn: return "sigmoid";
    case Op::relu: return "relu";
    case Op::relu_bypass: return "relu_bypass";
    case Op::detach: return "detach";
    case Op::scale: return "scale";
    case Op::sum: return "sum";
    case Op::softmax_ce: return "softmax_cross_entropy";
    case Op::atan_spike: return "atan_spike";
    case Op::bmul: return "bmul";
    case Op::bsub: return "bsub";
    }
    return "?";
}

class Tape;

// Cheap handle into a tape. All graph building goes through free functions
// taking Vars, so layer code reads like the math.
struct Var {
    std::uint32_t id = 0;
    Tape* tape = nullptr;
};

struct Node {
    Op op = Op::constant;
    bool requires_grad = false;
    std::uint32_t a = 0, b = 0; // parents
    double aux = 0.0;           // scale factor / surrogate slope
    int aux_i = -1;             // cross-entropy target
    Tensor value;
    Tensor grad;                // allocated lazily during backward
};

class Tape {
public:
    Var leaf(Tensor v) { return push(Op::leaf, std::move(v), true); }
    Var constant(Tensor v) { return push(Op::constant, std::move(v), false); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }

    // Gradient accumulated for v by the last backward pass; zeros if the
    // node was never reached.
    Tensor grad(Var v) const {
        const Node& n = nodes_[v.id];
        if (n.grad.numel() == n.value.numel()) return n.grad;
        return Tensor::zeros(n.value.shape);
    }

    std::size_t size() const { return nodes_.size(); }
    const Node& node(std::uint32_t id) const { return nodes_[id]; }

    void clear() { nodes_.clear(); }

    void zero_grad() {
        for (Node& n : nodes_) n.grad.data.clear();
    }

    // Accumulates dLoss/dNode into every node that requires grad. The loss
    // must be scalar. Accumulators start from zero on each call only if
    // zero_grad() was called (or the tape is fresh); calling zero_grad +
    // backward twice yields identical gradients.
    void backward(Var loss);

    // index of the first node whose value contains a non-finite entry, or
    // -1; used for failure diagnostics
    int first_nonfinite() const {
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (!nodes_[i].value.all_finite()) return static_cast<int>(i);
        return -1;
    }

    std::string describe(std::uint32_t id) const {
        return std::string(op_name(nodes_[id].op)) + " node #" + std::to_string(id) +
               " shape " + nodes_[id].value.shape_str();
    }

    // graph construction -----------------------------------------------
    friend Var add(Var a, Var b);
    friend Var sub(Var a, Var b);
    friend Var mul(Var a, Var b);
    friend Var matvec(Var w, Var x);
    friend Var tanh(Var a);
    friend Var sigmoid(Var a);
    friend Var relu(Var a);
    friend Var relu_bypass(Var a);
    friend Var detach(Var a);
    friend Var scale(Var a, double c);
    friend Var sum(Var a);
    friend Var softmax_cross_entropy(Var logits, int target);
    friend Var atan_spike(Var u, double slope);
    friend Var bmul(Var v, Var s);
    friend Var bsub(Var v, Var s);

private:
    std::vector<Node> nodes_;

    Var push(Op op, Tensor v, bool requires_grad, std::uint32_t a = 0,
             std::uint32_t b = 0, double aux = 0.0, int aux_i = -1) {
        Node n;
        n.op = op;
        n.requires_grad = requires_grad;
        n.a = a;
        n.b = b;
        n.aux = aux;
        n.aux_i = aux_i;
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1), this};
    }

    bool rg(std::uint32_t id) const { return nodes_[id].requires_grad; }

    void ensure_grad(Node& n) {
        if (n.grad.numel() != n.value.numel()) {
            n.grad.shape = n.value.shape;
            n.grad.data.assign(n.value.numel(), 0.0);
        }
    }
};

namespace detail {
inline Tape* same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape || a.tape == nullptr)
        config_error(std::string(op) + ": operands from different tapes");
    return a.tape;
}
} // namespace detail

inline Var add(Var a, Var b) {
    Tape* t = detail::same_tape(a, b, "add");
    const Tensor& x = t->value(a);
    const Tensor& y = t->value(b);
    require_same_shape(x, y, "add");
    Tensor out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += y[i];
    return t->push(Op::add, std::move(out), t->rg(a.id) || t->rg(b.id), a.id, b.id);
}

inline Var sub(Var a, Var b) {
    Tape* t = detail::same_tape(a, b, "sub");
    const Tensor& x = t->value(a);
    const Tensor& y = t->value(b);
    require_same_shape(x, y, "sub");
    Tensor out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= y[i];
    return t->push(Op::sub, std::move(out), t->rg(a.id) || t->rg(b.id), a.id, b.id);
}

inline Var mul(Var a, Var b) {
    Tape* t = detail::same_tape(a, b, "mul");
    const Tensor& x = t->value(a);
    const Tensor& y = t->value(b);
    require_same_shape(x, y, "mul");
    Tensor out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= y[i];
    return t->push(Op::mul, std::move(out), t->rg(a.id) || t->rg(b.id), a.id, b.id);
}

inline Var matvec(Var w, Var x) {
    Tape* t = detail::same_tape(w, x, "matvec");
    const Tensor& W = t->value(w);
    const Tensor& v = t->value(x);
    if (W.shape.size() != 2 || v.shape.size() != 1 || W.shape[1] != v.shape[0])
        config_error("matvec: incompatible shapes " + W.shape_str() + " vs " +
                     v.shape_str());
    std::size_t m = W.shape[0], n = W.shape[1];
    Tensor out = Tensor::zeros({m});
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = W.data.data() + i * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * v[j];
        out[i] = acc;
    }
    return t->push(Op::matvec, std::move(out), t->rg(w.id) || t->rg(x.id), w.id, x.id);
}

inline Var tanh(Var a) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (double& v : out.data) v = std::tanh(v);
    return t->push(Op::tanh_fn, std::move(out), t->rg(a.id), a.id);
}

inline Var sigmoid(Var a) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return t->push(Op::sigmoid_fn, std::move(out), t->rg(a.id), a.id);
}

inline Var relu(Var a) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return t->push(Op::relu, std::move(out), t->rg(a.id), a.id);
}

inline Var relu_bypass(Var a) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return t->push(Op::relu_bypass, std::move(out), t->rg(a.id), a.id);
}

inline Var detach(Var a) {
    Tape* t = a.tape;
    return t->push(Op::detach, t->value(a), false, a.id);
}

inline Var scale(Var a, double c) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (double& v : out.data) v *= c;
    return t->push(Op::scale, std::move(out), t->rg(a.id), a.id, 0, c);
}

inline Var sum(Var a) {
    Tape* t = a.tape;
    double acc = 0.0;
    for (double v : t->value(a).data) acc += v;
    return t->push(Op::sum, Tensor::scalar(acc), t->rg(a.id), a.id);
}

// l = -log softmax(logits)[target], stabilized with log-sum-exp
inline Var softmax_cross_entropy(Var logits, int target) {
    Tape* t = logits.tape;
    const Tensor& x = t->value(logits);
    if (x.shape.size() != 1)
        config_error("softmax_cross_entropy: logits must be a vector, got " +
                     x.shape_str());
    if (target < 0 || static_cast<std::size_t>(target) >= x.numel())
        data_error("softmax_cross_entropy: target " + std::to_string(target) +
                   " out of range for " + std::to_string(x.numel()) + " classes");
    double m = x[0];
    for (double v : x.data) m = std::max(m, v);
    double lse = 0.0;
    for (double v : x.data) lse += std::exp(v - m);
    lse = m + std::log(lse);
    double loss = lse - x[static_cast<std::size_t>(target)];
    return t->push(Op::softmax_ce, Tensor::scalar(loss), t->rg(logits.id), logits.id,
                   0, 0.0, target);
}

inline Var atan_spike(Var u, double slope) {
    Tape* t = u.tape;
    Tensor out = t->value(u);
    for (double& v : out.data) v = v > 0.0 ? 1.0 : 0.0;
    return t->push(Op::atan_spike, std::move(out), t->rg(u.id), u.id, 0, slope);
}

inline Var bmul(Var v, Var s) {
    Tape* t = detail::same_tape(v, s, "bmul");
    const Tensor& x = t->value(v);
    const Tensor& k = t->value(s);
    if (!k.is_scalar())
        config_error("bmul: second operand must be scalar, got " + k.shape_str());
    Tensor out = x;
    for (double& e : out.data) e *= k[0];
    return t->push(Op::bmul, std::move(out), t->rg(v.id) || t->rg(s.id), v.id, s.id);
}

inline Var bsub(Var v, Var s) {
    Tape* t = detail::same_tape(v, s, "bsub");
    const Tensor& x = t->value(v);
    const Tensor& k = t->value(s);
    if (!k.is_scalar())
        config_error("bsub: second operand must be scalar, got " + k.shape_str());
    Tensor out = x;
    for (double& e : out.data) e -= k[0];
    return t->push(Op::bsub, std::move(out), t->rg(v.id) || t->rg(s.id), v.id, s.id);
}

inline void Tape::backward(Var loss) {
    if (loss.tape != this) usage_error("backward: loss var belongs to another tape");
    Node& ln = nodes_[loss.id];
    if (!ln.value.is_scalar())
        usage_error("backward: loss must be scalar, got shape " + ln.value.shape_str());
    ensure_grad(ln);
    ln.grad[0] += 1.0;

    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.numel() != n.value.numel()) continue;
        const Tensor& g = n.grad;
        switch (n.op) {
        case Op::leaf:
        case Op::constant:
        case Op::detach:
            break;
        case Op::add: {
            if (rg(n.a)) {
                Node& pa = nodes_[n.a];
                ensure_grad(pa);
                for (std::size_t i = 0; i < g.numel(); ++i) pa.grad[i] += g[i];
            }
            if (rg(n.b)) {
                Node& pb = nodes_[n.b];
                ensure_grad(pb);
                for (std::size_t i = 0; i < g.numel(); ++i) pb.grad[i] += g[i];
            }
            break;
        }
        case Op::sub: {
            if (rg(n.a)) {
                Node& pa = nodes_[n.a];
                ensure_grad(pa);
                for (std::size_t i = 0; i < g.numel(); ++i) pa.grad[i] += g[i];
            }
            if (rg(n.b)) {
                Node& pb = nodes_[n.b];
                ensure_grad(pb);
                for (std::size_t i = 0; i < g.numel(); ++i) pb.grad[i] -= g[i];
            }
            break;
        }
        case Op::mul: {
            if (rg(n.a)) {
                Node& pa = nodes_[n.a];
                ensure_grad(pa);
                const Tensor& bv = nodes_[n.b].value;
                for (std::size_t i = 0; i < g.numel(); ++i) pa.grad[i] += g[i] * bv[i];
            }
            if (rg(n.b)) {
                Node& pb = nodes_[n.b];
                ensure_grad(pb);
                const Tensor& av = nodes_[n.a].value;
                for (std::size_t i = 0; i < g.numel(); ++i) pb.grad[i] += g[i] * av[i];
            }
            break;
        }
        case Op::matvec: {
            const Tensor& W = nodes_[n.a].value;
            const Tensor& x = nodes_[n.b].value;
            std::size_t m = W.shape[0], k = W.shape[1];
            if (rg(n.a)) { // dW[i,:] += g[i] * x
                Node& pw = nodes_[n.a];
                ensure_grad(pw);
                for (std::size_t i = 0; i < m; ++i) {
                    double gi = g[i];
                    if (gi == 0.0) continue;
                    double* wrow = pw.grad.data.data() + i * k;
                    for (std::size_t j = 0; j < k; ++j) wrow[j] += gi * x[j];
                }
            }
            if (rg(n.b)) { // dx += W^T g, accumulated row-wise
                Node& px = nodes_[n.b];
                ensure_grad(px);
                for (std::size_t i = 0; i < m; ++i) {
                    double gi = g[i];
                    if (gi == 0.0) continue;
                    const double* wrow = W.data.data() + i * k;
                    for (std::size_t j = 0; j < k; ++j) px.grad[j] += gi * wrow[j];
                }
            }
            break;
        }
        case Op::tanh_fn: {
            Node& pa = nodes_[n.a];
            ensure_grad(pa);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                double y = n.value[i];
                pa.grad[i] += g[i] * (1.0 - y * y);
            }
            break;
        }
        case Op::sigmoid_fn: {
            Node& pa = nodes_[n.a];
            ensure_grad(pa);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                double y = n.value[i];
                pa.grad[i] += g[i] * y * (1.0 - y);
            }
            break;
        }
        case Op::relu: {
            Node& pa = nodes_[n.a];
            ensure_grad(pa);
            for (std::size_t i = 0; i < g.numel(); ++i)
                if (pa.value[i] > 0.0) pa.grad[i] += g[i];
            break;
        }
        case Op::relu_bypass: {
            // the paper's training rule: d s_out / d h = 1 everywhere
            Node& pa = nodes_[n.a];
            ensure_grad(pa);
            for (std::size_t i = 0; i < g.numel(); ++i) pa.grad[i] += g[i];
            break;
        }
        case Op::scale: {
            Node& pa = nodes_[n.a];
            ensure_grad(pa);
            for (std::size_t i = 0; i < g.numel(); ++i) pa.grad[i] += g[i] * n.aux;
            break;
        }
        case Op::sum: {
            Node& pa = nodes_[n.a];
            ensure_grad(pa);
            for (std::size_t i = 0; i < pa.grad.numel(); ++i) pa.grad[i] += g[0];
            break;
        }
        case Op::softmax_ce: {
            Node& pa = nodes_[n.a];
            ensure_grad(pa);
            const Tensor& x = pa.value;
            double m = x[0];
            for (double v : x.data) m = std::max(m, v);
            double z = 0.0;
            for (double v : x.data) z += std::exp(v - m);
            for (std::size_t i = 0; i < x.numel(); ++i) {
                double p = std::exp(x[i] - m) / z;
                double onehot = (static_cast<int>(i) == n.aux_i) ? 1.0 : 0.0;
                pa.grad[i] += g[0] * (p - onehot);
            }
            break;
        }
        case Op::atan_spike: {
            Node& pa = nodes_[n.a];
            ensure_grad(pa);
            double k = n.aux;
            for (std::size_t i = 0; i < g.numel(); ++i) {
                double u = pa.value[i];
                pa.grad[i] += g[i] * k / (kPi * (1.0 + (k * u) * (k * u)));
            }
            break;
        }
        case Op::bmul: {
            const Tensor& x = nodes_[n.a].value;
            double k = nodes_[n.b].value[0];
            if (rg(n.a)) {
                Node& pa = nodes_[n.a];
                ensure_grad(pa);
                for (std::size_t i = 0; i < g.numel(); ++i) pa.grad[i] += g[i] * k;
            }
            if (rg(n.b)) {
                Node& pb = nodes_[n.b];
                ensure_grad(pb);
                double acc = 0.0;
                for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * x[i];
                pb.grad[0] += acc;
            }
            break;
        }
        case Op::bsub: {
            if (rg(n.a)) {
                Node& pa = nodes_[n.a];
                ensure_grad(pa);
                for (std::size_t i = 0; i < g.numel(); ++i) pa.grad[i] += g[i];
            }
            if (rg(n.b)) {
                Node& pb = nodes_[n.b];
                ensure_grad(pb);
                double acc = 0.0;
                for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i];
                pb.grad[0] -= acc;
            }
            break;
        }
        }
    }
}

} // namespace srcnet
