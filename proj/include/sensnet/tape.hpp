#pragma once

#include "sensnet/interval.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace sensnet {

enum class Op : std::uint8_t {
    Const,
    Input,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Sigmoid,
    Relu,
    Silu,
    Step, // relu_grad as a value; its own derivative is zero a.e.
    NormCdf,
};

template <class Scalar>
class Tape;

// Lightweight handle to a tape node; all arithmetic on Var records nodes.
template <class Scalar>
class Var {
public:
    Var() : tape_(nullptr), index_(-1) {}
    Var(Tape<Scalar>* tape, std::int32_t index) : tape_(tape), index_(index) {}

    std::int32_t index() const { return index_; }
    Tape<Scalar>* tape() const { return tape_; }
    Scalar value() const { return tape_->value(index_); }

private:
    Tape<Scalar>* tape_;
    std::int32_t index_;
};

// Append-only recording of a computation over `Scalar` (double or Interval).
// Values are evaluated eagerly at record time, so the forward value of any
// node is available immediately. One recording is confined to one thread;
// a finished tape is immutable under reverse() and freely shareable.
template <class Scalar>
class Tape {
public:
    struct Node {
        Op op;
        std::int32_t a;
        std::int32_t b;
        Scalar val;
    };

    Var<Scalar> input(Scalar v) {
        inputs_.push_back(static_cast<std::int32_t>(nodes_.size()));
        return {this, emit(Op::Input, -1, -1, v)};
    }

    Var<Scalar> constant(Scalar v) { return {this, emit(Op::Const, -1, -1, v)}; }

    const Scalar& value(std::int32_t i) const { return nodes_[i].val; }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<std::int32_t>& inputs() const { return inputs_; }

    std::int32_t emit(Op op, std::int32_t a, std::int32_t b, Scalar val) {
        nodes_.push_back(Node{op, a, b, std::move(val)});
        return static_cast<std::int32_t>(nodes_.size()) - 1;
    }

    std::int32_t emit(Op op, std::int32_t a, std::int32_t b) {
        return emit(op, a, b, eval_op(op, nodes_[a].val, b >= 0 ? nodes_[b].val : Scalar(0)));
    }

    // Reverse sweep from `out` with the given seed. Returns one adjoint per
    // node; input adjoints are the derivatives (real) or derivative
    // enclosures over the input box (interval). Deterministic: fixed
    // iteration and accumulation order.
    std::vector<Scalar> reverse(Var<Scalar> out, Scalar seed) const {
        using std::cos;
        using std::sin;
        std::vector<Scalar> adj(nodes_.size(), Scalar(0));
        adj[out.index()] = std::move(seed);
        for (std::int32_t i = out.index(); i >= 0; --i) {
            const Node& nd = nodes_[i];
            const Scalar& v = adj[i];
            switch (nd.op) {
            case Op::Const:
            case Op::Input:
            case Op::Step:
                break;
            case Op::Add:
                adj[nd.a] += v;
                adj[nd.b] += v;
                break;
            case Op::Sub:
                adj[nd.a] += v;
                adj[nd.b] += -v;
                break;
            case Op::Mul:
                adj[nd.a] += v * nodes_[nd.b].val;
                adj[nd.b] += v * nodes_[nd.a].val;
                break;
            case Op::Div:
                adj[nd.a] += v / nodes_[nd.b].val;
                adj[nd.b] += -(v * nd.val) / nodes_[nd.b].val;
                break;
            case Op::Neg:
                adj[nd.a] += -v;
                break;
            case Op::Exp:
                adj[nd.a] += v * nd.val;
                break;
            case Op::Log:
                adj[nd.a] += v / nodes_[nd.a].val;
                break;
            case Op::Sin:
                adj[nd.a] += v * cos(nodes_[nd.a].val);
                break;
            case Op::Cos:
                adj[nd.a] += -(v * sin(nodes_[nd.a].val));
                break;
            case Op::Sigmoid:
                adj[nd.a] += v * sigmoid_grad(nodes_[nd.a].val);
                break;
            case Op::Relu:
                adj[nd.a] += v * relu_grad(nodes_[nd.a].val);
                break;
            case Op::Silu:
                adj[nd.a] += v * silu_grad(nodes_[nd.a].val);
                break;
            case Op::NormCdf:
                adj[nd.a] += v * norm_pdf(nodes_[nd.a].val);
                break;
            default:
                throw std::logic_error("Tape::reverse: unsupported op");
            }
        }
        return adj;
    }

    // Append the adjoint computation of `out` w.r.t. `wrt` as new nodes and
    // return handles to them. The extended tape computes the input-adjoint
    // vector in its forward values; a further reverse() through the
    // returned nodes yields mixed second derivatives. Real scalar only.
    std::vector<Var<Scalar>> record_adjoints(Var<Scalar> out, std::span<const Var<Scalar>> wrt,
                                             Scalar seed = Scalar(1)) {
        if constexpr (!std::is_same_v<Scalar, double>) {
            throw std::logic_error("record_adjoints: second-order interval adjoints unsupported");
        } else {
            const std::int32_t n = out.index() + 1;
            std::vector<std::int32_t> adj(n, -1);
            adj[out.index()] = emit(Op::Const, -1, -1, seed);
            auto add_to = [&](std::int32_t target, std::int32_t id) {
                adj[target] = adj[target] < 0 ? id : emit(Op::Add, adj[target], id);
            };
            for (std::int32_t i = n - 1; i >= 0; --i) {
                if (adj[i] < 0) continue;
                const Node nd = nodes_[i]; // copy: emits below may reallocate
                const std::int32_t v = adj[i];
                switch (nd.op) {
                case Op::Const:
                case Op::Input:
                case Op::Step:
                    break;
                case Op::Add:
                    add_to(nd.a, v);
                    add_to(nd.b, v);
                    break;
                case Op::Sub:
                    add_to(nd.a, v);
                    add_to(nd.b, emit(Op::Neg, v, -1));
                    break;
                case Op::Mul:
                    add_to(nd.a, emit(Op::Mul, v, nd.b));
                    add_to(nd.b, emit(Op::Mul, v, nd.a));
                    break;
                case Op::Div:
                    add_to(nd.a, emit(Op::Div, v, nd.b));
                    add_to(nd.b, emit(Op::Neg, emit(Op::Div, emit(Op::Mul, v, i), nd.b), -1));
                    break;
                case Op::Neg:
                    add_to(nd.a, emit(Op::Neg, v, -1));
                    break;
                case Op::Exp:
                    add_to(nd.a, emit(Op::Mul, v, i));
                    break;
                case Op::Log:
                    add_to(nd.a, emit(Op::Div, v, nd.a));
                    break;
                case Op::Sin:
                    add_to(nd.a, emit(Op::Mul, v, emit(Op::Cos, nd.a, -1)));
                    break;
                case Op::Cos:
                    add_to(nd.a, emit(Op::Neg, emit(Op::Mul, v, emit(Op::Sin, nd.a, -1)), -1));
                    break;
                case Op::Sigmoid: {
                    // s*(1-s) with s the recorded output node
                    std::int32_t one = emit(Op::Const, -1, -1, Scalar(1));
                    std::int32_t sp = emit(Op::Mul, i, emit(Op::Sub, one, i));
                    add_to(nd.a, emit(Op::Mul, v, sp));
                    break;
                }
                case Op::Relu:
                    add_to(nd.a, emit(Op::Mul, v, emit(Op::Step, nd.a, -1)));
                    break;
                case Op::Silu: {
                    // s*(1 + x*(1-s))
                    std::int32_t s = emit(Op::Sigmoid, nd.a, -1);
                    std::int32_t one = emit(Op::Const, -1, -1, Scalar(1));
                    std::int32_t u =
                        emit(Op::Add, one, emit(Op::Mul, nd.a, emit(Op::Sub, one, s)));
                    add_to(nd.a, emit(Op::Mul, v, emit(Op::Mul, s, u)));
                    break;
                }
                case Op::NormCdf: {
                    // pdf(x) = c * exp(-x^2/2)
                    std::int32_t half = emit(Op::Const, -1, -1, Scalar(-0.5));
                    std::int32_t e = emit(Op::Exp, emit(Op::Mul, half, emit(Op::Mul, nd.a, nd.a)), -1);
                    std::int32_t c = emit(Op::Const, -1, -1, Scalar(0.3989422804014326779));
                    add_to(nd.a, emit(Op::Mul, v, emit(Op::Mul, c, e)));
                    break;
                }
                default:
                    throw std::logic_error("Tape::record_adjoints: unsupported op");
                }
            }
            std::vector<Var<Scalar>> out_vars;
            out_vars.reserve(wrt.size());
            for (const Var<Scalar>& w : wrt) {
                std::int32_t id = w.index() < n ? adj[w.index()] : -1;
                if (id < 0) id = emit(Op::Const, -1, -1, Scalar(0));
                out_vars.emplace_back(this, id);
            }
            return out_vars;
        }
    }

private:
    static Scalar eval_op(Op op, const Scalar& va, const Scalar& vb) {
        using std::cos;
        using std::exp;
        using std::log;
        using std::sin;
        switch (op) {
        case Op::Add: return va + vb;
        case Op::Sub: return va - vb;
        case Op::Mul: return va * vb;
        case Op::Div: return va / vb;
        case Op::Neg: return -va;
        case Op::Exp: return exp(va);
        case Op::Log: return log(va);
        case Op::Sin: return sin(va);
        case Op::Cos: return cos(va);
        case Op::Sigmoid: return sigmoid(va);
        case Op::Relu: return relu(va);
        case Op::Silu: return silu(va);
        case Op::Step: return relu_grad(va);
        case Op::NormCdf: return norm_cdf(va);
        default: throw std::logic_error("Tape: unsupported op");
        }
    }

    std::vector<Node> nodes_;
    std::vector<std::int32_t> inputs_;
};

template <class S>
Var<S> binary(Op op, Var<S> a, Var<S> b) {
    return {a.tape(), a.tape()->emit(op, a.index(), b.index())};
}

template <class S>
Var<S> unary(Op op, Var<S> a) {
    return {a.tape(), a.tape()->emit(op, a.index(), -1)};
}

template <class S> Var<S> operator+(Var<S> a, Var<S> b) { return binary(Op::Add, a, b); }
template <class S> Var<S> operator-(Var<S> a, Var<S> b) { return binary(Op::Sub, a, b); }
template <class S> Var<S> operator*(Var<S> a, Var<S> b) { return binary(Op::Mul, a, b); }
template <class S> Var<S> operator/(Var<S> a, Var<S> b) { return binary(Op::Div, a, b); }
template <class S> Var<S> operator-(Var<S> a) { return unary(Op::Neg, a); }

template <class S> Var<S> operator+(Var<S> a, double c) { return a + a.tape()->constant(S(c)); }
template <class S> Var<S> operator+(double c, Var<S> a) { return a.tape()->constant(S(c)) + a; }
template <class S> Var<S> operator-(Var<S> a, double c) { return a - a.tape()->constant(S(c)); }
template <class S> Var<S> operator-(double c, Var<S> a) { return a.tape()->constant(S(c)) - a; }
template <class S> Var<S> operator*(Var<S> a, double c) { return a * a.tape()->constant(S(c)); }
template <class S> Var<S> operator*(double c, Var<S> a) { return a.tape()->constant(S(c)) * a; }
template <class S> Var<S> operator/(Var<S> a, double c) { return a / a.tape()->constant(S(c)); }
template <class S> Var<S> operator/(double c, Var<S> a) { return a.tape()->constant(S(c)) / a; }

template <class S> Var<S> exp(Var<S> a) { return unary(Op::Exp, a); }
template <class S> Var<S> log(Var<S> a) { return unary(Op::Log, a); }
template <class S> Var<S> sin(Var<S> a) { return unary(Op::Sin, a); }
template <class S> Var<S> cos(Var<S> a) { return unary(Op::Cos, a); }
template <class S> Var<S> sigmoid(Var<S> a) { return unary(Op::Sigmoid, a); }
template <class S> Var<S> relu(Var<S> a) { return unary(Op::Relu, a); }
template <class S> Var<S> silu(Var<S> a) { return unary(Op::Silu, a); }
template <class S> Var<S> norm_cdf(Var<S> a) { return unary(Op::NormCdf, a); }

} // namespace sensnet
