#pragma once

#include "sensnet/interval.hpp"
#include "sensnet/tape.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace Eigen {
template <>
struct NumTraits<sensnet::Interval> : GenericNumTraits<sensnet::Interval> {
    typedef sensnet::Interval Real;
    typedef sensnet::Interval NonInteger;
    typedef sensnet::Interval Nested;
    typedef sensnet::Interval Literal;
    enum {
        IsComplex = 0,
        IsInteger = 0,
        IsSigned = 1,
        RequireInitialization = 1,
        ReadCost = 2,
        AddCost = 2,
        MulCost = 8,
    };
    static inline Real epsilon() { return sensnet::Interval(0.0); }
    static inline Real dummy_precision() { return sensnet::Interval(0.0); }
    static inline int digits10() { return 15; }
};
} // namespace Eigen

namespace sensnet {

using IntervalVector = Eigen::Matrix<Interval, Eigen::Dynamic, 1>;
using IntervalMatrix = Eigen::Matrix<Interval, Eigen::Dynamic, Eigen::Dynamic>;

enum class Activation : std::uint8_t { ReLU = 0, SiLU = 1 };

inline double activate(Activation a, double x) {
    return a == Activation::ReLU ? relu(x) : silu(x);
}
inline double activate_grad(Activation a, double x) {
    return a == Activation::ReLU ? relu_grad(x) : silu_prime(x);
}
inline double activate_second(Activation a, double x) {
    return a == Activation::ReLU ? 0.0 : silu_second(x);
}
inline Interval activate(Activation a, const Interval& x) {
    return a == Activation::ReLU ? relu(x) : silu(x);
}
inline Interval activate_grad(Activation a, const Interval& x) {
    return a == Activation::ReLU ? relu_grad(x) : silu_grad(x);
}

// Fully connected MLP: hidden layers use `activation`, output layer is
// affine. weights[l] is (out x in); hidden layers are indexed 0..L-2.
// Models are value types: immutable for inference, edited by copy.
struct MlpModel {
    Activation activation = Activation::SiLU;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    bool needs_retrain = false; // set by remove_layer, cleared by training

    int layer_count() const { return static_cast<int>(weights.size()); }
    int hidden_layer_count() const { return layer_count() - 1; }
    int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
    int output_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.back().rows()); }
    int hidden_width(int h) const { return static_cast<int>(weights[h].rows()); }

    void validate() const;
};

// He-style uniform init, bound sqrt(6/fan_in); biases zero.
MlpModel make_mlp(int input_dim, const std::vector<int>& hidden_widths, Activation activation,
                  std::uint64_t seed, int output_dim = 1);

double forward(const MlpModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd input_gradient(const MlpModel& model, const Eigen::VectorXd& x);

// Guaranteed enclosures of every pre-activation [k], post-activation [n]
// and node adjoint [n¯] for a given input box, mirroring the model shape.
struct NodeEnclosures {
    std::vector<IntervalVector> pre;
    std::vector<IntervalVector> post;
    std::vector<IntervalVector> adjoint;
    Interval output;

    bool matches(const MlpModel& model) const;
};

std::pair<Interval, NodeEnclosures> forward_interval(const MlpModel& model,
                                                     const std::vector<Interval>& box);

// Interval reverse sweep; fills enclosures.adjoint with [n¯] per hidden node.
void interval_adjoints(const MlpModel& model, NodeEnclosures& enclosures);

// Remove hidden node (h, i). Incoming row and bias are deleted, the outgoing
// column is deleted, and each downstream bias absorbs the midpoint of the
// removed node's outgoing contribution w * [n] taken from `enclosures`.
MlpModel prune_node(const MlpModel& model, int hidden_layer, int node,
                    const NodeEnclosures& enclosures);

// Remove hidden layer h by linear composition (activation treated as
// identity); the result is flagged as requiring retraining.
MlpModel remove_layer(const MlpModel& model, int hidden_layer);

std::size_t parameter_count(const MlpModel& model);

std::vector<std::uint8_t> serialize(const MlpModel& model);
MlpModel deserialize(std::span<const std::uint8_t> bytes);

// Model file = serialized model plus the hash of the producing config.
void save_model(const std::string& path, const MlpModel& model, std::uint64_t config_hash);
MlpModel load_model(const std::string& path, std::uint64_t* config_hash = nullptr);

// Record the forward pass on a tape. Parameter order (when recorded as
// inputs): per layer, weights row-major, then biases.
template <class S>
struct TapedMlp {
    Var<S> output;
    std::vector<Var<S>> inputs;
    std::vector<Var<S>> params;
};

template <class S>
TapedMlp<S> record_mlp(Tape<S>& tape, const MlpModel& model, const std::vector<S>& x,
                       bool params_as_inputs = false) {
    model.validate();
    if (static_cast<int>(x.size()) != model.input_dim())
        throw std::invalid_argument("record_mlp: input dimension mismatch");
    if (model.output_dim() != 1)
        throw std::invalid_argument("record_mlp: scalar output expected");

    TapedMlp<S> rec;
    std::vector<Var<S>> act;
    act.reserve(x.size());
    for (const S& xi : x) act.push_back(tape.input(xi));
    rec.inputs = act;

    const int L = model.layer_count();
    for (int l = 0; l < L; ++l) {
        const auto& W = model.weights[l];
        const auto& b = model.biases[l];
        std::vector<Var<S>> wv(static_cast<std::size_t>(W.size()));
        std::vector<Var<S>> bv(static_cast<std::size_t>(b.size()));
        for (int j = 0; j < W.rows(); ++j)
            for (int i = 0; i < W.cols(); ++i) {
                Var<S> p = params_as_inputs ? tape.input(S(W(j, i))) : tape.constant(S(W(j, i)));
                wv[static_cast<std::size_t>(j * W.cols() + i)] = p;
                if (params_as_inputs) rec.params.push_back(p);
            }
        for (int j = 0; j < b.size(); ++j) {
            Var<S> p = params_as_inputs ? tape.input(S(b(j))) : tape.constant(S(b(j)));
            bv[static_cast<std::size_t>(j)] = p;
            if (params_as_inputs) rec.params.push_back(p);
        }

        std::vector<Var<S>> next(static_cast<std::size_t>(W.rows()));
        for (int j = 0; j < W.rows(); ++j) {
            Var<S> acc = wv[static_cast<std::size_t>(j * W.cols())] * act[0];
            for (int i = 1; i < W.cols(); ++i)
                acc = acc + wv[static_cast<std::size_t>(j * W.cols() + i)] * act[static_cast<std::size_t>(i)];
            acc = acc + bv[static_cast<std::size_t>(j)];
            if (l < L - 1)
                acc = model.activation == Activation::ReLU ? relu(acc) : silu(acc);
            next[static_cast<std::size_t>(j)] = acc;
        }
        act = std::move(next);
    }
    rec.output = act[0];
    return rec;
}

} // namespace sensnet
