#include "sensnet/network.hpp"
#include "sensnet/random.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sensnet {

void MlpModel::validate() const {
    if (weights.empty()) throw std::invalid_argument("MlpModel: no layers");
    if (weights.size() != biases.size())
        throw std::invalid_argument("MlpModel: weight/bias layer count mismatch");
    for (int l = 0; l < layer_count(); ++l) {
        if (weights[l].rows() != biases[l].size())
            throw std::invalid_argument("MlpModel: bias length mismatch");
        if (l > 0 && weights[l].cols() != weights[l - 1].rows())
            throw std::invalid_argument("MlpModel: adjacent layer dimensions disagree");
        if (!weights[l].allFinite() || !biases[l].allFinite())
            throw std::invalid_argument("MlpModel: non-finite parameter");
    }
}

MlpModel make_mlp(int input_dim, const std::vector<int>& hidden_widths, Activation activation,
                  std::uint64_t seed, int output_dim) {
    if (input_dim < 1 || output_dim < 1)
        throw std::invalid_argument("make_mlp: bad dimensions");
    for (int w : hidden_widths)
        if (w < 1) throw std::invalid_argument("make_mlp: bad hidden width");

    MlpModel m;
    m.activation = activation;
    Rng rng(seed);
    int fan_in = input_dim;
    auto add_layer = [&](int out) {
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Eigen::MatrixXd W(out, fan_in);
        for (int j = 0; j < out; ++j)
            for (int i = 0; i < fan_in; ++i) W(j, i) = rng.uniform(-bound, bound);
        m.weights.push_back(std::move(W));
        m.biases.push_back(Eigen::VectorXd::Zero(out));
        fan_in = out;
    };
    for (int w : hidden_widths) add_layer(w);
    add_layer(output_dim);
    return m;
}

double forward(const MlpModel& model, const Eigen::VectorXd& x) {
    model.validate();
    if (x.size() != model.input_dim())
        throw std::invalid_argument("forward: input dimension mismatch");
    if (model.output_dim() != 1) throw std::invalid_argument("forward: scalar output expected");
    Eigen::VectorXd a = x;
    const int L = model.layer_count();
    for (int l = 0; l < L; ++l) {
        Eigen::VectorXd z = model.weights[l] * a + model.biases[l];
        if (l < L - 1)
            for (int j = 0; j < z.size(); ++j) z(j) = activate(model.activation, z(j));
        a = std::move(z);
    }
    return a(0);
}

Eigen::VectorXd input_gradient(const MlpModel& model, const Eigen::VectorXd& x) {
    model.validate();
    if (x.size() != model.input_dim())
        throw std::invalid_argument("input_gradient: input dimension mismatch");
    if (model.output_dim() != 1)
        throw std::invalid_argument("input_gradient: scalar output expected");

    const int L = model.layer_count();
    std::vector<Eigen::VectorXd> pre(static_cast<std::size_t>(L));
    Eigen::VectorXd a = x;
    for (int l = 0; l < L; ++l) {
        pre[static_cast<std::size_t>(l)] = model.weights[l] * a + model.biases[l];
        a = pre[static_cast<std::size_t>(l)];
        if (l < L - 1)
            for (int j = 0; j < a.size(); ++j) a(j) = activate(model.activation, a(j));
    }

    Eigen::VectorXd d = model.weights[L - 1].transpose() * Eigen::VectorXd::Ones(1);
    for (int l = L - 2; l >= 0; --l) {
        for (int j = 0; j < d.size(); ++j)
            d(j) *= activate_grad(model.activation, pre[static_cast<std::size_t>(l)](j));
        d = model.weights[l].transpose() * d;
    }
    return d;
}

bool NodeEnclosures::matches(const MlpModel& model) const {
    if (static_cast<int>(pre.size()) != model.hidden_layer_count()) return false;
    if (post.size() != pre.size()) return false;
    for (int h = 0; h < model.hidden_layer_count(); ++h)
        if (pre[static_cast<std::size_t>(h)].size() != model.hidden_width(h) ||
            post[static_cast<std::size_t>(h)].size() != model.hidden_width(h))
            return false;
    return true;
}

std::pair<Interval, NodeEnclosures> forward_interval(const MlpModel& model,
                                                     const std::vector<Interval>& box) {
    model.validate();
    if (static_cast<int>(box.size()) != model.input_dim())
        throw std::invalid_argument("forward_interval: box dimension mismatch");
    if (model.output_dim() != 1)
        throw std::invalid_argument("forward_interval: scalar output expected");

    NodeEnclosures enc;
    IntervalVector a(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) a(static_cast<Eigen::Index>(i)) = box[i];

    const int L = model.layer_count();
    for (int l = 0; l < L; ++l) {
        IntervalMatrix W = model.weights[l].cast<Interval>();
        IntervalVector b = model.biases[l].cast<Interval>();
        IntervalVector k = W.lazyProduct(a) + b;
        if (l < L - 1) {
            IntervalVector n(k.size());
            for (int j = 0; j < k.size(); ++j) n(j) = activate(model.activation, k(j));
            enc.pre.push_back(k);
            enc.post.push_back(n);
            a = std::move(n);
        } else {
            enc.output = k(0);
        }
    }
    return {enc.output, std::move(enc)};
}

void interval_adjoints(const MlpModel& model, NodeEnclosures& enclosures) {
    model.validate();
    if (!enclosures.matches(model))
        throw std::invalid_argument("interval_adjoints: enclosures do not match model");

    const int H = model.hidden_layer_count();
    enclosures.adjoint.assign(static_cast<std::size_t>(H), IntervalVector());

    // seed [1,1] on the scalar output; [n¯]_h = W_{h+1}^T ([k¯]_{h+1})
    IntervalVector abar = model.weights[H].transpose().cast<Interval>().lazyProduct(
        IntervalVector::Constant(1, Interval(1.0)));
    for (int h = H - 1; h >= 0; --h) {
        enclosures.adjoint[static_cast<std::size_t>(h)] = abar;
        if (h > 0) {
            IntervalVector kbar(abar.size());
            for (int j = 0; j < abar.size(); ++j)
                kbar(j) =
                    activate_grad(model.activation, enclosures.pre[static_cast<std::size_t>(h)](j)) *
                    abar(j);
            abar = model.weights[h].transpose().cast<Interval>().lazyProduct(kbar);
        }
    }
}

MlpModel prune_node(const MlpModel& model, int hidden_layer, int node,
                    const NodeEnclosures& enclosures) {
    model.validate();
    if (hidden_layer < 0 || hidden_layer >= model.hidden_layer_count())
        throw std::invalid_argument("prune_node: not a hidden layer");
    const int width = model.hidden_width(hidden_layer);
    if (node < 0 || node >= width) throw std::invalid_argument("prune_node: bad node index");
    if (width < 2)
        throw std::invalid_argument("prune_node: cannot prune singleton layer; use remove_layer");
    if (!enclosures.matches(model))
        throw std::invalid_argument("prune_node: stale or missing enclosures");

    const Interval n_enc = enclosures.post[static_cast<std::size_t>(hidden_layer)](node);

    MlpModel out = model;
    auto drop_row = [](Eigen::MatrixXd& M, int r) {
        const Eigen::Index nr = M.rows() - 1;
        if (r < nr) M.middleRows(r, nr - r) = M.bottomRows(nr - r).eval();
        M.conservativeResize(nr, Eigen::NoChange);
    };
    auto drop_col = [](Eigen::MatrixXd& M, int c) {
        const Eigen::Index nc = M.cols() - 1;
        if (c < nc) M.middleCols(c, nc - c) = M.rightCols(nc - c).eval();
        M.conservativeResize(Eigen::NoChange, nc);
    };
    auto drop_elem = [](Eigen::VectorXd& v, int r) {
        const Eigen::Index n = v.size() - 1;
        if (r < n) v.segment(r, n - r) = v.tail(n - r).eval();
        v.conservativeResize(n);
    };

    // bias compensation before the outgoing column disappears
    Eigen::MatrixXd& W_next = out.weights[hidden_layer + 1];
    Eigen::VectorXd& b_next = out.biases[hidden_layer + 1];
    for (int j = 0; j < W_next.rows(); ++j)
        b_next(j) += midpoint(Interval(W_next(j, node)) * n_enc);

    drop_row(out.weights[hidden_layer], node);
    drop_elem(out.biases[hidden_layer], node);
    drop_col(W_next, node);
    return out;
}

MlpModel remove_layer(const MlpModel& model, int hidden_layer) {
    model.validate();
    if (model.hidden_layer_count() < 2)
        throw std::invalid_argument("remove_layer: cannot remove the only hidden layer");
    if (hidden_layer < 0 || hidden_layer >= model.hidden_layer_count())
        throw std::invalid_argument("remove_layer: not a hidden layer");

    MlpModel out = model;
    const std::size_t h = static_cast<std::size_t>(hidden_layer);
    out.weights[h + 1] = (model.weights[h + 1] * model.weights[h]).eval();
    out.biases[h + 1] = (model.weights[h + 1] * model.biases[h] + model.biases[h + 1]).eval();
    out.weights.erase(out.weights.begin() + static_cast<std::ptrdiff_t>(h));
    out.biases.erase(out.biases.begin() + static_cast<std::ptrdiff_t>(h));
    out.needs_retrain = true;
    return out;
}

std::size_t parameter_count(const MlpModel& model) {
    std::size_t n = 0;
    for (int l = 0; l < model.layer_count(); ++l)
        n += static_cast<std::size_t>(model.weights[l].size()) +
             static_cast<std::size_t>(model.biases[l].size());
    return n;
}

namespace {

constexpr std::uint32_t kMagic = 0x534e4554u; // "SNET"
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::vector<std::uint8_t>& out, const T& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T take(std::span<const std::uint8_t>& in) {
    if (in.size() < sizeof(T)) throw std::invalid_argument("deserialize: truncated model bytes");
    T v;
    std::memcpy(&v, in.data(), sizeof(T));
    in = in.subspan(sizeof(T));
    return v;
}

} // namespace

std::vector<std::uint8_t> serialize(const MlpModel& model) {
    model.validate();
    std::vector<std::uint8_t> out;
    put(out, kMagic);
    put(out, kVersion);
    put(out, static_cast<std::uint8_t>(model.activation));
    put(out, static_cast<std::uint32_t>(model.layer_count()));
    put(out, static_cast<std::uint32_t>(model.input_dim()));
    for (int l = 0; l < model.layer_count(); ++l)
        put(out, static_cast<std::uint32_t>(model.weights[l].rows()));
    for (int l = 0; l < model.layer_count(); ++l) {
        const auto& W = model.weights[l];
        for (int j = 0; j < W.rows(); ++j)
            for (int i = 0; i < W.cols(); ++i) put(out, W(j, i));
        const auto& b = model.biases[l];
        for (int j = 0; j < b.size(); ++j) put(out, b(j));
    }
    return out;
}

MlpModel deserialize(std::span<const std::uint8_t> bytes) {
    std::span<const std::uint8_t> in = bytes;
    if (take<std::uint32_t>(in) != kMagic) throw std::invalid_argument("deserialize: bad magic");
    if (take<std::uint32_t>(in) != kVersion)
        throw std::invalid_argument("deserialize: unsupported format version");
    const auto act = take<std::uint8_t>(in);
    if (act > 1) throw std::invalid_argument("deserialize: unknown activation");
    const auto layers = take<std::uint32_t>(in);
    if (layers == 0 || layers > 1024) throw std::invalid_argument("deserialize: bad layer count");
    const auto input_dim = take<std::uint32_t>(in);

    MlpModel m;
    m.activation = static_cast<Activation>(act);
    std::vector<std::uint32_t> dims(layers);
    for (auto& d : dims) d = take<std::uint32_t>(in);

    std::uint32_t fan_in = input_dim;
    for (std::uint32_t d : dims) {
        Eigen::MatrixXd W(d, fan_in);
        for (std::uint32_t j = 0; j < d; ++j)
            for (std::uint32_t i = 0; i < fan_in; ++i) W(j, i) = take<double>(in);
        Eigen::VectorXd b(d);
        for (std::uint32_t j = 0; j < d; ++j) b(j) = take<double>(in);
        m.weights.push_back(std::move(W));
        m.biases.push_back(std::move(b));
        fan_in = d;
    }
    if (!in.empty()) throw std::invalid_argument("deserialize: trailing bytes");
    m.validate();
    return m;
}

void save_model(const std::string& path, const MlpModel& model, std::uint64_t config_hash) {
    std::vector<std::uint8_t> body = serialize(model);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_model: cannot open " + path);
    f.write(reinterpret_cast<const char*>(&config_hash), sizeof(config_hash));
    f.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
    if (!f) throw std::runtime_error("save_model: write failed for " + path);
}

MlpModel load_model(const std::string& path, std::uint64_t* config_hash) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_model: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof(std::uint64_t))
        throw std::runtime_error("load_model: truncated file " + path);
    std::uint64_t h;
    std::memcpy(&h, bytes.data(), sizeof(h));
    if (config_hash) *config_hash = h;
    return deserialize(std::span<const std::uint8_t>(bytes).subspan(sizeof(h)));
}

} // namespace sensnet
