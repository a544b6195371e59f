#include "sensnet/training.hpp"
#include "sensnet/random.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sensnet {

void OneCycleConfig::validate() const {
    if (!(start > 0.0) || !(final_lr > 0.0) || !(peak > 0.0))
        throw std::invalid_argument("OneCycleConfig: rates must be positive");
    if (start > peak || final_lr > peak)
        throw std::invalid_argument("OneCycleConfig: peak must dominate start and final");
    if (!(rise_fraction > 0.0) || !(rise_fraction < 1.0))
        throw std::invalid_argument("OneCycleConfig: rise fraction must be in (0,1)");
    if (total_steps < 1) throw std::invalid_argument("OneCycleConfig: total_steps must be >= 1");
}

double lr_at(const OneCycleConfig& cfg, std::int64_t step) {
    cfg.validate();
    if (step < 0 || step > cfg.total_steps)
        throw std::out_of_range("lr_at: step outside schedule");
    constexpr double pi = 3.141592653589793238462643383279502884;
    const double rise = cfg.rise_fraction * static_cast<double>(cfg.total_steps);
    const double s = static_cast<double>(step);
    if (s <= rise) {
        const double t = rise > 0.0 ? s / rise : 1.0;
        return cfg.start + (cfg.peak - cfg.start) * 0.5 * (1.0 - std::cos(pi * t));
    }
    const double t = (s - rise) / (static_cast<double>(cfg.total_steps) - rise);
    return cfg.peak + (cfg.final_lr - cfg.peak) * 0.5 * (1.0 - std::cos(pi * t));
}

Gradients Gradients::zeros_like(const MlpModel& model) {
    Gradients g;
    for (int l = 0; l < model.layer_count(); ++l) {
        g.W.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        g.b.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
    return g;
}

bool Gradients::all_finite() const {
    for (const auto& m : W)
        if (!m.allFinite()) return false;
    for (const auto& v : b)
        if (!v.allFinite()) return false;
    return true;
}

AdamState AdamState::like(const MlpModel& model) {
    AdamState s;
    for (int l = 0; l < model.layer_count(); ++l) {
        s.mW.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        s.vW.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        s.mb.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
        s.vb.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
    return s;
}

void adam_step(AdamState& state, MlpModel& model, const Gradients& grads, double lr) {
    if (grads.W.size() != model.weights.size() || grads.b.size() != model.biases.size())
        throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (!grads.all_finite()) throw std::invalid_argument("adam_step: NaN gradient");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        state.mW[l] = state.beta1 * state.mW[l] + (1.0 - state.beta1) * grads.W[l];
        state.vW[l] = state.beta2 * state.vW[l] + (1.0 - state.beta2) * grads.W[l].cwiseAbs2();
        model.weights[l].array() -=
            lr * (state.mW[l].array() / bc1) / ((state.vW[l].array() / bc2).sqrt() + state.eps);
        state.mb[l] = state.beta1 * state.mb[l] + (1.0 - state.beta1) * grads.b[l];
        state.vb[l] = state.beta2 * state.vb[l] + (1.0 - state.beta2) * grads.b[l].cwiseAbs2();
        model.biases[l].array() -=
            lr * (state.mb[l].array() / bc1) / ((state.vb[l].array() / bc2).sqrt() + state.eps);
    }
}

Standardizer Standardizer::fit(const Dataset& data) {
    if (data.size() < 1) throw std::invalid_argument("Standardizer::fit: empty dataset");
    Standardizer st;
    const double n = static_cast<double>(data.size());
    st.x_mu = data.x.rowwise().mean();
    st.x_sigma = ((data.x.colwise() - st.x_mu).cwiseAbs2().rowwise().sum() / n).cwiseSqrt();
    for (Eigen::Index i = 0; i < st.x_sigma.size(); ++i)
        st.x_sigma(i) = std::max(st.x_sigma(i), 1e-9);
    st.y_mu = data.y.mean();
    st.y_sigma = std::max(std::sqrt((data.y.array() - st.y_mu).square().sum() / n), 1e-9);
    return st;
}

Dataset Standardizer::apply(const Dataset& data) const {
    Dataset out;
    out.x = (data.x.colwise() - x_mu).array().colwise() / x_sigma.array();
    out.y = (data.y.array() - y_mu) / y_sigma;
    if (data.dydx.size() > 0)
        out.dydx = data.dydx.array().colwise() * (x_sigma.array() / y_sigma);
    return out;
}

MlpModel Standardizer::to_core(const MlpModel& raw) const {
    raw.validate();
    MlpModel core = raw;
    core.biases[0] = raw.biases[0] + raw.weights[0] * x_mu;
    core.weights[0] = raw.weights[0] * x_sigma.asDiagonal();
    const std::size_t L = core.weights.size() - 1;
    core.weights[L] /= y_sigma;
    core.biases[L] = (core.biases[L].array() - y_mu).matrix() / y_sigma;
    return core;
}

MlpModel Standardizer::to_raw(const MlpModel& core) const {
    core.validate();
    MlpModel raw = core;
    const std::size_t L = raw.weights.size() - 1;
    raw.weights[L] = core.weights[L] * y_sigma;
    raw.biases[L] = core.biases[L] * y_sigma + Eigen::VectorXd::Constant(core.biases[L].size(), y_mu);
    raw.weights[0] = raw.weights[0] * x_sigma.cwiseInverse().asDiagonal();
    raw.biases[0] = raw.biases[0] - raw.weights[0] * x_mu;
    return raw;
}

void SobolevConfig::validate() const {
    if (lambda < 0.0) throw std::invalid_argument("SobolevConfig: lambda must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("SobolevConfig: batch size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("SobolevConfig: epochs must be >= 0");
}

namespace {

struct Cache {
    std::vector<Eigen::MatrixXd> Ain; // input of each layer; Ain[0] = X
    std::vector<Eigen::MatrixXd> Z;   // pre-activation of each layer
    std::vector<Eigen::MatrixXd> P;   // activation gradient per hidden layer
};

Eigen::RowVectorXd forward_batch(const MlpModel& m, const Eigen::MatrixXd& X, Cache& c) {
    const int L = m.layer_count();
    c.Ain.assign(static_cast<std::size_t>(L), {});
    c.Z.assign(static_cast<std::size_t>(L), {});
    c.P.assign(static_cast<std::size_t>(L - 1), {});
    c.Ain[0] = X;
    const Activation act = m.activation;
    for (int l = 0; l < L; ++l) {
        c.Z[static_cast<std::size_t>(l)] =
            (m.weights[l] * c.Ain[static_cast<std::size_t>(l)]).colwise() + m.biases[l];
        if (l + 1 < L) {
            c.Ain[static_cast<std::size_t>(l + 1)] = c.Z[static_cast<std::size_t>(l)].unaryExpr(
                [act](double v) { return activate(act, v); });
            c.P[static_cast<std::size_t>(l)] = c.Z[static_cast<std::size_t>(l)].unaryExpr(
                [act](double v) { return activate_grad(act, v); });
        }
    }
    return c.Z[static_cast<std::size_t>(L - 1)].row(0);
}

// Accumulates the batch gradient of
//   mean_b (yhat-y)^2/value_norm + lambda * mean_b sum_i (G-T)_ib^2/deriv_norm_i
// into g. The derivative-term gradient differentiates through the
// input-gradient sweep (double backprop via a tangent pass in direction U).
std::pair<double, double> batch_gradient(const MlpModel& m, const Eigen::MatrixXd& X,
                                         const Eigen::VectorXd& y, const Eigen::MatrixXd& T,
                                         double lambda, double value_norm,
                                         const Eigen::VectorXd& deriv_norm, Gradients& g) {
    const int L = m.layer_count();
    const double nb = static_cast<double>(X.cols());
    Cache c;
    Eigen::RowVectorXd yhat = forward_batch(m, X, c);

    Eigen::RowVectorXd resid = yhat - y.transpose();
    const double value_loss = resid.squaredNorm() / (nb * value_norm);

    // value term backprop
    Eigen::MatrixXd delta = resid * (2.0 / (nb * value_norm));
    for (int l = L - 1; l >= 0; --l) {
        g.W[static_cast<std::size_t>(l)].noalias() +=
            delta * c.Ain[static_cast<std::size_t>(l)].transpose();
        g.b[static_cast<std::size_t>(l)] += delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd d = m.weights[l].transpose() * delta;
            delta = d.cwiseProduct(c.P[static_cast<std::size_t>(l - 1)]);
        }
    }

    double deriv_loss = 0.0;
    if (lambda > 0.0) {
        if (T.size() == 0) throw std::invalid_argument("sobolev gradient: missing dydx targets");

        // input gradients G (reverse sweep, batched)
        Eigen::MatrixXd D = m.weights[L - 1].transpose() * Eigen::MatrixXd::Ones(1, X.cols());
        for (int l = L - 2; l >= 0; --l) {
            Eigen::MatrixXd dz = D.cwiseProduct(c.P[static_cast<std::size_t>(l)]);
            D = m.weights[l].transpose() * dz;
        }

        Eigen::VectorXd inv_norm = deriv_norm.size() > 0
                                       ? Eigen::VectorXd(deriv_norm.cwiseInverse())
                                       : Eigen::VectorXd(Eigen::VectorXd::Ones(X.rows()));
        Eigen::MatrixXd R = D - T;
        deriv_loss = (inv_norm.asDiagonal() * R.cwiseAbs2()).sum() / nb;
        Eigen::MatrixXd U = (2.0 * lambda / nb) * (inv_norm.asDiagonal() * R);

        // tangent pass in direction U
        const Activation act = m.activation;
        std::vector<Eigen::MatrixXd> adot_in(static_cast<std::size_t>(L));
        std::vector<Eigen::MatrixXd> zdot(static_cast<std::size_t>(L));
        adot_in[0] = U;
        for (int l = 0; l < L; ++l) {
            zdot[static_cast<std::size_t>(l)] = m.weights[l] * adot_in[static_cast<std::size_t>(l)];
            if (l + 1 < L)
                adot_in[static_cast<std::size_t>(l + 1)] =
                    c.P[static_cast<std::size_t>(l)].cwiseProduct(zdot[static_cast<std::size_t>(l)]);
        }

        // reverse of the tangent statements
        std::vector<Eigen::MatrixXd> az(static_cast<std::size_t>(L - 1));
        Eigen::MatrixXd hat_adot;
        Eigen::MatrixXd hat_z;
        for (int l = L - 1; l >= 0; --l) {
            if (l == L - 1) {
                hat_z = Eigen::MatrixXd::Ones(1, X.cols());
            } else {
                hat_z = c.P[static_cast<std::size_t>(l)].cwiseProduct(hat_adot);
                az[static_cast<std::size_t>(l)] =
                    c.Z[static_cast<std::size_t>(l)]
                        .unaryExpr([act](double v) { return activate_second(act, v); })
                        .cwiseProduct(zdot[static_cast<std::size_t>(l)])
                        .cwiseProduct(hat_adot);
            }
            g.W[static_cast<std::size_t>(l)].noalias() +=
                hat_z * adot_in[static_cast<std::size_t>(l)].transpose();
            if (l > 0) hat_adot = m.weights[l].transpose() * hat_z;
        }

        // reverse of the primal statements reached through the activation
        // gradients (phi'' contributions accumulated above)
        Eigen::MatrixXd aa;
        for (int l = L - 2; l >= 0; --l) {
            Eigen::MatrixXd az_l = az[static_cast<std::size_t>(l)];
            if (aa.size() > 0)
                az_l += c.P[static_cast<std::size_t>(l)].cwiseProduct(aa);
            g.W[static_cast<std::size_t>(l)].noalias() +=
                az_l * c.Ain[static_cast<std::size_t>(l)].transpose();
            g.b[static_cast<std::size_t>(l)] += az_l.rowwise().sum();
            if (l > 0) aa = m.weights[l].transpose() * az_l;
        }
    }
    return {value_loss, deriv_loss};
}

MlpModel fit(MlpModel raw, const Dataset& data, double lambda, int batch_size, int epochs,
             OneCycleConfig schedule, std::uint64_t seed, std::vector<TrainLogRow>* log) {
    raw.validate();
    if (data.size() < 1) throw std::invalid_argument("train: empty dataset");
    if (lambda > 0.0 && data.dydx.size() == 0)
        throw std::invalid_argument("train: sobolev training requires dydx targets");
    if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");

    const Standardizer st = Standardizer::fit(data);
    const Dataset sd = st.apply(data);
    MlpModel core = st.to_core(raw);

    const int n = static_cast<int>(sd.size());
    const int bs = std::min(batch_size, n);
    const int steps_per_epoch = (n + bs - 1) / bs;
    if (schedule.total_steps == 0)
        schedule.total_steps = static_cast<std::int64_t>(epochs) * steps_per_epoch;
    if (epochs > 0) schedule.validate();

    Eigen::VectorXd deriv_norm;
    if (lambda > 0.0) {
        deriv_norm = ((sd.dydx.colwise() - sd.dydx.rowwise().mean()).cwiseAbs2().rowwise().sum() /
                      static_cast<double>(n))
                         .cwiseMax(1e-12);
    }

    AdamState adam = AdamState::like(core);
    Gradients g = Gradients::zeros_like(core);
    Rng shuffle_rng(derive_seed(seed, "train.shuffle"));
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);

    std::int64_t gstep = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(idx);
        double vsum = 0.0, dsum = 0.0, lr = 0.0;
        for (int b0 = 0; b0 < n; b0 += bs) {
            const int count = std::min(bs, n - b0);
            std::vector<int> cols(idx.begin() + b0, idx.begin() + b0 + count);
            Eigen::MatrixXd X = sd.x(Eigen::all, cols);
            Eigen::VectorXd yb = sd.y(cols);
            Eigen::MatrixXd Tb =
                lambda > 0.0 ? Eigen::MatrixXd(sd.dydx(Eigen::all, cols)) : Eigen::MatrixXd();

            for (auto& m : g.W) m.setZero();
            for (auto& v : g.b) v.setZero();
            auto [vl, dl] = batch_gradient(core, X, yb, Tb, lambda, 1.0, deriv_norm, g);
            if (!std::isfinite(vl) || !std::isfinite(dl) || !g.all_finite())
                throw std::runtime_error("train: loss diverged (non-finite gradient) at epoch " +
                                         std::to_string(epoch));
            lr = lr_at(schedule, gstep++);
            adam_step(adam, core, g, lr);
            vsum += vl * count;
            dsum += dl * count;
        }
        if (log)
            log->push_back({epoch, lr, (vsum + lambda * dsum) / n, vsum / n, dsum / n});
    }
    core.needs_retrain = false;
    return st.to_raw(core);
}

} // namespace

std::pair<double, Gradients> sobolev_loss(const MlpModel& model, const Dataset& batch,
                                          double lambda, double value_norm,
                                          const Eigen::VectorXd& deriv_norm) {
    model.validate();
    if (batch.size() < 1) throw std::invalid_argument("sobolev_loss: empty batch");
    if (lambda < 0.0) throw std::invalid_argument("sobolev_loss: lambda must be >= 0");
    if (lambda > 0.0 && batch.dydx.size() == 0)
        throw std::invalid_argument("sobolev_loss: missing dydx targets");
    Gradients g = Gradients::zeros_like(model);
    auto [vl, dl] =
        batch_gradient(model, batch.x, batch.y, batch.dydx, lambda, value_norm, deriv_norm, g);
    return {vl + lambda * dl, std::move(g)};
}

MlpModel train_mse(MlpModel model, const Dataset& data, const OneCycleConfig& schedule,
                   int epochs, std::uint64_t seed, std::vector<TrainLogRow>* log,
                   int batch_size) {
    return fit(std::move(model), data, 0.0, batch_size, epochs, schedule, seed, log);
}

MlpModel train_sobolev(MlpModel model, const Dataset& data, const SobolevConfig& cfg,
                       const OneCycleConfig& schedule, std::uint64_t seed,
                       std::vector<TrainLogRow>* log) {
    cfg.validate();
    return fit(std::move(model), data, cfg.lambda, cfg.batch_size, cfg.epochs, schedule, seed,
               log);
}

double r2_score(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    if (predictions.size() != targets.size())
        throw std::invalid_argument("r2_score: length mismatch");
    if (targets.size() < 2) throw std::invalid_argument("r2_score: need at least 2 points");
    const double mean = targets.mean();
    const double ss_tot = (targets.array() - mean).square().sum();
    if (ss_tot == 0.0) throw std::invalid_argument("r2_score: constant targets");
    const double ss_res = (targets - predictions).squaredNorm();
    return 1.0 - ss_res / ss_tot;
}

EvalReport evaluate(const MlpModel& model, const BasketConfig& cfg, int grid_size) {
    model.validate();
    if (model.input_dim() != cfg.assets)
        throw std::invalid_argument("evaluate: model/config dimension mismatch");
    return evaluate_with([&](const Eigen::VectorXd& x) { return forward(model, x); },
                         [&](const Eigen::VectorXd& x) { return input_gradient(model, x); }, cfg,
                         grid_size);
}

EvalReport evaluate_with(const std::function<double(const Eigen::VectorXd&)>& value_fn,
                         const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_fn,
                         const BasketConfig& cfg, int grid_size) {
    cfg.validate();
    if (grid_size < 2) throw std::invalid_argument("evaluate: grid size must be >= 2");

    const int m = cfg.assets;
    Eigen::VectorXd lo(m), wid(m);
    for (int i = 0; i < m; ++i) {
        lo(i) = cfg.spot_box[static_cast<std::size_t>(i)].lo();
        wid(i) = width(cfg.spot_box[static_cast<std::size_t>(i)]);
    }

    EvalReport rep;
    rep.grid_size = grid_size;
    Eigen::VectorXd val_pred(grid_size), val_true(grid_size);
    Eigen::VectorXd del_pred(grid_size * m), del_true(grid_size * m);
    Eigen::VectorXd gam_pred(grid_size * m * m), gam_true(grid_size * m * m);

    const double denom = cfg.weights.dot(wid); // dB0/dt along the grid path
    for (int k = 0; k < grid_size; ++k) {
        const double t = static_cast<double>(k) / (grid_size - 1);
        const Eigen::VectorXd x = lo + t * wid;

        const double vp = value_fn(x);
        const double vt = analytic_price(cfg, x);
        val_pred(k) = vp;
        val_true(k) = vt;

        const Eigen::VectorXd gp = grad_fn(x);
        const Eigen::VectorXd gt = analytic_delta(cfg, x);
        del_pred.segment(k * m, m) = gp;
        del_true.segment(k * m, m) = gt;

        // model Gamma: central differences of the input gradient
        Eigen::MatrixXd gamma_p(m, m);
        for (int j = 0; j < m; ++j) {
            const double h = 1e-3 * wid(j);
            Eigen::VectorXd xp = x, xm = x;
            xp(j) += h;
            xm(j) -= h;
            gamma_p.col(j) = (grad_fn(xp) - grad_fn(xm)) / (2.0 * h);
        }
        const Eigen::MatrixXd gamma_t = analytic_gamma(cfg, x);
        for (int j = 0; j < m; ++j) {
            gam_pred.segment(k * m * m + j * m, m) = gamma_p.col(j);
            gam_true.segment(k * m * m + j * m, m) = gamma_t.col(j);
        }

        EvalPoint pt;
        pt.spot = basket_spot(cfg, x);
        pt.value_pred = vp;
        pt.value_true = vt;
        // basket-projected sensitivities along the grid direction
        pt.delta_pred = gp.dot(wid) / denom;
        pt.delta_true = gt.dot(wid) / denom;
        pt.gamma_pred = wid.dot(gamma_p * wid) / (denom * denom);
        pt.gamma_true = wid.dot(gamma_t * wid) / (denom * denom);
        rep.points.push_back(pt);
    }

    rep.values_r2 = r2_score(val_pred, val_true);
    rep.deltas_r2 = r2_score(del_pred, del_true);
    rep.gammas_r2 = r2_score(gam_pred, gam_true);
    return rep;
}

} // namespace sensnet
