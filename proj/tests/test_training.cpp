#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sensnet/random.hpp"
#include "sensnet/training.hpp"

#include <cmath>

using namespace sensnet;

namespace {

bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

OneCycleConfig schedule_of(std::int64_t total) { return {0.1, 4e-3, 1e-5, 0.3, total}; }

bool models_equal(const MlpModel& a, const MlpModel& b) {
    if (a.layer_count() != b.layer_count()) return false;
    for (int l = 0; l < a.layer_count(); ++l)
        if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    return true;
}

// independent oracle: per-sample tapes, recorded input-adjoints, full loss
// node, one reverse pass for the parameter gradient
std::pair<double, Gradients> tape_sobolev(const MlpModel& net, const Dataset& batch,
                                          double lambda, double value_norm,
                                          const Eigen::VectorXd& deriv_norm) {
    Gradients g = Gradients::zeros_like(net);
    const int n = static_cast<int>(batch.size());
    const int m = static_cast<int>(batch.dim());
    double loss = 0.0;
    for (int s = 0; s < n; ++s) {
        std::vector<double> x(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) x[static_cast<std::size_t>(i)] = batch.x(i, s);
        Tape<double> t;
        auto rec = record_mlp(t, net, x, true);
        Var<double> L = (rec.output - batch.y(s)) * (rec.output - batch.y(s)) * (1.0 / value_norm);
        if (lambda > 0.0) {
            auto gv = t.record_adjoints(rec.output, rec.inputs);
            for (int i = 0; i < m; ++i) {
                Var<double> r = gv[static_cast<std::size_t>(i)] - batch.dydx(i, s);
                L = L + r * r * (lambda / deriv_norm(i));
            }
        }
        loss += L.value() / n;
        auto adj = t.reverse(L, 1.0 / n);
        std::size_t p = 0;
        for (int l = 0; l < net.layer_count(); ++l) {
            for (int j = 0; j < net.weights[l].rows(); ++j)
                for (int i = 0; i < net.weights[l].cols(); ++i)
                    g.W[static_cast<std::size_t>(l)](j, i) +=
                        adj[static_cast<std::size_t>(rec.params[p++].index())];
            for (int j = 0; j < net.biases[l].size(); ++j)
                g.b[static_cast<std::size_t>(l)](j) +=
                    adj[static_cast<std::size_t>(rec.params[p++].index())];
        }
    }
    return {loss, std::move(g)};
}

Dataset quadratic_dataset(int n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.x.resize(1, n);
    ds.y.resize(n);
    ds.dydx.resize(1, n);
    for (int s = 0; s < n; ++s) {
        const double x = rng.uniform(-2.0, 2.0);
        ds.x(0, s) = x;
        ds.y(s) = x * x;
        ds.dydx(0, s) = 2.0 * x;
    }
    return ds;
}

} // namespace

TEST_CASE("one-cycle schedule endpoints and shape") {
    OneCycleConfig cfg = schedule_of(1000);
    CHECK(std::abs(lr_at(cfg, 0) - 4e-3) < 1e-12);
    CHECK(std::abs(lr_at(cfg, 300) - 0.1) < 1e-12);
    CHECK(std::abs(lr_at(cfg, 1000) - 1e-5) < 1e-12);
    CHECK(std::abs(lr_at(cfg, 150) - 0.052) < 1e-12);

    double prev = lr_at(cfg, 0);
    for (int s = 1; s <= 300; ++s) {
        const double v = lr_at(cfg, s);
        CHECK(v >= prev);
        prev = v;
    }
    for (int s = 301; s <= 1000; ++s) {
        const double v = lr_at(cfg, s);
        CHECK(v <= prev);
        prev = v;
    }

    CHECK_THROWS_AS(lr_at(cfg, -1), std::out_of_range);
    CHECK_THROWS_AS(lr_at(cfg, 1001), std::out_of_range);
    OneCycleConfig bad = cfg;
    bad.start = 0.5; // above peak
    CHECK_THROWS_AS(lr_at(bad, 0), std::invalid_argument);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    MlpModel net = make_mlp(1, {3}, Activation::SiLU, 1);
    MlpModel before = net;
    AdamState st = AdamState::like(net);
    adam_step(st, net, Gradients::zeros_like(net), 0.1);
    CHECK(models_equal(net, before));
}

TEST_CASE("adam: first step from zero state") {
    MlpModel net;
    net.weights = {Eigen::MatrixXd::Zero(1, 1)};
    net.biases = {Eigen::VectorXd::Zero(1)};
    AdamState st = AdamState::like(net);
    Gradients g = Gradients::zeros_like(net);
    g.W[0](0, 0) = 1.0;
    adam_step(st, net, g, 0.1);
    CHECK(net.weights[0](0, 0) == doctest::Approx(-0.09999999900000009).epsilon(1e-15));

    g.W[0](0, 0) = std::nan("");
    CHECK_THROWS_AS(adam_step(st, net, g, 0.1), std::invalid_argument);
}

TEST_CASE("adam: steady state under constant gradient approaches lr") {
    MlpModel net;
    net.weights = {Eigen::MatrixXd::Zero(1, 1)};
    net.biases = {Eigen::VectorXd::Zero(1)};
    AdamState st = AdamState::like(net);
    Gradients g = Gradients::zeros_like(net);
    g.W[0](0, 0) = 3.0;
    double prev = 0.0;
    double step_size = 0.0;
    for (int i = 0; i < 500; ++i) {
        adam_step(st, net, g, 0.1);
        step_size = prev - net.weights[0](0, 0);
        prev = net.weights[0](0, 0);
    }
    CHECK(step_size == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("standardizer: fold/unfold preserve the function") {
    Rng rng(3);
    Dataset ds = quadratic_dataset(500, 17);
    Standardizer st = Standardizer::fit(ds);
    MlpModel core = make_mlp(1, {6, 4}, Activation::SiLU, 5);
    MlpModel raw = st.to_raw(core);
    MlpModel back = st.to_core(raw);
    for (int s = 0; s < 100; ++s) {
        Eigen::VectorXd x = Eigen::VectorXd::Constant(1, rng.uniform(-2, 2));
        Eigen::VectorXd xs = (x - st.x_mu).cwiseQuotient(st.x_sigma);
        CHECK(close_rel(forward(raw, x), st.y_mu + st.y_sigma * forward(core, xs), 1e-12));
        CHECK(close_rel(forward(back, xs), forward(core, xs), 1e-10));
    }
    Dataset sd = st.apply(ds);
    CHECK(std::abs(sd.y.mean()) < 1e-12);
    CHECK(std::abs((sd.y.array() - sd.y.mean()).square().mean() - 1.0) < 1e-12);
}

TEST_CASE("sobolev_loss: lambda zero is plain mean squared error") {
    Rng rng(23);
    MlpModel net = make_mlp(2, {4}, Activation::SiLU, 11);
    Dataset batch;
    batch.x.resize(2, 16);
    batch.y.resize(16);
    for (int s = 0; s < 16; ++s) {
        batch.x(0, s) = rng.uniform(-1, 1);
        batch.x(1, s) = rng.uniform(-1, 1);
        batch.y(s) = rng.uniform(-1, 1);
    }
    auto [loss, g] = sobolev_loss(net, batch, 0.0);
    double want = 0.0;
    for (int s = 0; s < 16; ++s) {
        const double r = forward(net, batch.x.col(s)) - batch.y(s);
        want += r * r / 16;
    }
    CHECK(loss == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("sobolev_loss: perfect model has zero loss and gradient") {
    MlpModel net = make_mlp(2, {5, 4}, Activation::SiLU, 31);
    Rng rng(37);
    Dataset batch;
    batch.x.resize(2, 8);
    batch.y.resize(8);
    batch.dydx.resize(2, 8);
    for (int s = 0; s < 8; ++s) {
        batch.x(0, s) = rng.uniform(-1, 1);
        batch.x(1, s) = rng.uniform(-1, 1);
        batch.y(s) = forward(net, batch.x.col(s));
        batch.dydx.col(s) = input_gradient(net, batch.x.col(s));
    }
    auto [loss, g] = sobolev_loss(net, batch, 1.0);
    CHECK(loss == 0.0);
    for (const auto& W : g.W) CHECK(W.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& b : g.b) CHECK(b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sobolev_loss: gradient matches tape and finite differences") {
    Rng rng(41);
    for (int rep = 0; rep < 6; ++rep) {
        const Activation act = rep % 2 == 0 ? Activation::SiLU : Activation::ReLU;
        const int m = 1 + static_cast<int>(rng.index(2));
        std::vector<int> hidden;
        const int depth = 1 + static_cast<int>(rng.index(2));
        for (int i = 0; i < depth; ++i) hidden.push_back(2 + static_cast<int>(rng.index(4)));
        MlpModel net = make_mlp(m, hidden, act, rng.next_u64());

        Dataset batch;
        const int n = 5;
        batch.x.resize(m, n);
        batch.y.resize(n);
        batch.dydx.resize(m, n);
        for (int s = 0; s < n; ++s) {
            for (int i = 0; i < m; ++i) batch.x(i, s) = rng.uniform(-1.5, 1.5);
            batch.y(s) = rng.uniform(-1, 1);
            for (int i = 0; i < m; ++i) batch.dydx(i, s) = rng.uniform(-1, 1);
        }
        const double lambda = 0.7;
        const double vnorm = 1.3;
        Eigen::VectorXd dnorm(m);
        for (int i = 0; i < m; ++i) dnorm(i) = 0.5 + static_cast<double>(i);

        auto [loss, g] = sobolev_loss(net, batch, lambda, vnorm, dnorm);
        auto [tloss, tg] = tape_sobolev(net, batch, lambda, vnorm, dnorm);
        CHECK(close_rel(loss, tloss, 1e-10));
        for (int l = 0; l < net.layer_count(); ++l) {
            for (int j = 0; j < g.W[static_cast<std::size_t>(l)].rows(); ++j)
                for (int i = 0; i < g.W[static_cast<std::size_t>(l)].cols(); ++i)
                    CHECK(close_rel(g.W[static_cast<std::size_t>(l)](j, i),
                                    tg.W[static_cast<std::size_t>(l)](j, i), 1e-9));
            for (int j = 0; j < g.b[static_cast<std::size_t>(l)].size(); ++j)
                CHECK(close_rel(g.b[static_cast<std::size_t>(l)](j),
                                tg.b[static_cast<std::size_t>(l)](j), 1e-9));
        }

        // finite differences of the loss over random parameters
        const double h = 1e-6;
        for (int probe = 0; probe < 8; ++probe) {
            const int l = static_cast<int>(rng.index(static_cast<std::size_t>(net.layer_count())));
            auto& W = net.weights[l];
            const int j = static_cast<int>(rng.index(static_cast<std::size_t>(W.rows())));
            const int i = static_cast<int>(rng.index(static_cast<std::size_t>(W.cols())));
            MlpModel p = net, q = net;
            p.weights[l](j, i) += h;
            q.weights[l](j, i) -= h;
            const double fp = sobolev_loss(p, batch, lambda, vnorm, dnorm).first;
            const double fq = sobolev_loss(q, batch, lambda, vnorm, dnorm).first;
            CHECK(close_rel(g.W[static_cast<std::size_t>(l)](j, i), (fp - fq) / (2 * h), 1e-5));
        }
    }
}

TEST_CASE("sobolev_loss: error paths") {
    MlpModel net = make_mlp(1, {3}, Activation::SiLU, 7);
    Dataset batch;
    batch.x.resize(1, 4);
    batch.x.setZero();
    batch.y = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(sobolev_loss(net, batch, 1.0), std::invalid_argument); // missing dydx
    CHECK_THROWS_AS(sobolev_loss(net, batch, -1.0), std::invalid_argument);
    Dataset empty;
    CHECK_THROWS_AS(sobolev_loss(net, empty, 0.0), std::invalid_argument);
}

TEST_CASE("train_mse: realizable linear target") {
    Rng rng(47);
    Dataset ds;
    const int n = 256;
    ds.x.resize(1, n);
    ds.y.resize(n);
    for (int s = 0; s < n; ++s) {
        ds.x(0, s) = rng.uniform(-3, 3);
        ds.y(s) = 2.0 * ds.x(0, s);
    }
    MlpModel linear;
    linear.weights = {Eigen::MatrixXd::Zero(1, 1)};
    linear.biases = {Eigen::VectorXd::Zero(1)};
    MlpModel fit = train_mse(linear, ds, schedule_of(0), 200, 5);
    double mse = 0;
    for (int s = 0; s < n; ++s) {
        const double r = forward(fit, ds.x.col(s)) - ds.y(s);
        mse += r * r / n;
    }
    CHECK(mse < 1e-6);
}

TEST_CASE("train_mse: deterministic per seed") {
    Dataset ds = quadratic_dataset(512, 3);
    MlpModel net = make_mlp(1, {8, 8}, Activation::SiLU, 9);
    MlpModel a = train_mse(net, ds, schedule_of(0), 5, 123);
    MlpModel b = train_mse(net, ds, schedule_of(0), 5, 123);
    MlpModel c = train_mse(net, ds, schedule_of(0), 5, 124);
    CHECK(models_equal(a, b));
    CHECK(!models_equal(a, c));
}

TEST_CASE("train_sobolev: lambda zero reproduces train_mse bitwise") {
    Dataset ds = quadratic_dataset(512, 29);
    MlpModel net = make_mlp(1, {8, 8}, Activation::SiLU, 15);
    std::vector<TrainLogRow> log_a, log_b;
    MlpModel a = train_mse(net, ds, schedule_of(0), 8, 321, &log_a);
    SobolevConfig cfg;
    cfg.lambda = 0.0;
    cfg.batch_size = 256;
    cfg.epochs = 8;
    MlpModel b = train_sobolev(net, ds, cfg, schedule_of(0), 321, &log_b);
    CHECK(models_equal(a, b));
    REQUIRE(log_a.size() == log_b.size());
    for (std::size_t i = 0; i < log_a.size(); ++i)
        CHECK(log_a[i].train_loss == log_b[i].train_loss);
}

TEST_CASE("train_sobolev: quadratic target learns values and derivatives") {
    Dataset ds = quadratic_dataset(2048, 31);
    MlpModel net = make_mlp(1, {16, 16}, Activation::SiLU, 77);
    SobolevConfig cfg;
    cfg.lambda = 1.0;
    cfg.batch_size = 256;
    cfg.epochs = 150;
    std::vector<TrainLogRow> log;
    MlpModel fit = train_sobolev(net, ds, cfg, schedule_of(0), 55, &log);

    Rng rng(61);
    double value_mse = 0, deriv_mse = 0;
    const int n_test = 500;
    for (int s = 0; s < n_test; ++s) {
        const double x = rng.uniform(-2, 2);
        Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
        const double rv = forward(fit, xv) - x * x;
        const double rd = input_gradient(fit, xv)(0) - 2 * x;
        value_mse += rv * rv / n_test;
        deriv_mse += rd * rd / n_test;
    }
    CHECK(value_mse < 1e-4);
    CHECK(deriv_mse < 1e-4);
    CHECK(log.back().train_loss < log.front().train_loss);
}

TEST_CASE("training diverges loudly") {
    Dataset ds = quadratic_dataset(128, 83);
    MlpModel net = make_mlp(1, {4, 4, 4, 4, 4, 4, 4, 4}, Activation::SiLU, 3);
    OneCycleConfig wild{1e40, 1e39, 1e38, 0.3, 0};
    CHECK_THROWS_AS(train_mse(net, ds, wild, 50, 1), std::runtime_error);
}

TEST_CASE("r2_score") {
    Eigen::Vector3d t(1, 2, 3);
    CHECK(r2_score(t, t) == 1.0);
    Eigen::Vector3d mean_pred = Eigen::Vector3d::Constant(t.mean());
    CHECK(r2_score(mean_pred, t) == 0.0);
    Eigen::Vector3d p(1, 2, 4);
    CHECK(r2_score(p, t) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(r2_score(Eigen::Vector2d(1, 2), t), std::invalid_argument);
    CHECK_THROWS_AS(r2_score(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d::Ones()),
                    std::invalid_argument);
}

TEST_CASE("evaluate: analytic oracle stub scores R2 of 1") {
    BasketConfig cfg0 = BasketConfig::uniform(2, 8.0, 0.4, 1.5, 100.0, 90.0, 110.0);
    EvalReport oracle = evaluate_with(
        [&](const Eigen::VectorXd& x) { return analytic_price(cfg0, x); },
        [&](const Eigen::VectorXd& x) { return analytic_delta(cfg0, x); }, cfg0, 128);
    CHECK(oracle.values_r2 == 1.0);
    CHECK(oracle.deltas_r2 == 1.0);
    CHECK(oracle.gammas_r2 == doctest::Approx(1.0).epsilon(1e-9));

    BasketConfig cfg = BasketConfig::uniform(1, 5.0, 0.0, 1.0, 100.0, 90.0, 110.0);
    Dataset ds = sample(cfg, 4096, 3);
    Standardizer st = Standardizer::fit(ds);
    MlpModel proto = make_mlp(1, {16, 16}, Activation::SiLU, 21);
    MlpModel model = train_mse(st.to_raw(proto), ds, schedule_of(0), 60, 9);
    EvalReport rep = evaluate(model, cfg, 64);
    CHECK(rep.points.size() == 64);
    CHECK(rep.values_r2 <= 1.0);
    CHECK(rep.values_r2 > 0.9);

    Eigen::VectorXd vp(64), vt(64);
    for (int i = 0; i < 64; ++i) {
        vp(i) = rep.points[static_cast<std::size_t>(i)].value_pred;
        vt(i) = rep.points[static_cast<std::size_t>(i)].value_true;
    }
    CHECK(r2_score(vp, vt) == doctest::Approx(rep.values_r2).epsilon(1e-12));
    CHECK_THROWS_AS(evaluate(model, cfg, 1), std::invalid_argument);
}
