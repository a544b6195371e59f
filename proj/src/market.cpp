#include "sensnet/market.hpp"
#include "sensnet/random.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sensnet {

void BasketConfig::validate() const {
    if (assets < 1) throw std::invalid_argument("BasketConfig: assets < 1");
    if (weights.size() != assets || vols.size() != assets ||
        correlation.rows() != assets || correlation.cols() != assets ||
        static_cast<int>(spot_box.size()) != assets)
        throw std::invalid_argument("BasketConfig: dimension mismatch");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("BasketConfig: weights must sum to 1");
    for (int i = 0; i < assets; ++i) {
        if (!(vols(i) > 0.0)) throw std::invalid_argument("BasketConfig: vols must be positive");
        if (std::abs(correlation(i, i) - 1.0) > 1e-12)
            throw std::invalid_argument("BasketConfig: correlation diagonal must be 1");
    }
    if (!correlation.isApprox(correlation.transpose(), 1e-12))
        throw std::invalid_argument("BasketConfig: correlation must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(correlation);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw std::invalid_argument("BasketConfig: correlation must be positive semi-definite");
    if (!(maturity > 0.0)) throw std::invalid_argument("BasketConfig: maturity must be positive");
}

BasketConfig BasketConfig::uniform(int assets, double vol, double corr, double maturity,
                                   double strike, double spot_lo, double spot_hi) {
    BasketConfig cfg;
    cfg.assets = assets;
    cfg.weights = Eigen::VectorXd::Constant(assets, 1.0 / assets);
    cfg.vols = Eigen::VectorXd::Constant(assets, vol);
    cfg.correlation = Eigen::MatrixXd::Constant(assets, assets, corr);
    cfg.correlation.diagonal().setOnes();
    cfg.maturity = maturity;
    cfg.strike = strike;
    cfg.spot_box.assign(static_cast<std::size_t>(assets), Interval(spot_lo, spot_hi));
    return cfg;
}

double basket_vol(const BasketConfig& cfg) {
    cfg.validate();
    const Eigen::VectorXd ws = cfg.weights.cwiseProduct(cfg.vols);
    const double var = ws.transpose() * cfg.correlation * ws;
    if (var < 0.0) throw std::domain_error("basket_vol: negative basket variance");
    return std::sqrt(var);
}

double basket_spot(const BasketConfig& cfg, const Eigen::VectorXd& f0) {
    return cfg.weights.dot(f0);
}

double analytic_price(const BasketConfig& cfg, const Eigen::VectorXd& f0) {
    const double sb = basket_vol(cfg) * std::sqrt(cfg.maturity);
    const double b0 = basket_spot(cfg, f0);
    const double z = (b0 - cfg.strike) / sb;
    return (b0 - cfg.strike) * norm_cdf(z) + sb * norm_pdf(z);
}

Eigen::VectorXd analytic_delta(const BasketConfig& cfg, const Eigen::VectorXd& f0) {
    const double sb = basket_vol(cfg) * std::sqrt(cfg.maturity);
    const double z = (basket_spot(cfg, f0) - cfg.strike) / sb;
    return cfg.weights * norm_cdf(z);
}

Eigen::MatrixXd analytic_gamma(const BasketConfig& cfg, const Eigen::VectorXd& f0) {
    return cfg.weights * cfg.weights.transpose() * analytic_gamma_scalar(cfg, f0);
}

double analytic_gamma_scalar(const BasketConfig& cfg, const Eigen::VectorXd& f0) {
    const double sb = basket_vol(cfg) * std::sqrt(cfg.maturity);
    const double z = (basket_spot(cfg, f0) - cfg.strike) / sb;
    return norm_pdf(z) / sb;
}

std::vector<Interval> Dataset::input_box() const {
    if (size() == 0) throw std::invalid_argument("Dataset::input_box: empty dataset");
    std::vector<Interval> box;
    box.reserve(static_cast<std::size_t>(dim()));
    for (Eigen::Index i = 0; i < dim(); ++i)
        box.emplace_back(x.row(i).minCoeff(), x.row(i).maxCoeff());
    return box;
}

namespace {
std::atomic<std::uint64_t> g_sample_calls{0};
}

std::uint64_t sample_calls() { return g_sample_calls.load(); }
void reset_sample_calls() { g_sample_calls.store(0); }

Dataset sample(const BasketConfig& cfg, int n, std::uint64_t seed) {
    cfg.validate();
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    g_sample_calls.fetch_add(1);

    Eigen::LLT<Eigen::MatrixXd> llt(cfg.correlation);
    if (llt.info() != Eigen::Success)
        throw std::domain_error("sample: Cholesky factorization of correlation failed");
    const Eigen::MatrixXd L = llt.matrixL();
    const double sqrt_t = std::sqrt(cfg.maturity);
    const int m = cfg.assets;

    Dataset ds;
    ds.x.resize(m, n);
    ds.y.resize(n);
    ds.dydx.resize(m, n);

    Eigen::VectorXd xi(m);
    for (int s = 0; s < n; ++s) {
        Rng rng(substream_seed(seed, static_cast<std::uint64_t>(s)));
        for (int i = 0; i < m; ++i)
            ds.x(i, s) = rng.uniform(cfg.spot_box[static_cast<std::size_t>(i)].lo(),
                                     cfg.spot_box[static_cast<std::size_t>(i)].hi());
        for (int i = 0; i < m; ++i) xi(i) = rng.normal();
        const Eigen::VectorXd corr = L * xi;
        double bt = 0.0;
        for (int i = 0; i < m; ++i)
            bt += cfg.weights(i) * (ds.x(i, s) + cfg.vols(i) * sqrt_t * corr(i));
        const bool itm = bt > cfg.strike;
        ds.y(s) = itm ? bt - cfg.strike : 0.0;
        for (int i = 0; i < m; ++i) ds.dydx(i, s) = itm ? cfg.weights(i) : 0.0;
    }
    return ds;
}

double smooth_payoff(double x, double width) {
    if (!(width > 0.0)) throw std::invalid_argument("smooth_payoff: width must be positive");
    return x * sigmoid(x / width);
}

double smooth_payoff_derivative(double x, double width) {
    if (!(width > 0.0))
        throw std::invalid_argument("smooth_payoff_derivative: width must be positive");
    const double u = x / width;
    const double s = sigmoid(u);
    return s * (1.0 + u * (1.0 - s));
}

void write_dataset_csv(const std::string& path, const Dataset& ds) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_dataset_csv: cannot open " + path);
    const Eigen::Index m = ds.dim();
    for (Eigen::Index i = 0; i < m; ++i) f << "x_" << i << ",";
    f << "y";
    for (Eigen::Index i = 0; i < m; ++i) f << ",dydx_" << i;
    f << "\n";
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        f << buf;
    };
    for (Eigen::Index s = 0; s < ds.size(); ++s) {
        for (Eigen::Index i = 0; i < m; ++i) {
            put(ds.x(i, s));
            f << ",";
        }
        put(ds.y(s));
        for (Eigen::Index i = 0; i < m; ++i) {
            f << ",";
            put(ds.dydx(i, s));
        }
        f << "\n";
    }
    if (!f) throw std::runtime_error("write_dataset_csv: write failed for " + path);
}

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_dataset_csv: cannot open " + path);
    std::string header;
    if (!std::getline(f, header)) throw std::runtime_error("read_dataset_csv: empty file " + path);

    Eigen::Index m = 0;
    {
        std::stringstream ss(header);
        std::string col;
        while (std::getline(ss, col, ','))
            if (col.rfind("x_", 0) == 0) ++m;
    }
    if (m == 0) throw std::runtime_error("read_dataset_csv: no input columns in " + path);

    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        vals.reserve(static_cast<std::size_t>(2 * m + 1));
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        if (vals.size() != static_cast<std::size_t>(2 * m + 1))
            throw std::runtime_error("read_dataset_csv: malformed row in " + path);
        rows.push_back(std::move(vals));
    }

    Dataset ds;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    ds.x.resize(m, n);
    ds.y.resize(n);
    ds.dydx.resize(m, n);
    for (Eigen::Index s = 0; s < n; ++s) {
        const auto& r = rows[static_cast<std::size_t>(s)];
        for (Eigen::Index i = 0; i < m; ++i) ds.x(i, s) = r[static_cast<std::size_t>(i)];
        ds.y(s) = r[static_cast<std::size_t>(m)];
        for (Eigen::Index i = 0; i < m; ++i)
            ds.dydx(i, s) = r[static_cast<std::size_t>(m + 1 + i)];
    }
    return ds;
}

} // namespace sensnet
