#pragma once

#include "sensnet/interval.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace sensnet {

// Correlated Bachelier basket under the T-forward measure (zero drift,
// zero rate: spot == forward). Volatilities are absolute (price units
// per sqrt(year)).
struct BasketConfig {
    int assets = 5;
    Eigen::VectorXd weights;     // sums to 1
    Eigen::VectorXd vols;        // positive
    Eigen::MatrixXd correlation; // symmetric PSD, unit diagonal
    double maturity = 1.0;
    double strike = 100.0;
    std::vector<Interval> spot_box; // per-asset initial forward range

    void validate() const;

    // uniform weights, constant vol/correlation, identical spot boxes
    static BasketConfig uniform(int assets, double vol, double corr, double maturity,
                                double strike, double spot_lo, double spot_hi);
};

// sigma_B = sqrt(sum_jk w_j w_k s_j s_k rho_jk)
double basket_vol(const BasketConfig& cfg);

double basket_spot(const BasketConfig& cfg, const Eigen::VectorXd& f0);

// (B0-K) Phi(z) + sigma_B sqrt(T) phi(z), z = (B0-K)/(sigma_B sqrt(T))
double analytic_price(const BasketConfig& cfg, const Eigen::VectorXd& f0);

// dV/dF0_i = w_i Phi(z)
Eigen::VectorXd analytic_delta(const BasketConfig& cfg, const Eigen::VectorXd& f0);

// d2V/dF0_i dF0_j = w_i w_j phi(z) / (sigma_B sqrt(T)); rank-1 and symmetric
Eigen::MatrixXd analytic_gamma(const BasketConfig& cfg, const Eigen::VectorXd& f0);
double analytic_gamma_scalar(const BasketConfig& cfg, const Eigen::VectorXd& f0);

struct TrainingSample {
    Eigen::VectorXd x;    // initial forwards F0
    double y = 0.0;       // payoff realization
    Eigen::VectorXd dydx; // pathwise derivative dnu/dF0
};

// Columnar sample set: one column per sample.
struct Dataset {
    Eigen::MatrixXd x;    // m x n
    Eigen::VectorXd y;    // n
    Eigen::MatrixXd dydx; // m x n

    Eigen::Index size() const { return y.size(); }
    Eigen::Index dim() const { return x.rows(); }
    TrainingSample row(Eigen::Index i) const { return {x.col(i), y(i), dydx.col(i)}; }

    // hull of the sampled inputs, per dimension
    std::vector<Interval> input_box() const;
};

// One path per sampled input (least-squares Monte Carlo regime):
// F0 ~ U(spot box), one-step terminal draw (exact for arithmetic Brownian
// motion), y = (B_T - K)^+, dydx_i = w_i 1{B_T > K}. Deterministic for a
// fixed seed; sample i draws from a substream of (seed, i), so the result
// is independent of how sampling is scheduled.
Dataset sample(const BasketConfig& cfg, int n, std::uint64_t seed);

// instrumentation: number of sample() invocations in this process
std::uint64_t sample_calls();
void reset_sample_calls();

// nu~(x, w) = x * sigma(x / w); converges to (x)^+ pointwise as w -> 0
double smooth_payoff(double x, double width);
double smooth_payoff_derivative(double x, double width);

// CSV with header x_0..x_{m-1},y,dydx_0..dydx_{m-1}; 17 significant digits
void write_dataset_csv(const std::string& path, const Dataset& ds);
Dataset read_dataset_csv(const std::string& path);

} // namespace sensnet
