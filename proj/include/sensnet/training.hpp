#pragma once

#include "sensnet/market.hpp"
#include "sensnet/network.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace sensnet {

// Cosine one-cycle schedule: start -> peak over the rise fraction of the
// cycle, peak -> final over the remainder.
struct OneCycleConfig {
    double peak = 0.1;
    double start = 4e-3;
    double final_lr = 1e-5;
    double rise_fraction = 0.3;
    std::int64_t total_steps = 0; // 0: derived from epochs * batches per epoch

    void validate() const;
};

double lr_at(const OneCycleConfig& cfg, std::int64_t step);

struct Gradients {
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;

    static Gradients zeros_like(const MlpModel& model);
    bool all_finite() const;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Eigen::MatrixXd> mW, vW;
    std::vector<Eigen::VectorXd> mb, vb;

    static AdamState like(const MlpModel& model);
};

// standard bias-corrected Adam update, in place
void adam_step(AdamState& state, MlpModel& model, const Gradients& grads, double lr);

// Affine input/output standardization. to_core/to_raw fold the affine maps
// into the first and last layers exactly, so raw-space artifacts stay plain
// MLPs and training always happens in standardized coordinates.
struct Standardizer {
    Eigen::VectorXd x_mu, x_sigma;
    double y_mu = 0.0;
    double y_sigma = 1.0;

    static Standardizer fit(const Dataset& data);
    Dataset apply(const Dataset& data) const;
    MlpModel to_core(const MlpModel& raw) const;
    MlpModel to_raw(const MlpModel& core) const;
};

enum class DerivativeSource { Reference, Teacher };

struct SobolevConfig {
    double lambda = 1.0;
    int batch_size = 256;
    int epochs = 100;
    DerivativeSource source = DerivativeSource::Reference;
    // residual normalizations; empty derivative norm is computed from data
    double value_norm = 1.0;
    Eigen::VectorXd deriv_norm;

    void validate() const;
};

struct TrainLogRow {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double value_loss = 0.0;
    double deriv_loss = 0.0;
};

// Loss of Eq.-style value + lambda * derivative residuals over one batch in
// the model's own coordinates, with the parameter gradient obtained by
// differentiating through the input-gradient computation.
std::pair<double, Gradients> sobolev_loss(const MlpModel& model, const Dataset& batch,
                                          double lambda, double value_norm = 1.0,
                                          const Eigen::VectorXd& deriv_norm = {});

// Plain-MSE training; identical trajectory to train_sobolev at lambda = 0.
MlpModel train_mse(MlpModel model, const Dataset& data, const OneCycleConfig& schedule,
                   int epochs, std::uint64_t seed, std::vector<TrainLogRow>* log = nullptr,
                   int batch_size = 256);

MlpModel train_sobolev(MlpModel model, const Dataset& data, const SobolevConfig& cfg,
                       const OneCycleConfig& schedule, std::uint64_t seed,
                       std::vector<TrainLogRow>* log = nullptr);

// 1 - SS_res / SS_tot; throws on constant targets
double r2_score(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

struct EvalPoint {
    double spot = 0.0;
    double value_true = 0.0, value_pred = 0.0;
    double delta_true = 0.0, delta_pred = 0.0;
    double gamma_true = 0.0, gamma_pred = 0.0;
};

struct EvalReport {
    double values_r2 = 0.0;
    double deltas_r2 = 0.0;
    double gammas_r2 = 0.0;
    int grid_size = 0;
    std::vector<EvalPoint> points;
};

// Uniform grid across the spot box diagonal. Values/Deltas/Gammas R2 against
// the analytic oracle; Gamma predictions via central differences of the
// input gradient with h = 1e-3 * box width per dimension.
EvalReport evaluate(const MlpModel& model, const BasketConfig& cfg, int grid_size);

// same evaluation against an arbitrary pricer (test hook)
EvalReport evaluate_with(const std::function<double(const Eigen::VectorXd&)>& value_fn,
                         const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_fn,
                         const BasketConfig& cfg, int grid_size);

} // namespace sensnet
