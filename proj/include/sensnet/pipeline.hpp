#pragma once

#include "sensnet/market.hpp"
#include "sensnet/network.hpp"
#include "sensnet/pruning.hpp"
#include "sensnet/training.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sensnet {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// exit codes of the CLI
enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,
    kMissingArtifact = 3,
    kNumericalFailure = 4,
};

// Flat-key experiment configuration; see configs/ for the documented schema.
struct ExperimentConfig {
    int version = 1;

    // market.*
    int assets = 5;
    std::vector<double> weights; // empty: uniform
    std::vector<double> vols;    // single entry broadcasts
    double correlation = 0.5;    // constant off-diagonal
    double maturity = 1.0;
    double strike = 100.0;
    double spot_lo = 90.0;
    double spot_hi = 110.0;

    // net.*
    std::vector<int> hidden = {128, 128, 128, 128, 128, 128};
    Activation activation = Activation::SiLU;

    // data.*
    int samples = 8192;

    // train.* / lr.*
    int epochs = 100;
    int batch = 256;
    double lr_peak = 0.1, lr_start = 4e-3, lr_final = 1e-5, lr_rise = 0.3;

    // sobolev.* / finetune.*
    double lambda = 1.0;
    int sobolev_epochs = 100;
    int sobolev_batch = 256;
    double sobolev_lr_peak = 1e-2, sobolev_lr_start = 1e-3, sobolev_lr_final = 1e-5;
    int finetune_samples = 8192;

    // prune.*
    int prune_retrain_epochs = 10;
    int prune_retrain_samples = 2048;
    double prune_epsilon = 1e-3;
    int prune_nodes_per_cycle = 1;
    int prune_min_width = 1;
    double prune_lr_peak = 5e-3, prune_lr_start = 1e-3, prune_lr_final = 1e-5;
    int prune_validation_grid = 128;

    // eval.*
    int eval_grid = 512;

    std::uint64_t seed = 42;
    std::string out_dir = "run";

    BasketConfig basket() const;
    OneCycleConfig train_schedule() const;
    OneCycleConfig sobolev_schedule() const;
    OneCycleConfig prune_schedule() const;
};

// key = value lines, # comments. Precedence: file < SENSNET_* environment
// overrides < explicit overrides (CLI flags).
ExperimentConfig load_config(const std::string& path,
                             const std::map<std::string, std::string>& overrides = {});
ExperimentConfig config_from_overrides(const std::map<std::string, std::string>& overrides);

// canonical flat rendering of every key (out dir excluded) and its FNV-1a hash
std::string canonical_config(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

struct RunReport {
    std::string stage; // baseline | pruned | layers-removed | sobolev-nn | sobolev-ref
    double values_r2 = 0.0;
    double deltas_r2 = 0.0;
    double gammas_r2 = 0.0;
    std::size_t parameter_count = 0;
    double wall_time_s = 0.0; // console only; kept out of the JSON artifact
};

void cmd_generate(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_prune(const ExperimentConfig& cfg);
void cmd_finetune(const ExperimentConfig& cfg, DerivativeSource source,
                  const std::string& stage_model = "");
RunReport cmd_evaluate(const ExperimentConfig& cfg, const std::string& model_path,
                       const std::string& stage);
std::string cmd_report(const std::string& run_dir);
void cmd_all(const ExperimentConfig& cfg);

// stage-file names under the run directory
std::string stage_model_path(const ExperimentConfig& cfg, const std::string& stage);
std::string stage_report_path(const ExperimentConfig& cfg, const std::string& stage);

RunReport read_report_json(const std::string& path);

} // namespace sensnet
