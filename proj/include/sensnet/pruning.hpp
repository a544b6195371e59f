#pragma once

#include "sensnet/network.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace sensnet {

// Per-node significance S = width([n]) * max|[n¯]| from one interval
// forward plus one interval reverse pass over the input box.
struct SignificanceReport {
    std::vector<Eigen::VectorXd> significance; // per hidden layer
    NodeEnclosures enclosures;
};

SignificanceReport significance(const MlpModel& model, const std::vector<Interval>& box);

// Remove the least significant node of the given hidden layer (ties break
// to the lowest index); bias compensation uses the report's enclosures.
std::pair<MlpModel, int> prune_least(const MlpModel& model, const SignificanceReport& report,
                                     int hidden_layer);

struct PruneConfig {
    std::vector<Interval> box;      // hull of the training inputs
    int retrain_epochs = 10;
    double epsilon = 1e-3;          // tolerated validation value-R2 drop
    int min_width = 1;
    int nodes_per_cycle = 1;

    void validate() const;
};

// retrains a candidate model for the given number of epochs
using Trainer = std::function<MlpModel(const MlpModel&, int epochs)>;
// validation value-R2 of a model
using Validator = std::function<double(const MlpModel&)>;

struct PruneAction {
    int cycle = 0;
    std::string action;     // prune | revert | freeze | remove_layer | revert_layer
    int layer = -1;
    int node = -1;
    double significance = 0.0;
    double r2_before_retrain = 0.0;
    double r2_after_retrain = 0.0;
    std::size_t params_remaining = 0;
};

// Iteratively remove the globally least significant node among unfrozen
// hidden layers, retrain, and keep the result while the validation value-R2
// stays within epsilon of the baseline. A failed cycle is reverted and the
// offending layer frozen. Multi-node cycles fall back to single-node before
// freezing.
std::pair<MlpModel, std::vector<PruneAction>> iterative_prune(MlpModel model,
                                                              const PruneConfig& cfg,
                                                              const Trainer& trainer,
                                                              const Validator& validator);

// Attempt to remove hidden layers adjacent to a width-1 layer, deepest
// first; each removal is retrained and kept only if the validation value-R2
// stays within epsilon of the baseline.
std::pair<MlpModel, std::vector<PruneAction>> try_remove_layers(MlpModel model,
                                                                const PruneConfig& cfg,
                                                                const Trainer& trainer,
                                                                const Validator& validator);

void write_history_csv(const std::string& path, const std::vector<PruneAction>& history);

} // namespace sensnet
