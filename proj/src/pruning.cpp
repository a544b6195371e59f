#include "sensnet/pruning.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

namespace sensnet {

void PruneConfig::validate() const {
    if (box.empty()) throw std::invalid_argument("PruneConfig: empty input box");
    if (!(epsilon > 0.0)) throw std::invalid_argument("PruneConfig: epsilon must be > 0");
    if (retrain_epochs < 0) throw std::invalid_argument("PruneConfig: retrain epochs must be >= 0");
    if (min_width < 1) throw std::invalid_argument("PruneConfig: min width must be >= 1");
    if (nodes_per_cycle < 1) throw std::invalid_argument("PruneConfig: nodes per cycle must be >= 1");
}

SignificanceReport significance(const MlpModel& model, const std::vector<Interval>& box) {
    SignificanceReport rep;
    auto [out, enc] = forward_interval(model, box);
    (void)out;
    interval_adjoints(model, enc);
    rep.enclosures = std::move(enc);
    for (int h = 0; h < model.hidden_layer_count(); ++h) {
        const auto& post = rep.enclosures.post[static_cast<std::size_t>(h)];
        const auto& adj = rep.enclosures.adjoint[static_cast<std::size_t>(h)];
        Eigen::VectorXd s(post.size());
        for (int i = 0; i < post.size(); ++i) s(i) = width(post(i)) * max_abs(adj(i));
        rep.significance.push_back(std::move(s));
    }
    return rep;
}

std::pair<MlpModel, int> prune_least(const MlpModel& model, const SignificanceReport& report,
                                     int hidden_layer) {
    if (hidden_layer < 0 || hidden_layer >= model.hidden_layer_count())
        throw std::invalid_argument("prune_least: not a hidden layer");
    if (model.hidden_width(hidden_layer) < 2)
        throw std::invalid_argument("prune_least: singleton layer");
    const auto& s = report.significance[static_cast<std::size_t>(hidden_layer)];
    int best = 0;
    for (int i = 1; i < s.size(); ++i)
        if (s(i) < s(best)) best = i;
    return {prune_node(model, hidden_layer, best, report.enclosures), best};
}

namespace {

struct Pick {
    int layer = -1;
    int node = -1;
    double score = std::numeric_limits<double>::infinity();
};

// globally least significant node among unfrozen layers above min width;
// ties break to the lowest (layer, node)
Pick pick_least(const MlpModel& model, const SignificanceReport& rep,
                const std::set<int>& frozen, int min_width) {
    Pick p;
    for (int h = 0; h < model.hidden_layer_count(); ++h) {
        if (frozen.count(h) || model.hidden_width(h) <= min_width ||
            model.hidden_width(h) < 2)
            continue;
        const auto& s = rep.significance[static_cast<std::size_t>(h)];
        for (int i = 0; i < s.size(); ++i)
            if (s(i) < p.score) p = {h, i, s(i)};
    }
    return p;
}

} // namespace

std::pair<MlpModel, std::vector<PruneAction>> iterative_prune(MlpModel model,
                                                              const PruneConfig& cfg,
                                                              const Trainer& trainer,
                                                              const Validator& validator) {
    cfg.validate();
    model.validate();
    const double baseline = validator(model);

    std::vector<PruneAction> history;
    std::set<int> frozen;
    int cycle = 0;
    int per_cycle = cfg.nodes_per_cycle;

    while (true) {
        struct Removed {
            int layer, node;
            double score;
        };
        std::vector<Removed> removed;
        MlpModel candidate = model;
        for (int t = 0; t < per_cycle; ++t) {
            SignificanceReport rep = significance(candidate, cfg.box);
            Pick p = pick_least(candidate, rep, frozen, cfg.min_width);
            if (p.layer < 0) break;
            candidate = prune_node(candidate, p.layer, p.node, rep.enclosures);
            removed.push_back({p.layer, p.node, p.score});
        }
        if (removed.empty()) break;

        ++cycle;
        const double r2_before = validator(candidate);
        MlpModel retrained = trainer(candidate, cfg.retrain_epochs);
        const double r2_after = validator(retrained);

        if (r2_after >= baseline - cfg.epsilon) {
            model = std::move(retrained);
            for (const auto& r : removed)
                history.push_back({cycle, "prune", r.layer, r.node, r.score, r2_before, r2_after,
                                   parameter_count(model)});
        } else if (removed.size() > 1) {
            // cycle too aggressive: retry one node at a time
            history.push_back({cycle, "revert", removed.front().layer, removed.front().node,
                               removed.front().score, r2_before, r2_after,
                               parameter_count(model)});
            per_cycle = 1;
        } else {
            frozen.insert(removed.front().layer);
            history.push_back({cycle, "freeze", removed.front().layer, removed.front().node,
                               removed.front().score, r2_before, r2_after,
                               parameter_count(model)});
        }
    }
    return {std::move(model), std::move(history)};
}

std::pair<MlpModel, std::vector<PruneAction>> try_remove_layers(MlpModel model,
                                                                const PruneConfig& cfg,
                                                                const Trainer& trainer,
                                                                const Validator& validator) {
    cfg.validate();
    model.validate();
    const double baseline = validator(model);

    std::vector<PruneAction> history;
    std::set<int> failed;
    int cycle = 0;

    auto width1_adjacent = [&](int h) {
        const int H = model.hidden_layer_count();
        if (model.hidden_width(h) == 1) return true;
        if (h > 0 && model.hidden_width(h - 1) == 1) return true;
        if (h + 1 < H && model.hidden_width(h + 1) == 1) return true;
        return false;
    };

    while (model.hidden_layer_count() >= 2) {
        int target = -1;
        for (int h = model.hidden_layer_count() - 1; h >= 0; --h)
            if (width1_adjacent(h) && !failed.count(h)) {
                target = h;
                break;
            }
        if (target < 0) break;

        ++cycle;
        MlpModel candidate = remove_layer(model, target);
        const double r2_before = validator(candidate);
        MlpModel retrained = trainer(candidate, cfg.retrain_epochs);
        const double r2_after = validator(retrained);

        if (r2_after >= baseline - cfg.epsilon) {
            model = std::move(retrained);
            failed.clear();
            history.push_back({cycle, "remove_layer", target, -1, 0.0, r2_before, r2_after,
                               parameter_count(model)});
        } else {
            failed.insert(target);
            history.push_back({cycle, "revert_layer", target, -1, 0.0, r2_before, r2_after,
                               parameter_count(model)});
        }
    }
    return {std::move(model), std::move(history)};
}

void write_history_csv(const std::string& path, const std::vector<PruneAction>& history) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_history_csv: cannot open " + path);
    f << "cycle,action,layer,node,significance,r2_before_retrain,r2_after_retrain,"
         "params_remaining\n";
    char buf[128];
    for (const auto& a : history) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%d,%d,%.17g,%.17g,%.17g,%zu\n", a.cycle,
                      a.action.c_str(), a.layer, a.node, a.significance, a.r2_before_retrain,
                      a.r2_after_retrain, a.params_remaining);
        f << buf;
    }
    if (!f) throw std::runtime_error("write_history_csv: write failed for " + path);
}

} // namespace sensnet
