#include "sensnet/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>

namespace {

sensnet::ExperimentConfig make_config(const std::string& config_path,
                                      const std::map<std::string, std::string>& overrides) {
    if (config_path.empty()) return sensnet::config_from_overrides(overrides);
    return sensnet::load_config(config_path, overrides);
}

std::string stage_from_model_path(const std::string& model_path) {
    std::string stem = std::filesystem::path(model_path).stem().string();
    for (char& c : stem)
        if (c == '_') c = '-';
    return stem;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural surrogate pricing: sample, train, prune, Sobolev fine-tune, evaluate"};
    app.require_subcommand(1);

    std::string config_path, out_dir, stage_model, stage, source = "nn";
    std::string seed;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file (flat key = value lines)");
        sub->add_option("--seed", seed, "master seed override");
        sub->add_option("--out", out_dir, "output directory override");
        return sub;
    };

    auto* c_generate = add_common(app.add_subcommand("generate", "sample the training dataset"));
    auto* c_train = add_common(app.add_subcommand("train", "train the oversized baseline"));
    auto* c_prune =
        add_common(app.add_subcommand("prune", "significance-prune and try layer removal"));
    auto* c_finetune =
        add_common(app.add_subcommand("finetune", "Sobolev fine-tune a pruned model"));
    c_finetune->add_option("--source", source, "derivative source: nn | reference")
        ->check(CLI::IsMember({"nn", "reference"}));
    c_finetune->add_option("--stage-model", stage_model, "input model path (default: pruned)");
    auto* c_evaluate = add_common(app.add_subcommand("evaluate", "evaluate a model file"));
    c_evaluate->add_option("--stage-model", stage_model, "model file to evaluate")->required();
    c_evaluate->add_option("--stage", stage, "stage name for the report files");
    auto* c_report = add_common(app.add_subcommand("report", "summarize stage reports"));
    auto* c_all = add_common(app.add_subcommand("all", "run the full pipeline"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : sensnet::kConfigError;
    }

    try {
        std::map<std::string, std::string> overrides;
        if (!seed.empty()) overrides["seed"] = seed;
        if (!out_dir.empty()) overrides["out"] = out_dir;
        const sensnet::ExperimentConfig cfg = make_config(config_path, overrides);

        if (c_generate->parsed()) {
            sensnet::cmd_generate(cfg);
        } else if (c_train->parsed()) {
            sensnet::cmd_train(cfg);
        } else if (c_prune->parsed()) {
            sensnet::cmd_prune(cfg);
        } else if (c_finetune->parsed()) {
            sensnet::cmd_finetune(cfg,
                                  source == "nn" ? sensnet::DerivativeSource::Teacher
                                                 : sensnet::DerivativeSource::Reference,
                                  stage_model);
        } else if (c_evaluate->parsed()) {
            const std::string name = stage.empty() ? stage_from_model_path(stage_model) : stage;
            sensnet::cmd_evaluate(cfg, stage_model, name);
        } else if (c_report->parsed()) {
            sensnet::cmd_report(cfg.out_dir);
        } else if (c_all->parsed()) {
            sensnet::cmd_all(cfg);
        }
        return sensnet::kOk;
    } catch (const sensnet::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return sensnet::kConfigError;
    } catch (const sensnet::MissingArtifact& e) {
        std::cerr << "error: " << e.what() << "\n";
        return sensnet::kMissingArtifact;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return sensnet::kNumericalFailure;
    }
}
