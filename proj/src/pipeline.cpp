#include "sensnet/pipeline.hpp"
#include "sensnet/random.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace sensnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    }
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& key, const std::string& v, Parse parse) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse(key, item));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

template <class T>
std::string join(const std::vector<T>& v, std::function<std::string(const T&)> fmt) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += fmt(v[i]);
    }
    return s;
}

struct KeyHandler {
    const char* key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<KeyHandler>& handlers() {
    static const std::vector<KeyHandler> h = {
        {"version",
         [](ExperimentConfig& c, const std::string& v) {
             c.version = static_cast<int>(parse_int("version", v));
             if (c.version != 1) throw ConfigError("config: unsupported version " + v);
         },
         [](const ExperimentConfig& c) { return std::to_string(c.version); }},
        {"seed",
         [](ExperimentConfig& c, const std::string& v) {
             c.seed = static_cast<std::uint64_t>(parse_int("seed", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
        {"market.assets",
         [](ExperimentConfig& c, const std::string& v) {
             c.assets = static_cast<int>(parse_int("market.assets", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.assets); }},
        {"market.weights",
         [](ExperimentConfig& c, const std::string& v) {
             if (v == "uniform") {
                 c.weights.clear();
                 return;
             }
             c.weights = parse_list<double>("market.weights", v, parse_double);
         },
         [](const ExperimentConfig& c) {
             return c.weights.empty()
                        ? std::string("uniform")
                        : join<double>(c.weights, [](const double& x) { return fmt_double(x); });
         }},
        {"market.vols",
         [](ExperimentConfig& c, const std::string& v) {
             c.vols = parse_list<double>("market.vols", v, parse_double);
         },
         [](const ExperimentConfig& c) {
             return join<double>(c.vols, [](const double& x) { return fmt_double(x); });
         }},
        {"market.correlation",
         [](ExperimentConfig& c, const std::string& v) {
             c.correlation = parse_double("market.correlation", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.correlation); }},
        {"market.maturity",
         [](ExperimentConfig& c, const std::string& v) {
             c.maturity = parse_double("market.maturity", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.maturity); }},
        {"market.strike",
         [](ExperimentConfig& c, const std::string& v) {
             c.strike = parse_double("market.strike", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.strike); }},
        {"market.spot_lo",
         [](ExperimentConfig& c, const std::string& v) {
             c.spot_lo = parse_double("market.spot_lo", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.spot_lo); }},
        {"market.spot_hi",
         [](ExperimentConfig& c, const std::string& v) {
             c.spot_hi = parse_double("market.spot_hi", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.spot_hi); }},
        {"net.hidden",
         [](ExperimentConfig& c, const std::string& v) {
             c.hidden = parse_list<int>("net.hidden", v, [](const std::string& k,
                                                            const std::string& s) {
                 return static_cast<int>(parse_int(k, s));
             });
         },
         [](const ExperimentConfig& c) {
             return join<int>(c.hidden, [](const int& x) { return std::to_string(x); });
         }},
        {"net.activation",
         [](ExperimentConfig& c, const std::string& v) {
             if (v == "relu") c.activation = Activation::ReLU;
             else if (v == "silu") c.activation = Activation::SiLU;
             else throw ConfigError("config: net.activation must be relu or silu");
         },
         [](const ExperimentConfig& c) {
             return std::string(c.activation == Activation::ReLU ? "relu" : "silu");
         }},
        {"data.samples",
         [](ExperimentConfig& c, const std::string& v) {
             c.samples = static_cast<int>(parse_int("data.samples", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.samples); }},
        {"train.epochs",
         [](ExperimentConfig& c, const std::string& v) {
             c.epochs = static_cast<int>(parse_int("train.epochs", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.epochs); }},
        {"train.batch",
         [](ExperimentConfig& c, const std::string& v) {
             c.batch = static_cast<int>(parse_int("train.batch", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.batch); }},
        {"lr.peak",
         [](ExperimentConfig& c, const std::string& v) { c.lr_peak = parse_double("lr.peak", v); },
         [](const ExperimentConfig& c) { return fmt_double(c.lr_peak); }},
        {"lr.start",
         [](ExperimentConfig& c, const std::string& v) { c.lr_start = parse_double("lr.start", v); },
         [](const ExperimentConfig& c) { return fmt_double(c.lr_start); }},
        {"lr.final",
         [](ExperimentConfig& c, const std::string& v) { c.lr_final = parse_double("lr.final", v); },
         [](const ExperimentConfig& c) { return fmt_double(c.lr_final); }},
        {"lr.rise",
         [](ExperimentConfig& c, const std::string& v) { c.lr_rise = parse_double("lr.rise", v); },
         [](const ExperimentConfig& c) { return fmt_double(c.lr_rise); }},
        {"sobolev.lambda",
         [](ExperimentConfig& c, const std::string& v) {
             c.lambda = parse_double("sobolev.lambda", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.lambda); }},
        {"sobolev.epochs",
         [](ExperimentConfig& c, const std::string& v) {
             c.sobolev_epochs = static_cast<int>(parse_int("sobolev.epochs", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.sobolev_epochs); }},
        {"sobolev.batch",
         [](ExperimentConfig& c, const std::string& v) {
             c.sobolev_batch = static_cast<int>(parse_int("sobolev.batch", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.sobolev_batch); }},
        {"sobolev.lr_peak",
         [](ExperimentConfig& c, const std::string& v) {
             c.sobolev_lr_peak = parse_double("sobolev.lr_peak", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.sobolev_lr_peak); }},
        {"sobolev.lr_start",
         [](ExperimentConfig& c, const std::string& v) {
             c.sobolev_lr_start = parse_double("sobolev.lr_start", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.sobolev_lr_start); }},
        {"sobolev.lr_final",
         [](ExperimentConfig& c, const std::string& v) {
             c.sobolev_lr_final = parse_double("sobolev.lr_final", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.sobolev_lr_final); }},
        {"finetune.samples",
         [](ExperimentConfig& c, const std::string& v) {
             c.finetune_samples = static_cast<int>(parse_int("finetune.samples", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.finetune_samples); }},
        {"prune.retrain_epochs",
         [](ExperimentConfig& c, const std::string& v) {
             c.prune_retrain_epochs = static_cast<int>(parse_int("prune.retrain_epochs", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.prune_retrain_epochs); }},
        {"prune.retrain_samples",
         [](ExperimentConfig& c, const std::string& v) {
             c.prune_retrain_samples = static_cast<int>(parse_int("prune.retrain_samples", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.prune_retrain_samples); }},
        {"prune.epsilon",
         [](ExperimentConfig& c, const std::string& v) {
             c.prune_epsilon = parse_double("prune.epsilon", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.prune_epsilon); }},
        {"prune.nodes_per_cycle",
         [](ExperimentConfig& c, const std::string& v) {
             c.prune_nodes_per_cycle = static_cast<int>(parse_int("prune.nodes_per_cycle", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.prune_nodes_per_cycle); }},
        {"prune.min_width",
         [](ExperimentConfig& c, const std::string& v) {
             c.prune_min_width = static_cast<int>(parse_int("prune.min_width", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.prune_min_width); }},
        {"prune.lr_peak",
         [](ExperimentConfig& c, const std::string& v) {
             c.prune_lr_peak = parse_double("prune.lr_peak", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.prune_lr_peak); }},
        {"prune.lr_start",
         [](ExperimentConfig& c, const std::string& v) {
             c.prune_lr_start = parse_double("prune.lr_start", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.prune_lr_start); }},
        {"prune.lr_final",
         [](ExperimentConfig& c, const std::string& v) {
             c.prune_lr_final = parse_double("prune.lr_final", v);
         },
         [](const ExperimentConfig& c) { return fmt_double(c.prune_lr_final); }},
        {"prune.validation_grid",
         [](ExperimentConfig& c, const std::string& v) {
             c.prune_validation_grid = static_cast<int>(parse_int("prune.validation_grid", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.prune_validation_grid); }},
        {"eval.grid",
         [](ExperimentConfig& c, const std::string& v) {
             c.eval_grid = static_cast<int>(parse_int("eval.grid", v));
         },
         [](const ExperimentConfig& c) { return std::to_string(c.eval_grid); }},
        {"out",
         [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
         [](const ExperimentConfig& c) { return c.out_dir; }},
    };
    return h;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& h : handlers())
        if (key == h.key) {
            h.set(cfg, value);
            return;
        }
    throw ConfigError("config: unknown key '" + key + "'");
}

std::string env_name(const std::string& key) {
    std::string s = "SENSNET_";
    for (char c : key) s += c == '.' ? '_' : static_cast<char>(std::toupper(c));
    return s;
}

void apply_env(ExperimentConfig& cfg) {
    for (const auto& h : handlers()) {
        if (const char* v = std::getenv(env_name(h.key).c_str())) h.set(cfg, v);
    }
}

void sanity_check(const ExperimentConfig& cfg) {
    if (cfg.samples < 1 || cfg.eval_grid < 2 || cfg.batch < 1 || cfg.epochs < 0 ||
        cfg.sobolev_epochs < 0 || cfg.finetune_samples < 1 || cfg.prune_validation_grid < 2)
        throw ConfigError("config: out-of-range value");
    try {
        cfg.basket().validate();
        cfg.train_schedule();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

} // namespace

BasketConfig ExperimentConfig::basket() const {
    BasketConfig b;
    b.assets = assets;
    if (weights.empty()) {
        b.weights = Eigen::VectorXd::Constant(assets, 1.0 / assets);
    } else {
        if (static_cast<int>(weights.size()) != assets)
            throw ConfigError("config: market.weights length mismatch");
        b.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), assets);
    }
    if (vols.size() == 1) {
        b.vols = Eigen::VectorXd::Constant(assets, vols[0]);
    } else {
        if (static_cast<int>(vols.size()) != assets)
            throw ConfigError("config: market.vols length mismatch");
        b.vols = Eigen::Map<const Eigen::VectorXd>(vols.data(), assets);
    }
    b.correlation = Eigen::MatrixXd::Constant(assets, assets, correlation);
    b.correlation.diagonal().setOnes();
    b.maturity = maturity;
    b.strike = strike;
    b.spot_box.assign(static_cast<std::size_t>(assets), Interval(spot_lo, spot_hi));
    return b;
}

OneCycleConfig ExperimentConfig::train_schedule() const {
    return {lr_peak, lr_start, lr_final, lr_rise, 0};
}
OneCycleConfig ExperimentConfig::sobolev_schedule() const {
    return {sobolev_lr_peak, sobolev_lr_start, sobolev_lr_final, lr_rise, 0};
}
OneCycleConfig ExperimentConfig::prune_schedule() const {
    return {prune_lr_peak, prune_lr_start, prune_lr_final, lr_rise, 0};
}

ExperimentConfig load_config(const std::string& path,
                             const std::map<std::string, std::string>& overrides) {
    ExperimentConfig cfg;
    cfg.vols = {20.0};
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: missing '=' at " + path + ":" + std::to_string(lineno));
        apply_key(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    apply_env(cfg);
    for (const auto& [k, v] : overrides) apply_key(cfg, k, v);
    sanity_check(cfg);
    return cfg;
}

ExperimentConfig config_from_overrides(const std::map<std::string, std::string>& overrides) {
    ExperimentConfig cfg;
    cfg.vols = {20.0};
    apply_env(cfg);
    for (const auto& [k, v] : overrides) apply_key(cfg, k, v);
    sanity_check(cfg);
    return cfg;
}

std::string canonical_config(const ExperimentConfig& cfg) {
    std::string s;
    for (const auto& h : handlers()) {
        if (std::string_view(h.key) == "out") continue; // location, not substance
        s += h.key;
        s += "=";
        s += h.get(cfg);
        s += "\n";
    }
    return s;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    const std::string s = canonical_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string path_in(const ExperimentConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

std::string stage_file_stem(const std::string& stage) {
    std::string s = stage;
    for (char& c : s)
        if (c == '-') c = '_';
    return s;
}

void require_exists(const std::string& path) {
    if (!fs::exists(path)) throw MissingArtifact("missing artifact: " + path);
}

MlpModel load_checked_model(const ExperimentConfig& cfg, const std::string& path) {
    require_exists(path);
    std::uint64_t h = 0;
    MlpModel m = load_model(path, &h);
    if (h != config_hash(cfg))
        throw MissingArtifact("config-hash mismatch for " + path +
                              " (artifact was produced by a different config)");
    return m;
}

Dataset load_checked_dataset(const ExperimentConfig& cfg) {
    const std::string csv = path_in(cfg, "dataset.csv");
    const std::string manifest = path_in(cfg, "dataset_manifest.json");
    require_exists(csv);
    require_exists(manifest);
    std::ifstream f(manifest);
    json j = json::parse(f);
    if (j.at("config_hash").get<std::string>() != hash_hex(config_hash(cfg)))
        throw MissingArtifact("config-hash mismatch for " + csv);
    return read_dataset_csv(csv);
}

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "epoch,lr,train_loss,value_loss,deriv_loss\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.lr,
                      r.train_loss, r.value_loss, r.deriv_loss);
        f << buf;
    }
}

void write_grid_csv(const std::string& path, const EvalReport& rep) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "spot,value_true,value_pred,delta_true,delta_pred,gamma_true,gamma_pred\n";
    char buf[256];
    for (const auto& p : rep.points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", p.spot,
                      p.value_true, p.value_pred, p.delta_true, p.delta_pred, p.gamma_true,
                      p.gamma_pred);
        f << buf;
    }
}

// analytic value R2 on a coarse grid; the prune gate deliberately ignores
// Delta/Gamma accuracy
double value_r2_on_grid(const MlpModel& model, const BasketConfig& market, int grid) {
    Eigen::VectorXd pred(grid), truth(grid);
    const int m = market.assets;
    Eigen::VectorXd lo(m), wid(m);
    for (int i = 0; i < m; ++i) {
        lo(i) = market.spot_box[static_cast<std::size_t>(i)].lo();
        wid(i) = width(market.spot_box[static_cast<std::size_t>(i)]);
    }
    for (int k = 0; k < grid; ++k) {
        const double t = static_cast<double>(k) / (grid - 1);
        const Eigen::VectorXd x = lo + t * wid;
        pred(k) = forward(model, x);
        truth(k) = analytic_price(market, x);
    }
    return r2_score(pred, truth);
}

struct StageTimer {
    std::string name;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double stop() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

RunReport evaluate_stage(const ExperimentConfig& cfg, const MlpModel& model,
                         const std::string& stage, double wall_time_s) {
    EvalReport rep = evaluate(model, cfg.basket(), cfg.eval_grid);
    const std::string stem = stage_file_stem(stage);
    write_grid_csv(path_in(cfg, stem + "_grid.csv"), rep);

    json j;
    j["stage"] = stage;
    j["values_r2"] = rep.values_r2;
    j["deltas_r2"] = rep.deltas_r2;
    j["gammas_r2"] = rep.gammas_r2;
    j["parameter_count"] = parameter_count(model);
    j["config_hash"] = hash_hex(config_hash(cfg));
    j["grid_csv"] = stem + "_grid.csv";
    std::ofstream f(path_in(cfg, stem + "_report.json"));
    f << j.dump(2) << "\n";

    RunReport rr{stage, rep.values_r2, rep.deltas_r2, rep.gammas_r2, parameter_count(model),
                 wall_time_s};
    std::cout << "[" << stage << "] values_r2=" << rep.values_r2
              << " deltas_r2=" << rep.deltas_r2 << " gammas_r2=" << rep.gammas_r2
              << " params=" << rr.parameter_count << " wall_time_s=" << wall_time_s << "\n";
    return rr;
}

} // namespace

std::string stage_model_path(const ExperimentConfig& cfg, const std::string& stage) {
    return path_in(cfg, stage_file_stem(stage) + ".model");
}

std::string stage_report_path(const ExperimentConfig& cfg, const std::string& stage) {
    return path_in(cfg, stage_file_stem(stage) + "_report.json");
}

RunReport read_report_json(const std::string& path) {
    require_exists(path);
    std::ifstream f(path);
    json j = json::parse(f);
    RunReport r;
    r.stage = j.at("stage").get<std::string>();
    r.values_r2 = j.at("values_r2").get<double>();
    r.deltas_r2 = j.at("deltas_r2").get<double>();
    r.gammas_r2 = j.at("gammas_r2").get<double>();
    r.parameter_count = j.at("parameter_count").get<std::size_t>();
    return r;
}

void cmd_generate(const ExperimentConfig& cfg) {
    StageTimer timer{"generate"};
    fs::create_directories(cfg.out_dir);
    const BasketConfig market = cfg.basket();
    Dataset ds = sample(market, cfg.samples, derive_seed(cfg.seed, "data"));
    write_dataset_csv(path_in(cfg, "dataset.csv"), ds);

    json j;
    j["config_hash"] = hash_hex(config_hash(cfg));
    j["seed"] = cfg.seed;
    j["samples"] = cfg.samples;
    j["assets"] = cfg.assets;
    std::ofstream f(path_in(cfg, "dataset_manifest.json"));
    f << j.dump(2) << "\n";
    std::cout << "[generate] " << cfg.samples << " samples, wall_time_s=" << timer.stop() << "\n";
}

void cmd_train(const ExperimentConfig& cfg) {
    StageTimer timer{"train"};
    Dataset ds = load_checked_dataset(cfg);

    // He init in standardized coordinates, folded to a raw-space model
    const Standardizer st = Standardizer::fit(ds);
    MlpModel proto = make_mlp(cfg.assets, cfg.hidden, cfg.activation, derive_seed(cfg.seed, "init"));
    MlpModel raw0 = st.to_raw(proto);

    std::vector<TrainLogRow> log;
    MlpModel model = train_mse(raw0, ds, cfg.train_schedule(), cfg.epochs,
                               derive_seed(cfg.seed, "train"), &log, cfg.batch);
    write_train_log_csv(path_in(cfg, "baseline_train_log.csv"), log);
    save_model(stage_model_path(cfg, "baseline"), model, config_hash(cfg));
    evaluate_stage(cfg, model, "baseline", timer.stop());
}

void cmd_prune(const ExperimentConfig& cfg) {
    StageTimer timer{"prune"};
    MlpModel model = load_checked_model(cfg, stage_model_path(cfg, "baseline"));
    Dataset ds = load_checked_dataset(cfg);

    // small retrain set: leading slice of the training data
    const int k = std::min<int>(cfg.prune_retrain_samples, static_cast<int>(ds.size()));
    Dataset retrain_set;
    retrain_set.x = ds.x.leftCols(k);
    retrain_set.y = ds.y.head(k);
    retrain_set.dydx = ds.dydx.leftCols(k);

    PruneConfig pcfg;
    pcfg.box = ds.input_box();
    pcfg.retrain_epochs = cfg.prune_retrain_epochs;
    pcfg.epsilon = cfg.prune_epsilon;
    pcfg.min_width = cfg.prune_min_width;
    pcfg.nodes_per_cycle = cfg.prune_nodes_per_cycle;

    const BasketConfig market = cfg.basket();
    std::uint64_t retrain_seed = derive_seed(cfg.seed, "prune.retrain");
    Trainer trainer = [&](const MlpModel& m, int epochs) {
        if (epochs == 0) return m;
        return train_mse(m, retrain_set, cfg.prune_schedule(), epochs, retrain_seed++, nullptr,
                         cfg.batch);
    };
    Validator validator = [&](const MlpModel& m) {
        return value_r2_on_grid(m, market, cfg.prune_validation_grid);
    };

    auto [pruned, history] = iterative_prune(model, pcfg, trainer, validator);
    save_model(stage_model_path(cfg, "pruned"), pruned, config_hash(cfg));
    evaluate_stage(cfg, pruned, "pruned", timer.stop());

    auto [compact, history2] = try_remove_layers(pruned, pcfg, trainer, validator);
    history.insert(history.end(), history2.begin(), history2.end());
    write_history_csv(path_in(cfg, "prune_history.csv"), history);
    save_model(stage_model_path(cfg, "layers-removed"), compact, config_hash(cfg));
    evaluate_stage(cfg, compact, "layers-removed", timer.stop());
}

void cmd_finetune(const ExperimentConfig& cfg, DerivativeSource source,
                  const std::string& stage_model) {
    StageTimer timer{"finetune"};
    const std::string in_path =
        stage_model.empty() ? stage_model_path(cfg, "pruned") : stage_model;
    MlpModel model = load_checked_model(cfg, in_path);

    Dataset data;
    std::string stage;
    if (source == DerivativeSource::Teacher) {
        stage = "sobolev-nn";
        // targets from the frozen baseline network; the reference-model
        // sampler is never touched in this mode
        MlpModel teacher = load_checked_model(cfg, stage_model_path(cfg, "baseline"));
        const int n = cfg.finetune_samples;
        const int m = cfg.assets;
        Rng rng(derive_seed(cfg.seed, "finetune.x"));
        data.x.resize(m, n);
        data.y.resize(n);
        data.dydx.resize(m, n);
        for (int s = 0; s < n; ++s) {
            for (int i = 0; i < m; ++i) data.x(i, s) = rng.uniform(cfg.spot_lo, cfg.spot_hi);
            const Eigen::VectorXd x = data.x.col(s);
            data.y(s) = forward(teacher, x);
            data.dydx.col(s) = input_gradient(teacher, x);
        }
    } else {
        stage = "sobolev-ref";
        data = load_checked_dataset(cfg); // pathwise derivatives from the sampler
    }

    SobolevConfig scfg;
    scfg.lambda = cfg.lambda;
    scfg.batch_size = cfg.sobolev_batch;
    scfg.epochs = cfg.sobolev_epochs;
    scfg.source = source;

    std::vector<TrainLogRow> log;
    MlpModel out = train_sobolev(model, data, scfg, cfg.sobolev_schedule(),
                                 derive_seed(cfg.seed, stage), &log);
    const std::string stem = stage_file_stem(stage);
    write_train_log_csv(path_in(cfg, stem + "_train_log.csv"), log);
    save_model(stage_model_path(cfg, stage), out, config_hash(cfg));
    evaluate_stage(cfg, out, stage, timer.stop());
}

RunReport cmd_evaluate(const ExperimentConfig& cfg, const std::string& model_path,
                       const std::string& stage) {
    StageTimer timer{"evaluate"};
    MlpModel model = load_checked_model(cfg, model_path);
    return evaluate_stage(cfg, model, stage, timer.stop());
}

std::string cmd_report(const std::string& run_dir) {
    static const char* kStages[] = {"baseline", "pruned", "layers-removed", "sobolev-nn",
                                    "sobolev-ref"};
    std::vector<RunReport> reports;
    for (const char* stage : kStages) {
        std::string s = stage;
        for (char& c : s)
            if (c == '-') c = '_';
        const std::string path = (fs::path(run_dir) / (s + "_report.json")).string();
        if (!fs::exists(path)) {
            std::cerr << "warning: no report for stage '" << stage << "' in " << run_dir << "\n";
            continue;
        }
        reports.push_back(read_report_json(path));
    }
    if (reports.empty()) throw MissingArtifact("no stage reports found in " + run_dir);

    std::ostringstream o;
    o << "| Predict |";
    for (const auto& r : reports) o << " " << r.stage << " |";
    o << "\n|---|";
    for (std::size_t i = 0; i < reports.size(); ++i) o << "---|";
    o << "\n";
    auto row = [&](const char* name, auto pick) {
        o << "| " << name << " |";
        char buf[32];
        for (const auto& r : reports) {
            std::snprintf(buf, sizeof(buf), " %.6f |", pick(r));
            o << buf;
        }
        o << "\n";
    };
    row("Values", [](const RunReport& r) { return r.values_r2; });
    row("Deltas", [](const RunReport& r) { return r.deltas_r2; });
    row("Gammas", [](const RunReport& r) { return r.gammas_r2; });

    const std::string table = o.str();
    std::ofstream f((fs::path(run_dir) / "report.md").string());
    f << table;
    std::cout << table;
    return table;
}

void cmd_all(const ExperimentConfig& cfg) {
    cmd_generate(cfg);
    cmd_train(cfg);
    cmd_prune(cfg);
    cmd_finetune(cfg, DerivativeSource::Teacher);
    cmd_finetune(cfg, DerivativeSource::Reference);
    cmd_report(cfg.out_dir);
}

} // namespace sensnet
