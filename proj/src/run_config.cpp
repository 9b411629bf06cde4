#include "found/run_config.hpp"

#include <json.hpp>

#include "found/container.hpp"
#include "found/errors.hpp"
#include "found/fsutil.hpp"

namespace found::io {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + where + "." + key + "'");
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    reject_unknown(root, "", {"attack", "dataset", "ensemble", "evaluation", "ablation",
                              "output"});
    RunConfig cfg;
    if (root.contains("attack")) {
        const json& a = root["attack"];
        reject_unknown(a, "attack",
                       {"epsilon", "alpha", "lambda_kl", "iterations", "feature_iterations",
                        "batch_size", "weights", "ee_strategy", "updater", "momentum", "seed",
                        "stage2"});
        cfg.attack.epsilon = get_or(a, "epsilon", cfg.attack.epsilon);
        cfg.attack.alpha = get_or(a, "alpha", cfg.attack.alpha);
        cfg.attack.lambda_kl = get_or(a, "lambda_kl", cfg.attack.lambda_kl);
        cfg.attack.iterations = get_or(a, "iterations", cfg.attack.iterations);
        cfg.attack.feature_iterations =
            get_or(a, "feature_iterations", cfg.attack.feature_iterations);
        cfg.attack.batch_size = get_or(a, "batch_size", cfg.attack.batch_size);
        cfg.attack.weights = get_or(a, "weights", cfg.attack.weights);
        cfg.attack.ee_strategy =
            core::strategy_from_string(get_or<std::string>(a, "ee_strategy", "GE"));
        cfg.attack.updater =
            core::updater_from_string(get_or<std::string>(a, "updater", "pgd-sign"));
        cfg.attack.momentum = get_or(a, "momentum", cfg.attack.momentum);
        cfg.attack.seed = get_or(a, "seed", cfg.attack.seed);
        cfg.attack.stage2 = get_or(a, "stage2", cfg.attack.stage2);
    }
    if (root.contains("dataset")) {
        const json& d = root["dataset"];
        reject_unknown(d, "dataset", {"kind", "count", "seed", "directory"});
        cfg.dataset.kind = get_or<std::string>(d, "kind", cfg.dataset.kind);
        cfg.dataset.count = get_or(d, "count", cfg.dataset.count);
        cfg.dataset.seed = get_or(d, "seed", cfg.dataset.seed);
        cfg.dataset.directory = get_or<std::string>(d, "directory", cfg.dataset.directory);
    }
    if (root.contains("ensemble")) {
        const json& e = root["ensemble"];
        reject_unknown(e, "ensemble", {"kind", "seed", "include_held_out", "checkpoint_dir"});
        cfg.ensemble.kind = get_or<std::string>(e, "kind", cfg.ensemble.kind);
        cfg.ensemble.seed = get_or(e, "seed", cfg.ensemble.seed);
        cfg.ensemble.include_held_out =
            get_or(e, "include_held_out", cfg.ensemble.include_held_out);
        cfg.ensemble.checkpoint_dir =
            get_or<std::string>(e, "checkpoint_dir", cfg.ensemble.checkpoint_dir);
    }
    if (root.contains("evaluation")) {
        const json& e = root["evaluation"];
        reject_unknown(e, "evaluation", {"count", "seed", "batch_size"});
        cfg.evaluation.count = get_or(e, "count", cfg.evaluation.count);
        cfg.evaluation.seed = get_or(e, "seed", cfg.evaluation.seed);
        cfg.evaluation.batch_size = get_or(e, "batch_size", cfg.evaluation.batch_size);
    }
    if (root.contains("ablation")) {
        const json& a = root["ablation"];
        reject_unknown(a, "ablation", {"seeds"});
        cfg.ablation.seeds = get_or(a, "seeds", cfg.ablation.seeds);
    }
    if (root.contains("output")) {
        const json& o = root["output"];
        reject_unknown(o, "output", {"dir"});
        cfg.output_dir = get_or<std::string>(o, "dir", cfg.output_dir);
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_json_text(fsutil::read_file(path));
}

std::string RunConfig::to_json_text() const {
    json root;
    root["attack"] = {{"epsilon", attack.epsilon},
                      {"alpha", attack.alpha},
                      {"lambda_kl", attack.lambda_kl},
                      {"iterations", attack.iterations},
                      {"feature_iterations", attack.feature_iterations},
                      {"batch_size", attack.batch_size},
                      {"weights", attack.weights},
                      {"ee_strategy", core::to_string(attack.ee_strategy)},
                      {"updater", core::to_string(attack.updater)},
                      {"momentum", attack.momentum},
                      {"seed", attack.seed},
                      {"stage2", attack.stage2}};
    root["dataset"] = {{"kind", dataset.kind},
                       {"count", dataset.count},
                       {"seed", dataset.seed},
                       {"directory", dataset.directory}};
    root["ensemble"] = {{"kind", ensemble.kind},
                        {"seed", ensemble.seed},
                        {"include_held_out", ensemble.include_held_out},
                        {"checkpoint_dir", ensemble.checkpoint_dir}};
    root["evaluation"] = {{"count", evaluation.count},
                          {"seed", evaluation.seed},
                          {"batch_size", evaluation.batch_size}};
    root["ablation"] = {{"seeds", ablation.seeds}};
    root["output"] = {{"dir", output_dir}};
    return root.dump(2);
}

std::string RunConfig::digest() const { return digest_hex(to_json_text()); }

void RunConfig::validate() const {
    attack.validate();
    if (dataset.kind != "synthetic" && dataset.kind != "directory")
        throw ConfigError("dataset.kind must be 'synthetic' or 'directory'");
    if (dataset.kind == "synthetic" && dataset.count < 1)
        throw ConfigError("dataset.count must be >= 1");
    if (dataset.kind == "directory" && dataset.directory.empty())
        throw ConfigError("dataset.directory required for directory datasets");
    if (ensemble.kind != "zoo" && ensemble.kind != "checkpoints")
        throw ConfigError("ensemble.kind must be 'zoo' or 'checkpoints'");
    if (ensemble.kind == "checkpoints" && ensemble.checkpoint_dir.empty())
        throw ConfigError("ensemble.checkpoint_dir required for checkpoint ensembles");
    if (evaluation.count < 1) throw ConfigError("evaluation.count must be >= 1");
    if (evaluation.batch_size < 1) throw ConfigError("evaluation.batch_size must be >= 1");
    if (ablation.seeds.empty()) throw ConfigError("ablation.seeds must be nonempty");
    if (output_dir.empty()) throw ConfigError("output.dir must be nonempty");
}

}  // namespace found::io
