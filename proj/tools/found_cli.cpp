// found: universal deepfake-disruptor toolkit.
// Subcommands: train, evaluate, apply, ablate, zoo-build.
// Exit codes: 0 ok, 2 config/shape, 3 divergence, 4 I/O, 5 container format.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "found/errors.hpp"
#include "found/run_config.hpp"
#include "found/runner.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;
constexpr int kExitFormat = 5;

struct CommonFlags {
    std::string config_path;
    std::string output_dir;
    int iterations = -1;
    int feature_iterations = -1;
    double epsilon = -1.0;
    double alpha = -1.0;
    double lambda_kl = -1.0;
    int batch_size = -1;
    std::string strategy;
    std::string updater;
    long long seed = -1;
    long long dataset_seed = -1;
    int dataset_count = -1;
    long long ensemble_seed = -1;
    std::string checkpoint_dir;
    int eval_count = -1;
    long long eval_seed = -1;
    bool no_held_out = false;
    bool no_stage2 = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("-c,--config", f.config_path, "JSON run config (flags override it)");
    cmd->add_option("-o,--output", f.output_dir, "output directory");
    cmd->add_option("--iterations", f.iterations, "outer (end-to-end) iterations T");
    cmd->add_option("--feature-iterations", f.feature_iterations,
                    "feature-stage iterations K per batch");
    cmd->add_option("--epsilon", f.epsilon, "perturbation bound (L-inf)");
    cmd->add_option("--alpha", f.alpha, "update step size");
    cmd->add_option("--lambda-kl", f.lambda_kl, "KL term weight in the feature loss");
    cmd->add_option("--batch-size", f.batch_size, "attack batch size");
    cmd->add_option("--strategy", f.strategy, "end-to-end strategy: GE, OE or LE");
    cmd->add_option("--updater", f.updater, "stage-2 updater: pgd-sign or momentum");
    cmd->add_option("--seed", f.seed, "attack seed");
    cmd->add_option("--dataset-seed", f.dataset_seed, "synthetic training-set seed");
    cmd->add_option("--dataset-count", f.dataset_count, "synthetic training-set size");
    cmd->add_option("--ensemble-seed", f.ensemble_seed, "zoo training seed");
    cmd->add_option("--checkpoints", f.checkpoint_dir, "load ensemble from checkpoint dir");
    cmd->add_option("--eval-count", f.eval_count, "evaluation-set size");
    cmd->add_option("--eval-seed", f.eval_seed, "evaluation-set seed");
    cmd->add_flag("--no-held-out", f.no_held_out, "skip the held-out transfer model");
    cmd->add_flag("--no-stage2", f.no_stage2, "feature-ensemble stage only");
}

found::io::RunConfig resolve_config(const CommonFlags& f) {
    found::io::RunConfig cfg;
    if (!f.config_path.empty()) cfg = found::io::RunConfig::from_file(f.config_path);
    if (!f.output_dir.empty()) cfg.output_dir = f.output_dir;
    if (f.iterations >= 0) cfg.attack.iterations = f.iterations;
    if (f.feature_iterations >= 0) cfg.attack.feature_iterations = f.feature_iterations;
    if (f.epsilon >= 0.0) cfg.attack.epsilon = f.epsilon;
    if (f.alpha >= 0.0) cfg.attack.alpha = f.alpha;
    if (f.lambda_kl >= 0.0) cfg.attack.lambda_kl = f.lambda_kl;
    if (f.batch_size >= 0) cfg.attack.batch_size = f.batch_size;
    if (!f.strategy.empty())
        cfg.attack.ee_strategy = found::core::strategy_from_string(f.strategy);
    if (!f.updater.empty()) cfg.attack.updater = found::core::updater_from_string(f.updater);
    if (f.seed >= 0) cfg.attack.seed = static_cast<uint64_t>(f.seed);
    if (f.dataset_seed >= 0) cfg.dataset.seed = static_cast<uint64_t>(f.dataset_seed);
    if (f.dataset_count >= 0) cfg.dataset.count = f.dataset_count;
    if (f.ensemble_seed >= 0) cfg.ensemble.seed = static_cast<uint64_t>(f.ensemble_seed);
    if (!f.checkpoint_dir.empty()) {
        cfg.ensemble.kind = "checkpoints";
        cfg.ensemble.checkpoint_dir = f.checkpoint_dir;
    }
    if (f.eval_count >= 0) cfg.evaluation.count = f.eval_count;
    if (f.eval_seed >= 0) cfg.evaluation.seed = static_cast<uint64_t>(f.eval_seed);
    if (f.no_held_out) cfg.ensemble.include_held_out = false;
    if (f.no_stage2) cfg.attack.stage2 = false;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FOUND universal deepfake disruptor"};
    app.require_subcommand(1);

    CommonFlags train_flags, eval_flags, ablate_flags, zoo_flags;
    std::string eval_disruptor, apply_disruptor_path, apply_in, apply_out, zoo_out;
    std::string apply_format = "ppm";

    CLI::App* train_cmd =
        app.add_subcommand("train", "train a universal disruptor against the ensemble");
    add_common_flags(train_cmd, train_flags);

    CLI::App* eval_cmd =
        app.add_subcommand("evaluate", "evaluate a trained disruptor (Table-1-style report)");
    add_common_flags(eval_cmd, eval_flags);
    eval_cmd->add_option("-d,--disruptor", eval_disruptor, "disruptor file")->required();

    CLI::App* apply_cmd = app.add_subcommand("apply", "protect a directory of PPM images");
    apply_cmd->add_option("-d,--disruptor", apply_disruptor_path, "disruptor file")->required();
    apply_cmd->add_option("-i,--images", apply_in, "input image directory")->required();
    apply_cmd->add_option("-o,--output", apply_out, "output directory")->required();
    apply_cmd->add_option("--format", apply_format, "output format (ppm; lossy formats refused)");

    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "run the strategy-comparison table (EE/FE rows)");
    add_common_flags(ablate_cmd, ablate_flags);
    ablate_cmd->add_option("--seeds", ablate_flags.seed,
                           "ignored; use the config's ablation.seeds list")
        ->group("");

    CLI::App* zoo_cmd = app.add_subcommand("zoo-build", "train and save the toy model zoo");
    add_common_flags(zoo_cmd, zoo_flags);
    zoo_cmd->add_option("--zoo-output", zoo_out, "checkpoint directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) {
            const auto cfg = resolve_config(train_flags);
            const auto art = found::runner::run_train(cfg);
            std::cout << "disruptor: " << art.disruptor_path << "\n"
                      << "telemetry: " << art.telemetry_path << "\n"
                      << "config:    " << art.config_path << " (digest " << cfg.digest()
                      << ")\n";
        } else if (eval_cmd->parsed()) {
            const auto cfg = resolve_config(eval_flags);
            const auto art = found::runner::run_evaluate(cfg, eval_disruptor);
            std::cout << "report: " << art.report_text_path << "\n"
                      << "records: " << art.report_json_path << "\n";
        } else if (apply_cmd->parsed()) {
            const auto summary =
                found::runner::run_apply(apply_disruptor_path, apply_in, apply_out, apply_format);
            for (const std::string& note : summary.notes) std::cerr << note << "\n";
            std::cout << summary.written << " image(s) written, " << summary.skipped
                      << " skipped\n";
        } else if (ablate_cmd->parsed()) {
            const auto cfg = resolve_config(ablate_flags);
            const auto art = found::runner::run_ablate(cfg);
            std::cout << found::ablate::render_text(art.result);
            std::cout << "table: " << art.table_path << "\nrecords: " << art.json_path << "\n";
        } else if (zoo_cmd->parsed()) {
            const auto cfg = resolve_config(zoo_flags);
            const auto paths = found::runner::run_zoo_build(cfg, zoo_out);
            for (const std::string& p : paths) std::cout << "checkpoint: " << p << "\n";
        }
    } catch (const found::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const found::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const found::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const found::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const found::ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
