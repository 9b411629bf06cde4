#pragma once

#include <string>
#include <vector>

#include "found/ablate.hpp"
#include "found/core.hpp"
#include "found/eval.hpp"
#include "found/run_config.hpp"
#include "found/zoo.hpp"

namespace found::runner {

/// Models resolved from the config (freshly trained zoo or loaded checkpoints).
struct Ensemble {
    core::EnsembleHandle handle;
    core::AdapterPtr held_out;  // null when not requested
};

Ensemble build_ensemble(const io::EnsembleSpec& spec);

/// Train/eval data resolved from the config.
attack::TrainingSet build_training_set(const io::DatasetSpec& spec);
struct EvalData {
    Tensor images;
    std::vector<eval::EvalCase> cases;
};
EvalData build_eval_data(const io::EvaluationSpec& spec);

/// Applies FOUND_OUTPUT_ROOT (when set and the configured dir is relative).
std::string resolve_output_dir(const std::string& configured);

struct TrainArtifacts {
    std::string disruptor_path;
    std::string telemetry_path;
    std::string config_path;
};
TrainArtifacts run_train(const io::RunConfig& cfg);

struct EvaluateArtifacts {
    std::string report_text_path;
    std::string report_json_path;
};
EvaluateArtifacts run_evaluate(const io::RunConfig& cfg, const std::string& disruptor_path);

struct ApplySummary {
    int written = 0;
    int skipped = 0;
    std::vector<std::string> notes;
};
ApplySummary run_apply(const std::string& disruptor_path, const std::string& image_dir,
                       const std::string& out_dir, const std::string& output_format = "ppm");

struct AblateArtifacts {
    std::string table_path;
    std::string json_path;
    ablate::AblationResult result;
};
AblateArtifacts run_ablate(const io::RunConfig& cfg);

std::vector<std::string> run_zoo_build(const io::RunConfig& cfg, const std::string& out_dir);

}  // namespace found::runner
