#pragma once

#include <string>
#include <vector>

#include "found/attack.hpp"
#include "found/core.hpp"
#include "found/eval.hpp"

namespace found::ablate {

/// One ablation table row: a stage/strategy combination.
struct RowSpec {
    std::string label;
    int feature_iterations = 0;  // 0 disables Stage 1
    bool stage2 = true;
    core::EnsembleStrategy strategy = core::EnsembleStrategy::GradientEnsemble;
};

/// The rows of the strategy-comparison tables:
/// EE(LE), EE(OE), EE(GE), FE, FE+EE(LE), FE+EE(OE), FE+EE(GE).
std::vector<RowSpec> standard_rows(const core::AttackConfig& base);

struct SeedResult {
    uint64_t seed = 0;
    // indexed [row][model]
    std::vector<std::vector<double>> sr;
    std::vector<std::vector<double>> l2;
};

struct AblationResult {
    std::vector<std::string> row_labels;
    std::vector<std::string> model_names;
    std::vector<SeedResult> seeds;

    int row_index(const std::string& label) const;
    int model_index(const std::string& name) const;
    double mean_sr(int row, int model) const;  // over seeds
    double mean_l2(int row, int model) const;
    double row_avg_sr(const SeedResult& s, int row) const;  // over models
};

/// Trains and evaluates every row for every seed with shared budgets. The
/// attack seed varies per run; ensemble and datasets stay fixed.
AblationResult run(const core::EnsembleHandle& handle, const attack::TrainingSet& train_set,
                   const Tensor& eval_images, const std::vector<eval::EvalCase>& cases,
                   const core::AttackConfig& base, const std::vector<uint64_t>& seeds,
                   int eval_batch_size = 8);

std::string render_text(const AblationResult& result);

}  // namespace found::ablate
