#include "found/ablate.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "found/errors.hpp"

namespace found::ablate {

std::vector<RowSpec> standard_rows(const core::AttackConfig& base) {
    using S = core::EnsembleStrategy;
    const int k = base.feature_iterations;
    return {
        {"EE(LE)", 0, true, S::LossEnsemble},
        {"EE(OE)", 0, true, S::OutputEnsemble},
        {"EE(GE)", 0, true, S::GradientEnsemble},
        {"FE", k, false, S::GradientEnsemble},
        {"FE+EE(LE)", k, true, S::LossEnsemble},
        {"FE+EE(OE)", k, true, S::OutputEnsemble},
        {"FE+EE(GE)", k, true, S::GradientEnsemble},
    };
}

int AblationResult::row_index(const std::string& label) const {
    const auto it = std::find(row_labels.begin(), row_labels.end(), label);
    if (it == row_labels.end()) throw ConfigError("ablation: no row '" + label + "'");
    return static_cast<int>(it - row_labels.begin());
}

int AblationResult::model_index(const std::string& name) const {
    const auto it = std::find(model_names.begin(), model_names.end(), name);
    if (it == model_names.end()) throw ConfigError("ablation: no model '" + name + "'");
    return static_cast<int>(it - model_names.begin());
}

double AblationResult::mean_sr(int row, int model) const {
    double s = 0.0;
    for (const SeedResult& r : seeds) s += r.sr[row][model];
    return s / static_cast<double>(seeds.size());
}

double AblationResult::mean_l2(int row, int model) const {
    double s = 0.0;
    for (const SeedResult& r : seeds) s += r.l2[row][model];
    return s / static_cast<double>(seeds.size());
}

double AblationResult::row_avg_sr(const SeedResult& s, int row) const {
    double acc = 0.0;
    for (double v : s.sr[row]) acc += v;
    return acc / static_cast<double>(s.sr[row].size());
}

AblationResult run(const core::EnsembleHandle& handle, const attack::TrainingSet& train_set,
                   const Tensor& eval_images, const std::vector<eval::EvalCase>& cases,
                   const core::AttackConfig& base, const std::vector<uint64_t>& seeds,
                   int eval_batch_size) {
    AblationResult result;
    const std::vector<RowSpec> rows = standard_rows(base);
    for (const RowSpec& r : rows) result.row_labels.push_back(r.label);
    for (int i = 0; i < handle.size(); ++i)
        result.model_names.push_back(handle.adapter(i).name());

    for (uint64_t seed : seeds) {
        SeedResult sr_result;
        sr_result.seed = seed;
        for (const RowSpec& row : rows) {
            core::AttackConfig cfg = base;
            cfg.seed = seed;
            cfg.feature_iterations = row.feature_iterations;
            cfg.stage2 = row.stage2;
            cfg.ee_strategy = row.strategy;
            const core::Disruptor d = attack::train_found(handle, train_set, cfg);
            const eval::EvaluationReport report =
                eval::evaluate(handle, nullptr, eval_images, cases, d, eval_batch_size);
            std::vector<double> sr_row, l2_row;
            for (const std::string& name : result.model_names) {
                const eval::MetricCell avg = report.model_average(name);
                sr_row.push_back(avg.sr);
                l2_row.push_back(avg.l2_mask_mean);
            }
            sr_result.sr.push_back(std::move(sr_row));
            sr_result.l2.push_back(std::move(l2_row));
        }
        result.seeds.push_back(std::move(sr_result));
    }
    return result;
}

std::string render_text(const AblationResult& result) {
    std::ostringstream os;
    os << "strategy ablation (" << result.seeds.size() << " seed"
       << (result.seeds.size() == 1 ? "" : "s") << ", mean per cell)\n";
    os << "  " << std::left << std::setw(12) << "method" << std::setw(9) << "metric";
    for (const std::string& name : result.model_names)
        os << std::right << std::setw(17) << name;
    os << std::right << std::setw(10) << "Avg" << "\n";
    for (size_t row = 0; row < result.row_labels.size(); ++row) {
        os << "  " << std::left << std::setw(12) << result.row_labels[row] << std::setw(9)
           << "SRmask";
        double avg_sr = 0.0;
        for (size_t m = 0; m < result.model_names.size(); ++m) {
            const double v = result.mean_sr(static_cast<int>(row), static_cast<int>(m));
            avg_sr += v;
            os << std::right << std::fixed << std::setprecision(2) << std::setw(16) << v * 100.0
               << "%";
        }
        os << std::right << std::setw(9)
           << avg_sr / static_cast<double>(result.model_names.size()) * 100.0 << "%\n";
        os << "  " << std::left << std::setw(12) << "" << std::setw(9) << "L2mask";
        double avg_l2 = 0.0;
        for (size_t m = 0; m < result.model_names.size(); ++m) {
            const double v = result.mean_l2(static_cast<int>(row), static_cast<int>(m));
            avg_l2 += v;
            os << std::right << std::fixed << std::setprecision(4) << std::setw(17) << v;
        }
        os << std::right << std::setw(10)
           << avg_l2 / static_cast<double>(result.model_names.size()) << "\n";
    }
    return os.str();
}

}  // namespace found::ablate
