#pragma once

#include <string>
#include <vector>

#include "found/core.hpp"
#include "found/tensor.hpp"

namespace found::eval {

inline constexpr double kMaskThreshold = 0.1;     // channel-mean |fake - x| on [-1,1]
inline constexpr double kSuccessThreshold = 0.05;  // L2mask above this counts as disruption
inline constexpr double kPsnrCap = 99.0;

/// Pixels the deepfake actually edits: channel-mean |fake_clean - x| > threshold.
struct DisruptionMask {
    Tensor mask;  // (B, 1, H, W), entries 0/1
    double threshold = kMaskThreshold;
};

DisruptionMask compute_mask(const Tensor& x, const Tensor& fake_clean,
                            double threshold = kMaskThreshold);

struct L2MaskResult {
    double value = 0.0;
    bool mask_empty = false;  // empty mask => value 0, counted as non-success
};

/// Mean over masked pixels of the channel-mean squared difference between the
/// disrupted and clean fakes (pooled over the whole batch).
L2MaskResult l2_mask(const Tensor& x, const Tensor& fake_clean, const Tensor& fake_adv,
                     double threshold = kMaskThreshold);
std::vector<L2MaskResult> l2_mask_per_sample(const Tensor& x, const Tensor& fake_clean,
                                             const Tensor& fake_adv,
                                             double threshold = kMaskThreshold);

/// Fraction of values strictly above the success threshold.
double sr_mask(const std::vector<double>& values, double success_threshold = kSuccessThreshold);

/// 10*log10(1/MSE) after rescaling [-1,1] -> [0,1]; capped at 99 dB.
double psnr(const Tensor& a, const Tensor& b);

/// Gaussian-window (11x11, sigma 1.5, K1 0.01, K2 0.03) SSIM on the [0,1]
/// scale, valid window positions, averaged over windows, channels and batch.
/// Requires H, W >= 11.
double ssim(const Tensor& a, const Tensor& b);

/// One target-attribute value over a whole evaluation set.
struct EvalCase {
    std::string attribute_name;
    core::AttributeSpec attrs;
};

/// Aggregates for one (model, attribute) cell.
struct MetricCell {
    std::string model;
    std::string attribute;
    bool transfer = false;  // held-out model section
    int cases = 0;
    int empty_masks = 0;
    double l2_mask_mean = 0.0;
    double sr = 0.0;
    double psnr_mean = 0.0;
    double ssim_mean = 0.0;
};

struct EvaluationReport {
    std::vector<MetricCell> cells;
    std::string config_digest;
    std::string disruptor_digest;
    double mask_threshold = kMaskThreshold;
    double success_threshold = kSuccessThreshold;

    std::vector<std::string> model_names(bool transfer) const;
    MetricCell model_average(const std::string& model) const;
    /// Mean over the non-transfer models' averages (the Table-1 Avg row).
    MetricCell overall_average() const;
};

/// Runs every (model, attribute, image) cell: fake_clean vs fake_adv under
/// the disruptor, all metrics, Table-1-shaped aggregation. The held-out
/// adapter (optional) lands in a separate transfer section.
EvaluationReport evaluate(const core::EnsembleHandle& handle, const core::AdapterPtr& held_out,
                          const Tensor& images, const std::vector<EvalCase>& cases,
                          const core::Disruptor& d, int batch_size = 8);

std::string render_report_text(const EvaluationReport& report);

/// One grid row: a label plus equally sized (1,3,H,W) images.
struct GridRow {
    std::string label;
    std::vector<Tensor> cells;
};

/// Lossless PPM grid, 2 px white margins around cells; row labels are stored
/// in the PPM comment header. Layout: width = cols*W + (cols+1)*2,
/// height = rows*H + (rows+1)*2.
void export_grid(const std::vector<GridRow>& rows, const std::string& path);

}  // namespace found::eval
