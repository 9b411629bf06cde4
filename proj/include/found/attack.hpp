#pragma once

#include <functional>
#include <string>
#include <vector>

#include "found/core.hpp"
#include "found/tensor.hpp"

namespace found::attack {

/// Fused end-to-end gradient with per-model diagnostics.
struct GradientEstimate {
    Tensor grad;  // shaped like Disruptor::delta
    core::EnsembleStrategy strategy = core::EnsembleStrategy::GradientEnsemble;
    std::vector<double> per_model_norms;  // L1 norms of the per-model gradients (GE only)
};

/// State for the momentum updater.
struct UpdaterState {
    Tensor buffer;      // zero-initialized, shaped like delta
    int iteration = 0;  // r
};

/// Training images with their original attribute routing. References carry
/// each sample's own attributes (reference-image adapters); empty when no
/// such adapter is registered.
struct TrainingSet {
    Tensor images;      // (N, 3, H, W)
    Tensor labels;      // (N, A, 1, 1)
    Tensor references;  // (N, 3, H, W) or empty
};

core::AttributeSpec slice_attributes(const TrainingSet& data, int begin, int count);
Tensor slice_images(const Tensor& images, int begin, int count);

/// One record per disruptor update.
struct TelemetryRecord {
    std::string stage;  // "feature" | "end_to_end"
    int t = 0;
    int batch_index = 0;
    int k = -1;            // feature-stage iteration, -1 for end-to-end
    std::string strategy;  // end-to-end only
    double loss = 0.0;     // L_FE, or the strategy's fused loss
    double loss_mse = 0.0;
    double loss_kl = 0.0;
    std::vector<double> per_model_losses;  // end-to-end only
    double grad_l1 = 0.0;
    double grad_linf = 0.0;
    double delta_linf = 0.0;
};
using TelemetryFn = std::function<void(const TelemetryRecord&)>;

/// Gaussian init (sigma = epsilon/3) projected into [-epsilon, epsilon].
core::Disruptor init_disruptor(const core::ImageShape& shape, double epsilon, uint64_t seed);

/// delta <- clip_eps(delta + alpha * sign(grad)); sign(0) = 0.
/// Throws DivergenceError on non-finite gradients.
core::Disruptor pgd_step(core::Disruptor d, const Tensor& grad, double alpha);

/// buffer <- mu * buffer + grad/||grad||_1 (raw decay when the gradient is
/// zero); delta <- clip_eps(delta + alpha * sign(buffer)).
core::Disruptor momentum_update(UpdaterState& state, core::Disruptor d, const Tensor& grad,
                                double alpha, double mu);

/// Gradient of MSE between the weighted pixel-sums of clean and adversarial
/// fakes (outputs aggregated before the loss).
GradientEstimate output_ensemble_gradient(const core::EnsembleHandle& handle,
                                          const Tensor& images, const core::AttributeSpec& attrs,
                                          const core::Disruptor& d,
                                          const std::vector<double>& weights);

/// Gradient of the weighted sum of per-model MSE losses.
GradientEstimate loss_ensemble_gradient(const core::EnsembleHandle& handle, const Tensor& images,
                                        const core::AttributeSpec& attrs,
                                        const core::Disruptor& d,
                                        const std::vector<double>& weights);

/// Magnitude-equalized mean of per-mini-task gradients:
///     G = (1/N) * sum_i (s_bar / s_i) * g_i,   s_i = ||g_i||_1, s_bar = mean(s_i),
/// so each mini-task contributes equal gradient mass regardless of how easy
/// it is to attack; gradients with s_i = 0 contribute nothing. At N = 1 this
/// is exactly the raw gradient.
Tensor fuse_gradients(const std::vector<Tensor>& per_model_grads);

/// Per model i (independently): g_i = grad of MSE(G_i(E_i(X)), G_i(E_i(X^))),
/// fused with fuse_gradients().
GradientEstimate gradient_ensemble(const core::EnsembleHandle& handle, const Tensor& images,
                                   const core::AttributeSpec& attrs, const core::Disruptor& d);

/// Algorithm-1 driver: T outer iterations over fixed-order batches; per batch
/// K feature-stage PGD updates on L_FE, then (unless config.stage2 is false)
/// one end-to-end update with config.ee_strategy and config.updater.
core::Disruptor train_found(const core::EnsembleHandle& handle, const TrainingSet& data,
                            const core::AttackConfig& config, const TelemetryFn& telemetry = {});

}  // namespace found::attack
