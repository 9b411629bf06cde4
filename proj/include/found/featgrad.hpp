#pragma once

#include <utility>
#include <vector>

#include "found/autodiff.hpp"
#include "found/tensor.hpp"

namespace found::featgrad {

/// Spatial size every feature map is resized to before cross-model sums:
/// the largest spatial extent present in the list (upsampling only).
std::pair<int, int> common_target(const std::vector<ad::Var>& feature_maps);

/// Align-corners differentiable bilinear resize (re-exported for the module
/// surface; plain-tensor convenience included).
ad::Var resize_bilinear(const ad::Var& fm, int target_h, int target_w);
Tensor resize_bilinear(const Tensor& fm, int target_h, int target_w);

/// Per model: sum over the channel dimension, resize to the common target,
/// then sum across models. No normalization anywhere on this path.
/// Result shape (B, 1, H*, W*).
ad::Var aggregate_features(const std::vector<ad::Var>& feature_maps, int target_h, int target_w);

/// Mean over all elements of the squared difference of two aggregates.
ad::Var feature_mse_loss(const ad::Var& orig_aggregate, const ad::Var& adv_aggregate);

/// Per model: channel-sum, resize to the common target, per-sample spatial
/// softmax; then the sum of KL(P_i || P_j) over all ordered pairs i != j,
/// averaged over the batch. N = 1 gives 0 (empty pair set).
ad::Var feature_kl_loss(const std::vector<ad::Var>& adv_feature_maps);
ad::Var feature_kl_loss(const std::vector<ad::Var>& adv_feature_maps, int target_h, int target_w);

/// Stage-1 loss: L_FE = L_MSE - lambda * L_KL (maximized by the attack).
/// Orig and adv lists must pair up model for model.
ad::Var feature_ensemble_loss(const std::vector<ad::Var>& orig_feature_maps,
                              const std::vector<ad::Var>& adv_feature_maps, double lambda_kl);

}  // namespace found::featgrad
