#include "found/featgrad.hpp"

#include <algorithm>

#include "found/errors.hpp"

namespace found::featgrad {

std::pair<int, int> common_target(const std::vector<ad::Var>& feature_maps) {
    if (feature_maps.empty()) throw ShapeError("common_target: empty feature list");
    int h = 1, w = 1;
    for (const auto& fm : feature_maps) {
        h = std::max(h, fm.value().h);
        w = std::max(w, fm.value().w);
    }
    return {h, w};
}

ad::Var resize_bilinear(const ad::Var& fm, int target_h, int target_w) {
    return ad::resize_bilinear(fm, target_h, target_w);
}

Tensor resize_bilinear(const Tensor& fm, int target_h, int target_w) {
    return ad::resize_bilinear(ad::constant(fm), target_h, target_w).value();
}

ad::Var aggregate_features(const std::vector<ad::Var>& feature_maps, int target_h, int target_w) {
    if (feature_maps.empty()) throw ShapeError("aggregate_features: empty feature list");
    const int batch = feature_maps[0].value().b;
    ad::Var total;
    for (const auto& fm : feature_maps) {
        if (fm.value().b != batch)
            throw ShapeError("aggregate_features: batch mismatch " + fm.value().shape_str());
        ad::Var summed = ad::sum_channels(fm);
        ad::Var resized = ad::resize_bilinear(summed, target_h, target_w);
        total = total.valid() ? ad::add(total, resized) : resized;
    }
    return total;
}

ad::Var feature_mse_loss(const ad::Var& orig_aggregate, const ad::Var& adv_aggregate) {
    return ad::mse(orig_aggregate, adv_aggregate);
}

ad::Var feature_kl_loss(const std::vector<ad::Var>& adv_feature_maps) {
    auto [h, w] = common_target(adv_feature_maps);
    return feature_kl_loss(adv_feature_maps, h, w);
}

ad::Var feature_kl_loss(const std::vector<ad::Var>& adv_feature_maps, int target_h,
                        int target_w) {
    if (adv_feature_maps.empty()) throw ShapeError("feature_kl_loss: empty feature list");
    const int n = static_cast<int>(adv_feature_maps.size());
    std::vector<ad::Var> dists;
    dists.reserve(n);
    for (const auto& fm : adv_feature_maps) {
        ad::Var summed = ad::sum_channels(fm);
        ad::Var resized = ad::resize_bilinear(summed, target_h, target_w);
        dists.push_back(ad::softmax_spatial(resized));
    }
    ad::Var total;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            ad::Var kl = ad::kl_mean(dists[i], dists[j]);
            total = total.valid() ? ad::add(total, kl) : kl;
        }
    if (!total.valid()) return ad::constant(Tensor(1, 1, 1, 1));  // N = 1: empty pair set
    return total;
}

ad::Var feature_ensemble_loss(const std::vector<ad::Var>& orig_feature_maps,
                              const std::vector<ad::Var>& adv_feature_maps, double lambda_kl) {
    if (orig_feature_maps.size() != adv_feature_maps.size())
        throw ShapeError("feature_ensemble_loss: model list mismatch");
    auto [h, w] = common_target(orig_feature_maps);
    ad::Var orig_agg = aggregate_features(orig_feature_maps, h, w);
    ad::Var adv_agg = aggregate_features(adv_feature_maps, h, w);
    ad::Var loss = feature_mse_loss(orig_agg, adv_agg);
    if (lambda_kl != 0.0) {
        ad::Var kl = feature_kl_loss(adv_feature_maps, h, w);
        loss = ad::sub(loss, ad::scale(kl, lambda_kl));
    }
    return loss;
}

}  // namespace found::featgrad
