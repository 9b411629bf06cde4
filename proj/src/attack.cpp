#include "found/attack.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "found/errors.hpp"
#include "found/featgrad.hpp"
#include "found/rng.hpp"

namespace found::attack {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_finite(const Tensor& grad, const std::string& what) {
    if (!all_finite(grad)) throw DivergenceError(what + ": non-finite gradient");
}

Tensor clean_fake(const core::ModelAdapter& adapter, const Tensor& images,
                  const core::AttributeSpec& attrs) {
    return adapter.full(ad::constant(images), attrs).value();
}

// Shared piece of all three strategies: delta leaf, adversarial batch and
// the per-model adversarial fakes, as graph nodes.
struct AdvForward {
    ad::Var delta;
    std::vector<ad::Var> fakes;
};

AdvForward adv_forward(const core::EnsembleHandle& handle, const Tensor& images,
                       const core::AttributeSpec& attrs, const core::Disruptor& d) {
    AdvForward fwd;
    fwd.delta = ad::leaf(d.delta);
    ad::Var adv = core::apply_disruptor(ad::constant(images), fwd.delta);
    fwd.fakes.reserve(handle.size());
    for (int i = 0; i < handle.size(); ++i)
        fwd.fakes.push_back(handle.adapter(i).full(adv, attrs));
    return fwd;
}

}  // namespace

core::AttributeSpec slice_attributes(const TrainingSet& data, int begin, int count) {
    core::AttributeSpec spec;
    spec.labels = core::slice_batch(data.labels, begin, count);
    if (!data.references.empty())
        spec.references = core::slice_batch(data.references, begin, count);
    return spec;
}

Tensor slice_images(const Tensor& images, int begin, int count) {
    return core::slice_batch(images, begin, count);
}

core::Disruptor init_disruptor(const core::ImageShape& shape, double epsilon, uint64_t seed) {
    if (!(epsilon > 0.0)) throw ConfigError("init_disruptor: epsilon must be > 0");
    Rng rng(seed);
    core::Disruptor d;
    d.delta = Tensor(1, shape.c, shape.h, shape.w);
    const double sigma = epsilon / 3.0;
    for (double& v : d.delta.v)
        v = std::min(epsilon, std::max(-epsilon, rng.normal(0.0, sigma)));
    d.epsilon = epsilon;
    d.meta.seed = seed;
    d.meta.stage = "init";
    return d;
}

core::Disruptor pgd_step(core::Disruptor d, const Tensor& grad, double alpha) {
    if (!grad.same_shape(d.delta))
        throw ShapeError("pgd_step: gradient " + grad.shape_str() + " vs delta " +
                         d.delta.shape_str());
    check_finite(grad, "pgd_step");
    const double eps = d.epsilon;
    for (size_t i = 0; i < d.delta.v.size(); ++i) {
        double v = d.delta.v[i] + alpha * sign(grad.v[i]);
        d.delta.v[i] = std::min(eps, std::max(-eps, v));
    }
    return d;
}

core::Disruptor momentum_update(UpdaterState& state, core::Disruptor d, const Tensor& grad,
                                double alpha, double mu) {
    if (mu < 0.0) throw ConfigError("momentum_update: mu must be >= 0");
    check_finite(grad, "momentum_update");
    if (state.buffer.empty()) state.buffer = Tensor::zeros(grad.b, grad.c, grad.h, grad.w);
    const double norm = l1_norm(grad);
    for (size_t i = 0; i < state.buffer.v.size(); ++i) {
        state.buffer.v[i] *= mu;
        if (norm > 0.0) state.buffer.v[i] += grad.v[i] / norm;
    }
    state.iteration += 1;
    const double eps = d.epsilon;
    for (size_t i = 0; i < d.delta.v.size(); ++i) {
        double v = d.delta.v[i] + alpha * sign(state.buffer.v[i]);
        d.delta.v[i] = std::min(eps, std::max(-eps, v));
    }
    return d;
}

namespace {

GradientEstimate output_ensemble_impl(const core::EnsembleHandle& handle, const Tensor& images,
                                      const core::AttributeSpec& attrs, const core::Disruptor& d,
                                      const std::vector<double>& weights,
                                      const std::vector<Tensor>& clean_fakes,
                                      std::vector<double>* per_model_losses) {
    AdvForward fwd = adv_forward(handle, images, attrs, d);
    Tensor clean_sum;
    ad::Var adv_sum;
    for (int i = 0; i < handle.size(); ++i) {
        const Tensor& cf = clean_fakes[i];
        if (clean_sum.empty()) clean_sum = Tensor::zeros(cf.b, cf.c, cf.h, cf.w);
        for (size_t j = 0; j < cf.v.size(); ++j) clean_sum.v[j] += weights[i] * cf.v[j];
        ad::Var weighted = ad::scale(fwd.fakes[i], weights[i]);
        adv_sum = adv_sum.valid() ? ad::add(adv_sum, weighted) : weighted;
        if (per_model_losses)
            per_model_losses->push_back(ad::mse(ad::constant(cf), fwd.fakes[i]).scalar());
    }
    ad::Var loss = ad::mse(ad::constant(clean_sum), adv_sum);
    if (!std::isfinite(loss.scalar()))
        throw DivergenceError("output_ensemble_gradient: non-finite loss");
    ad::backward(loss);
    GradientEstimate est;
    est.grad = fwd.delta.grad();
    est.strategy = core::EnsembleStrategy::OutputEnsemble;
    check_finite(est.grad, "output_ensemble_gradient");
    return est;
}

GradientEstimate loss_ensemble_impl(const core::EnsembleHandle& handle, const Tensor& images,
                                    const core::AttributeSpec& attrs, const core::Disruptor& d,
                                    const std::vector<double>& weights,
                                    const std::vector<Tensor>& clean_fakes,
                                    std::vector<double>* per_model_losses) {
    AdvForward fwd = adv_forward(handle, images, attrs, d);
    ad::Var total;
    for (int i = 0; i < handle.size(); ++i) {
        ad::Var per_model = ad::mse(ad::constant(clean_fakes[i]), fwd.fakes[i]);
        if (per_model_losses) per_model_losses->push_back(per_model.scalar());
        ad::Var weighted = ad::scale(per_model, weights[i]);
        total = total.valid() ? ad::add(total, weighted) : weighted;
    }
    if (!std::isfinite(total.scalar()))
        throw DivergenceError("loss_ensemble_gradient: non-finite loss");
    ad::backward(total);
    GradientEstimate est;
    est.grad = fwd.delta.grad();
    est.strategy = core::EnsembleStrategy::LossEnsemble;
    check_finite(est.grad, "loss_ensemble_gradient");
    return est;
}

GradientEstimate gradient_ensemble_impl(const core::EnsembleHandle& handle, const Tensor& images,
                                        const core::AttributeSpec& attrs,
                                        const core::Disruptor& d,
                                        const std::vector<Tensor>& clean_fakes,
                                        std::vector<double>* per_model_losses) {
    const int n = handle.size();
    std::vector<Tensor> grads;
    grads.reserve(n);
    for (int i = 0; i < n; ++i) {
        // Independent mini-task: its own leaf and graph.
        ad::Var delta = ad::leaf(d.delta);
        ad::Var adv = core::apply_disruptor(ad::constant(images), delta);
        ad::Var fake = handle.adapter(i).full(adv, attrs);
        ad::Var loss = ad::mse(ad::constant(clean_fakes[i]), fake);
        if (!std::isfinite(loss.scalar()))
            throw DivergenceError("gradient_ensemble: non-finite loss on model '" +
                                  handle.adapter(i).name() + "'");
        if (per_model_losses) per_model_losses->push_back(loss.scalar());
        ad::backward(loss);
        if (!all_finite(delta.grad()))
            throw DivergenceError("gradient_ensemble: non-finite gradient on model '" +
                                  handle.adapter(i).name() + "'");
        grads.push_back(delta.grad());
    }
    GradientEstimate est;
    est.per_model_norms.reserve(n);
    for (const Tensor& g : grads) est.per_model_norms.push_back(l1_norm(g));
    est.grad = fuse_gradients(grads);
    est.strategy = core::EnsembleStrategy::GradientEnsemble;
    return est;
}

std::vector<Tensor> all_clean_fakes(const core::EnsembleHandle& handle, const Tensor& images,
                                    const core::AttributeSpec& attrs) {
    std::vector<Tensor> fakes;
    fakes.reserve(handle.size());
    for (int i = 0; i < handle.size(); ++i)
        fakes.push_back(clean_fake(handle.adapter(i), images, attrs));
    return fakes;
}

}  // namespace

GradientEstimate output_ensemble_gradient(const core::EnsembleHandle& handle,
                                          const Tensor& images, const core::AttributeSpec& attrs,
                                          const core::Disruptor& d,
                                          const std::vector<double>& weights) {
    return output_ensemble_impl(handle, images, attrs, d, weights,
                                all_clean_fakes(handle, images, attrs), nullptr);
}

GradientEstimate loss_ensemble_gradient(const core::EnsembleHandle& handle, const Tensor& images,
                                        const core::AttributeSpec& attrs,
                                        const core::Disruptor& d,
                                        const std::vector<double>& weights) {
    return loss_ensemble_impl(handle, images, attrs, d, weights,
                              all_clean_fakes(handle, images, attrs), nullptr);
}

Tensor fuse_gradients(const std::vector<Tensor>& per_model_grads) {
    if (per_model_grads.empty()) throw ShapeError("fuse_gradients: empty gradient list");
    const int n = static_cast<int>(per_model_grads.size());
    std::vector<double> norms;
    norms.reserve(n);
    double norm_mean = 0.0;
    for (const Tensor& g : per_model_grads) {
        norms.push_back(l1_norm(g));
        norm_mean += norms.back();
    }
    norm_mean /= static_cast<double>(n);
    const Tensor& first = per_model_grads[0];
    Tensor fused = Tensor::zeros(first.b, first.c, first.h, first.w);
    for (int i = 0; i < n; ++i) {
        if (norms[i] == 0.0) continue;
        const double coef = (norm_mean / norms[i]) / static_cast<double>(n);
        for (size_t j = 0; j < fused.v.size(); ++j)
            fused.v[j] += coef * per_model_grads[i].v[j];
    }
    return fused;
}

GradientEstimate gradient_ensemble(const core::EnsembleHandle& handle, const Tensor& images,
                                   const core::AttributeSpec& attrs, const core::Disruptor& d) {
    return gradient_ensemble_impl(handle, images, attrs, d,
                                  all_clean_fakes(handle, images, attrs), nullptr);
}

core::Disruptor train_found(const core::EnsembleHandle& handle, const TrainingSet& data,
                            const core::AttackConfig& config, const TelemetryFn& telemetry) {
    config.validate();
    const int n_models = handle.size();
    const std::vector<double> weights = config.resolved_weights(n_models);
    const core::ImageShape shape = handle.input_shape();
    if (data.images.c != shape.c || data.images.h != shape.h || data.images.w != shape.w)
        throw ShapeError("train_found: images " + data.images.shape_str() +
                         " incompatible with ensemble input " + shape.str());
    const int n_images = data.images.b;
    if (n_images < 1 || n_images % config.batch_size != 0)
        throw ConfigError("train_found: " + std::to_string(n_images) +
                          " images not partitionable into batches of " +
                          std::to_string(config.batch_size));
    const int n_batches = n_images / config.batch_size;

    core::Disruptor d = init_disruptor(shape, config.epsilon, config.seed);

    // Common feature-resize target across the ensemble (largest spatial map).
    int target_h = 1, target_w = 1;
    for (int i = 0; i < n_models; ++i) {
        target_h = std::max(target_h, handle.adapter(i).feature_shape().h);
        target_w = std::max(target_w, handle.adapter(i).feature_shape().w);
    }

    // Clean branches never see delta: extract/generate once per batch.
    struct BatchCache {
        Tensor images;
        core::AttributeSpec attrs;
        std::vector<Tensor> clean_features;
        std::vector<Tensor> clean_fakes;
    };
    std::vector<BatchCache> batches(n_batches);
    for (int bi = 0; bi < n_batches; ++bi) {
        BatchCache& cache = batches[bi];
        const int begin = bi * config.batch_size;
        cache.images = slice_images(data.images, begin, config.batch_size);
        cache.attrs = slice_attributes(data, begin, config.batch_size);
        for (int i = 0; i < n_models; ++i) {
            ad::Var feat = handle.adapter(i).extract(ad::constant(cache.images), cache.attrs);
            cache.clean_fakes.push_back(handle.adapter(i).generate(feat, cache.attrs).value());
            cache.clean_features.push_back(feat.value());
        }
    }

    UpdaterState updater_state;
    for (int t = 0; t < config.iterations; ++t) {
        for (int bi = 0; bi < n_batches; ++bi) {
            const BatchCache& cache = batches[bi];
            std::vector<ad::Var> orig_features;
            orig_features.reserve(n_models);
            for (const Tensor& f : cache.clean_features)
                orig_features.push_back(ad::constant(f));

            for (int k = 0; k < config.feature_iterations; ++k) {
                ad::Var delta = ad::leaf(d.delta);
                ad::Var adv = core::apply_disruptor(ad::constant(cache.images), delta);
                std::vector<ad::Var> adv_features;
                adv_features.reserve(n_models);
                for (int i = 0; i < n_models; ++i)
                    adv_features.push_back(handle.adapter(i).extract(adv, cache.attrs));
                ad::Var adv_agg = featgrad::aggregate_features(adv_features, target_h, target_w);
                ad::Var orig_agg =
                    featgrad::aggregate_features(orig_features, target_h, target_w);
                ad::Var loss_mse = featgrad::feature_mse_loss(orig_agg, adv_agg);
                ad::Var loss = loss_mse;
                double kl_value = 0.0;
                if (config.lambda_kl != 0.0) {
                    ad::Var kl = featgrad::feature_kl_loss(adv_features, target_h, target_w);
                    kl_value = kl.scalar();
                    loss = ad::sub(loss, ad::scale(kl, config.lambda_kl));
                }
                if (!std::isfinite(loss.scalar()))
                    throw DivergenceError("train_found: non-finite feature loss at t=" +
                                          std::to_string(t) + " batch=" + std::to_string(bi) +
                                          " k=" + std::to_string(k));
                ad::backward(loss);
                const Tensor& grad = delta.grad();
                d = pgd_step(std::move(d), grad, config.alpha);
                if (telemetry) {
                    TelemetryRecord rec;
                    rec.stage = "feature";
                    rec.t = t;
                    rec.batch_index = bi;
                    rec.k = k;
                    rec.loss = loss.scalar();
                    rec.loss_mse = loss_mse.scalar();
                    rec.loss_kl = kl_value;
                    rec.grad_l1 = l1_norm(grad);
                    rec.grad_linf = linf_norm(grad);
                    rec.delta_linf = linf_norm(d.delta);
                    telemetry(rec);
                }
            }
            d.meta.stage = config.feature_iterations > 0 ? "feature" : d.meta.stage;

            if (!config.stage2) continue;
            std::vector<double> per_model_losses;
            GradientEstimate est;
            switch (config.ee_strategy) {
                case core::EnsembleStrategy::OutputEnsemble:
                    est = output_ensemble_impl(handle, cache.images, cache.attrs, d, weights,
                                               cache.clean_fakes, &per_model_losses);
                    break;
                case core::EnsembleStrategy::LossEnsemble:
                    est = loss_ensemble_impl(handle, cache.images, cache.attrs, d, weights,
                                             cache.clean_fakes, &per_model_losses);
                    break;
                case core::EnsembleStrategy::GradientEnsemble:
                    est = gradient_ensemble_impl(handle, cache.images, cache.attrs, d,
                                                 cache.clean_fakes, &per_model_losses);
                    break;
            }
            if (config.updater == core::UpdaterKind::Momentum)
                d = momentum_update(updater_state, std::move(d), est.grad, config.alpha,
                                    config.momentum);
            else
                d = pgd_step(std::move(d), est.grad, config.alpha);
            d.meta.stage = "end_to_end";
            if (telemetry) {
                TelemetryRecord rec;
                rec.stage = "end_to_end";
                rec.t = t;
                rec.batch_index = bi;
                rec.strategy = core::to_string(config.ee_strategy);
                double fused = 0.0;
                for (size_t i = 0; i < per_model_losses.size(); ++i) fused += per_model_losses[i];
                rec.loss = fused / static_cast<double>(n_models);
                rec.per_model_losses = std::move(per_model_losses);
                rec.grad_l1 = l1_norm(est.grad);
                rec.grad_linf = linf_norm(est.grad);
                rec.delta_linf = linf_norm(d.delta);
                telemetry(rec);
            }
        }
    }
    d.meta.seed = config.seed;
    return d;
}

}  // namespace found::attack
