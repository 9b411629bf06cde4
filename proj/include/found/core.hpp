#pragma once

#include <memory>
#include <string>
#include <vector>

#include "found/autodiff.hpp"
#include "found/tensor.hpp"

namespace found::core {

struct ImageShape {
    int c = 3, h = 0, w = 0;
    bool operator==(const ImageShape&) const = default;
    std::string str() const;
};

struct FeatureShape {
    int c = 0, h = 0, w = 0;
    std::string str() const;
};

/// Batch of normalized images, values in [-1, 1], 3 channels.
struct ImageBatch {
    Tensor data;

    static ImageBatch from(Tensor t);  // validates range and channel count
    int batch() const { return data.b; }
    ImageShape shape() const { return {data.c, data.h, data.w}; }
};

/// Feature extractor output of one model for one batch.
struct FeatureMap {
    Tensor data;
    std::string source_model;
};

/// How a model consumes its attribute conditioning.
enum class AttributeMode {
    AtInput,       // attribute maps concatenated to the image
    AtGenerator,   // attribute enters the decoder
    ReferenceImage,  // conditioning is a reference image
    None,
};

const char* to_string(AttributeMode m);

/// Conditioning for one batch. Adapters read only the parts their
/// AttributeMode requires.
struct AttributeSpec {
    Tensor labels;      // (B, A, 1, 1) binary labels
    Tensor references;  // (B, 3, H, W) reference images; may be empty
};

/// A generative model split into a feature extractor E and a generator G.
/// Both stages are differentiable with respect to their image inputs through
/// the ad:: graph, which is what the two attack stages rely on. Adapters are
/// immutable after construction and safe to share across threads.
class ModelAdapter {
public:
    virtual ~ModelAdapter() = default;

    virtual const std::string& name() const = 0;
    virtual AttributeMode attribute_mode() const = 0;
    virtual ImageShape input_shape() const = 0;
    virtual FeatureShape feature_shape() const = 0;

    virtual ad::Var extract(const ad::Var& images, const AttributeSpec& attr) const = 0;
    virtual ad::Var generate(const ad::Var& features, const AttributeSpec& attr) const = 0;

    /// Full deepfake pass. Identical to composing extract then generate with
    /// the same attribute routing.
    ad::Var full(const ad::Var& images, const AttributeSpec& attr) const {
        return generate(extract(images, attr), attr);
    }
};

using AdapterPtr = std::shared_ptr<const ModelAdapter>;

/// The universal perturbation under optimization. delta has batch dim 1 and
/// is broadcast over image batches. |delta| <= epsilon element-wise after
/// every update.
struct Disruptor {
    Tensor delta;  // (1, C, H, W)
    double epsilon = 0.0;
    struct Meta {
        uint64_t seed = 0;
        std::string config_digest;
        std::string stage;  // "init", "feature", "end_to_end"
    } meta;

    ImageShape shape() const { return {delta.c, delta.h, delta.w}; }
};

enum class EnsembleStrategy { GradientEnsemble, OutputEnsemble, LossEnsemble };
enum class UpdaterKind { PgdSign, Momentum };

const char* to_string(EnsembleStrategy s);
const char* to_string(UpdaterKind u);
EnsembleStrategy strategy_from_string(const std::string& s);
UpdaterKind updater_from_string(const std::string& s);

/// Hyperparameters of the two-stage attack.
struct AttackConfig {
    double epsilon = 0.05;
    double alpha = 0.001;
    double lambda_kl = 0.01;
    int iterations = 50;          // T, outer (end-to-end) iterations
    int feature_iterations = 5;   // K, feature-stage iterations per batch
    int batch_size = 8;
    std::vector<double> weights;  // empty -> uniform 1/N
    EnsembleStrategy ee_strategy = EnsembleStrategy::GradientEnsemble;
    UpdaterKind updater = UpdaterKind::PgdSign;
    double momentum = 1.0;
    uint64_t seed = 1;
    bool stage2 = true;  // disable for feature-ensemble-only runs

    /// Throws ConfigError on invariant violations; resolves uniform weights.
    std::vector<double> resolved_weights(int n_models) const;
    void validate() const;
};

/// Registered, shape-checked model ensemble with a stable model ordering
/// (registration order), used by every ensemble sum.
class EnsembleHandle {
public:
    int size() const { return static_cast<int>(adapters_.size()); }
    const ModelAdapter& adapter(int i) const { return *adapters_[i]; }
    const AdapterPtr& adapter_ptr(int i) const { return adapters_[i]; }
    ImageShape input_shape() const { return adapters_[0]->input_shape(); }

private:
    friend EnsembleHandle register_ensemble(std::vector<AdapterPtr> adapters);
    std::vector<AdapterPtr> adapters_;
};

/// Validates a nonempty adapter list with matching input shapes.
/// Throws ShapeError with a per-adapter shape report on mismatch.
EnsembleHandle register_ensemble(std::vector<AdapterPtr> adapters);

/// clamp(X + delta, -1, 1); the clamp participates in differentiation
/// (gradient passes inside [-1, 1] inclusive, zero outside).
ad::Var apply_disruptor(const ad::Var& images, const ad::Var& delta);
ImageBatch apply_disruptor(const ImageBatch& images, const Disruptor& d);

/// Contiguous batch-dimension slice [begin, begin+count).
Tensor slice_batch(const Tensor& t, int begin, int count);
AttributeSpec slice_spec(const AttributeSpec& spec, int begin, int count);

}  // namespace found::core
