#pragma once

#include <array>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "found/attack.hpp"
#include "found/core.hpp"
#include "found/tensor.hpp"

namespace found::zoo {

inline constexpr int kAttrCount = 3;
using Attrs = std::array<int, kAttrCount>;  // background-hue, hair-band, glasses-stripe

/// Miniature stand-ins for the heterogeneous attribute-editing model family.
/// They differ in where the attribute conditioning enters, feature geometry,
/// and decoder depth; AttrGenerator is deliberately hard to attack (deep
/// all-tanh decoder, small input gradients).
enum class Architecture {
    AttrInput,      // attribute maps concatenated to the input image, 4x downsample
    AttrGenerator,  // attribute enters the decoder's first layer (the hard model)
    AttentionMask,  // decoder blends content with the input through a [0,1] mask
    ReferenceStyle,  // conditioning extracted from a reference image, additive mixing
    HeldOut,        // transfer-test architecture, excluded from the training ensemble
};

const char* to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct ToyModelSpec {
    Architecture arch = Architecture::AttrInput;
    int image_size = 32;  // divisible by 4
    int attr_count = kAttrCount;
    uint64_t train_seed = 1;
    int train_steps = 0;  // 0 -> architecture default budget
};

// -- synthetic faces ----------------------------------------------------------

/// Geometry and palette of one synthetic face; independent of the attribute
/// bits so any attribute value of the same face can be re-rendered.
struct RenderParams {
    double cx = 16.0, cy = 16.5;
    double rx = 9.0, ry = 10.75;
    std::array<double, 3> bg_warm{}, bg_cool{};
    std::array<double, 3> skin{}, hair_dark{}, hair_light{}, stripe{};
};

struct SynthFaceSample {
    Tensor image;  // (1, 3, 32, 32), values in [-1, 1]
    Attrs attrs{};
    RenderParams params;
};

struct SynthDataset {
    std::vector<SynthFaceSample> samples;
    uint64_t seed = 0;
    int size() const { return static_cast<int>(samples.size()); }
};

/// Pure function of (params, attrs).
Tensor render_face(const RenderParams& params, const Attrs& attrs);

/// Fixed-geometry, zero-jitter face carrying the given attributes; used as
/// the conditioning image for reference-style adapters.
Tensor canonical_reference(const Attrs& attrs);

/// Binary (1,1,H,W) map of the pixels attribute k is allowed to touch.
Tensor attribute_region(const RenderParams& params, int attr_index);

/// Deterministic dataset; per-attribute balance is exact-ceil(n/2),
/// i.e. within 1/(2n) of uniform.
SynthDataset gen_synth_dataset(int n, uint64_t seed);

// -- adapters -----------------------------------------------------------------

struct ConvParam {
    Tensor w;  // (Cout, Cin, K, K)
    Tensor b;  // (1, Cout, 1, 1)
    int stride = 1;
    int pad = 1;
};

/// Binds adapter parameters into a graph, either as constants (attack /
/// inference) or as leaves (training, gradients flow to the parameters).
class ParamBind {
public:
    ParamBind(const std::vector<const Tensor*>& params, bool trainable);
    const ad::Var& operator[](const Tensor& t) const;
    const std::vector<ad::Var>& bound() const { return bound_; }

private:
    std::unordered_map<const Tensor*, size_t> index_;
    std::vector<ad::Var> bound_;
};

class ToyAdapter final : public core::ModelAdapter {
public:
    ToyAdapter(ToyModelSpec spec, std::string name);

    const std::string& name() const override { return name_; }
    core::AttributeMode attribute_mode() const override;
    core::ImageShape input_shape() const override;
    core::FeatureShape feature_shape() const override;
    ad::Var extract(const ad::Var& images, const core::AttributeSpec& attr) const override;
    ad::Var generate(const ad::Var& features, const core::AttributeSpec& attr) const override;

    const ToyModelSpec& spec() const { return spec_; }
    std::vector<const Tensor*> parameters() const;
    std::vector<Tensor*> parameters();
    std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;

    /// Full pass with trainable parameter leaves; leaves() in parameters() order.
    ad::Var full_trainable(const ad::Var& images, const core::AttributeSpec& attr,
                           ParamBind& bind) const;

    ad::Var extract_bound(const ad::Var& images, const core::AttributeSpec& attr,
                          const ParamBind& bind) const;
    ad::Var generate_bound(const ad::Var& features, const core::AttributeSpec& attr,
                           const ParamBind& bind) const;

    /// AttentionMask only: the decoder's blend mask for the given input.
    Tensor attention_mask(const Tensor& images, const core::AttributeSpec& attr) const;

private:
    struct AttentionParts {
        ad::Var content, mask, base;
    };
    AttentionParts attention_parts(const ad::Var& features, const core::AttributeSpec& attr,
                                   const ParamBind& bind) const;

    ToyModelSpec spec_;
    std::string name_;
    std::vector<ConvParam> enc_, dec_, aux_;
};

using ToyAdapterPtr = std::shared_ptr<ToyAdapter>;

/// Trains one adapter by supervised attribute editing against re-rendered
/// targets. Throws ConfigError when held-out reconstruction MSE fails the
/// < 0.01 convergence bound after the step budget.
ToyAdapterPtr train_toy_model(const ToyModelSpec& spec, const SynthDataset& dataset);

struct BenchmarkEnsemble {
    std::vector<ToyAdapterPtr> ensemble;  // AttrInput, AttrGenerator, AttentionMask, ReferenceStyle
    ToyAdapterPtr held_out;
};

/// The four in-ensemble adapters plus the held-out one, all trained on the
/// same synthetic dataset derived from `seed`.
BenchmarkEnsemble build_benchmark_ensemble(uint64_t seed);

/// Images + original-attribute routing for the attack driver.
attack::TrainingSet attack_training_set(const SynthDataset& dataset);

/// Labels/references for one target-attribute flip over a whole dataset.
core::AttributeSpec flipped_attribute_spec(const SynthDataset& dataset, int attr_index);

uint64_t mix_seed(uint64_t seed, uint64_t salt);

}  // namespace found::zoo
