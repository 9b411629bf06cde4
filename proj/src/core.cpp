#include "found/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "found/errors.hpp"

namespace found::core {

std::string ImageShape::str() const {
    std::ostringstream os;
    os << c << "x" << h << "x" << w;
    return os.str();
}

std::string FeatureShape::str() const {
    std::ostringstream os;
    os << c << "x" << h << "x" << w;
    return os.str();
}

ImageBatch ImageBatch::from(Tensor t) {
    if (t.b < 1) throw ShapeError("ImageBatch: batch must be >= 1");
    if (t.c != 3) throw ShapeError("ImageBatch: expected 3 channels, got " + t.shape_str());
    for (double v : t.v)
        if (!(v >= -1.0 && v <= 1.0))
            throw ShapeError("ImageBatch: value outside [-1, 1]");
    return ImageBatch{std::move(t)};
}

const char* to_string(AttributeMode m) {
    switch (m) {
        case AttributeMode::AtInput: return "attribute-at-input";
        case AttributeMode::AtGenerator: return "attribute-at-generator";
        case AttributeMode::ReferenceImage: return "reference-image";
        case AttributeMode::None: return "none";
    }
    return "?";
}

const char* to_string(EnsembleStrategy s) {
    switch (s) {
        case EnsembleStrategy::GradientEnsemble: return "GE";
        case EnsembleStrategy::OutputEnsemble: return "OE";
        case EnsembleStrategy::LossEnsemble: return "LE";
    }
    return "?";
}

const char* to_string(UpdaterKind u) {
    switch (u) {
        case UpdaterKind::PgdSign: return "pgd-sign";
        case UpdaterKind::Momentum: return "momentum";
    }
    return "?";
}

EnsembleStrategy strategy_from_string(const std::string& s) {
    if (s == "GE") return EnsembleStrategy::GradientEnsemble;
    if (s == "OE") return EnsembleStrategy::OutputEnsemble;
    if (s == "LE") return EnsembleStrategy::LossEnsemble;
    throw ConfigError("unknown ensemble strategy '" + s + "' (expected GE, OE or LE)");
}

UpdaterKind updater_from_string(const std::string& s) {
    if (s == "pgd-sign") return UpdaterKind::PgdSign;
    if (s == "momentum") return UpdaterKind::Momentum;
    throw ConfigError("unknown updater '" + s + "' (expected pgd-sign or momentum)");
}

std::vector<double> AttackConfig::resolved_weights(int n_models) const {
    if (weights.empty())
        return std::vector<double>(n_models, 1.0 / static_cast<double>(n_models));
    if (static_cast<int>(weights.size()) != n_models)
        throw ConfigError("weights: expected " + std::to_string(n_models) + " entries, got " +
                          std::to_string(weights.size()));
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ConfigError("weights: negative entry");
        sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("weights: must sum to 1");
    return weights;
}

void AttackConfig::validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    if (iterations < 0) throw ConfigError("iterations (T) must be >= 0");
    if (feature_iterations < 0) throw ConfigError("feature_iterations (K) must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (momentum < 0.0) throw ConfigError("momentum must be >= 0");
}

EnsembleHandle register_ensemble(std::vector<AdapterPtr> adapters) {
    if (adapters.empty()) throw ShapeError("register_ensemble: empty adapter list");
    const ImageShape ref = adapters[0]->input_shape();
    bool ok = true;
    std::ostringstream report;
    for (const auto& a : adapters) {
        const ImageShape s = a->input_shape();
        report << "  " << a->name() << ": " << s.str() << "\n";
        if (!(s == ref)) ok = false;
    }
    if (!ok)
        throw ShapeError("register_ensemble: adapters disagree on input shape:\n" + report.str());
    EnsembleHandle h;
    h.adapters_ = std::move(adapters);
    return h;
}

ad::Var apply_disruptor(const ad::Var& images, const ad::Var& delta) {
    return ad::clamp(ad::add_broadcast_batch(images, delta), -1.0, 1.0);
}

Tensor slice_batch(const Tensor& t, int begin, int count) {
    if (begin < 0 || count < 1 || begin + count > t.b)
        throw ShapeError("slice_batch: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + t.shape_str());
    Tensor out(count, t.c, t.h, t.w);
    const size_t sample = static_cast<size_t>(t.c) * t.h * t.w;
    std::copy_n(t.v.data() + begin * sample, count * sample, out.v.data());
    return out;
}

AttributeSpec slice_spec(const AttributeSpec& spec, int begin, int count) {
    AttributeSpec out;
    if (!spec.labels.empty()) out.labels = slice_batch(spec.labels, begin, count);
    if (!spec.references.empty()) out.references = slice_batch(spec.references, begin, count);
    return out;
}

ImageBatch apply_disruptor(const ImageBatch& images, const Disruptor& d) {
    const Tensor& x = images.data;
    const Tensor& dd = d.delta;
    if (dd.c != x.c || dd.h != x.h || dd.w != x.w)
        throw ShapeError("apply_disruptor: image " + x.shape_str() + " vs delta " +
                         dd.shape_str());
    Tensor out = x;
    const size_t plane = dd.v.size();
    for (int bi = 0; bi < x.b; ++bi)
        for (size_t i = 0; i < plane; ++i) {
            double v = out.v[bi * plane + i] + dd.v[i];
            out.v[bi * plane + i] = std::min(1.0, std::max(-1.0, v));
        }
    return ImageBatch{std::move(out)};
}

}  // namespace found::core
