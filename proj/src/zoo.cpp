#include "found/zoo.hpp"

#include <algorithm>
#include <utility>
#include <cmath>
#include <sstream>

#include "found/errors.hpp"
#include "found/rng.hpp"

namespace found::zoo {

namespace {

constexpr int kImageSize = 32;

constexpr std::array<double, 3> kWarm{0.62, 0.05, -0.55};
constexpr std::array<double, 3> kCool{-0.62, -0.05, 0.58};
constexpr std::array<double, 3> kSkin{0.38, 0.10, -0.12};
constexpr std::array<double, 3> kHairDark{-0.75, -0.68, -0.55};
constexpr std::array<double, 3> kHairLight{0.72, 0.55, 0.18};
constexpr std::array<double, 3> kStripe{-0.82, -0.82, -0.78};
constexpr std::array<double, 3> kEye{-0.90, -0.90, -0.85};
constexpr std::array<double, 3> kMouth{-0.50, -0.75, -0.70};

struct FaceGeometry {
    double hairline_row, eye_row, stripe_y0, stripe_y1;
    double eye_left, eye_right, mouth_row, mouth_x0, mouth_x1;
};

FaceGeometry geometry(const RenderParams& p) {
    FaceGeometry g;
    g.hairline_row = p.cy - 0.50 * p.ry;
    g.eye_row = p.cy - 0.12 * p.ry;
    g.stripe_y0 = g.eye_row - 1.0;
    g.stripe_y1 = g.eye_row + 2.0;
    g.eye_left = p.cx - 0.45 * p.rx;
    g.eye_right = p.cx + 0.45 * p.rx;
    g.mouth_row = p.cy + 0.55 * p.ry;
    g.mouth_x0 = p.cx - 0.30 * p.rx;
    g.mouth_x1 = p.cx + 0.30 * p.rx;
    return g;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Anti-aliased coverage terms; ~1 px transitions keep the targets learnable
// through a downsampling bottleneck.
double face_coverage(const RenderParams& p, double x, double y) {
    const double dx = (x - p.cx) / p.rx;
    const double dy = (y - p.cy) / p.ry;
    const double d = (std::sqrt(dx * dx + dy * dy) - 1.0) * std::min(p.rx, p.ry);
    return clamp01(0.5 - d);
}

double hair_coverage(const FaceGeometry& g, double y) {
    return clamp01(g.hairline_row - y + 0.5);
}

double stripe_coverage(const FaceGeometry& g, double y) {
    return clamp01(std::min(y - (g.stripe_y0 - 0.5), (g.stripe_y1 + 0.5) - y));
}

double eye_coverage(const FaceGeometry& g, double x, double y) {
    const double r = 1.3;
    const double dl = std::hypot(x - g.eye_left, y - g.eye_row);
    const double dr = std::hypot(x - g.eye_right, y - g.eye_row);
    return clamp01(r - std::min(dl, dr));
}

double mouth_coverage(const FaceGeometry& g, double x, double y) {
    const double v = std::min(y - (g.mouth_row - 0.5), (g.mouth_row + 1.5) - y);
    const double h = std::min(x - (g.mouth_x0 - 0.5), (g.mouth_x1 + 0.5) - x);
    return clamp01(std::min(v, h));
}

std::array<double, 3> mix(const std::array<double, 3>& a, const std::array<double, 3>& b,
                          double t) {
    return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])};
}

void base_palette(RenderParams& p) {
    p.bg_warm = kWarm;
    p.bg_cool = kCool;
    p.skin = kSkin;
    p.hair_dark = kHairDark;
    p.hair_light = kHairLight;
    p.stripe = kStripe;
}

std::array<double, 3> jittered(Rng& rng, const std::array<double, 3>& base, double amount) {
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i) out[i] = base[i] + rng.uniform(-amount, amount);
    return out;
}

}  // namespace

const char* to_string(Architecture a) {
    switch (a) {
        case Architecture::AttrInput: return "attr-input";
        case Architecture::AttrGenerator: return "attr-generator";
        case Architecture::AttentionMask: return "attention-mask";
        case Architecture::ReferenceStyle: return "reference-style";
        case Architecture::HeldOut: return "held-out";
    }
    return "?";
}

Architecture architecture_from_string(const std::string& s) {
    if (s == "attr-input") return Architecture::AttrInput;
    if (s == "attr-generator") return Architecture::AttrGenerator;
    if (s == "attention-mask") return Architecture::AttentionMask;
    if (s == "reference-style") return Architecture::ReferenceStyle;
    if (s == "held-out") return Architecture::HeldOut;
    throw ConfigError("unknown architecture '" + s + "'");
}

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    uint64_t z = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor render_face(const RenderParams& p, const Attrs& attrs) {
    Tensor img(1, 3, kImageSize, kImageSize);
    const FaceGeometry g = geometry(p);
    for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x) {
            const double f = face_coverage(p, x, y);
            std::array<double, 3> face = mix(p.skin, attrs[1] ? p.hair_light : p.hair_dark,
                                             hair_coverage(g, y));
            if (attrs[2]) face = mix(face, p.stripe, stripe_coverage(g, y));
            face = mix(face, kEye, eye_coverage(g, x, y));
            face = mix(face, kMouth, mouth_coverage(g, x, y));
            const std::array<double, 3> color =
                mix(attrs[0] ? p.bg_warm : p.bg_cool, face, f);
            for (int c = 0; c < 3; ++c)
                img.at(0, c, y, x) = std::min(1.0, std::max(-1.0, color[c]));
        }
    return img;
}

Tensor canonical_reference(const Attrs& attrs) {
    RenderParams p;
    base_palette(p);
    return render_face(p, attrs);
}

Tensor attribute_region(const RenderParams& p, int attr_index) {
    Tensor mask(1, 1, kImageSize, kImageSize);
    const FaceGeometry g = geometry(p);
    for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x) {
            const double f = face_coverage(p, x, y);
            bool in_region = false;
            switch (attr_index) {
                case 0: in_region = f < 1.0; break;
                case 1: in_region = f > 0.0 && hair_coverage(g, y) > 0.0; break;
                case 2: in_region = f > 0.0 && stripe_coverage(g, y) > 0.0; break;
                default: throw ConfigError("attribute_region: bad attribute index");
            }
            mask.at(0, 0, y, x) = in_region ? 1.0 : 0.0;
        }
    return mask;
}

SynthDataset gen_synth_dataset(int n, uint64_t seed) {
    if (n < 1) throw ConfigError("gen_synth_dataset: n must be >= 1");
    Rng rng(mix_seed(seed, 0xda7a));
    // Balanced bits per attribute, order shuffled.
    std::array<std::vector<int>, kAttrCount> bits;
    for (int k = 0; k < kAttrCount; ++k) {
        bits[k].assign(n, 0);
        const int ones = (n + 1) / 2;
        for (int i = 0; i < ones; ++i) bits[k][i] = 1;
        for (int i = n - 1; i > 0; --i) std::swap(bits[k][i], bits[k][rng.uniform_int(0, i)]);
    }
    SynthDataset ds;
    ds.seed = seed;
    ds.samples.reserve(n);
    for (int i = 0; i < n; ++i) {
        SynthFaceSample s;
        for (int k = 0; k < kAttrCount; ++k) s.attrs[k] = bits[k][i];
        RenderParams& p = s.params;
        p.cx = 14.0 + rng.uniform() * 4.0;
        p.cy = 15.0 + rng.uniform() * 3.0;
        p.rx = 8.0 + rng.uniform() * 2.0;
        p.ry = 9.5 + rng.uniform() * 2.5;
        p.bg_warm = jittered(rng, kWarm, 0.12);
        p.bg_cool = jittered(rng, kCool, 0.12);
        p.skin = jittered(rng, kSkin, 0.08);
        p.hair_dark = jittered(rng, kHairDark, 0.08);
        p.hair_light = jittered(rng, kHairLight, 0.08);
        p.stripe = jittered(rng, kStripe, 0.05);
        s.image = render_face(p, s.attrs);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// -- parameter binding ---------------------------------------------------------

ParamBind::ParamBind(const std::vector<const Tensor*>& params, bool trainable) {
    bound_.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        index_[params[i]] = i;
        bound_.push_back(trainable ? ad::leaf(*params[i]) : ad::constant(*params[i]));
    }
}

const ad::Var& ParamBind::operator[](const Tensor& t) const {
    auto it = index_.find(&t);
    if (it == index_.end()) throw ShapeError("ParamBind: unbound parameter");
    return bound_[it->second];
}

// -- adapter ---------------------------------------------------------------------

namespace {

ConvParam make_conv(Rng& rng, int cin, int cout, int k, int stride, int pad) {
    ConvParam c;
    c.w = Tensor(cout, cin, k, k);
    const double sigma = std::sqrt(1.0 / (cin * k * k));
    for (double& v : c.w.v) v = rng.normal(0.0, sigma);
    c.b = Tensor(1, cout, 1, 1);
    c.stride = stride;
    c.pad = pad;
    return c;
}

ad::Var apply_conv(const ConvParam& c, const ad::Var& x, const ParamBind& bind) {
    return ad::conv2d(x, bind[c.w], bind[c.b], c.stride, c.pad);
}

ad::Var lrelu(const ad::Var& x) { return ad::leaky_relu(x, 0.1); }

}  // namespace

ToyAdapter::ToyAdapter(ToyModelSpec spec, std::string name)
    : spec_(spec), name_(std::move(name)) {
    if (spec_.image_size % 4 != 0) throw ConfigError("ToyAdapter: image size must be 4-divisible");
    const int a = spec_.attr_count;
    Rng rng(mix_seed(spec_.train_seed, 1));
    switch (spec_.arch) {
        case Architecture::AttrInput:
            enc_.push_back(make_conv(rng, 3 + a, 14, 3, 2, 1));
            enc_.push_back(make_conv(rng, 14, 20, 3, 2, 1));
            dec_.push_back(make_conv(rng, 20, 16, 3, 1, 1));
            dec_.push_back(make_conv(rng, 16, 12, 3, 1, 1));
            dec_.push_back(make_conv(rng, 12, 3, 3, 1, 1));
            break;
        case Architecture::AttrGenerator:
            enc_.push_back(make_conv(rng, 3, 12, 3, 2, 1));
            enc_.push_back(make_conv(rng, 12, 16, 3, 2, 1));
            dec_.push_back(make_conv(rng, 16 + a, 16, 3, 1, 1));
            dec_.push_back(make_conv(rng, 16, 16, 3, 1, 1));
            dec_.push_back(make_conv(rng, 16, 12, 3, 1, 1));
            dec_.push_back(make_conv(rng, 12, 12, 3, 1, 1));
            dec_.push_back(make_conv(rng, 12, 10, 3, 1, 1));
            dec_.push_back(make_conv(rng, 10, 3, 3, 1, 1));
            break;
        case Architecture::AttentionMask:
            enc_.push_back(make_conv(rng, 3, 12, 3, 2, 1));
            enc_.push_back(make_conv(rng, 12, 12, 3, 1, 1));
            dec_.push_back(make_conv(rng, 12 + a, 14, 3, 1, 1));
            dec_.push_back(make_conv(rng, 14, 12, 3, 1, 1));
            dec_.push_back(make_conv(rng, 12, 3, 3, 1, 1));   // content head
            dec_.push_back(make_conv(rng, 12, 1, 3, 1, 1));   // mask head
            break;
        case Architecture::ReferenceStyle:
            enc_.push_back(make_conv(rng, 3, 12, 3, 2, 1));
            enc_.push_back(make_conv(rng, 12, 16, 3, 2, 1));
            dec_.push_back(make_conv(rng, 16, 16, 3, 1, 1));
            dec_.push_back(make_conv(rng, 16, 12, 3, 1, 1));
            dec_.push_back(make_conv(rng, 12, 3, 3, 1, 1));
            aux_.push_back(make_conv(rng, 3, 16, 5, 4, 2));   // one-layer style encoder
            break;
        case Architecture::HeldOut:
            enc_.push_back(make_conv(rng, 3, 12, 5, 2, 2));
            enc_.push_back(make_conv(rng, 12, 20, 3, 2, 1));
            dec_.push_back(make_conv(rng, 20, 16, 3, 1, 1));
            dec_.push_back(make_conv(rng, 16, 12, 3, 1, 1));
            dec_.push_back(make_conv(rng, 12, 3, 3, 1, 1));
            aux_.push_back(make_conv(rng, a, 16, 1, 1, 0));   // label-to-style MLP
            aux_.push_back(make_conv(rng, 16, 20, 1, 1, 0));
            break;
    }
}

core::AttributeMode ToyAdapter::attribute_mode() const {
    switch (spec_.arch) {
        case Architecture::AttrInput: return core::AttributeMode::AtInput;
        case Architecture::ReferenceStyle: return core::AttributeMode::ReferenceImage;
        default: return core::AttributeMode::AtGenerator;
    }
}

core::ImageShape ToyAdapter::input_shape() const {
    return {3, spec_.image_size, spec_.image_size};
}

core::FeatureShape ToyAdapter::feature_shape() const {
    const int s = spec_.image_size;
    switch (spec_.arch) {
        case Architecture::AttrInput: return {20, s / 4, s / 4};
        case Architecture::AttrGenerator: return {16, s / 4, s / 4};
        case Architecture::AttentionMask: return {24, s / 2, s / 2};
        case Architecture::ReferenceStyle: return {16, s / 4, s / 4};
        case Architecture::HeldOut: return {20, s / 4, s / 4};
    }
    return {};
}

std::vector<const Tensor*> ToyAdapter::parameters() const {
    std::vector<const Tensor*> out;
    for (const auto* group : {&enc_, &dec_, &aux_})
        for (const ConvParam& c : *group) {
            out.push_back(&c.w);
            out.push_back(&c.b);
        }
    return out;
}

std::vector<Tensor*> ToyAdapter::parameters() {
    std::vector<Tensor*> out;
    for (auto* group : {&enc_, &dec_, &aux_})
        for (ConvParam& c : *group) {
            out.push_back(&c.w);
            out.push_back(&c.b);
        }
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ToyAdapter::named_parameters() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    const char* prefix[3] = {"enc", "dec", "aux"};
    const std::vector<ConvParam>* groups[3] = {&enc_, &dec_, &aux_};
    for (int g = 0; g < 3; ++g)
        for (size_t i = 0; i < groups[g]->size(); ++i) {
            out.emplace_back(std::string(prefix[g]) + std::to_string(i) + ".w",
                             &(*groups[g])[i].w);
            out.emplace_back(std::string(prefix[g]) + std::to_string(i) + ".b",
                             &(*groups[g])[i].b);
        }
    return out;
}

ad::Var ToyAdapter::extract(const ad::Var& images, const core::AttributeSpec& attr) const {
    ParamBind bind(parameters(), false);
    return extract_bound(images, attr, bind);
}

ad::Var ToyAdapter::generate(const ad::Var& features, const core::AttributeSpec& attr) const {
    ParamBind bind(parameters(), false);
    return generate_bound(features, attr, bind);
}

ad::Var ToyAdapter::full_trainable(const ad::Var& images, const core::AttributeSpec& attr,
                                   ParamBind& bind) const {
    return generate_bound(extract_bound(images, attr, bind), attr, bind);
}

namespace {

ad::Var require_labels(const core::AttributeSpec& attr, const std::string& name) {
    if (attr.labels.empty())
        throw ShapeError("adapter '" + name + "': attribute labels required");
    return ad::constant(attr.labels);
}

}  // namespace

ad::Var ToyAdapter::extract_bound(const ad::Var& images, const core::AttributeSpec& attr,
                                  const ParamBind& bind) const {
    const int s = spec_.image_size;
    switch (spec_.arch) {
        case Architecture::AttrInput: {
            ad::Var labels = require_labels(attr, name_);
            ad::Var x = ad::concat_channels({images, ad::tile_spatial(labels, s, s)});
            ad::Var h = lrelu(apply_conv(enc_[0], x, bind));
            return lrelu(apply_conv(enc_[1], h, bind));
        }
        case Architecture::AttentionMask: {
            ad::Var h = lrelu(apply_conv(enc_[0], images, bind));
            h = lrelu(apply_conv(enc_[1], h, bind));
            // Input packed losslessly next to the learned features so the
            // generator's blend path stays a pure function of the features.
            return ad::concat_channels({h, ad::space_to_depth(images, 2)});
        }
        default: {
            ad::Var h = lrelu(apply_conv(enc_[0], images, bind));
            return lrelu(apply_conv(enc_[1], h, bind));
        }
    }
}

ad::Var ToyAdapter::generate_bound(const ad::Var& features, const core::AttributeSpec& attr,
                                   const ParamBind& bind) const {
    const int s = spec_.image_size;
    switch (spec_.arch) {
        case Architecture::AttrInput: {
            ad::Var h = lrelu(apply_conv(dec_[0], features, bind));
            h = lrelu(apply_conv(dec_[1], ad::upsample_nearest2(h), bind));
            return ad::tanh_op(apply_conv(dec_[2], ad::upsample_nearest2(h), bind));
        }
        case Architecture::AttrGenerator: {
            ad::Var labels = require_labels(attr, name_);
            ad::Var h = ad::concat_channels({features, ad::tile_spatial(labels, s / 4, s / 4)});
            h = ad::tanh_op(apply_conv(dec_[0], h, bind));
            h = ad::tanh_op(apply_conv(dec_[1], h, bind));
            h = ad::upsample_nearest2(h);
            h = ad::tanh_op(apply_conv(dec_[2], h, bind));
            h = ad::tanh_op(apply_conv(dec_[3], h, bind));
            h = ad::upsample_nearest2(h);
            h = ad::tanh_op(apply_conv(dec_[4], h, bind));
            return ad::tanh_op(apply_conv(dec_[5], h, bind));
        }
        case Architecture::AttentionMask: {
            const AttentionParts parts = attention_parts(features, attr, bind);
            ad::Var mask3 = ad::concat_channels({parts.mask, parts.mask, parts.mask});
            // base + m*(content - base): convex blend stays in [-1, 1].
            return ad::add(parts.base, ad::mul(mask3, ad::sub(parts.content, parts.base)));
        }
        case Architecture::ReferenceStyle: {
            if (attr.references.empty())
                throw ShapeError("adapter '" + name_ + "': reference images required");
            ad::Var ref = ad::constant(attr.references);
            ad::Var style = ad::global_avg_pool(ad::tanh_op(apply_conv(aux_[0], ref, bind)));
            ad::Var mixed = ad::add(features, ad::tile_spatial(style, s / 4, s / 4));
            ad::Var h = lrelu(apply_conv(dec_[0], mixed, bind));
            h = lrelu(apply_conv(dec_[1], ad::upsample_nearest2(h), bind));
            return ad::tanh_op(apply_conv(dec_[2], ad::upsample_nearest2(h), bind));
        }
        case Architecture::HeldOut: {
            ad::Var labels = require_labels(attr, name_);
            ad::Var style = apply_conv(aux_[1], lrelu(apply_conv(aux_[0], labels, bind)), bind);
            ad::Var tiled = ad::tile_spatial(style, s / 4, s / 4);
            ad::Var modulated = ad::add(features, ad::mul(features, tiled));
            ad::Var h = lrelu(apply_conv(dec_[0], modulated, bind));
            h = lrelu(apply_conv(dec_[1], ad::upsample_nearest2(h), bind));
            return ad::tanh_op(apply_conv(dec_[2], ad::upsample_nearest2(h), bind));
        }
    }
    throw ConfigError("generate: unknown architecture");
}

ToyAdapter::AttentionParts ToyAdapter::attention_parts(const ad::Var& features,
                                                       const core::AttributeSpec& attr,
                                                       const ParamBind& bind) const {
    const int s = spec_.image_size;
    ad::Var labels = require_labels(attr, name_);
    ad::Var learned = ad::slice_channels(features, 0, 12);
    AttentionParts parts;
    parts.base = ad::depth_to_space(ad::slice_channels(features, 12, 24), 2);
    ad::Var h = ad::concat_channels({learned, ad::tile_spatial(labels, s / 2, s / 2)});
    h = lrelu(apply_conv(dec_[0], h, bind));
    h = lrelu(apply_conv(dec_[1], h, bind));
    h = ad::upsample_nearest2(h);
    parts.content = ad::tanh_op(apply_conv(dec_[2], h, bind));
    parts.mask = ad::sigmoid(apply_conv(dec_[3], h, bind));
    return parts;
}

Tensor ToyAdapter::attention_mask(const Tensor& images, const core::AttributeSpec& attr) const {
    if (spec_.arch != Architecture::AttentionMask)
        throw ConfigError("attention_mask: adapter '" + name_ + "' has no attention mask");
    ParamBind bind(parameters(), false);
    ad::Var features = extract_bound(ad::constant(images), attr, bind);
    return attention_parts(features, attr, bind).mask.value();
}

// -- training -------------------------------------------------------------------

namespace {

struct Adam {
    explicit Adam(double lr_) : lr(lr_) {}
    double lr;
    double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    int t = 0;
    std::vector<Tensor> m, v;

    void step(std::vector<Tensor*>& params, const std::vector<ad::Var>& leaves) {
        if (m.empty()) {
            for (Tensor* p : params) {
                m.push_back(Tensor::zeros(p->b, p->c, p->h, p->w));
                v.push_back(Tensor::zeros(p->b, p->c, p->h, p->w));
            }
        }
        ++t;
        const double bc1 = 1.0 - std::pow(b1, t);
        const double bc2 = 1.0 - std::pow(b2, t);
        for (size_t i = 0; i < params.size(); ++i) {
            const Tensor& g = leaves[i].grad();
            if (g.empty()) continue;
            Tensor& p = *params[i];
            for (size_t j = 0; j < p.v.size(); ++j) {
                m[i].v[j] = b1 * m[i].v[j] + (1.0 - b1) * g.v[j];
                v[i].v[j] = b2 * v[i].v[j] + (1.0 - b2) * g.v[j] * g.v[j];
                const double mh = m[i].v[j] / bc1;
                const double vh = v[i].v[j] / bc2;
                p.v[j] -= lr * mh / (std::sqrt(vh) + eps);
            }
        }
    }
};

int step_budget(Architecture a) {
    switch (a) {
        case Architecture::AttentionMask: return 900;
        default: return 1600;
    }
}

double learn_rate(Architecture a) {
    return a == Architecture::AttrGenerator ? 0.004 : 0.006;
}

// Cosine decay to 10% of the peak rate.
double scheduled_lr(double base, int step, int total) {
    const double t = static_cast<double>(step) / static_cast<double>(total);
    return base * (0.1 + 0.45 * (1.0 + std::cos(3.14159265358979323846 * t)));
}

void copy_sample(Tensor& dst, int slot, const Tensor& src) {
    const size_t n = static_cast<size_t>(src.c) * src.h * src.w;
    std::copy_n(src.v.data(), n, dst.v.data() + slot * n);
}

}  // namespace

ToyAdapterPtr train_toy_model(const ToyModelSpec& spec, const SynthDataset& dataset) {
    if (dataset.samples.empty()) throw ConfigError("train_toy_model: empty dataset");
    if (spec.image_size != kImageSize)
        throw ConfigError("train_toy_model: synthetic faces are 32x32");
    auto adapter = std::make_shared<ToyAdapter>(spec, to_string(spec.arch));
    const bool needs_refs = spec.arch == Architecture::ReferenceStyle;
    const int n = dataset.size();
    const int bsz = 8;
    Rng rng(mix_seed(spec.train_seed, 2));
    Adam opt(learn_rate(spec.arch));
    std::vector<Tensor*> params = adapter->parameters();
    const int steps = spec.train_steps > 0 ? spec.train_steps : step_budget(spec.arch);

    for (int step = 0; step < steps; ++step) {
        Tensor xb(bsz, 3, kImageSize, kImageSize);
        Tensor yb(bsz, 3, kImageSize, kImageSize);
        Tensor labels(bsz, spec.attr_count, 1, 1);
        Tensor refs;
        if (needs_refs) refs = Tensor(bsz, 3, kImageSize, kImageSize);
        for (int j = 0; j < bsz; ++j) {
            const SynthFaceSample& s = dataset.samples[(step * bsz + j) % n];
            Attrs target = s.attrs;
            if (!rng.bernoulli(0.5))
                for (int k = 0; k < kAttrCount; ++k) target[k] = rng.bernoulli(0.5) ? 1 : 0;
            copy_sample(xb, j, s.image);
            copy_sample(yb, j, render_face(s.params, target));
            for (int k = 0; k < kAttrCount; ++k) labels.at(j, k, 0, 0) = target[k];
            if (needs_refs) copy_sample(refs, j, canonical_reference(target));
        }
        core::AttributeSpec attrs{labels, refs};
        opt.lr = scheduled_lr(learn_rate(spec.arch), step, steps);
        ParamBind bind(std::as_const(*adapter).parameters(), true);
        ad::Var out = adapter->full_trainable(ad::constant(xb), attrs, bind);
        ad::Var loss = ad::mse(out, ad::constant(yb));
        if (!std::isfinite(loss.scalar()))
            throw DivergenceError("train_toy_model(" + std::string(to_string(spec.arch)) +
                                  "): non-finite loss at step " + std::to_string(step));
        ad::backward(loss);
        opt.step(params, bind.bound());
    }

    // Convergence gate: reconstruction with original attributes on fresh samples.
    SynthDataset val = gen_synth_dataset(16, mix_seed(dataset.seed, 0x7a11));
    Tensor vx(val.size(), 3, kImageSize, kImageSize);
    Tensor vl(val.size(), spec.attr_count, 1, 1);
    Tensor vr;
    if (needs_refs) vr = Tensor(val.size(), 3, kImageSize, kImageSize);
    for (int i = 0; i < val.size(); ++i) {
        copy_sample(vx, i, val.samples[i].image);
        for (int k = 0; k < kAttrCount; ++k) vl.at(i, k, 0, 0) = val.samples[i].attrs[k];
        if (needs_refs) copy_sample(vr, i, canonical_reference(val.samples[i].attrs));
    }
    core::AttributeSpec vattrs{vl, vr};
    Tensor recon = adapter->full(ad::constant(vx), vattrs).value();
    double mse = 0.0;
    for (size_t i = 0; i < recon.v.size(); ++i) {
        const double d = recon.v[i] - vx.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(recon.v.size());
    if (!(mse < 0.01)) {
        std::ostringstream os;
        os << "train_toy_model(" << to_string(spec.arch)
           << "): did not converge, held-out reconstruction MSE = " << mse;
        throw ConfigError(os.str());
    }
    return adapter;
}

BenchmarkEnsemble build_benchmark_ensemble(uint64_t seed) {
    SynthDataset data = gen_synth_dataset(64, mix_seed(seed, 3));
    const Architecture in_ensemble[4] = {Architecture::AttrInput, Architecture::AttrGenerator,
                                         Architecture::AttentionMask,
                                         Architecture::ReferenceStyle};
    BenchmarkEnsemble out;
    for (int i = 0; i < 4; ++i) {
        ToyModelSpec spec;
        spec.arch = in_ensemble[i];
        spec.train_seed = mix_seed(seed, 10 + i);
        out.ensemble.push_back(train_toy_model(spec, data));
    }
    ToyModelSpec held;
    held.arch = Architecture::HeldOut;
    held.train_seed = mix_seed(seed, 14);
    out.held_out = train_toy_model(held, data);
    return out;
}

attack::TrainingSet attack_training_set(const SynthDataset& dataset) {
    const int n = dataset.size();
    attack::TrainingSet ts;
    ts.images = Tensor(n, 3, kImageSize, kImageSize);
    ts.labels = Tensor(n, kAttrCount, 1, 1);
    ts.references = Tensor(n, 3, kImageSize, kImageSize);
    for (int i = 0; i < n; ++i) {
        const SynthFaceSample& s = dataset.samples[i];
        copy_sample(ts.images, i, s.image);
        for (int k = 0; k < kAttrCount; ++k) ts.labels.at(i, k, 0, 0) = s.attrs[k];
        copy_sample(ts.references, i, canonical_reference(s.attrs));
    }
    return ts;
}

core::AttributeSpec flipped_attribute_spec(const SynthDataset& dataset, int attr_index) {
    if (attr_index < 0 || attr_index >= kAttrCount)
        throw ConfigError("flipped_attribute_spec: bad attribute index");
    const int n = dataset.size();
    core::AttributeSpec spec;
    spec.labels = Tensor(n, kAttrCount, 1, 1);
    spec.references = Tensor(n, 3, kImageSize, kImageSize);
    Tensor tmp;
    for (int i = 0; i < n; ++i) {
        Attrs a = dataset.samples[i].attrs;
        a[attr_index] = 1 - a[attr_index];
        for (int k = 0; k < kAttrCount; ++k) spec.labels.at(i, k, 0, 0) = a[k];
        tmp = canonical_reference(a);
        const size_t sz = tmp.v.size();
        std::copy_n(tmp.v.data(), sz, spec.references.v.data() + i * sz);
    }
    return spec;
}

}  // namespace found::zoo
