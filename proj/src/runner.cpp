#include "found/runner.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "found/attack.hpp"
#include "found/container.hpp"
#include "found/errors.hpp"
#include "found/fsutil.hpp"
#include "found/image_io.hpp"

namespace found::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kEnsembleArchs[4] = {"attr-input", "attr-generator", "attention-mask",
                                 "reference-style"};

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

json telemetry_to_json(const attack::TelemetryRecord& rec) {
    json j;
    j["stage"] = rec.stage;
    j["t"] = rec.t;
    j["batch"] = rec.batch_index;
    if (rec.stage == "feature") {
        j["k"] = rec.k;
        j["loss_mse"] = rec.loss_mse;
        j["loss_kl"] = rec.loss_kl;
    } else {
        j["strategy"] = rec.strategy;
        j["per_model_losses"] = rec.per_model_losses;
    }
    j["loss"] = rec.loss;
    j["grad_l1"] = rec.grad_l1;
    j["grad_linf"] = rec.grad_linf;
    j["delta_linf"] = rec.delta_linf;
    return j;
}

json cell_to_json(const eval::MetricCell& c, const std::string& kind) {
    json j;
    j["record"] = kind;
    j["model"] = c.model;
    j["attribute"] = c.attribute;
    j["transfer"] = c.transfer;
    j["cases"] = c.cases;
    j["empty_masks"] = c.empty_masks;
    j["l2_mask"] = c.l2_mask_mean;
    j["sr_mask"] = c.sr;
    j["psnr"] = c.psnr_mean;
    j["ssim"] = c.ssim_mean;
    return j;
}

}  // namespace

Ensemble build_ensemble(const io::EnsembleSpec& spec) {
    Ensemble out;
    std::vector<core::AdapterPtr> adapters;
    if (spec.kind == "zoo") {
        zoo::BenchmarkEnsemble bench = zoo::build_benchmark_ensemble(spec.seed);
        for (const auto& a : bench.ensemble) adapters.push_back(a);
        if (spec.include_held_out) out.held_out = bench.held_out;
    } else {
        for (const char* arch : kEnsembleArchs)
            adapters.push_back(
                io::load_checkpoint(join(spec.checkpoint_dir, std::string(arch) + ".fndd")));
        if (spec.include_held_out) {
            const std::string path = join(spec.checkpoint_dir, "held-out.fndd");
            if (!fs::exists(path))
                throw IoError("ensemble: held-out checkpoint missing at '" + path + "'");
            out.held_out = io::load_checkpoint(path);
        }
    }
    out.handle = core::register_ensemble(std::move(adapters));
    return out;
}

attack::TrainingSet build_training_set(const io::DatasetSpec& spec) {
    if (spec.kind == "synthetic")
        return zoo::attack_training_set(zoo::gen_synth_dataset(spec.count, spec.seed));
    // Directory datasets carry no attribute labels; all-zero original
    // attributes are used for routing.
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(spec.directory))
        if (entry.is_regular_file() && imageio::is_supported_extension(entry.path().string()))
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw IoError("dataset: no .ppm images in '" + spec.directory + "'");
    attack::TrainingSet ts;
    for (size_t i = 0; i < files.size(); ++i) {
        const Tensor img = imageio::read_ppm(files[i]);
        if (ts.images.empty()) {
            ts.images = Tensor(static_cast<int>(files.size()), 3, img.h, img.w);
            ts.labels = Tensor(static_cast<int>(files.size()), zoo::kAttrCount, 1, 1);
            ts.references = Tensor(static_cast<int>(files.size()), 3, img.h, img.w);
        }
        if (img.h != ts.images.h || img.w != ts.images.w)
            throw ShapeError("dataset: image size mismatch at '" + files[i] + "'");
        const size_t n = img.v.size();
        std::copy_n(img.v.data(), n, ts.images.v.data() + i * n);
        const Tensor ref = zoo::canonical_reference({0, 0, 0});
        std::copy_n(ref.v.data(), n, ts.references.v.data() + i * n);
    }
    return ts;
}

EvalData build_eval_data(const io::EvaluationSpec& spec) {
    EvalData out;
    const zoo::SynthDataset ds = zoo::gen_synth_dataset(spec.count, spec.seed);
    out.images = zoo::attack_training_set(ds).images;
    const char* names[zoo::kAttrCount] = {"background", "hair", "glasses"};
    for (int k = 0; k < zoo::kAttrCount; ++k)
        out.cases.push_back({names[k], zoo::flipped_attribute_spec(ds, k)});
    return out;
}

std::string resolve_output_dir(const std::string& configured) {
    const char* root = std::getenv("FOUND_OUTPUT_ROOT");
    if (root && root[0] != '\0' && fs::path(configured).is_relative())
        return (fs::path(root) / configured).string();
    return configured;
}

TrainArtifacts run_train(const io::RunConfig& cfg) {
    cfg.validate();
    const std::string out_dir = resolve_output_dir(cfg.output_dir);
    const Ensemble ens = build_ensemble(cfg.ensemble);
    const attack::TrainingSet data = build_training_set(cfg.dataset);

    std::ostringstream telemetry;
    attack::TelemetryFn sink = [&telemetry](const attack::TelemetryRecord& rec) {
        telemetry << telemetry_to_json(rec).dump() << "\n";
    };
    core::Disruptor d = attack::train_found(ens.handle, data, cfg.attack, sink);
    d.meta.config_digest = cfg.digest();

    TrainArtifacts art;
    art.disruptor_path = join(out_dir, "disruptor.fndd");
    art.telemetry_path = join(out_dir, "telemetry.jsonl");
    art.config_path = join(out_dir, "config.json");
    io::save_disruptor(d, art.disruptor_path);
    fsutil::atomic_write(art.telemetry_path, telemetry.str());
    fsutil::atomic_write(art.config_path, cfg.to_json_text() + "\n");
    return art;
}

EvaluateArtifacts run_evaluate(const io::RunConfig& cfg, const std::string& disruptor_path) {
    cfg.validate();
    const std::string out_dir = resolve_output_dir(cfg.output_dir);
    const core::Disruptor d = io::load_disruptor(disruptor_path);
    const Ensemble ens = build_ensemble(cfg.ensemble);
    const core::ImageShape shape = ens.handle.input_shape();
    if (d.delta.c != shape.c || d.delta.h != shape.h || d.delta.w != shape.w)
        throw ShapeError("evaluate: disruptor " + d.delta.shape_str() +
                         " incompatible with ensemble input " + shape.str());
    const EvalData data = build_eval_data(cfg.evaluation);

    eval::EvaluationReport report = eval::evaluate(ens.handle, ens.held_out, data.images,
                                                   data.cases, d, cfg.evaluation.batch_size);
    report.config_digest = cfg.digest();
    report.disruptor_digest = io::file_digest(disruptor_path);

    EvaluateArtifacts art;
    art.report_text_path = join(out_dir, "report.txt");
    art.report_json_path = join(out_dir, "report.jsonl");
    fsutil::atomic_write(art.report_text_path, eval::render_report_text(report));
    std::ostringstream records;
    for (const eval::MetricCell& c : report.cells)
        records << cell_to_json(c, "cell").dump() << "\n";
    for (const std::string& name : report.model_names(false))
        records << cell_to_json(report.model_average(name), "model_avg").dump() << "\n";
    for (const std::string& name : report.model_names(true))
        records << cell_to_json(report.model_average(name), "model_avg").dump() << "\n";
    records << cell_to_json(report.overall_average(), "overall_avg").dump() << "\n";
    fsutil::atomic_write(art.report_json_path, records.str());
    return art;
}

ApplySummary run_apply(const std::string& disruptor_path, const std::string& image_dir,
                       const std::string& out_dir, const std::string& output_format) {
    if (output_format != "ppm") {
        if (imageio::is_lossy_extension("x." + output_format))
            throw ConfigError("apply: refusing lossy output format '" + output_format +
                              "' (it would destroy the perturbation); use ppm");
        throw ConfigError("apply: unsupported output format '" + output_format + "'; use ppm");
    }
    const core::Disruptor d = io::load_disruptor(disruptor_path);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(image_dir))
        if (entry.is_regular_file()) files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    ApplySummary summary;
    for (const std::string& file : files) {
        if (!imageio::is_supported_extension(file)) {
            ++summary.skipped;
            summary.notes.push_back("skipped (unsupported format): " + file);
            continue;
        }
        const Tensor img = imageio::read_ppm(file);
        if (img.h != d.delta.h || img.w != d.delta.w) {
            ++summary.skipped;
            summary.notes.push_back("skipped (size " + std::to_string(img.w) + "x" +
                                    std::to_string(img.h) + " vs disruptor " +
                                    std::to_string(d.delta.w) + "x" +
                                    std::to_string(d.delta.h) + "): " + file);
            continue;
        }
        const core::ImageBatch protected_img =
            core::apply_disruptor(core::ImageBatch{img}, d);
        const std::string out_path = join(out_dir, fs::path(file).filename().string());
        imageio::write_ppm(out_path, protected_img.data);
        ++summary.written;
    }
    return summary;
}

AblateArtifacts run_ablate(const io::RunConfig& cfg) {
    cfg.validate();
    const std::string out_dir = resolve_output_dir(cfg.output_dir);
    const Ensemble ens = build_ensemble(cfg.ensemble);
    const attack::TrainingSet data = build_training_set(cfg.dataset);
    const EvalData eval_data = build_eval_data(cfg.evaluation);

    AblateArtifacts art;
    art.result = ablate::run(ens.handle, data, eval_data.images, eval_data.cases, cfg.attack,
                             cfg.ablation.seeds, cfg.evaluation.batch_size);
    art.table_path = join(out_dir, "ablation.txt");
    art.json_path = join(out_dir, "ablation.jsonl");
    fsutil::atomic_write(art.table_path, ablate::render_text(art.result));
    std::ostringstream records;
    for (const ablate::SeedResult& s : art.result.seeds)
        for (size_t row = 0; row < art.result.row_labels.size(); ++row)
            for (size_t m = 0; m < art.result.model_names.size(); ++m) {
                json j;
                j["seed"] = s.seed;
                j["method"] = art.result.row_labels[row];
                j["model"] = art.result.model_names[m];
                j["sr_mask"] = s.sr[row][m];
                j["l2_mask"] = s.l2[row][m];
                j["config_digest"] = cfg.digest();
                records << j.dump() << "\n";
            }
    fsutil::atomic_write(art.json_path, records.str());
    return art;
}

std::vector<std::string> run_zoo_build(const io::RunConfig& cfg, const std::string& out_dir) {
    const zoo::BenchmarkEnsemble bench = zoo::build_benchmark_ensemble(cfg.ensemble.seed);
    std::vector<std::string> paths;
    for (const auto& adapter : bench.ensemble) {
        const std::string path = join(out_dir, adapter->name() + ".fndd");
        io::save_checkpoint(*adapter, path);
        paths.push_back(path);
    }
    const std::string held_path = join(out_dir, "held-out.fndd");
    io::save_checkpoint(*bench.held_out, held_path);
    paths.push_back(held_path);
    return paths;
}

}  // namespace found::runner
