#pragma once

#include <string>
#include <vector>

#include "found/core.hpp"

namespace found::io {

struct DatasetSpec {
    std::string kind = "synthetic";  // "synthetic" | "directory"
    int count = 16;
    uint64_t seed = 7;
    std::string directory;
};

struct EnsembleSpec {
    std::string kind = "zoo";  // "zoo" | "checkpoints"
    uint64_t seed = 11;
    bool include_held_out = true;
    std::string checkpoint_dir;
};

struct EvaluationSpec {
    int count = 64;
    uint64_t seed = 99;
    int batch_size = 8;
};

struct AblationSpec {
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
};

/// Full run description. Parsed from JSON with strict schema validation
/// (unknown keys are errors) so long runs fail before any compute.
struct RunConfig {
    core::AttackConfig attack;
    DatasetSpec dataset;
    EnsembleSpec ensemble;
    EvaluationSpec evaluation;
    AblationSpec ablation;
    std::string output_dir = "runs/found";

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
    std::string to_json_text() const;  // canonical (sorted keys)
    std::string digest() const;        // content hash of the canonical form
    void validate() const;
};

}  // namespace found::io
