#pragma once

#include <string>
#include <vector>

#include "r2upp/graph.hpp"
#include "r2upp/trainer.hpp"

namespace r2upp {

// Flat run configuration: architecture + trainer + data paths + patch
// settings. Every field has a default except the dataset paths. Unknown
// JSON keys are rejected.
struct RunConfig {
    ArchitectureConfig arch;
    TrainConfig trainer;
    std::string train_manifest;
    std::string val_manifest;
    std::string test_manifest;
    int patch_size = 64;
    int patch_stride = 32;
    double threshold = 0.5;
    std::string out_dir = "runs/out";

    std::string to_json() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Applies a `key=value` override; a dotted prefix (e.g. "trainer.seed")
// is accepted and stripped before lookup.
void apply_override(RunConfig& config, const std::string& assignment);

}  // namespace r2upp
