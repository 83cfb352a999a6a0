#pragma once

#include <filesystem>
#include <vector>

#include "agf/degradation.hpp"

namespace agf {

/// Benchmark geometry: square maps of each size, each window side.
struct BenchConfig {
    std::vector<std::size_t> sizes = {8, 16, 32};
    std::vector<std::size_t> windows = {4, 8};
};

/// Everything a CLI run needs, loaded from a JSON config file. Geometry
/// constraints are validated at load time.
struct RunConfig {
    PipelineConfig pipeline;
    SceneSpec scene;            // H/W/C mirror the pipeline geometry
    CorruptionSpec corruption;
    std::size_t train_steps = 400;
    std::size_t holdout_scenes = 8;
    OptimConfig optim;
    std::uint64_t init_seed = 1;
    std::uint64_t stream_seed = 42;
    BenchConfig bench;
    std::string out_dir = "out";

    AblationRunConfig ablation() const;
    void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

/// Built-in defaults (the config `agfuse gen --default-config` writes).
RunConfig default_run_config();

}  // namespace agf
