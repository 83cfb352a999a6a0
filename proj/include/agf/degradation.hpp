#pragma once

#include <optional>
#include <string>
#include <vector>

#include "agf/aggregation.hpp"

namespace agf {

/// Synthetic paired-modality scene: a clean target of seeded Gaussian blobs
/// plus per-modality observation noise. The seed fully determines the scene.
struct SceneSpec {
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t channels = 16;
    std::size_t num_blobs = 4;
    std::uint64_t seed = 1;
    double amp_min = 0.5;  // blob amplitude range
    double amp_max = 1.5;
    double noise_sigma = 0.1;  // background observation noise
};

struct Scene {
    BevMap cam;
    BevMap lidar;
    BevMap target;
};

/// target = sum of seeded Gaussian blobs; cam/lidar = target + independent
/// seeded noise (distinct sub-seeds). Deterministic given spec.seed.
Scene gen_scene(const SceneSpec& spec);

/// Axis-aligned pixel rectangle [row0, row0+rows) x [col0, col0+cols).
struct RegionRect {
    std::size_t row0 = 0;
    std::size_t col0 = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    bool contains(std::size_t r, std::size_t c) const {
        return r >= row0 && r < row0 + rows && c >= col0 && c < col0 + cols;
    }
    bool empty() const { return rows == 0 || cols == 0; }
};

enum class CorruptionKind { dropout, gaussian_noise, blur };

/// One corruption applied to one modality inside a rectangular region.
struct CorruptionSpec {
    Modality target_modality = Modality::lidar;
    RegionRect region;
    CorruptionKind kind = CorruptionKind::dropout;
    double noise_sigma = 0.0;      // gaussian_noise only
    std::size_t blur_radius = 1;   // blur only (box half-width)
    std::uint64_t noise_seed = 7;  // gaussian_noise only
};

/// Apply the corruption inside the region; pixels outside are bit-identical
/// to the input. Throws on out-of-bounds regions.
BevMap corrupt(const BevMap& f, const CorruptionSpec& c);

/// Mean gate weight attributed to the clean modality, inside vs outside the
/// corrupted region. Per the fusion ordering the camera weight is G and the
/// lidar weight is 1 - G. An empty side reports the neutral value 0.5.
struct GateAlignment {
    double inside_mean = 0.5;
    double outside_mean = 0.5;
    double separation = 0.0;  // inside_mean - outside_mean
};

GateAlignment gate_alignment(const GateMap& g, const CorruptionSpec& c,
                             Modality clean_modality);

enum class FusionStrategy { conv_fuser, fixed_gate, adaptive };

struct StrategySpec {
    FusionStrategy kind = FusionStrategy::adaptive;
    double fixed_g = 0.5;  // fixed_gate only

    std::string name() const;
};

/// Full experiment description. Scene height/width/channels follow the
/// pipeline config; each training step draws scene mix(stream_seed, step) and
/// holdout scenes use a disjoint counter range.
struct AblationRunConfig {
    PipelineConfig pipeline;
    SceneSpec scene;
    CorruptionSpec corruption;
    std::size_t train_steps = 400;
    std::size_t holdout_scenes = 8;
    OptimConfig optim;
    std::uint64_t stream_seed = 42;
    std::uint64_t init_seed = 1;
};

struct StrategyMetrics {
    std::string strategy;
    std::uint64_t stream_seed = 0;
    std::size_t train_steps = 0;
    double final_train_mse = 0.0;
    double holdout_mse = 0.0;
    std::optional<GateAlignment> alignment;  // adaptive only
    bool diverged = false;
};

/// Scene for one training step / holdout index of a stream.
SceneSpec scene_for_step(const AblationRunConfig& cfg, std::uint64_t step);
SceneSpec scene_for_holdout(const AblationRunConfig& cfg, std::uint64_t index);

/// Train one strategy on the seeded scene stream with reconstruction loss
/// MSE(Y, target); report final-train and holdout MSE plus gate alignment
/// for the adaptive strategy. Divergence (non-finite loss) is reported, not
/// thrown. When `trained` is non-null it receives the trained parameters.
StrategyMetrics run_ablation(const AblationRunConfig& cfg, const StrategySpec& strategy,
                             ParamStore* trained = nullptr);

/// The Table-3-style strategy set: ConvFuser, fixed 0.3 / 0.5 / 0.7, adaptive.
std::vector<StrategySpec> default_strategies();

}  // namespace agf
