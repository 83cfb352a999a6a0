#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "agf/attention.hpp"
#include "agf/gated_fusion.hpp"

namespace agf {

/// Phi_fuse projection: 1x1 convolution (3C -> C), batch norm, ReLU.
struct PhiFuseParams {
    Tensor conv_w;  // [3C, C]
    Tensor conv_b;  // [C]
    BatchNormParams bn;

    static PhiFuseParams zeros(std::size_t c);
};

/// Merge the three streams to maps, concatenate channels in order
/// (camera-enhanced, lidar-enhanced, fused), and apply Phi_fuse.
BevMap aggregate(const WindowSet& cam_enh, const WindowSet& lidar_enh, const WindowSet& fused,
                 PhiFuseParams& p, BnMode mode);

/// Y = ReLU(F_out + F_cam + F_lidar) where the modality maps are the
/// original pre-enhancement inputs.
BevMap residual_out(const BevMap& f_out, const BevMap& f_cam, const BevMap& f_lidar);

/// Geometry and architecture of one fusion pipeline.
struct PipelineConfig {
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t channels = 32;
    std::size_t window = 8;
    std::size_t num_heads = 4;
    std::size_t sae_depth = 1;
    std::size_t ffn_ratio = 4;
    std::size_t gate_hidden = 16;  // C_mid of the gate net
    double ln_eps = 1e-5;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
    // Wrap each cross-attention direction in a query-side residual
    // (A = F_hat + MHA(F_hat, other)). The bare form keeps only the MHA term.
    bool cross_residual = true;

    void validate() const;
};

/// Gate selection for the pipeline: the learned gate net or a constant.
struct GateMode {
    bool adaptive = true;
    double fixed_g = 0.5;

    static GateMode learned() { return GateMode{true, 0.5}; }
    static GateMode fixed(double g) { return GateMode{false, g}; }
};

/// Create the full parameter store for a pipeline (zeros). Trainable entries
/// cover SA-E blocks for both modalities, both cross-attention directions,
/// the gate net and Phi_fuse; BN running stats are non-trainable state.
ParamStore make_pipeline_store(const PipelineConfig& cfg);

/// Seeded initialization: Xavier-uniform weight matrices, zero biases,
/// unit gamma. The gate output layer starts at zero so the untrained gate
/// is exactly 0.5 everywhere.
void init_pipeline_store(ParamStore& store, const PipelineConfig& cfg, std::uint64_t seed);

/// Tape handles to every stage output, for inspection and loss building.
struct PipelineTapeOut {
    Var y;
    Var gate;        // [H, W, 1]
    Var cam_tokens;  // enhanced windows [N_win, T, C]
    Var lidar_tokens;
    Var a_c2l_map;  // merged cross-attention outputs [H, W, C]
    Var a_l2c_map;
    Var fused_map;
    Var f_out;
};

/// Differentiable forward pass of the whole pipeline. Parameters come from
/// `params`; BN running stats live in `store` and update in train mode.
PipelineTapeOut forward_pipeline(Tape& t, VarSource& params, ParamStore& store, Var f_cam,
                                 Var f_lidar, const PipelineConfig& cfg, BnMode mode,
                                 const GateMode& gate = GateMode::learned());

struct PipelineIntermediates {
    WindowSet cam_enhanced;
    WindowSet lidar_enhanced;
    BevMap a_cam_from_lidar;
    BevMap a_lidar_from_cam;
    BevMap fused;
    BevMap f_out;
};

struct PipelineResult {
    BevMap y;
    GateMap gate;
    PipelineIntermediates intermediates;
};

/// Plain (non-differentiating) pipeline evaluation.
PipelineResult forward_pipeline(const BevMap& f_cam, const BevMap& f_lidar,
                                const PipelineConfig& cfg, ParamStore& store, BnMode mode,
                                const GateMode& gate = GateMode::learned());

}  // namespace agf
