#pragma once

#include "agf/bev.hpp"
#include "agf/params.hpp"
#include "agf/tape.hpp"

namespace agf {

/// Two-layer 1x1-conv gate sub-network: 2C -> C_mid (relu) -> 1 (sigmoid).
struct GateNetParams {
    Tensor w1, b1;  // [2C, C_mid], [C_mid]
    Tensor w2, b2;  // [C_mid, 1], [1]

    static GateNetParams zeros(std::size_t c, std::size_t c_mid);
    std::size_t c_mid() const { return w1.dim(1); }
};

/// Pixel-wise gate map: [H, W, 1] with entries in [0, 1].
struct GateMap {
    Tensor tensor;

    GateMap() = default;
    explicit GateMap(Tensor t);
    std::size_t height() const { return tensor.dim(0); }
    std::size_t width() const { return tensor.dim(1); }
};

struct GateVars {
    Var w1, b1, w2, b2;
};

GateVars load_gate(Tape& t, const GateNetParams& p);
GateVars load_gate(VarSource& b, const std::string& prefix);
void declare_gate_params(ParamStore& store, const std::string& prefix, std::size_t c,
                         std::size_t c_mid);

/// Differentiable gate computation on merged maps [H, W, C]:
/// G = sigmoid(conv1x1(relu(conv1x1(concat(a_c2l, a_l2c))))).
/// Concat order is camera-queried stream first.
Var compute_gate(Tape& t, Var a_c2l, Var a_l2c, const GateVars& p);

GateMap compute_gate(const BevMap& a_c2l, const BevMap& a_l2c, const GateNetParams& p);

/// Convex per-pixel fusion: fused = G (.) a + (1 - G) (.) b, gate broadcast
/// over channels. Output modality is `fused`.
BevMap fuse_gated(const BevMap& a_c2l, const BevMap& a_l2c, const GateMap& g);

/// Constant gate map for the fixed-gate ablation baselines. g must lie in
/// [0, 1]; endpoints make fuse_gated reproduce an input bit-exactly.
GateMap fixed_gate(double g, std::size_t H, std::size_t W);

/// Static convolutional fusion baseline: conv1x1(concat(F_cam, F_lidar)).
BevMap conv_fuser_baseline(const BevMap& f_cam, const BevMap& f_lidar, const Tensor& w,
                           const Tensor& b);

}  // namespace agf
