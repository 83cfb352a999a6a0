#pragma once

#include <cstdint>
#include <span>

#include "agf/tensor.hpp"

namespace agf {

/// LayerNorm affine parameters over the channel (last) axis.
struct NormParams {
    Tensor gamma;  // [C]
    Tensor beta;   // [C]
    double eps = 1e-5;

    static NormParams identity(std::size_t c, double eps = 1e-5);
};

enum class BnMode { train, eval };

/// BatchNorm parameters plus running statistics. At desk scale the "batch"
/// is the H*W spatial positions of a single map.
struct BatchNormParams {
    Tensor gamma;         // [C]
    Tensor beta;          // [C]
    Tensor running_mean;  // [C]
    Tensor running_var;   // [C], entries >= 0
    double eps = 1e-5;
    double momentum = 0.1;  // running = (1 - momentum) * running + momentum * batch

    static BatchNormParams identity(std::size_t c, double eps = 1e-5);
};

/// Exact multiply-accumulate counters, incremented by the kernels below.
/// `attn_score_mix` covers the QK^T and attn*V stages; `affine` covers every
/// dense projection (Q/K/V/O, FFN, 1x1 conv, gate net). Thread-local so
/// concurrent runs count independently.
struct MacCounts {
    std::uint64_t attn_score_mix = 0;
    std::uint64_t affine = 0;
};

MacCounts& mac_counts();
void reset_mac_counts();

/// Minimum |x| seen by relu since the last reset; gradient checks use it to
/// confirm a probe stays away from the kink at 0.
double relu_kink_distance();
void reset_relu_kink_distance();

// Forward kernels. Each is a pure function of its inputs (batch_norm in
// train mode additionally updates the running statistics in `p`). All
// reductions run in ascending index order.

/// Per-position normalization over the channel axis with biased variance:
/// (x - mean) / sqrt(var + eps) * gamma + beta. x is [..., C].
Tensor layer_norm(const Tensor& x, const NormParams& p);

/// Numerically-stable softmax along `axis` (max subtracted before exp).
Tensor softmax(const Tensor& x, std::size_t axis);

/// y = x W + b with x [..., C_in] treated row-wise, W [C_in, C_out], b [C_out].
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

/// 1x1 convolution over a [H, W, C_in] map: affine applied at every position.
Tensor conv1x1(const Tensor& f, const Tensor& w, const Tensor& b);

/// Batch normalization over the spatial positions of a [H, W, C] map (or any
/// [..., C] tensor, rows = positions). Train mode uses biased batch
/// statistics and updates running stats; eval mode uses the running stats.
Tensor batch_norm(const Tensor& f, BatchNormParams& p, BnMode mode);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Concatenate along the channel (last) axis; inputs must agree on all
/// leading dimensions. Order of inputs is preserved.
Tensor concat_channels(std::span<const Tensor> parts);

}  // namespace agf
