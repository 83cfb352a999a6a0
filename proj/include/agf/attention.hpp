#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "agf/kernels.hpp"
#include "agf/params.hpp"
#include "agf/tape.hpp"
#include "agf/windowing.hpp"

namespace agf {

/// Multi-head attention projections. C must divide evenly by num_heads;
/// logits are scaled by 1/sqrt(d_k) with d_k = C / num_heads.
struct MhaParams {
    std::size_t num_heads = 1;
    Tensor w_q, b_q;  // [C, C], [C]
    Tensor w_k, b_k;
    Tensor w_v, b_v;
    Tensor w_o, b_o;

    static MhaParams zeros(std::size_t c, std::size_t num_heads);
    std::size_t channels() const { return w_q.dim(0); }
};

/// One pre-norm windowed self-attention block:
///   mid = MSA(LN(x)) + x
///   out = mid + FFN(LN(mid)),  FFN = affine -> relu -> affine.
struct SaeBlockParams {
    MhaParams mha;
    NormParams ln1, ln2;
    Tensor ffn_w1, ffn_b1;  // [C, r*C], [r*C]
    Tensor ffn_w2, ffn_b2;  // [r*C, C], [C]

    static SaeBlockParams zeros(std::size_t c, std::size_t num_heads, std::size_t ffn_ratio);
};

// Tape-side parameter bundles.

struct MhaVars {
    std::size_t num_heads = 1;
    Var w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
};

struct SaeVars {
    MhaVars mha;
    Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    double ln_eps = 1e-5;
};

class VarSource;

MhaVars load_mha(Tape& t, const MhaParams& p);
SaeVars load_sae(Tape& t, const SaeBlockParams& p);

/// Store-backed loaders; `prefix` addresses names like "<prefix>.wq".
MhaVars load_mha(VarSource& b, const std::string& prefix, std::size_t num_heads);
SaeVars load_sae(VarSource& b, const std::string& prefix, std::size_t num_heads, double ln_eps);

/// Register zero-valued parameters for one MHA / SA-E block in a store.
void declare_mha_params(ParamStore& store, const std::string& prefix, std::size_t c);
void declare_sae_params(ParamStore& store, const std::string& prefix, std::size_t c,
                        std::size_t ffn_ratio);

/// Differentiable building blocks on batched window tokens [N, T, C].
Var mha(Tape& t, Var q_tokens, Var kv_tokens, const MhaVars& p);
Var sae_block(Tape& t, Var window_tokens, const SaeVars& p);

/// Multi-head attention on a single token set: q [T_q, C], kv [T_kv, C].
Tensor mha(const Tensor& q_tokens, const Tensor& kv_tokens, const MhaParams& p);

/// The two pre-norm residual sub-layers applied to one window [T, C].
Tensor sae_block(const Tensor& window_tokens, const SaeBlockParams& p);

/// Partition a map and run a stack of SA-E blocks independently on every
/// window. Returns the enhanced windows (not merged), ready for the
/// cross-attention stage.
WindowSet sae_enhance(const BevMap& f, std::size_t h, std::span<const SaeBlockParams> blocks);
WindowSet sae_enhance(const BevMap& f, std::size_t h, const SaeBlockParams& block);

/// Bidirectional cross-attention between spatially corresponding windows:
///   A_cam<-lidar[i] = mha(cam[i], lidar[i], p_c2l)
///   A_lidar<-cam[i] = mha(lidar[i], cam[i], p_l2c)
std::pair<WindowSet, WindowSet> cross_attend(const WindowSet& cam, const WindowSet& lidar,
                                             const MhaParams& p_c2l, const MhaParams& p_l2c);

enum class AttentionMode { windowed, global };

/// Exact multiply-accumulate count of the attention score+mix stages
/// (QK^T and attn*V): windowed = N_win * 2 * T^2 * C with T = h^2;
/// global = 2 * (HW)^2 * C. num_heads does not change the total (d_k
/// scales inversely) but is part of the configuration being counted.
std::uint64_t count_macs(std::size_t H, std::size_t W, std::size_t C, std::size_t h,
                         std::size_t num_heads, AttentionMode mode);

/// MACs of the four Q/K/V/O projections: 4 * HW * C^2 (either mode).
std::uint64_t count_projection_macs(std::size_t H, std::size_t W, std::size_t C);

}  // namespace agf
