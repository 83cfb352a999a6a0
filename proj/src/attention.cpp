#include "agf/attention.hpp"

namespace agf {

MhaParams MhaParams::zeros(std::size_t c, std::size_t num_heads) {
    AGF_CHECK(num_heads >= 1 && c % num_heads == 0, "MhaParams: C must divide by num_heads");
    MhaParams p;
    p.num_heads = num_heads;
    p.w_q = Tensor({c, c});
    p.b_q = Tensor({c});
    p.w_k = Tensor({c, c});
    p.b_k = Tensor({c});
    p.w_v = Tensor({c, c});
    p.b_v = Tensor({c});
    p.w_o = Tensor({c, c});
    p.b_o = Tensor({c});
    return p;
}

SaeBlockParams SaeBlockParams::zeros(std::size_t c, std::size_t num_heads,
                                     std::size_t ffn_ratio) {
    AGF_CHECK(ffn_ratio >= 1, "SaeBlockParams: ffn ratio must be >= 1");
    SaeBlockParams p;
    p.mha = MhaParams::zeros(c, num_heads);
    p.ln1 = NormParams{Tensor({c}), Tensor({c}), 1e-5};
    p.ln2 = NormParams{Tensor({c}), Tensor({c}), 1e-5};
    p.ffn_w1 = Tensor({c, ffn_ratio * c});
    p.ffn_b1 = Tensor({ffn_ratio * c});
    p.ffn_w2 = Tensor({ffn_ratio * c, c});
    p.ffn_b2 = Tensor({c});
    return p;
}

MhaVars load_mha(VarSource& b, const std::string& prefix, std::size_t num_heads) {
    MhaVars v;
    v.num_heads = num_heads;
    v.w_q = b.load(prefix + ".wq");
    v.b_q = b.load(prefix + ".bq");
    v.w_k = b.load(prefix + ".wk");
    v.b_k = b.load(prefix + ".bk");
    v.w_v = b.load(prefix + ".wv");
    v.b_v = b.load(prefix + ".bv");
    v.w_o = b.load(prefix + ".wo");
    v.b_o = b.load(prefix + ".bo");
    return v;
}

SaeVars load_sae(VarSource& b, const std::string& prefix, std::size_t num_heads, double ln_eps) {
    SaeVars v;
    v.mha = load_mha(b, prefix + ".mha", num_heads);
    v.ln1_gamma = b.load(prefix + ".ln1.gamma");
    v.ln1_beta = b.load(prefix + ".ln1.beta");
    v.ln2_gamma = b.load(prefix + ".ln2.gamma");
    v.ln2_beta = b.load(prefix + ".ln2.beta");
    v.ffn_w1 = b.load(prefix + ".ffn.w1");
    v.ffn_b1 = b.load(prefix + ".ffn.b1");
    v.ffn_w2 = b.load(prefix + ".ffn.w2");
    v.ffn_b2 = b.load(prefix + ".ffn.b2");
    v.ln_eps = ln_eps;
    return v;
}

void declare_mha_params(ParamStore& store, const std::string& prefix, std::size_t c) {
    store.add(prefix + ".wq", Tensor({c, c}));
    store.add(prefix + ".bq", Tensor({c}));
    store.add(prefix + ".wk", Tensor({c, c}));
    store.add(prefix + ".bk", Tensor({c}));
    store.add(prefix + ".wv", Tensor({c, c}));
    store.add(prefix + ".bv", Tensor({c}));
    store.add(prefix + ".wo", Tensor({c, c}));
    store.add(prefix + ".bo", Tensor({c}));
}

void declare_sae_params(ParamStore& store, const std::string& prefix, std::size_t c,
                        std::size_t ffn_ratio) {
    declare_mha_params(store, prefix + ".mha", c);
    store.add(prefix + ".ln1.gamma", Tensor({c}));
    store.add(prefix + ".ln1.beta", Tensor({c}));
    store.add(prefix + ".ln2.gamma", Tensor({c}));
    store.add(prefix + ".ln2.beta", Tensor({c}));
    store.add(prefix + ".ffn.w1", Tensor({c, ffn_ratio * c}));
    store.add(prefix + ".ffn.b1", Tensor({ffn_ratio * c}));
    store.add(prefix + ".ffn.w2", Tensor({ffn_ratio * c, c}));
    store.add(prefix + ".ffn.b2", Tensor({c}));
}

MhaVars load_mha(Tape& t, const MhaParams& p) {
    MhaVars v;
    v.num_heads = p.num_heads;
    v.w_q = t.leaf(p.w_q);
    v.b_q = t.leaf(p.b_q);
    v.w_k = t.leaf(p.w_k);
    v.b_k = t.leaf(p.b_k);
    v.w_v = t.leaf(p.w_v);
    v.b_v = t.leaf(p.b_v);
    v.w_o = t.leaf(p.w_o);
    v.b_o = t.leaf(p.b_o);
    return v;
}

SaeVars load_sae(Tape& t, const SaeBlockParams& p) {
    SaeVars v;
    v.mha = load_mha(t, p.mha);
    v.ln1_gamma = t.leaf(p.ln1.gamma);
    v.ln1_beta = t.leaf(p.ln1.beta);
    v.ln2_gamma = t.leaf(p.ln2.gamma);
    v.ln2_beta = t.leaf(p.ln2.beta);
    v.ffn_w1 = t.leaf(p.ffn_w1);
    v.ffn_b1 = t.leaf(p.ffn_b1);
    v.ffn_w2 = t.leaf(p.ffn_w2);
    v.ffn_b2 = t.leaf(p.ffn_b2);
    AGF_CHECK(p.ln1.eps == p.ln2.eps, "load_sae: blocks share one LN eps");
    v.ln_eps = p.ln1.eps;
    return v;
}

Var mha(Tape& t, Var q_tokens, Var kv_tokens, const MhaVars& p) {
    const Tensor& qv = t.value(q_tokens);
    const Tensor& kvv = t.value(kv_tokens);
    const std::size_t c = t.value(p.w_q).dim(0);
    AGF_CHECK(qv.last_dim() == c && kvv.last_dim() == c, "mha: channel dims do not match params");

    Var q = t.affine(q_tokens, p.w_q, p.b_q);
    // The key bias shifts every score in a row by the same amount, which
    // softmax cancels exactly, so it is left out of the computation. b_k
    // stays a parameter for format compatibility; its gradient is zero.
    Var k = t.affine(kv_tokens, p.w_k, t.leaf(Tensor({c})));
    Var v = t.affine(kv_tokens, p.w_v, p.b_v);
    Var mixed = t.mha_core(q, k, v, p.num_heads);
    return t.affine(mixed, p.w_o, p.b_o);
}

Var sae_block(Tape& t, Var window_tokens, const SaeVars& p) {
    Var normed = t.layer_norm(window_tokens, p.ln1_gamma, p.ln1_beta, p.ln_eps);
    Var attended = mha(t, normed, normed, p.mha);
    Var mid = t.add(attended, window_tokens);

    Var normed2 = t.layer_norm(mid, p.ln2_gamma, p.ln2_beta, p.ln_eps);
    Var hidden = t.relu(t.affine(normed2, p.ffn_w1, p.ffn_b1));
    Var ffn_out = t.affine(hidden, p.ffn_w2, p.ffn_b2);
    return t.add(mid, ffn_out);
}

namespace {

// Lift a single token set [T, C] to the batched window form [1, T, C].
Tensor as_batched(const Tensor& tokens) {
    AGF_CHECK(tokens.rank() == 2, "expected [T, C] tokens");
    return Tensor({1, tokens.dim(0), tokens.dim(1)}, tokens.vec());
}

Tensor squeeze_batch(const Tensor& tokens) {
    return Tensor({tokens.dim(1), tokens.dim(2)}, tokens.vec());
}

}  // namespace

Tensor mha(const Tensor& q_tokens, const Tensor& kv_tokens, const MhaParams& p) {
    Tape t;
    Var q = t.leaf(as_batched(q_tokens));
    Var kv = t.leaf(as_batched(kv_tokens));
    Var out = mha(t, q, kv, load_mha(t, p));
    return squeeze_batch(t.value(out));
}

Tensor sae_block(const Tensor& window_tokens, const SaeBlockParams& p) {
    Tape t;
    Var x = t.leaf(as_batched(window_tokens));
    Var out = sae_block(t, x, load_sae(t, p));
    return squeeze_batch(t.value(out));
}

WindowSet sae_enhance(const BevMap& f, std::size_t h, std::span<const SaeBlockParams> blocks) {
    Tape t;
    Var x = t.leaf(f.tensor);
    Var tokens = t.partition_windows(x, h);
    for (const SaeBlockParams& block : blocks) {
        tokens = sae_block(t, tokens, load_sae(t, block));
    }
    WindowSet ws;
    ws.tokens = t.value(tokens);
    ws.geom = WindowGeometry{f.height(), f.width(), h};
    ws.modality = f.modality;
    return ws;
}

WindowSet sae_enhance(const BevMap& f, std::size_t h, const SaeBlockParams& block) {
    return sae_enhance(f, h, std::span<const SaeBlockParams>(&block, 1));
}

std::pair<WindowSet, WindowSet> cross_attend(const WindowSet& cam, const WindowSet& lidar,
                                             const MhaParams& p_c2l, const MhaParams& p_l2c) {
    AGF_CHECK(cam.geom == lidar.geom, "cross_attend: window geometry mismatch");
    AGF_CHECK(cam.channels() == lidar.channels(), "cross_attend: channel mismatch");

    Tape t;
    Var c = t.leaf(cam.tokens);
    Var l = t.leaf(lidar.tokens);
    Var a_c2l = mha(t, c, l, load_mha(t, p_c2l));
    Var a_l2c = mha(t, l, c, load_mha(t, p_l2c));

    WindowSet out_c;
    out_c.tokens = t.value(a_c2l);
    out_c.geom = cam.geom;
    out_c.modality = Modality::camera;
    WindowSet out_l;
    out_l.tokens = t.value(a_l2c);
    out_l.geom = cam.geom;
    out_l.modality = Modality::lidar;
    return {std::move(out_c), std::move(out_l)};
}

std::uint64_t count_macs(std::size_t H, std::size_t W, std::size_t C, std::size_t h,
                         std::size_t num_heads, AttentionMode mode) {
    AGF_CHECK(h >= 1 && H % h == 0 && W % h == 0, "count_macs: invalid geometry");
    AGF_CHECK(num_heads >= 1 && C % num_heads == 0, "count_macs: C must divide by num_heads");
    if (mode == AttentionMode::global) {
        const std::uint64_t hw = static_cast<std::uint64_t>(H) * W;
        return 2 * hw * hw * C;
    }
    const std::uint64_t n_win = static_cast<std::uint64_t>(H / h) * (W / h);
    const std::uint64_t tokens = static_cast<std::uint64_t>(h) * h;
    return n_win * 2 * tokens * tokens * C;
}

std::uint64_t count_projection_macs(std::size_t H, std::size_t W, std::size_t C) {
    return 4ull * H * W * C * C;
}

}  // namespace agf
