#include "agf/aggregation.hpp"

namespace agf {

PhiFuseParams PhiFuseParams::zeros(std::size_t c) {
    PhiFuseParams p;
    p.conv_w = Tensor({3 * c, c});
    p.conv_b = Tensor({c});
    p.bn.gamma = Tensor({c});
    p.bn.beta = Tensor({c});
    p.bn.running_mean = Tensor({c});
    p.bn.running_var = Tensor({c});
    return p;
}

BevMap aggregate(const WindowSet& cam_enh, const WindowSet& lidar_enh, const WindowSet& fused,
                 PhiFuseParams& p, BnMode mode) {
    AGF_CHECK(cam_enh.geom == lidar_enh.geom && cam_enh.geom == fused.geom,
              "aggregate: window geometry mismatch");
    AGF_CHECK(cam_enh.channels() == lidar_enh.channels() &&
                  cam_enh.channels() == fused.channels(),
              "aggregate: channel mismatch");
    AGF_CHECK(p.conv_w.dim(0) == 3 * cam_enh.channels(),
              "aggregate: Phi_fuse expects 3C input channels");

    const BevMap cam_map = merge(cam_enh);
    const BevMap lidar_map = merge(lidar_enh);
    const BevMap fused_map = merge(fused);
    const Tensor agg = concat_channels(
        std::vector<Tensor>{cam_map.tensor, lidar_map.tensor, fused_map.tensor});
    const Tensor projected = conv1x1(agg, p.conv_w, p.conv_b);
    return BevMap(relu(batch_norm(projected, p.bn, mode)), Modality::fused);
}

BevMap residual_out(const BevMap& f_out, const BevMap& f_cam, const BevMap& f_lidar) {
    AGF_CHECK(f_out.tensor.same_shape(f_cam.tensor) && f_out.tensor.same_shape(f_lidar.tensor),
              "residual_out: shape mismatch");
    Tensor sum(f_out.tensor.shape());
    for (std::size_t i = 0; i < sum.size(); ++i) {
        sum[i] = f_out.tensor[i] + f_cam.tensor[i] + f_lidar.tensor[i];
    }
    return BevMap(relu(sum), Modality::fused);
}

void PipelineConfig::validate() const {
    AGF_CHECK(height >= 1 && width >= 1 && channels >= 1, "config: H, W, C must be >= 1");
    AGF_CHECK(window >= 1 && height % window == 0 && width % window == 0,
              "config: H and W must divide by the window side");
    AGF_CHECK(num_heads >= 1 && channels % num_heads == 0,
              "config: C must divide by num_heads");
    AGF_CHECK(sae_depth >= 1, "config: sae_depth must be >= 1");
    AGF_CHECK(ffn_ratio >= 1, "config: ffn_ratio must be >= 1");
    AGF_CHECK(gate_hidden >= 1, "config: gate_hidden must be >= 1");
    AGF_CHECK(ln_eps > 0.0 && bn_eps > 0.0, "config: eps must be > 0");
    AGF_CHECK(bn_momentum > 0.0 && bn_momentum <= 1.0, "config: momentum must lie in (0, 1]");
}

namespace {

std::string sae_prefix(const char* modality, std::size_t block) {
    return std::string("sae.") + modality + "." + std::to_string(block);
}

}  // namespace

ParamStore make_pipeline_store(const PipelineConfig& cfg) {
    cfg.validate();
    const std::size_t c = cfg.channels;
    ParamStore store;
    for (std::size_t i = 0; i < cfg.sae_depth; ++i) {
        declare_sae_params(store, sae_prefix("cam", i), c, cfg.ffn_ratio);
    }
    for (std::size_t i = 0; i < cfg.sae_depth; ++i) {
        declare_sae_params(store, sae_prefix("lidar", i), c, cfg.ffn_ratio);
    }
    declare_mha_params(store, "cross.c2l", c);
    declare_mha_params(store, "cross.l2c", c);
    declare_gate_params(store, "gate", c, cfg.gate_hidden);
    store.add("phi.conv_w", Tensor({3 * c, c}));
    store.add("phi.conv_b", Tensor({c}));
    store.add("phi.bn.gamma", Tensor({c}));
    store.add("phi.bn.beta", Tensor({c}));
    store.add("phi.bn.running_mean", Tensor({c}), /*trainable=*/false);
    store.add("phi.bn.running_var", Tensor({c}), /*trainable=*/false);
    return store;
}

void init_pipeline_store(ParamStore& store, const PipelineConfig&, std::uint64_t seed) {
    rng::Stream stream(rng::sub_seed(seed, 0x494E4954));  // "INIT"
    for (ParamStore::Entry& e : store.entries()) {
        const std::string& n = e.name;
        const bool is_matrix = e.value.rank() == 2;
        const bool is_gamma = n.ends_with("gamma");
        const bool is_gate_out = n == "gate.w2" || n == "gate.b2";
        const bool is_running_var = n.ends_with("running_var");

        if (is_gate_out) {
            // zero so sigmoid(0) = 0.5 before training; the hidden layer
            // stays random so gradients reach it once w2 moves.
            std::fill(e.value.vec().begin(), e.value.vec().end(), 0.0);
        } else if (is_matrix) {
            e.value = xavier_init(e.value.dim(0), e.value.dim(1), stream);
        } else if (is_gamma || is_running_var) {
            std::fill(e.value.vec().begin(), e.value.vec().end(), 1.0);
        } else {
            std::fill(e.value.vec().begin(), e.value.vec().end(), 0.0);
        }
    }
}

PipelineTapeOut forward_pipeline(Tape& t, VarSource& binder, ParamStore& store, Var f_cam,
                                 Var f_lidar, const PipelineConfig& cfg, BnMode mode,
                                 const GateMode& gate) {
    cfg.validate();
    const Tensor& cam_in = t.value(f_cam);
    AGF_CHECK(cam_in.same_shape(t.value(f_lidar)), "forward_pipeline: input shape mismatch");
    AGF_CHECK(cam_in.rank() == 3 && cam_in.dim(0) == cfg.height && cam_in.dim(1) == cfg.width &&
                  cam_in.dim(2) == cfg.channels,
              "forward_pipeline: input shape does not match config");

    const WindowGeometry geom{cfg.height, cfg.width, cfg.window};

    // SA-E enhancement per modality, kept in window form.
    Var cam_tokens = t.partition_windows(f_cam, cfg.window);
    Var lidar_tokens = t.partition_windows(f_lidar, cfg.window);
    for (std::size_t i = 0; i < cfg.sae_depth; ++i) {
        cam_tokens = sae_block(t, cam_tokens,
                               load_sae(binder, sae_prefix("cam", i), cfg.num_heads, cfg.ln_eps));
    }
    for (std::size_t i = 0; i < cfg.sae_depth; ++i) {
        lidar_tokens = sae_block(
            t, lidar_tokens, load_sae(binder, sae_prefix("lidar", i), cfg.num_heads, cfg.ln_eps));
    }

    // Bidirectional cross-attention within corresponding windows.
    Var a_c2l = mha(t, cam_tokens, lidar_tokens, load_mha(binder, "cross.c2l", cfg.num_heads));
    Var a_l2c = mha(t, lidar_tokens, cam_tokens, load_mha(binder, "cross.l2c", cfg.num_heads));
    if (cfg.cross_residual) {
        a_c2l = t.add(cam_tokens, a_c2l);
        a_l2c = t.add(lidar_tokens, a_l2c);
    }

    Var a_c2l_map = t.merge_windows(a_c2l, geom);
    Var a_l2c_map = t.merge_windows(a_l2c, geom);

    // Gate and convex fusion on merged maps.
    Var gate_map;
    Var fused_map;
    if (gate.adaptive) {
        gate_map = compute_gate(t, a_c2l_map, a_l2c_map, load_gate(binder, "gate"));
        fused_map = t.gate_blend(a_c2l_map, a_l2c_map, gate_map);
    } else {
        gate_map = t.leaf(Tensor::full({cfg.height, cfg.width, 1}, gate.fixed_g));
        fused_map = t.blend_const(a_c2l_map, a_l2c_map, gate.fixed_g);
    }

    // Multi-level aggregation: concat enhanced + fused streams, Phi_fuse.
    Var cam_map = t.merge_windows(cam_tokens, geom);
    Var lidar_map = t.merge_windows(lidar_tokens, geom);
    Var agg = t.concat_channels({cam_map, lidar_map, fused_map});
    Var projected = t.affine(agg, binder.load("phi.conv_w"), binder.load("phi.conv_b"));
    Var bn_gamma = binder.load("phi.bn.gamma");
    Var bn_beta = binder.load("phi.bn.beta");
    Var normed;
    if (mode == BnMode::train) {
        normed = t.batch_norm_train(projected, bn_gamma, bn_beta,
                                    &store.value("phi.bn.running_mean"),
                                    &store.value("phi.bn.running_var"), cfg.bn_momentum,
                                    cfg.bn_eps);
    } else {
        normed = t.batch_norm_eval(projected, bn_gamma, bn_beta,
                                   store.value("phi.bn.running_mean"),
                                   store.value("phi.bn.running_var"), cfg.bn_eps);
    }
    Var f_out = t.relu(normed);

    // Residual with the original pre-enhancement maps.
    Var y = t.relu(t.add(t.add(f_out, f_cam), f_lidar));

    PipelineTapeOut out;
    out.y = y;
    out.gate = gate_map;
    out.cam_tokens = cam_tokens;
    out.lidar_tokens = lidar_tokens;
    out.a_c2l_map = a_c2l_map;
    out.a_l2c_map = a_l2c_map;
    out.fused_map = fused_map;
    out.f_out = f_out;
    return out;
}

PipelineResult forward_pipeline(const BevMap& f_cam, const BevMap& f_lidar,
                                const PipelineConfig& cfg, ParamStore& store, BnMode mode,
                                const GateMode& gate) {
    Tape t;
    Binder binder(t, store);
    Var cam = t.leaf(f_cam.tensor);
    Var lidar = t.leaf(f_lidar.tensor);
    PipelineTapeOut out = forward_pipeline(t, binder, store, cam, lidar, cfg, mode, gate);

    const WindowGeometry geom{cfg.height, cfg.width, cfg.window};
    PipelineResult res;
    res.y = BevMap(t.value(out.y), Modality::fused);
    res.gate = GateMap(t.value(out.gate));
    res.intermediates.cam_enhanced =
        WindowSet{t.value(out.cam_tokens), geom, Modality::camera};
    res.intermediates.lidar_enhanced =
        WindowSet{t.value(out.lidar_tokens), geom, Modality::lidar};
    res.intermediates.a_cam_from_lidar = BevMap(t.value(out.a_c2l_map), Modality::camera);
    res.intermediates.a_lidar_from_cam = BevMap(t.value(out.a_l2c_map), Modality::lidar);
    res.intermediates.fused = BevMap(t.value(out.fused_map), Modality::fused);
    res.intermediates.f_out = BevMap(t.value(out.f_out), Modality::fused);
    return res;
}

}  // namespace agf
