#include "agf/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace agf {

namespace {

constexpr std::uint64_t kBlobTag = 1;
constexpr std::uint64_t kCamNoiseTag = 2;
constexpr std::uint64_t kLidarNoiseTag = 3;
constexpr std::uint64_t kHoldoutBase = 0x8000000000000000ull;

void add_noise(Tensor& t, std::uint64_t seed, double sigma) {
    if (sigma == 0.0) return;
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] += sigma * rng::normal(seed, i);
    }
}

}  // namespace

Scene gen_scene(const SceneSpec& spec) {
    AGF_CHECK(spec.height >= 1 && spec.width >= 1 && spec.channels >= 1,
              "gen_scene: invalid shape");
    AGF_CHECK(spec.amp_min <= spec.amp_max, "gen_scene: amplitude range inverted");
    AGF_CHECK(spec.noise_sigma >= 0.0, "gen_scene: negative noise sigma");

    const std::size_t H = spec.height, W = spec.width, C = spec.channels;
    Tensor target({H, W, C});

    rng::Stream blob_stream(rng::sub_seed(spec.seed, kBlobTag));
    const double side = static_cast<double>(std::min(H, W));
    for (std::size_t b = 0; b < spec.num_blobs; ++b) {
        const double cx = blob_stream.uniform(0.0, static_cast<double>(H));
        const double cy = blob_stream.uniform(0.0, static_cast<double>(W));
        const double sigma = blob_stream.uniform(side / 8.0, side / 4.0);
        const double amp = blob_stream.uniform(spec.amp_min, spec.amp_max);
        std::vector<double> chan_weight(C);
        for (std::size_t ch = 0; ch < C; ++ch) chan_weight[ch] = blob_stream.uniform(0.25, 1.0);

        const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
        for (std::size_t r = 0; r < H; ++r) {
            const double dr = (static_cast<double>(r) + 0.5) - cx;
            for (std::size_t c = 0; c < W; ++c) {
                const double dc = (static_cast<double>(c) + 0.5) - cy;
                const double mass = amp * std::exp(-(dr * dr + dc * dc) * inv2s2);
                for (std::size_t ch = 0; ch < C; ++ch) {
                    target.at(r, c, ch) += mass * chan_weight[ch];
                }
            }
        }
    }

    Tensor cam = target;
    Tensor lidar = target;
    add_noise(cam, rng::sub_seed(spec.seed, kCamNoiseTag), spec.noise_sigma);
    add_noise(lidar, rng::sub_seed(spec.seed, kLidarNoiseTag), spec.noise_sigma);

    Scene s;
    s.cam = BevMap(std::move(cam), Modality::camera);
    s.lidar = BevMap(std::move(lidar), Modality::lidar);
    s.target = BevMap(std::move(target), Modality::fused);
    return s;
}

BevMap corrupt(const BevMap& f, const CorruptionSpec& c) {
    const std::size_t H = f.height(), W = f.width(), C = f.channels();
    const RegionRect& r = c.region;
    AGF_CHECK(r.row0 + r.rows <= H && r.col0 + r.cols <= W, "corrupt: region out of bounds");

    BevMap out = f;
    if (r.empty()) return out;

    switch (c.kind) {
        case CorruptionKind::dropout:
            for (std::size_t row = r.row0; row < r.row0 + r.rows; ++row) {
                for (std::size_t col = r.col0; col < r.col0 + r.cols; ++col) {
                    for (std::size_t ch = 0; ch < C; ++ch) out.tensor.at(row, col, ch) = 0.0;
                }
            }
            break;
        case CorruptionKind::gaussian_noise:
            AGF_CHECK(c.noise_sigma >= 0.0, "corrupt: negative noise sigma");
            if (c.noise_sigma == 0.0) break;
            for (std::size_t row = r.row0; row < r.row0 + r.rows; ++row) {
                for (std::size_t col = r.col0; col < r.col0 + r.cols; ++col) {
                    for (std::size_t ch = 0; ch < C; ++ch) {
                        const std::size_t idx = (row * W + col) * C + ch;
                        out.tensor[idx] += c.noise_sigma * rng::normal(c.noise_seed, idx);
                    }
                }
            }
            break;
        case CorruptionKind::blur: {
            const std::ptrdiff_t rad = static_cast<std::ptrdiff_t>(c.blur_radius);
            for (std::size_t row = r.row0; row < r.row0 + r.rows; ++row) {
                for (std::size_t col = r.col0; col < r.col0 + r.cols; ++col) {
                    for (std::size_t ch = 0; ch < C; ++ch) {
                        double acc = 0.0;
                        std::size_t count = 0;
                        for (std::ptrdiff_t dr = -rad; dr <= rad; ++dr) {
                            for (std::ptrdiff_t dc = -rad; dc <= rad; ++dc) {
                                const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(row) + dr;
                                const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(col) + dc;
                                if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(H) ||
                                    cc >= static_cast<std::ptrdiff_t>(W)) {
                                    continue;
                                }
                                acc += f.tensor.at(static_cast<std::size_t>(rr),
                                                   static_cast<std::size_t>(cc), ch);
                                ++count;
                            }
                        }
                        out.tensor.at(row, col, ch) = acc / static_cast<double>(count);
                    }
                }
            }
            break;
        }
    }
    return out;
}

GateAlignment gate_alignment(const GateMap& g, const CorruptionSpec& c,
                             Modality clean_modality) {
    AGF_CHECK(clean_modality != Modality::fused,
              "gate_alignment: clean modality must be camera or lidar");
    AGF_CHECK(g.tensor.all_finite(), "gate_alignment: gate map must be finite");

    const std::size_t H = g.height(), W = g.width();
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t in_n = 0, out_n = 0;
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t col = 0; col < W; ++col) {
            const double gate_val = g.tensor.at(r, col, 0);
            // camera weight = G, lidar weight = 1 - G (fusion ordering)
            const double w = clean_modality == Modality::camera ? gate_val : 1.0 - gate_val;
            if (c.region.contains(r, col)) {
                in_sum += w;
                ++in_n;
            } else {
                out_sum += w;
                ++out_n;
            }
        }
    }

    GateAlignment a;
    a.inside_mean = in_n > 0 ? in_sum / static_cast<double>(in_n) : 0.5;
    a.outside_mean = out_n > 0 ? out_sum / static_cast<double>(out_n) : 0.5;
    a.separation = a.inside_mean - a.outside_mean;
    return a;
}

std::string StrategySpec::name() const {
    switch (kind) {
        case FusionStrategy::conv_fuser: return "conv_fuser";
        case FusionStrategy::fixed_gate: {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "fixed_%g", fixed_g);
            return buf;
        }
        case FusionStrategy::adaptive: return "adaptive";
    }
    return "unknown";
}

SceneSpec scene_for_step(const AblationRunConfig& cfg, std::uint64_t step) {
    SceneSpec s = cfg.scene;
    s.height = cfg.pipeline.height;
    s.width = cfg.pipeline.width;
    s.channels = cfg.pipeline.channels;
    s.seed = rng::sub_seed(cfg.stream_seed, step);
    return s;
}

SceneSpec scene_for_holdout(const AblationRunConfig& cfg, std::uint64_t index) {
    SceneSpec s = cfg.scene;
    s.height = cfg.pipeline.height;
    s.width = cfg.pipeline.width;
    s.channels = cfg.pipeline.channels;
    s.seed = rng::sub_seed(cfg.stream_seed, kHoldoutBase + index);
    return s;
}

namespace {

Scene corrupted_scene(const AblationRunConfig& cfg, const SceneSpec& spec) {
    Scene s = gen_scene(spec);
    if (cfg.corruption.target_modality == Modality::camera) {
        s.cam = corrupt(s.cam, cfg.corruption);
    } else {
        s.lidar = corrupt(s.lidar, cfg.corruption);
    }
    return s;
}

ParamStore make_conv_fuser_store(const PipelineConfig& cfg, std::uint64_t seed) {
    ParamStore store;
    store.add("conv.w", Tensor({2 * cfg.channels, cfg.channels}));
    store.add("conv.b", Tensor({cfg.channels}));
    rng::Stream stream(rng::sub_seed(seed, 0x434F4E56));  // "CONV"
    store.value("conv.w") = xavier_init(2 * cfg.channels, cfg.channels, stream);
    return store;
}

// Y = relu(conv1x1(concat(cam, lidar)) + cam + lidar); the static baseline.
Var conv_fuser_forward(Tape& t, VarSource& binder, Var cam, Var lidar) {
    Var both = t.concat_channels({cam, lidar});
    Var fused = t.affine(both, binder.load("conv.w"), binder.load("conv.b"));
    return t.relu(t.add(t.add(fused, cam), lidar));
}

}  // namespace

std::vector<StrategySpec> default_strategies() {
    return {
        {FusionStrategy::conv_fuser, 0.5},
        {FusionStrategy::fixed_gate, 0.3},
        {FusionStrategy::fixed_gate, 0.5},
        {FusionStrategy::fixed_gate, 0.7},
        {FusionStrategy::adaptive, 0.5},
    };
}

StrategyMetrics run_ablation(const AblationRunConfig& cfg, const StrategySpec& strategy,
                             ParamStore* trained) {
    cfg.pipeline.validate();
    StrategyMetrics metrics;
    metrics.strategy = strategy.name();
    metrics.stream_seed = cfg.stream_seed;
    metrics.train_steps = cfg.train_steps;

    const bool is_conv = strategy.kind == FusionStrategy::conv_fuser;
    ParamStore store = is_conv ? make_conv_fuser_store(cfg.pipeline, cfg.init_seed)
                               : make_pipeline_store(cfg.pipeline);
    if (!is_conv) init_pipeline_store(store, cfg.pipeline, cfg.init_seed);

    const GateMode gate_mode = strategy.kind == FusionStrategy::adaptive
                                   ? GateMode::learned()
                                   : GateMode::fixed(strategy.fixed_g);

    for (std::size_t step = 1; step <= cfg.train_steps; ++step) {
        const Scene scene = corrupted_scene(cfg, scene_for_step(cfg, step - 1));
        Tape t;
        Binder binder(t, store);
        Var cam = t.leaf(scene.cam.tensor);
        Var lidar = t.leaf(scene.lidar.tensor);
        Var y;
        if (is_conv) {
            y = conv_fuser_forward(t, binder, cam, lidar);
        } else {
            y = forward_pipeline(t, binder, store, cam, lidar, cfg.pipeline, BnMode::train,
                                 gate_mode)
                    .y;
        }
        Var loss = t.mse(y, scene.target.tensor);
        const double loss_val = t.value(loss)[0];
        if (!std::isfinite(loss_val)) {
            metrics.diverged = true;
            metrics.final_train_mse = loss_val;
            if (trained) *trained = store;
            return metrics;
        }
        metrics.final_train_mse = loss_val;

        store.zero_grads();
        t.backward(loss);
        binder.collect_grads();
        adam_step(store, cfg.optim, step);
    }

    // Holdout evaluation (eval-mode batch norm, no parameter updates).
    double mse_sum = 0.0;
    double in_sum = 0.0, out_sum = 0.0;
    for (std::size_t j = 0; j < cfg.holdout_scenes; ++j) {
        const Scene scene = corrupted_scene(cfg, scene_for_holdout(cfg, j));
        Tape t;
        Binder binder(t, store);
        Var cam = t.leaf(scene.cam.tensor);
        Var lidar = t.leaf(scene.lidar.tensor);
        Var y;
        Var gate;
        if (is_conv) {
            y = conv_fuser_forward(t, binder, cam, lidar);
        } else {
            PipelineTapeOut out = forward_pipeline(t, binder, store, cam, lidar, cfg.pipeline,
                                                   BnMode::eval, gate_mode);
            y = out.y;
            gate = out.gate;
        }
        Var loss = t.mse(y, scene.target.tensor);
        mse_sum += t.value(loss)[0];

        if (strategy.kind == FusionStrategy::adaptive) {
            const Modality clean = cfg.corruption.target_modality == Modality::lidar
                                       ? Modality::camera
                                       : Modality::lidar;
            const GateAlignment a =
                gate_alignment(GateMap(t.value(gate)), cfg.corruption, clean);
            in_sum += a.inside_mean;
            out_sum += a.outside_mean;
        }
    }
    const double n = static_cast<double>(std::max<std::size_t>(cfg.holdout_scenes, 1));
    metrics.holdout_mse = mse_sum / n;
    if (trained) *trained = store;
    if (!std::isfinite(metrics.holdout_mse)) metrics.diverged = true;
    if (strategy.kind == FusionStrategy::adaptive) {
        GateAlignment a;
        a.inside_mean = in_sum / n;
        a.outside_mean = out_sum / n;
        a.separation = a.inside_mean - a.outside_mean;
        metrics.alignment = a;
    }
    return metrics;
}

}  // namespace agf
