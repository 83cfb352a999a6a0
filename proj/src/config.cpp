#include "agf/config.hpp"

#include <fstream>

#include <json.hpp>

namespace agf {

using nlohmann::json;

namespace {

Modality modality_from_string(const std::string& s) {
    if (s == "camera") return Modality::camera;
    if (s == "lidar") return Modality::lidar;
    if (s == "fused") return Modality::fused;
    throw ParseError("config: unknown modality \"" + s + "\"");
}

CorruptionKind kind_from_string(const std::string& s) {
    if (s == "dropout") return CorruptionKind::dropout;
    if (s == "gaussian_noise") return CorruptionKind::gaussian_noise;
    if (s == "blur") return CorruptionKind::blur;
    throw ParseError("config: unknown corruption kind \"" + s + "\"");
}

std::string kind_to_string(CorruptionKind k) {
    switch (k) {
        case CorruptionKind::dropout: return "dropout";
        case CorruptionKind::gaussian_noise: return "gaussian_noise";
        case CorruptionKind::blur: return "blur";
    }
    return "dropout";
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

AblationRunConfig RunConfig::ablation() const {
    AblationRunConfig a;
    a.pipeline = pipeline;
    a.scene = scene;
    a.corruption = corruption;
    a.train_steps = train_steps;
    a.holdout_scenes = holdout_scenes;
    a.optim = optim;
    a.stream_seed = stream_seed;
    a.init_seed = init_seed;
    return a;
}

void RunConfig::validate() const {
    pipeline.validate();
    AGF_CHECK(corruption.region.row0 + corruption.region.rows <= pipeline.height &&
                  corruption.region.col0 + corruption.region.cols <= pipeline.width,
              "config: corruption region out of bounds");
    AGF_CHECK(scene.amp_min <= scene.amp_max, "config: blob amplitude range inverted");
    AGF_CHECK(scene.noise_sigma >= 0.0, "config: negative scene noise sigma");
    AGF_CHECK(optim.beta1 > 0.0 && optim.beta1 < 1.0 && optim.beta2 > 0.0 && optim.beta2 < 1.0,
              "config: Adam betas must lie in (0, 1)");
    if (optim.cosine) {
        AGF_CHECK(optim.total_steps > 0, "config: cosine schedule needs total_steps > 0");
    }
    for (std::size_t s : bench.sizes) AGF_CHECK(s >= 1, "config: bench size must be >= 1");
    for (std::size_t w : bench.windows) AGF_CHECK(w >= 1, "config: bench window must be >= 1");
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.pipeline.height = 16;
    cfg.pipeline.width = 16;
    cfg.pipeline.channels = 16;
    cfg.pipeline.window = 4;
    cfg.pipeline.num_heads = 4;
    cfg.pipeline.gate_hidden = 8;
    cfg.scene.num_blobs = 4;
    cfg.scene.amp_min = 0.5;
    cfg.scene.amp_max = 1.5;
    cfg.scene.noise_sigma = 0.25;
    cfg.corruption.target_modality = Modality::lidar;
    cfg.corruption.kind = CorruptionKind::dropout;
    cfg.corruption.region = RegionRect{0, 0, 8, 8};
    cfg.train_steps = 400;
    cfg.holdout_scenes = 8;
    cfg.optim.lr = 1e-2;
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string() + ": cannot open config file");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }

    RunConfig cfg = default_run_config();
    try {
        if (j.contains("geometry")) {
            const json& g = j.at("geometry");
            cfg.pipeline.height = get_or<std::size_t>(g, "height", cfg.pipeline.height);
            cfg.pipeline.width = get_or<std::size_t>(g, "width", cfg.pipeline.width);
            cfg.pipeline.channels = get_or<std::size_t>(g, "channels", cfg.pipeline.channels);
            cfg.pipeline.window = get_or<std::size_t>(g, "window", cfg.pipeline.window);
            cfg.pipeline.num_heads = get_or<std::size_t>(g, "heads", cfg.pipeline.num_heads);
            cfg.pipeline.sae_depth = get_or<std::size_t>(g, "sae_depth", cfg.pipeline.sae_depth);
            cfg.pipeline.ffn_ratio = get_or<std::size_t>(g, "ffn_ratio", cfg.pipeline.ffn_ratio);
            cfg.pipeline.gate_hidden =
                get_or<std::size_t>(g, "gate_hidden", cfg.pipeline.gate_hidden);
            cfg.pipeline.ln_eps = get_or<double>(g, "ln_eps", cfg.pipeline.ln_eps);
            cfg.pipeline.bn_eps = get_or<double>(g, "bn_eps", cfg.pipeline.bn_eps);
            cfg.pipeline.bn_momentum = get_or<double>(g, "bn_momentum", cfg.pipeline.bn_momentum);
            cfg.pipeline.cross_residual =
                get_or<bool>(g, "cross_residual", cfg.pipeline.cross_residual);
        }
        if (j.contains("seeds")) {
            const json& s = j.at("seeds");
            cfg.init_seed = get_or<std::uint64_t>(s, "init", cfg.init_seed);
            cfg.stream_seed = get_or<std::uint64_t>(s, "stream", cfg.stream_seed);
        }
        if (j.contains("optim")) {
            const json& o = j.at("optim");
            cfg.optim.lr = get_or<double>(o, "lr", cfg.optim.lr);
            cfg.optim.beta1 = get_or<double>(o, "beta1", cfg.optim.beta1);
            cfg.optim.beta2 = get_or<double>(o, "beta2", cfg.optim.beta2);
            cfg.optim.eps = get_or<double>(o, "eps", cfg.optim.eps);
            cfg.optim.weight_decay = get_or<double>(o, "weight_decay", cfg.optim.weight_decay);
            cfg.optim.cosine = get_or<bool>(o, "cosine", cfg.optim.cosine);
            cfg.optim.total_steps = get_or<std::size_t>(o, "total_steps", cfg.optim.total_steps);
        }
        if (j.contains("experiment")) {
            const json& e = j.at("experiment");
            cfg.train_steps = get_or<std::size_t>(e, "train_steps", cfg.train_steps);
            cfg.holdout_scenes = get_or<std::size_t>(e, "holdout_scenes", cfg.holdout_scenes);
            if (e.contains("scene")) {
                const json& sc = e.at("scene");
                cfg.scene.num_blobs = get_or<std::size_t>(sc, "blobs", cfg.scene.num_blobs);
                cfg.scene.amp_min = get_or<double>(sc, "amp_min", cfg.scene.amp_min);
                cfg.scene.amp_max = get_or<double>(sc, "amp_max", cfg.scene.amp_max);
                cfg.scene.noise_sigma = get_or<double>(sc, "noise_sigma", cfg.scene.noise_sigma);
            }
            if (e.contains("corruption")) {
                const json& co = e.at("corruption");
                cfg.corruption.target_modality = modality_from_string(
                    get_or<std::string>(co, "modality", "lidar"));
                cfg.corruption.kind =
                    kind_from_string(get_or<std::string>(co, "kind", "dropout"));
                cfg.corruption.region.row0 = get_or<std::size_t>(co, "row0", 0);
                cfg.corruption.region.col0 = get_or<std::size_t>(co, "col0", 0);
                cfg.corruption.region.rows =
                    get_or<std::size_t>(co, "rows", cfg.corruption.region.rows);
                cfg.corruption.region.cols =
                    get_or<std::size_t>(co, "cols", cfg.corruption.region.cols);
                cfg.corruption.noise_sigma =
                    get_or<double>(co, "noise_sigma", cfg.corruption.noise_sigma);
                cfg.corruption.blur_radius =
                    get_or<std::size_t>(co, "blur_radius", cfg.corruption.blur_radius);
                cfg.corruption.noise_seed =
                    get_or<std::uint64_t>(co, "noise_seed", cfg.corruption.noise_seed);
            }
        }
        if (j.contains("bench")) {
            const json& b = j.at("bench");
            if (b.contains("sizes")) cfg.bench.sizes = b.at("sizes").get<std::vector<std::size_t>>();
            if (b.contains("windows")) {
                cfg.bench.windows = b.at("windows").get<std::vector<std::size_t>>();
            }
        }
        cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }

    // Scene geometry always mirrors the pipeline geometry.
    cfg.scene.height = cfg.pipeline.height;
    cfg.scene.width = cfg.pipeline.width;
    cfg.scene.channels = cfg.pipeline.channels;

    try {
        cfg.validate();
    } catch (const ContractViolation& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return cfg;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
    json j;
    j["geometry"] = {
        {"height", cfg.pipeline.height},
        {"width", cfg.pipeline.width},
        {"channels", cfg.pipeline.channels},
        {"window", cfg.pipeline.window},
        {"heads", cfg.pipeline.num_heads},
        {"sae_depth", cfg.pipeline.sae_depth},
        {"ffn_ratio", cfg.pipeline.ffn_ratio},
        {"gate_hidden", cfg.pipeline.gate_hidden},
        {"ln_eps", cfg.pipeline.ln_eps},
        {"bn_eps", cfg.pipeline.bn_eps},
        {"bn_momentum", cfg.pipeline.bn_momentum},
        {"cross_residual", cfg.pipeline.cross_residual},
    };
    j["seeds"] = {{"init", cfg.init_seed}, {"stream", cfg.stream_seed}};
    j["optim"] = {
        {"lr", cfg.optim.lr},
        {"beta1", cfg.optim.beta1},
        {"beta2", cfg.optim.beta2},
        {"eps", cfg.optim.eps},
        {"weight_decay", cfg.optim.weight_decay},
        {"cosine", cfg.optim.cosine},
        {"total_steps", cfg.optim.total_steps},
    };
    j["experiment"] = {
        {"train_steps", cfg.train_steps},
        {"holdout_scenes", cfg.holdout_scenes},
        {"scene",
         {{"blobs", cfg.scene.num_blobs},
          {"amp_min", cfg.scene.amp_min},
          {"amp_max", cfg.scene.amp_max},
          {"noise_sigma", cfg.scene.noise_sigma}}},
        {"corruption",
         {{"modality", to_string(cfg.corruption.target_modality)},
          {"kind", kind_to_string(cfg.corruption.kind)},
          {"row0", cfg.corruption.region.row0},
          {"col0", cfg.corruption.region.col0},
          {"rows", cfg.corruption.region.rows},
          {"cols", cfg.corruption.region.cols},
          {"noise_sigma", cfg.corruption.noise_sigma},
          {"blur_radius", cfg.corruption.blur_radius},
          {"noise_seed", cfg.corruption.noise_seed}}},
    };
    j["bench"] = {{"sizes", cfg.bench.sizes}, {"windows", cfg.bench.windows}};
    j["out_dir"] = cfg.out_dir;

    std::ofstream out(path);
    if (!out) throw ParseError(path.string() + ": cannot open for writing");
    out << j.dump(2) << "\n";
}

}  // namespace agf
