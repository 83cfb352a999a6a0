#include "agf/params.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace agf {

void ParamStore::add(const std::string& name, Tensor value, bool trainable) {
    AGF_CHECK(!name.empty(), "ParamStore::add: empty name");
    AGF_CHECK(index_.find(name) == index_.end(), "ParamStore::add: duplicate name " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor(value.shape());
    e.m = Tensor(value.shape());
    e.v = Tensor(value.shape());
    e.value = std::move(value);
    e.trainable = trainable;
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = index_.find(name);
    AGF_CHECK(it != index_.end(), "ParamStore: unknown parameter " + name);
    return entries_[it->second];
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = index_.find(name);
    AGF_CHECK(it != index_.end(), "ParamStore: unknown parameter " + name);
    return entries_[it->second];
}

std::vector<std::string> ParamStore::sorted_names() const {
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const Entry& e : entries_) names.push_back(e.name);
    std::sort(names.begin(), names.end());
    return names;
}

void ParamStore::zero_grads() {
    for (Entry& e : entries_) {
        std::fill(e.grad.vec().begin(), e.grad.vec().end(), 0.0);
    }
    grads_populated_ = false;
}

double scheduled_lr(const OptimConfig& cfg, std::size_t step_index) {
    if (!cfg.cosine) return cfg.lr;
    AGF_CHECK(cfg.total_steps > 0, "scheduled_lr: cosine schedule needs total_steps > 0");
    const double t = static_cast<double>(std::min(step_index, cfg.total_steps));
    const double frac = t / static_cast<double>(cfg.total_steps);
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void adam_step(ParamStore& store, const OptimConfig& cfg, std::size_t step_index) {
    AGF_CHECK(step_index >= 1, "adam_step: step_index is 1-based");
    AGF_CHECK(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0,
              "adam_step: betas must lie in (0, 1)");
    AGF_CHECK(store.grads_populated(), "adam_step: gradients not populated");

    const double lr = scheduled_lr(cfg, step_index);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));

    for (ParamStore::Entry& e : store.entries()) {
        if (!e.trainable) continue;
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i];
            e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
            e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            e.value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * e.value[i]);
        }
    }
}

Var Binder::load(const std::string& name) {
    Var v = tape_.leaf(store_.value(name));
    bindings_.emplace_back(v, name);
    return v;
}

void Binder::collect_grads() {
    for (const auto& [var, name] : bindings_) {
        const Tensor& g = tape_.grad(var);
        Tensor& dst = store_.grad(name);
        AGF_CHECK(dst.same_shape(g), "collect_grads: gradient shape mismatch for " + name);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    store_.mark_grads_populated();
}

Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, rng::Stream& stream) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w({fan_in, fan_out});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = stream.uniform(-bound, bound);
    return w;
}

}  // namespace agf
