#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "agf/rng.hpp"
#include "agf/tape.hpp"
#include "agf/tensor.hpp"

namespace agf {

/// Named parameter tensors with matching gradient buffers and optimizer
/// moments. Iteration follows insertion order (deterministic); serialization
/// sorts names lexicographically.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
        Tensor m;  // Adam first moment
        Tensor v;  // Adam second moment
        bool trainable = true;
    };

    /// Register a parameter; names must be unique.
    void add(const std::string& name, Tensor value, bool trainable = true);

    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;
    Tensor& value(const std::string& name) { return entry(name).value; }
    const Tensor& value(const std::string& name) const { return entry(name).value; }
    Tensor& grad(const std::string& name) { return entry(name).grad; }

    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    /// Names in lexicographic order (the WeightsFile ordering).
    std::vector<std::string> sorted_names() const;

    void zero_grads();
    bool grads_populated() const { return grads_populated_; }
    void mark_grads_populated() { grads_populated_ = true; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    bool grads_populated_ = false;
};

/// Adam-with-decoupled-weight-decay settings plus an optional cosine
/// learning-rate schedule: lr_t = lr * 0.5 * (1 + cos(pi * t / total_steps)).
struct OptimConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool cosine = false;
    std::size_t total_steps = 0;  // required when cosine is enabled
};

/// Effective learning rate at step t (1-based).
double scheduled_lr(const OptimConfig& cfg, std::size_t step_index);

/// One decoupled-weight-decay Adam update over all trainable parameters.
/// step_index is 1-based (bias correction uses it directly). Throws if
/// gradients have not been populated since the last step.
void adam_step(ParamStore& store, const OptimConfig& cfg, std::size_t step_index);

/// Source of tape Vars for named parameters. Models built against this
/// interface run unchanged whether parameters come from a ParamStore or from
/// externally supplied leaves (as the gradient checker needs).
class VarSource {
public:
    virtual ~VarSource() = default;
    virtual Var load(const std::string& name) = 0;
};

/// Store-backed VarSource: loading a parameter creates a leaf Var holding its
/// current value and records the binding so collect_grads can route tape
/// gradients back.
class Binder : public VarSource {
public:
    explicit Binder(Tape& tape, ParamStore& store) : tape_(tape), store_(store) {}

    Var load(const std::string& name) override;

    /// Accumulate tape gradients into the store's grad buffers. Call after
    /// Tape::backward.
    void collect_grads();

private:
    Tape& tape_;
    ParamStore& store_;
    std::vector<std::pair<Var, std::string>> bindings_;
};

/// Seeded Xavier-uniform initialization for a [fan_in, fan_out] matrix.
Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, rng::Stream& stream);

}  // namespace agf
