#pragma once

#include <memory>
#include <vector>

#include "agf/kernels.hpp"
#include "agf/tensor.hpp"
#include "agf/windowing.hpp"

namespace agf {

/// Handle to a value node on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
};

namespace detail {
struct OpRecord;
}

/// Record of executed primitive ops enabling reverse-mode gradient
/// accumulation. The op set is small and fixed; each op knows its own
/// backward rule. backward() traverses in exact reverse execution order and
/// accumulates additively into shared inputs, so evaluation is deterministic.
///
/// A Tape is confined to one logical thread; distinct tapes may run
/// concurrently.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// New input/parameter node holding `value`.
    Var leaf(Tensor value);

    const Tensor& value(Var v) const;
    /// Gradient of the last backward()'s loss w.r.t. node v (zeros if unused).
    const Tensor& grad(Var v) const;

    std::size_t num_ops() const { return ops_.size(); }

    /// Reverse pass from a scalar loss node, seed gradient 1. Resets all
    /// gradient buffers first; may be called repeatedly.
    void backward(Var loss);

    /// Gradcheck self-test hook: scales the gradients produced by every
    /// affine op's backward rule by `scale` (1.0 = no fault).
    void set_backward_fault(double scale) { fault_scale_ = scale; }
    double backward_fault() const { return fault_scale_; }

    // Primitive differentiable ops. Forward math is delegated to the plain
    // kernels where one exists, so instrumentation (MAC counters) and
    // numerics are shared with the non-tape path.

    Var add(Var a, Var b);
    Var axpby(Var a, Var b, double alpha, double beta);  // alpha*a + beta*b
    Var scale(Var a, double c);
    Var mul(Var a, Var b);  // elementwise, same shape
    Var affine(Var x, Var w, Var b);
    Var layer_norm(Var x, Var gamma, Var beta, double eps);
    Var batch_norm_train(Var x, Var gamma, Var beta, Tensor* running_mean,
                         Tensor* running_var, double momentum, double eps);
    Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& var,
                        double eps);
    Var relu(Var x);
    Var sigmoid(Var x);
    Var concat_channels(const std::vector<Var>& parts);

    /// Batched multi-head attention core over windows: softmax(QK^T/sqrt(dk))V
    /// per window and head. Q [N, Tq, C], K and V [N, Tkv, C]; heads split C.
    /// Projections are not included (compose with affine).
    Var mha_core(Var q, Var k, Var v, std::size_t num_heads);

    /// y = g (.) a + (1 - g) (.) b with g [..., 1] broadcast over channels.
    /// Computed as b + g*(a-b), which keeps the result inside [min, max].
    Var gate_blend(Var a, Var b, Var g);

    /// Fixed-gate variant with constant g in [0, 1]; endpoints return the
    /// corresponding input bit-exactly.
    Var blend_const(Var a, Var b, double g);

    Var partition_windows(Var x, std::size_t h);      // [H,W,C] -> [N_win,T,C]
    Var merge_windows(Var x, const WindowGeometry& g);  // inverse
    Var reshape(Var x, std::vector<std::size_t> shape);

    Var sum(Var x);                      // scalar [1]
    Var mse(Var x, const Tensor& target);  // mean((x-target)^2), scalar [1]

private:
    friend struct detail::OpRecord;
    Var push_node(Tensor value);
    Tensor& grad_mut(std::size_t id) { return grads_[id]; }
    const Tensor& val(std::size_t id) const { return values_[id]; }

    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::vector<std::unique_ptr<detail::OpRecord>> ops_;
    double fault_scale_ = 1.0;
};

}  // namespace agf
