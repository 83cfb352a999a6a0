#include "agf/gated_fusion.hpp"

namespace agf {

GateNetParams GateNetParams::zeros(std::size_t c, std::size_t c_mid) {
    AGF_CHECK(c_mid >= 1, "GateNetParams: C_mid must be >= 1");
    GateNetParams p;
    p.w1 = Tensor({2 * c, c_mid});
    p.b1 = Tensor({c_mid});
    p.w2 = Tensor({c_mid, 1});
    p.b2 = Tensor({1});
    return p;
}

GateMap::GateMap(Tensor t) : tensor(std::move(t)) {
    AGF_CHECK(tensor.rank() == 3 && tensor.dim(2) == 1, "GateMap: tensor must be [H, W, 1]");
}

GateVars load_gate(Tape& t, const GateNetParams& p) {
    GateVars v;
    v.w1 = t.leaf(p.w1);
    v.b1 = t.leaf(p.b1);
    v.w2 = t.leaf(p.w2);
    v.b2 = t.leaf(p.b2);
    return v;
}

GateVars load_gate(VarSource& b, const std::string& prefix) {
    GateVars v;
    v.w1 = b.load(prefix + ".w1");
    v.b1 = b.load(prefix + ".b1");
    v.w2 = b.load(prefix + ".w2");
    v.b2 = b.load(prefix + ".b2");
    return v;
}

void declare_gate_params(ParamStore& store, const std::string& prefix, std::size_t c,
                         std::size_t c_mid) {
    AGF_CHECK(c_mid >= 1, "declare_gate_params: C_mid must be >= 1");
    store.add(prefix + ".w1", Tensor({2 * c, c_mid}));
    store.add(prefix + ".b1", Tensor({c_mid}));
    store.add(prefix + ".w2", Tensor({c_mid, 1}));
    store.add(prefix + ".b2", Tensor({1}));
}

Var compute_gate(Tape& t, Var a_c2l, Var a_l2c, const GateVars& p) {
    const Tensor& a = t.value(a_c2l);
    const Tensor& b = t.value(a_l2c);
    AGF_CHECK(a.same_shape(b), "compute_gate: input shape mismatch");
    AGF_CHECK(2 * a.last_dim() == t.value(p.w1).dim(0),
              "compute_gate: gate net expects 2C input channels");

    Var both = t.concat_channels({a_c2l, a_l2c});
    Var hidden = t.relu(t.affine(both, p.w1, p.b1));
    return t.sigmoid(t.affine(hidden, p.w2, p.b2));
}

GateMap compute_gate(const BevMap& a_c2l, const BevMap& a_l2c, const GateNetParams& p) {
    Tape t;
    Var a = t.leaf(a_c2l.tensor);
    Var b = t.leaf(a_l2c.tensor);
    Var g = compute_gate(t, a, b, load_gate(t, p));
    return GateMap(t.value(g));
}

BevMap fuse_gated(const BevMap& a_c2l, const BevMap& a_l2c, const GateMap& g) {
    AGF_CHECK(a_c2l.tensor.same_shape(a_l2c.tensor), "fuse_gated: input shape mismatch");
    AGF_CHECK(g.height() == a_c2l.height() && g.width() == a_c2l.width(),
              "fuse_gated: gate map shape mismatch");

    Tape t;
    Var out = t.gate_blend(t.leaf(a_c2l.tensor), t.leaf(a_l2c.tensor), t.leaf(g.tensor));
    return BevMap(t.value(out), Modality::fused);
}

GateMap fixed_gate(double g, std::size_t H, std::size_t W) {
    AGF_CHECK(g >= 0.0 && g <= 1.0, "fixed_gate: g must lie in [0, 1]");
    return GateMap(Tensor::full({H, W, 1}, g));
}

BevMap conv_fuser_baseline(const BevMap& f_cam, const BevMap& f_lidar, const Tensor& w,
                           const Tensor& b) {
    AGF_CHECK(f_cam.tensor.same_shape(f_lidar.tensor), "conv_fuser: input shape mismatch");
    const Tensor both = concat_channels(std::vector<Tensor>{f_cam.tensor, f_lidar.tensor});
    return BevMap(conv1x1(both, w, b), Modality::fused);
}

}  // namespace agf
