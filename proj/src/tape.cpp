#include "agf/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace agf {

namespace detail {

struct OpRecord {
    virtual ~OpRecord() = default;
    virtual void backward(Tape& t) const = 0;

protected:
    static Tensor& grad(Tape& t, std::size_t id) { return t.grad_mut(id); }
    static const Tensor& val(const Tape& t, std::size_t id) { return t.val(id); }
};

namespace {

struct AxpbyOp final : OpRecord {
    std::size_t a, b, out;
    double alpha, beta;
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        Tensor& ga = grad(t, a);
        Tensor& gb = grad(t, b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += alpha * g[i];
            gb[i] += beta * g[i];
        }
    }
};

struct ScaleOp final : OpRecord {
    std::size_t a, out;
    double c;
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        Tensor& ga = grad(t, a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    }
};

struct MulOp final : OpRecord {
    std::size_t a, b, out;
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        const Tensor& av = val(t, a);
        const Tensor& bv = val(t, b);
        Tensor& ga = grad(t, a);
        Tensor& gb = grad(t, b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bv[i];
            gb[i] += g[i] * av[i];
        }
    }
};

struct AffineOp final : OpRecord {
    std::size_t x, w, b, out;
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        const Tensor& xv = val(t, x);
        const Tensor& wv = val(t, w);
        Tensor& gx = grad(t, x);
        Tensor& gw = grad(t, w);
        Tensor& gb = grad(t, b);

        const std::size_t cin = xv.last_dim();
        const std::size_t cout = wv.dim(1);
        const std::size_t rows = xv.rows_flat();
        const double fault = t.backward_fault();

        for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * cout;
            const double* xr = xv.data() + r * cin;
            double* gxr = gx.data() + r * cin;
            for (std::size_t i = 0; i < cin; ++i) {
                const double* wrow = wv.data() + i * cout;
                double acc = 0.0;
                for (std::size_t j = 0; j < cout; ++j) acc += gr[j] * wrow[j];
                gxr[i] += fault * acc;
                double* gwrow = gw.data() + i * cout;
                const double xi = xr[i];
                for (std::size_t j = 0; j < cout; ++j) gwrow[j] += fault * xi * gr[j];
            }
            for (std::size_t j = 0; j < cout; ++j) gb[j] += fault * gr[j];
        }
    }
};

struct LayerNormOp final : OpRecord {
    std::size_t x, gamma, beta, out;
    Tensor xhat;     // normalized input, same shape as x
    Tensor inv_std;  // [rows]
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        const Tensor& gam = val(t, gamma);
        Tensor& gx = grad(t, x);
        Tensor& ggam = grad(t, gamma);
        Tensor& gbet = grad(t, beta);

        const std::size_t c = gam.size();
        const std::size_t rows = xhat.rows_flat();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * c;
            const double* xh = xhat.data() + r * c;
            double* gxr = gx.data() + r * c;
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t i = 0; i < c; ++i) {
                const double dxh = gr[i] * gam[i];
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * xh[i];
                ggam[i] += gr[i] * xh[i];
                gbet[i] += gr[i];
            }
            mean_dxhat /= static_cast<double>(c);
            mean_dxhat_xhat /= static_cast<double>(c);
            const double inv = inv_std[r];
            for (std::size_t i = 0; i < c; ++i) {
                const double dxh = gr[i] * gam[i];
                gxr[i] += inv * (dxh - mean_dxhat - xh[i] * mean_dxhat_xhat);
            }
        }
    }
};

struct BatchNormTrainOp final : OpRecord {
    std::size_t x, gamma, beta, out;
    Tensor xhat;     // same shape as x
    Tensor inv_std;  // [C]
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        const Tensor& gam = val(t, gamma);
        Tensor& gx = grad(t, x);
        Tensor& ggam = grad(t, gamma);
        Tensor& gbet = grad(t, beta);

        const std::size_t c = gam.size();
        const std::size_t rows = xhat.rows_flat();
        const double n = static_cast<double>(rows);
        for (std::size_t j = 0; j < c; ++j) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                const double dxh = g[r * c + j] * gam[j];
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * xhat[r * c + j];
                ggam[j] += g[r * c + j] * xhat[r * c + j];
                gbet[j] += g[r * c + j];
            }
            mean_dxhat /= n;
            mean_dxhat_xhat /= n;
            for (std::size_t r = 0; r < rows; ++r) {
                const double dxh = g[r * c + j] * gam[j];
                gx[r * c + j] += inv_std[j] * (dxh - mean_dxhat - xhat[r * c + j] * mean_dxhat_xhat);
            }
        }
    }
};

struct BatchNormEvalOp final : OpRecord {
    std::size_t x, gamma, beta, out;
    Tensor xhat;     // (x - mean) * inv, same shape as x
    Tensor inv_std;  // [C]
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        const Tensor& gam = val(t, gamma);
        Tensor& gx = grad(t, x);
        Tensor& ggam = grad(t, gamma);
        Tensor& gbet = grad(t, beta);

        const std::size_t c = gam.size();
        const std::size_t rows = xhat.rows_flat();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
                const double gi = g[r * c + j];
                gx[r * c + j] += gi * gam[j] * inv_std[j];
                ggam[j] += gi * xhat[r * c + j];
                gbet[j] += gi;
            }
        }
    }
};

struct ReluOp final : OpRecord {
    std::size_t x, out;
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        const Tensor& xv = val(t, x);
        Tensor& gx = grad(t, x);
        // subgradient 0 at exactly 0
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > 0.0 ? g[i] : 0.0;
    }
};

struct SigmoidOp final : OpRecord {
    std::size_t x, out;
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        const Tensor& yv = val(t, out);
        Tensor& gx = grad(t, x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
    }
};

struct ConcatOp final : OpRecord {
    std::vector<std::size_t> parts;
    std::size_t out;
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        const std::size_t total_c = g.last_dim();
        const std::size_t rows = g.rows_flat();
        std::size_t off = 0;
        for (std::size_t p : parts) {
            Tensor& gp = grad(t, p);
            const std::size_t c = gp.last_dim();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = g.data() + r * total_c + off;
                double* gpr = gp.data() + r * c;
                for (std::size_t i = 0; i < c; ++i) gpr[i] += gr[i];
            }
            off += c;
        }
    }
};

struct MhaCoreOp final : OpRecord {
    std::size_t q, k, v, out;
    std::size_t heads;
    Tensor probs;  // [N, heads, Tq, Tkv]
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        const Tensor& qv = val(t, q);
        const Tensor& kv = val(t, k);
        const Tensor& vv = val(t, v);
        Tensor& gq = grad(t, q);
        Tensor& gk = grad(t, k);
        Tensor& gv = grad(t, v);

        const std::size_t n = qv.dim(0), tq = qv.dim(1), c = qv.dim(2);
        const std::size_t tkv = kv.dim(1);
        const std::size_t dk = c / heads;
        const double s = 1.0 / std::sqrt(static_cast<double>(dk));

        std::vector<double> dp(tkv), ds(tkv);
        for (std::size_t w = 0; w < n; ++w) {
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t hoff = h * dk;
                const double* pw = probs.data() + ((w * heads + h) * tq) * tkv;
                for (std::size_t i = 0; i < tq; ++i) {
                    const double* gi = g.data() + (w * tq + i) * c + hoff;
                    const double* pi = pw + i * tkv;
                    // dP = dO V^T ; dV += P^T dO
                    for (std::size_t j = 0; j < tkv; ++j) {
                        const double* vj = vv.data() + (w * tkv + j) * c + hoff;
                        double* gvj = gv.data() + (w * tkv + j) * c + hoff;
                        double acc = 0.0;
                        for (std::size_t d = 0; d < dk; ++d) {
                            acc += gi[d] * vj[d];
                            gvj[d] += pi[j] * gi[d];
                        }
                        dp[j] = acc;
                    }
                    // softmax backward per row
                    double dot = 0.0;
                    for (std::size_t j = 0; j < tkv; ++j) dot += dp[j] * pi[j];
                    for (std::size_t j = 0; j < tkv; ++j) ds[j] = pi[j] * (dp[j] - dot);
                    // dQ += s * dS K ; dK += s * dS^T Q
                    const double* qi = qv.data() + (w * tq + i) * c + hoff;
                    double* gqi = gq.data() + (w * tq + i) * c + hoff;
                    for (std::size_t j = 0; j < tkv; ++j) {
                        const double ds_j = s * ds[j];
                        const double* kj = kv.data() + (w * tkv + j) * c + hoff;
                        double* gkj = gk.data() + (w * tkv + j) * c + hoff;
                        for (std::size_t d = 0; d < dk; ++d) {
                            gqi[d] += ds_j * kj[d];
                            gkj[d] += ds_j * qi[d];
                        }
                    }
                }
            }
        }
    }
};

struct GateBlendOp final : OpRecord {
    std::size_t a, b, g, out;
    void backward(Tape& t) const override {
        const Tensor& go = grad(t, out);
        const Tensor& av = val(t, a);
        const Tensor& bv = val(t, b);
        const Tensor& gv = val(t, g);
        Tensor& ga = grad(t, a);
        Tensor& gb = grad(t, b);
        Tensor& gg = grad(t, g);

        const std::size_t c = av.last_dim();
        const std::size_t rows = av.rows_flat();
        for (std::size_t r = 0; r < rows; ++r) {
            const double gr = gv[r];
            double acc = 0.0;
            for (std::size_t i = 0; i < c; ++i) {
                const std::size_t idx = r * c + i;
                ga[idx] += go[idx] * gr;
                gb[idx] += go[idx] * (1.0 - gr);
                acc += go[idx] * (av[idx] - bv[idx]);  // dY/dg = a - b
            }
            gg[r] += acc;
        }
    }
};

struct BlendConstOp final : OpRecord {
    std::size_t a, b, out;
    double g;
    void backward(Tape& t) const override {
        const Tensor& go = grad(t, out);
        Tensor& ga = grad(t, a);
        Tensor& gb = grad(t, b);
        for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += g * go[i];
            gb[i] += (1.0 - g) * go[i];
        }
    }
};

// Used for partition (forward = true) and merge (forward = false).
struct WindowPermuteOp final : OpRecord {
    std::size_t x, out;
    WindowGeometry geom;
    std::size_t channels;
    bool to_windows;
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        Tensor& gx = grad(t, x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t widx = partition_dest_index(geom, channels, i);
            if (to_windows) {
                gx[i] += g[widx];
            } else {
                gx[widx] += g[i];
            }
        }
    }
};

struct ReshapeOp final : OpRecord {
    std::size_t x, out;
    void backward(Tape& t) const override {
        const Tensor& g = grad(t, out);
        Tensor& gx = grad(t, x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
};

struct SumOp final : OpRecord {
    std::size_t x, out;
    void backward(Tape& t) const override {
        const double g = grad(t, out)[0];
        Tensor& gx = grad(t, x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    }
};

struct MseOp final : OpRecord {
    std::size_t x, out;
    Tensor target;
    void backward(Tape& t) const override {
        const double g = grad(t, out)[0];
        const Tensor& xv = val(t, x);
        Tensor& gx = grad(t, x);
        const double scale = 2.0 / static_cast<double>(xv.size());
        for (std::size_t i = 0; i < xv.size(); ++i) {
            gx[i] += g * scale * (xv[i] - target[i]);
        }
    }
};

}  // namespace
}  // namespace detail

Tape::Tape() = default;
Tape::~Tape() = default;

Var Tape::push_node(Tensor value) {
    values_.push_back(std::move(value));
    return Var{values_.size() - 1};
}

Var Tape::leaf(Tensor value) {
    AGF_CHECK(!value.empty(), "Tape::leaf: empty tensor");
    return push_node(std::move(value));
}

const Tensor& Tape::value(Var v) const {
    AGF_CHECK(v.valid() && v.id < values_.size(), "Tape::value: invalid var");
    return values_[v.id];
}

const Tensor& Tape::grad(Var v) const {
    AGF_CHECK(v.valid() && v.id < grads_.size(), "Tape::grad: no gradient for var (run backward)");
    return grads_[v.id];
}

void Tape::backward(Var loss) {
    AGF_CHECK(!ops_.empty(), "Tape::backward: empty tape");
    AGF_CHECK(loss.valid() && loss.id < values_.size(), "Tape::backward: invalid loss var");
    AGF_CHECK(values_[loss.id].size() == 1, "Tape::backward: loss must be scalar");

    grads_.clear();
    grads_.reserve(values_.size());
    for (const Tensor& v : values_) grads_.emplace_back(v.shape());
    grads_[loss.id][0] = 1.0;

    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)->backward(*this);
}

Var Tape::add(Var a, Var b) { return axpby(a, b, 1.0, 1.0); }

Var Tape::axpby(Var a, Var b, double alpha, double beta) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    AGF_CHECK(av.same_shape(bv), "axpby: shape mismatch");
    Tensor y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = alpha * av[i] + beta * bv[i];
    Var out = push_node(std::move(y));
    auto op = std::make_unique<detail::AxpbyOp>();
    op->a = a.id; op->b = b.id; op->out = out.id; op->alpha = alpha; op->beta = beta;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::scale(Var a, double c) {
    const Tensor& av = value(a);
    Tensor y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = c * av[i];
    Var out = push_node(std::move(y));
    auto op = std::make_unique<detail::ScaleOp>();
    op->a = a.id; op->out = out.id; op->c = c;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    AGF_CHECK(av.same_shape(bv), "mul: shape mismatch");
    Tensor y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    Var out = push_node(std::move(y));
    auto op = std::make_unique<detail::MulOp>();
    op->a = a.id; op->b = b.id; op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::affine(Var x, Var w, Var b) {
    Var out = push_node(agf::affine(value(x), value(w), value(b)));
    auto op = std::make_unique<detail::AffineOp>();
    op->x = x.id; op->w = w.id; op->b = b.id; op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& xv = value(x);
    const Tensor& gam = value(gamma);
    const Tensor& bet = value(beta);
    NormParams p{gam, bet, eps};
    Tensor y = agf::layer_norm(xv, p);

    // Save xhat and 1/std for the backward rule.
    const std::size_t c = xv.last_dim();
    const std::size_t rows = xv.rows_flat();
    auto op = std::make_unique<detail::LayerNormOp>();
    op->xhat = Tensor(xv.shape());
    op->inv_std = Tensor({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t i = 0; i < c; ++i) mean += xv[r * c + i];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            const double d = xv[r * c + i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        op->inv_std[r] = inv;
        for (std::size_t i = 0; i < c; ++i) op->xhat[r * c + i] = (xv[r * c + i] - mean) * inv;
    }

    Var out = push_node(std::move(y));
    op->x = x.id; op->gamma = gamma.id; op->beta = beta.id; op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::batch_norm_train(Var x, Var gamma, Var beta, Tensor* running_mean,
                           Tensor* running_var, double momentum, double eps) {
    const Tensor& xv = value(x);
    const Tensor& gam = value(gamma);
    const Tensor& bet = value(beta);
    const std::size_t c = xv.last_dim();
    AGF_CHECK(gam.size() == c && bet.size() == c, "batch_norm_train: gamma/beta length != C");
    AGF_CHECK(running_mean && running_var, "batch_norm_train: running stats required");
    AGF_CHECK(eps > 0.0, "batch_norm_train: eps must be > 0");

    const std::size_t rows = xv.rows_flat();
    auto op = std::make_unique<detail::BatchNormTrainOp>();
    op->xhat = Tensor(xv.shape());
    op->inv_std = Tensor({c});
    Tensor y(xv.shape());
    for (std::size_t j = 0; j < c; ++j) {
        double mean = 0.0;
        for (std::size_t r = 0; r < rows; ++r) mean += xv[r * c + j];
        mean /= static_cast<double>(rows);
        double var = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double d = xv[r * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(rows);
        const double inv = 1.0 / std::sqrt(var + eps);
        op->inv_std[j] = inv;
        for (std::size_t r = 0; r < rows; ++r) {
            const double xh = (xv[r * c + j] - mean) * inv;
            op->xhat[r * c + j] = xh;
            y[r * c + j] = xh * gam[j] + bet[j];
        }
        (*running_mean)[j] = (1.0 - momentum) * (*running_mean)[j] + momentum * mean;
        (*running_var)[j] = (1.0 - momentum) * (*running_var)[j] + momentum * var;
    }

    Var out = push_node(std::move(y));
    op->x = x.id; op->gamma = gamma.id; op->beta = beta.id; op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& var,
                          double eps) {
    const Tensor& xv = value(x);
    const Tensor& gam = value(gamma);
    const Tensor& bet = value(beta);
    const std::size_t c = xv.last_dim();
    AGF_CHECK(gam.size() == c && bet.size() == c, "batch_norm_eval: gamma/beta length != C");
    AGF_CHECK(mean.size() == c && var.size() == c, "batch_norm_eval: running stats length != C");
    AGF_CHECK(eps > 0.0, "batch_norm_eval: eps must be > 0");

    const std::size_t rows = xv.rows_flat();
    auto op = std::make_unique<detail::BatchNormEvalOp>();
    op->xhat = Tensor(xv.shape());
    op->inv_std = Tensor({c});
    Tensor y(xv.shape());
    for (std::size_t j = 0; j < c; ++j) {
        const double inv = 1.0 / std::sqrt(var[j] + eps);
        op->inv_std[j] = inv;
        for (std::size_t r = 0; r < rows; ++r) {
            const double xh = (xv[r * c + j] - mean[j]) * inv;
            op->xhat[r * c + j] = xh;
            y[r * c + j] = xh * gam[j] + bet[j];
        }
    }

    Var out = push_node(std::move(y));
    op->x = x.id; op->gamma = gamma.id; op->beta = beta.id; op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::relu(Var x) {
    Var out = push_node(agf::relu(value(x)));
    auto op = std::make_unique<detail::ReluOp>();
    op->x = x.id; op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::sigmoid(Var x) {
    Var out = push_node(agf::sigmoid(value(x)));
    auto op = std::make_unique<detail::SigmoidOp>();
    op->x = x.id; op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::concat_channels(const std::vector<Var>& parts) {
    AGF_CHECK(!parts.empty(), "concat_channels: no inputs");
    std::vector<Tensor> tensors;
    tensors.reserve(parts.size());
    for (Var p : parts) tensors.push_back(value(p));
    Var out = push_node(agf::concat_channels(tensors));
    auto op = std::make_unique<detail::ConcatOp>();
    for (Var p : parts) op->parts.push_back(p.id);
    op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::mha_core(Var q, Var k, Var v, std::size_t num_heads) {
    const Tensor& qv = value(q);
    const Tensor& kv = value(k);
    const Tensor& vv = value(v);
    AGF_CHECK(qv.rank() == 3 && kv.rank() == 3 && vv.rank() == 3,
              "mha_core: inputs must be [N, T, C]");
    const std::size_t n = qv.dim(0), tq = qv.dim(1), c = qv.dim(2);
    const std::size_t tkv = kv.dim(1);
    AGF_CHECK(kv.dim(0) == n && vv.dim(0) == n, "mha_core: window count mismatch");
    AGF_CHECK(kv.dim(2) == c && vv.dim(2) == c, "mha_core: channel mismatch");
    AGF_CHECK(vv.dim(1) == tkv, "mha_core: K/V token count mismatch");
    AGF_CHECK(num_heads >= 1 && c % num_heads == 0, "mha_core: C must divide by num_heads");

    const std::size_t dk = c / num_heads;
    const double s = 1.0 / std::sqrt(static_cast<double>(dk));

    auto op = std::make_unique<detail::MhaCoreOp>();
    op->probs = Tensor({n, num_heads, tq, tkv});
    Tensor out({n, tq, c});

    std::vector<double> row(tkv);
    for (std::size_t w = 0; w < n; ++w) {
        for (std::size_t h = 0; h < num_heads; ++h) {
            const std::size_t hoff = h * dk;
            for (std::size_t i = 0; i < tq; ++i) {
                const double* qi = qv.data() + (w * tq + i) * c + hoff;
                // scores
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < tkv; ++j) {
                    const double* kj = kv.data() + (w * tkv + j) * c + hoff;
                    double acc = 0.0;
                    for (std::size_t d = 0; d < dk; ++d) acc += qi[d] * kj[d];
                    row[j] = acc * s;
                    mx = std::max(mx, row[j]);
                }
                // softmax
                double denom = 0.0;
                for (std::size_t j = 0; j < tkv; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    denom += row[j];
                }
                double* pi = op->probs.data() + ((w * num_heads + h) * tq + i) * tkv;
                for (std::size_t j = 0; j < tkv; ++j) pi[j] = row[j] / denom;
                // mix values
                double* oi = out.data() + (w * tq + i) * c + hoff;
                for (std::size_t d = 0; d < dk; ++d) oi[d] = 0.0;
                for (std::size_t j = 0; j < tkv; ++j) {
                    const double* vj = vv.data() + (w * tkv + j) * c + hoff;
                    const double pij = pi[j];
                    for (std::size_t d = 0; d < dk; ++d) oi[d] += pij * vj[d];
                }
            }
        }
    }
    mac_counts().attn_score_mix += static_cast<std::uint64_t>(n) * 2 * tq * tkv * c;

    Var outv = push_node(std::move(out));
    op->q = q.id; op->k = k.id; op->v = v.id; op->out = outv.id; op->heads = num_heads;
    ops_.push_back(std::move(op));
    return outv;
}

Var Tape::gate_blend(Var a, Var b, Var g) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    const Tensor& gv = value(g);
    AGF_CHECK(av.same_shape(bv), "gate_blend: input shape mismatch");
    AGF_CHECK(gv.last_dim() == 1 && gv.rows_flat() == av.rows_flat(),
              "gate_blend: gate must be [..., 1] matching input positions");

    const std::size_t c = av.last_dim();
    Tensor y(av.shape());
    for (std::size_t r = 0; r < av.rows_flat(); ++r) {
        const double gr = gv[r];
        AGF_CHECK(gr >= 0.0 && gr <= 1.0, "gate_blend: gate entries must lie in [0, 1]");
        for (std::size_t i = 0; i < c; ++i) {
            const std::size_t idx = r * c + i;
            // b + g*(a-b) stays inside [min(a,b), max(a,b)]; endpoints are
            // special-cased so they reproduce the inputs bit-exactly.
            if (gr == 0.0) {
                y[idx] = bv[idx];
            } else if (gr == 1.0) {
                y[idx] = av[idx];
            } else {
                y[idx] = bv[idx] + gr * (av[idx] - bv[idx]);
            }
        }
    }
    Var out = push_node(std::move(y));
    auto op = std::make_unique<detail::GateBlendOp>();
    op->a = a.id; op->b = b.id; op->g = g.id; op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::blend_const(Var a, Var b, double g) {
    AGF_CHECK(g >= 0.0 && g <= 1.0, "blend_const: gate must lie in [0, 1]");
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    AGF_CHECK(av.same_shape(bv), "blend_const: shape mismatch");
    Tensor y(av.shape());
    if (g == 0.0) {
        y = bv;
    } else if (g == 1.0) {
        y = av;
    } else {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = bv[i] + g * (av[i] - bv[i]);
    }
    Var out = push_node(std::move(y));
    auto op = std::make_unique<detail::BlendConstOp>();
    op->a = a.id; op->b = b.id; op->out = out.id; op->g = g;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::partition_windows(Var x, std::size_t h) {
    const Tensor& xv = value(x);
    AGF_CHECK(xv.rank() == 3, "partition_windows: input must be [H, W, C]");
    const std::size_t H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
    if (h < 1 || H % h != 0 || W % h != 0) {
        throw WindowSizeError("partition_windows: map not divisible by window side");
    }
    WindowGeometry geom{H, W, h};
    Tensor y({geom.num_windows(), geom.tokens_per_window(), C});
    for (std::size_t i = 0; i < xv.size(); ++i) y[partition_dest_index(geom, C, i)] = xv[i];

    Var out = push_node(std::move(y));
    auto op = std::make_unique<detail::WindowPermuteOp>();
    op->x = x.id; op->out = out.id; op->geom = geom; op->channels = C; op->to_windows = true;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::merge_windows(Var x, const WindowGeometry& g) {
    const Tensor& xv = value(x);
    AGF_CHECK(xv.rank() == 3, "merge_windows: input must be [N_win, T, C]");
    AGF_CHECK(g.win >= 1 && g.map_h % g.win == 0 && g.map_w % g.win == 0,
              "merge_windows: inconsistent geometry");
    AGF_CHECK(xv.dim(0) == g.num_windows() && xv.dim(1) == g.tokens_per_window(),
              "merge_windows: token shape does not match geometry");
    const std::size_t C = xv.dim(2);
    Tensor y({g.map_h, g.map_w, C});
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[partition_dest_index(g, C, i)];

    Var out = push_node(std::move(y));
    auto op = std::make_unique<detail::WindowPermuteOp>();
    op->x = x.id; op->out = out.id; op->geom = g; op->channels = C; op->to_windows = false;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
    const Tensor& xv = value(x);
    AGF_CHECK(shape_product(shape) == xv.size(), "reshape: element count mismatch");
    Var out = push_node(Tensor(std::move(shape), xv.vec()));
    auto op = std::make_unique<detail::ReshapeOp>();
    op->x = x.id; op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::sum(Var x) {
    const Tensor& xv = value(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
    Var out = push_node(Tensor::scalar(acc));
    auto op = std::make_unique<detail::SumOp>();
    op->x = x.id; op->out = out.id;
    ops_.push_back(std::move(op));
    return out;
}

Var Tape::mse(Var x, const Tensor& target) {
    const Tensor& xv = value(x);
    AGF_CHECK(xv.same_shape(target), "mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double d = xv[i] - target[i];
        acc += d * d;
    }
    acc /= static_cast<double>(xv.size());
    Var out = push_node(Tensor::scalar(acc));
    auto op = std::make_unique<detail::MseOp>();
    op->x = x.id; op->out = out.id; op->target = target;
    ops_.push_back(std::move(op));
    return out;
}

}  // namespace agf
