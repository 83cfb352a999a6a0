#include "agf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "agf/bev.hpp"

namespace agf {

std::string to_string(Modality m) {
    switch (m) {
        case Modality::camera: return "camera";
        case Modality::lidar: return "lidar";
        case Modality::fused: return "fused";
    }
    return "unknown";
}

BevMap::BevMap(Tensor t, Modality m) : tensor(std::move(t)), modality(m) {
    AGF_CHECK(tensor.rank() == 3, "BevMap: tensor must be [H, W, C]");
}

NormParams NormParams::identity(std::size_t c, double eps) {
    NormParams p;
    p.gamma = Tensor::full({c}, 1.0);
    p.beta = Tensor::zeros({c});
    p.eps = eps;
    return p;
}

BatchNormParams BatchNormParams::identity(std::size_t c, double eps) {
    BatchNormParams p;
    p.gamma = Tensor::full({c}, 1.0);
    p.beta = Tensor::zeros({c});
    p.running_mean = Tensor::zeros({c});
    p.running_var = Tensor::full({c}, 1.0);
    p.eps = eps;
    return p;
}

namespace {

thread_local MacCounts g_mac_counts;
thread_local double g_relu_kink = std::numeric_limits<double>::infinity();

}  // namespace

MacCounts& mac_counts() { return g_mac_counts; }
void reset_mac_counts() { g_mac_counts = MacCounts{}; }

double relu_kink_distance() { return g_relu_kink; }
void reset_relu_kink_distance() { g_relu_kink = std::numeric_limits<double>::infinity(); }

Tensor layer_norm(const Tensor& x, const NormParams& p) {
    const std::size_t c = x.last_dim();
    AGF_CHECK(p.gamma.rank() == 1 && p.gamma.size() == c, "layer_norm: gamma length != C");
    AGF_CHECK(p.beta.rank() == 1 && p.beta.size() == c, "layer_norm: beta length != C");
    AGF_CHECK(p.eps > 0.0, "layer_norm: eps must be > 0");

    const std::size_t rows = x.rows_flat();
    Tensor y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * c;
        double* yr = y.data() + r * c;
        double mean = 0.0;
        for (std::size_t i = 0; i < c; ++i) mean += xr[i];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            const double d = xr[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + p.eps);
        for (std::size_t i = 0; i < c; ++i) {
            yr[i] = (xr[i] - mean) * inv * p.gamma[i] + p.beta[i];
        }
    }
    return y;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    AGF_CHECK(axis < x.rank(), "softmax: axis out of range");
    const std::size_t n = x.dim(axis);

    // View the tensor as [outer, n, inner]; softmax runs along the middle.
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

    Tensor y(x.shape());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[base + i * inner]);
            double denom = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = std::exp(x[base + i * inner] - mx);
                y[base + i * inner] = e;
                denom += e;
            }
            for (std::size_t i = 0; i < n; ++i) y[base + i * inner] /= denom;
        }
    }
    return y;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    AGF_CHECK(x.rank() >= 2, "affine: input must have rank >= 2");
    AGF_CHECK(w.rank() == 2, "affine: W must be [C_in, C_out]");
    const std::size_t cin = x.last_dim();
    AGF_CHECK(w.dim(0) == cin, "affine: inner dimensions disagree");
    const std::size_t cout = w.dim(1);
    AGF_CHECK(b.rank() == 1 && b.size() == cout, "affine: bias length != C_out");

    const std::size_t rows = x.rows_flat();
    std::vector<std::size_t> out_shape = x.shape();
    out_shape.back() = cout;
    Tensor y(std::move(out_shape));

    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cin;
        double* yr = y.data() + r * cout;
        for (std::size_t j = 0; j < cout; ++j) yr[j] = b[j];
        for (std::size_t i = 0; i < cin; ++i) {
            const double xi = xr[i];
            const double* wrow = w.data() + i * cout;
            for (std::size_t j = 0; j < cout; ++j) yr[j] += xi * wrow[j];
        }
    }
    g_mac_counts.affine += static_cast<std::uint64_t>(rows) * cin * cout;
    return y;
}

Tensor conv1x1(const Tensor& f, const Tensor& w, const Tensor& b) {
    AGF_CHECK(f.rank() == 3, "conv1x1: input must be [H, W, C_in]");
    return affine(f, w, b);
}

Tensor batch_norm(const Tensor& f, BatchNormParams& p, BnMode mode) {
    const std::size_t c = f.last_dim();
    AGF_CHECK(p.gamma.size() == c && p.beta.size() == c, "batch_norm: gamma/beta length != C");
    AGF_CHECK(p.running_mean.size() == c && p.running_var.size() == c,
              "batch_norm: running stats length != C");
    AGF_CHECK(p.eps > 0.0, "batch_norm: eps must be > 0");

    const std::size_t rows = f.rows_flat();
    Tensor y(f.shape());

    if (mode == BnMode::eval) {
        for (std::size_t j = 0; j < c; ++j) {
            const double inv = 1.0 / std::sqrt(p.running_var[j] + p.eps);
            const double m = p.running_mean[j];
            for (std::size_t r = 0; r < rows; ++r) {
                y[r * c + j] = (f[r * c + j] - m) * inv * p.gamma[j] + p.beta[j];
            }
        }
        return y;
    }

    for (std::size_t j = 0; j < c; ++j) {
        double mean = 0.0;
        for (std::size_t r = 0; r < rows; ++r) mean += f[r * c + j];
        mean /= static_cast<double>(rows);
        double var = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double d = f[r * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(rows);  // biased
        const double inv = 1.0 / std::sqrt(var + p.eps);
        for (std::size_t r = 0; r < rows; ++r) {
            y[r * c + j] = (f[r * c + j] - mean) * inv * p.gamma[j] + p.beta[j];
        }
        p.running_mean[j] = (1.0 - p.momentum) * p.running_mean[j] + p.momentum * mean;
        p.running_var[j] = (1.0 - p.momentum) * p.running_var[j] + p.momentum * var;
    }
    return y;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        g_relu_kink = std::min(g_relu_kink, std::abs(v));
        y[i] = v > 0.0 ? v : 0.0;
    }
    return y;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    }
    return y;
}

Tensor concat_channels(std::span<const Tensor> parts) {
    AGF_CHECK(!parts.empty(), "concat_channels: no inputs");
    const Tensor& first = parts[0];
    std::size_t total_c = 0;
    for (const Tensor& t : parts) {
        AGF_CHECK(t.rank() == first.rank(), "concat_channels: rank mismatch");
        for (std::size_t i = 0; i + 1 < t.rank(); ++i) {
            AGF_CHECK(t.dim(i) == first.dim(i), "concat_channels: leading dims mismatch");
        }
        total_c += t.last_dim();
    }

    std::vector<std::size_t> out_shape = first.shape();
    out_shape.back() = total_c;
    Tensor y(std::move(out_shape));

    const std::size_t rows = first.rows_flat();
    for (std::size_t r = 0; r < rows; ++r) {
        double* yr = y.data() + r * total_c;
        std::size_t off = 0;
        for (const Tensor& t : parts) {
            const std::size_t c = t.last_dim();
            const double* tr = t.data() + r * c;
            std::copy(tr, tr + c, yr + off);
            off += c;
        }
    }
    return y;
}

}  // namespace agf
