#include "agf/tensor.hpp"

#include <cmath>

namespace agf {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    AGF_CHECK(!shape_.empty(), "Tensor: rank-0 shape not allowed");
    for (std::size_t d : shape_) AGF_CHECK(d >= 1, "Tensor: dimensions must be >= 1");
    data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    AGF_CHECK(!shape_.empty(), "Tensor: rank-0 shape not allowed");
    for (std::size_t d : shape_) AGF_CHECK(d >= 1, "Tensor: dimensions must be >= 1");
    AGF_CHECK(data_.size() == shape_product(shape_),
              "Tensor: data length does not match shape product");
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = value;
    return t;
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::size_t Tensor::rows_flat() const {
    AGF_CHECK(!shape_.empty(), "Tensor: empty tensor has no rows");
    return data_.size() / shape_.back();
}

std::size_t Tensor::last_dim() const {
    AGF_CHECK(!shape_.empty(), "Tensor: empty tensor has no last dim");
    return shape_.back();
}

}  // namespace agf
