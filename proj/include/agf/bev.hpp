#pragma once

#include <string>

#include "agf/tensor.hpp"

namespace agf {

enum class Modality { camera, lidar, fused };

std::string to_string(Modality m);

/// Dense H x W x C bird's-eye-view feature map tagged with its modality.
struct BevMap {
    Tensor tensor;  // shape [H, W, C]
    Modality modality = Modality::fused;

    BevMap() = default;
    BevMap(Tensor t, Modality m);

    std::size_t height() const { return tensor.dim(0); }
    std::size_t width() const { return tensor.dim(1); }
    std::size_t channels() const { return tensor.dim(2); }
};

}  // namespace agf
