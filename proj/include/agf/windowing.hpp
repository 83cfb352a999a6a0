#pragma once

#include "agf/bev.hpp"

namespace agf {

/// Geometry needed to merge a window set back into a map.
struct WindowGeometry {
    std::size_t map_h = 0;
    std::size_t map_w = 0;
    std::size_t win = 0;  // window side h (square windows)

    std::size_t windows_per_row() const { return map_w / win; }
    std::size_t num_windows() const { return (map_h / win) * (map_w / win); }
    std::size_t tokens_per_window() const { return win * win; }

    bool operator==(const WindowGeometry&) const = default;
};

/// N_win windows of T = h*h tokens each. Window order is row-major over the
/// window grid; token order is row-major within each window.
struct WindowSet {
    Tensor tokens;  // [N_win, T, C]
    WindowGeometry geom;
    Modality modality = Modality::fused;

    std::size_t channels() const { return tokens.dim(2); }
};

/// Flat-index map for partitioning: element `i` of the [H, W, C] map lands at
/// position map[i] of the [N_win, T, C] token tensor.
/// Exposed so the tape op and the plain op share one definition.
std::size_t partition_dest_index(const WindowGeometry& g, std::size_t c,
                                 std::size_t flat_map_index);

/// Split a map into non-overlapping square windows of side `h`.
/// Throws WindowSizeError when H or W is not divisible by h (no padding).
WindowSet partition(const BevMap& f, std::size_t h);

/// Inverse of partition; merge(partition(F, h)) is bit-identical to F.
BevMap merge(const WindowSet& ws);

}  // namespace agf
