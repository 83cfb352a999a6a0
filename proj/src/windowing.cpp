#include "agf/windowing.hpp"

#include <string>

namespace agf {

std::size_t partition_dest_index(const WindowGeometry& g, std::size_t c,
                                 std::size_t flat_map_index) {
    const std::size_t ch = flat_map_index % c;
    const std::size_t pos = flat_map_index / c;
    const std::size_t row = pos / g.map_w;
    const std::size_t col = pos % g.map_w;
    const std::size_t win_index = (row / g.win) * g.windows_per_row() + (col / g.win);
    const std::size_t token = (row % g.win) * g.win + (col % g.win);
    return (win_index * g.tokens_per_window() + token) * c + ch;
}

WindowSet partition(const BevMap& f, std::size_t h) {
    AGF_CHECK(h >= 1, "partition: window side must be >= 1");
    const std::size_t H = f.height(), W = f.width(), C = f.channels();
    if (H % h != 0 || W % h != 0) {
        throw WindowSizeError("partition: map " + std::to_string(H) + "x" + std::to_string(W) +
                              " not divisible by window side " + std::to_string(h));
    }

    WindowGeometry geom{H, W, h};
    WindowSet ws;
    ws.geom = geom;
    ws.modality = f.modality;
    ws.tokens = Tensor({geom.num_windows(), geom.tokens_per_window(), C});
    for (std::size_t i = 0; i < f.tensor.size(); ++i) {
        ws.tokens[partition_dest_index(geom, C, i)] = f.tensor[i];
    }
    return ws;
}

BevMap merge(const WindowSet& ws) {
    const WindowGeometry& g = ws.geom;
    AGF_CHECK(ws.tokens.rank() == 3, "merge: tokens must be [N_win, T, C]");
    AGF_CHECK(g.win >= 1 && g.map_h % g.win == 0 && g.map_w % g.win == 0,
              "merge: inconsistent geometry");
    AGF_CHECK(ws.tokens.dim(0) == g.num_windows() && ws.tokens.dim(1) == g.tokens_per_window(),
              "merge: token shape does not match geometry");

    const std::size_t C = ws.channels();
    BevMap out(Tensor({g.map_h, g.map_w, C}), ws.modality);
    for (std::size_t i = 0; i < out.tensor.size(); ++i) {
        out.tensor[i] = ws.tokens[partition_dest_index(g, C, i)];
    }
    return out;
}

}  // namespace agf
