#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "agf/gated_fusion.hpp"
#include "agf/gradcheck.hpp"
#include "test_util.hpp"

using namespace agf;
using testing::bit_equal;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

GateNetParams make_random_gate(std::size_t c, std::size_t c_mid, std::uint64_t seed) {
    GateNetParams p = GateNetParams::zeros(c, c_mid);
    p.w1 = random_tensor({2 * c, c_mid}, seed + 1, -0.5, 0.5);
    p.b1 = random_tensor({c_mid}, seed + 2, -0.2, 0.2);
    p.w2 = random_tensor({c_mid, 1}, seed + 3, -0.5, 0.5);
    p.b2 = random_tensor({1}, seed + 4, -0.2, 0.2);
    return p;
}

}  // namespace

TEST_CASE("compute_gate with zero parameters is 0.5 everywhere") {
    const std::size_t c = 4;
    BevMap a(random_tensor({3, 3, c}, 10), Modality::camera);
    BevMap b(random_tensor({3, 3, c}, 11), Modality::lidar);
    GateMap g = compute_gate(a, b, GateNetParams::zeros(c, 2));
    for (std::size_t i = 0; i < g.tensor.size(); ++i) CHECK(g.tensor[i] == 0.5);
}

TEST_CASE("compute_gate depends on concat order for asymmetric parameters") {
    const std::size_t c = 4;
    GateNetParams p = make_random_gate(c, 3, 20);
    BevMap a(random_tensor({3, 3, c}, 21), Modality::camera);
    BevMap b(random_tensor({3, 3, c}, 22), Modality::lidar);
    GateMap g1 = compute_gate(a, b, p);
    GateMap g2 = compute_gate(b, a, p);
    CHECK(max_abs_diff(g1.tensor, g2.tensor) > 1e-6);
}

TEST_CASE("compute_gate output lies strictly inside (0, 1) and is finite") {
    const std::size_t c = 6;
    GateNetParams p = make_random_gate(c, 4, 30);
    BevMap a(random_tensor({5, 4, c}, 31, -3.0, 3.0), Modality::camera);
    BevMap b(random_tensor({5, 4, c}, 32, -3.0, 3.0), Modality::lidar);
    GateMap g = compute_gate(a, b, p);
    REQUIRE(g.tensor.shape() == std::vector<std::size_t>{5, 4, 1});
    for (std::size_t i = 0; i < g.tensor.size(); ++i) {
        CHECK(g.tensor[i] > 0.0);
        CHECK(g.tensor[i] < 1.0);
    }
}

TEST_CASE("compute_gate rejects shape mismatch") {
    GateNetParams p = GateNetParams::zeros(4, 2);
    BevMap a(Tensor({2, 2, 4}), Modality::camera);
    BevMap b(Tensor({2, 2, 3}), Modality::lidar);
    CHECK_THROWS_AS(compute_gate(a, b, p), ContractViolation);
}

TEST_CASE("compute_gate gradient matches finite differences") {
    const std::size_t c = 3, c_mid = 2;
    GateNetParams p = make_random_gate(c, c_mid, 40);
    Tensor a = random_tensor({2, 2, c}, 41);
    Tensor b = random_tensor({2, 2, c}, 42);

    Tensor base = compute_gate(BevMap(a, Modality::camera), BevMap(b, Modality::lidar), p).tensor;
    const Tensor target = testing::near_target(base, 43, 0.01);

    auto f = [&target](Tape& t, std::span<const Var> v) {
        GateVars gv{v[2], v[3], v[4], v[5]};
        return t.mse(compute_gate(t, v[0], v[1], gv), target);
    };
    std::vector<std::pair<std::string, Tensor>> inputs = {
        {"a", a}, {"b", b}, {"w1", p.w1}, {"b1", p.b1}, {"w2", p.w2}, {"b2", p.b2},
    };
    auto report = gradcheck(f, inputs, 1e-6);
    for (const auto& e : report.entries) {
        INFO(e.name, " rel err ", e.max_rel_err);
        CHECK(e.pass);
    }
}

TEST_CASE("fuse_gated endpoint gates reproduce the inputs bit-exactly") {
    BevMap a(random_tensor({4, 4, 3}, 50), Modality::camera);
    BevMap b(random_tensor({4, 4, 3}, 51), Modality::lidar);
    BevMap all_a = fuse_gated(a, b, fixed_gate(1.0, 4, 4));
    BevMap all_b = fuse_gated(a, b, fixed_gate(0.0, 4, 4));
    CHECK(bit_equal(all_a.tensor, a.tensor));
    CHECK(bit_equal(all_b.tensor, b.tensor));
    CHECK(all_a.modality == Modality::fused);
}

TEST_CASE("fuse_gated at 0.5 is the elementwise average") {
    BevMap a(random_tensor({3, 3, 2}, 60), Modality::camera);
    BevMap b(random_tensor({3, 3, 2}, 61), Modality::lidar);
    BevMap avg = fuse_gated(a, b, fixed_gate(0.5, 3, 3));
    for (std::size_t i = 0; i < avg.tensor.size(); ++i) {
        CHECK(avg.tensor[i] ==
              doctest::Approx(0.5 * (a.tensor[i] + b.tensor[i])).epsilon(1e-15));
    }
}

TEST_CASE("fuse_gated is a convex combination over 1000 random trials") {
    std::size_t violations = 0;
    for (std::uint64_t trial = 0; trial < 1000; ++trial) {
        Tensor at = random_tensor({2, 2, 2}, 3000 + trial * 3, -2.0, 2.0);
        Tensor bt = random_tensor({2, 2, 2}, 3001 + trial * 3, -2.0, 2.0);
        Tensor gt({2, 2, 1});
        rng::Stream gs(3002 + trial * 3);
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = gs.uniform01();

        BevMap fused = fuse_gated(BevMap(at, Modality::camera), BevMap(bt, Modality::lidar),
                                  GateMap(gt));
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t ch = 0; ch < 2; ++ch) {
                const double v = fused.tensor[r * 2 + ch];
                const double lo = std::min(at[r * 2 + ch], bt[r * 2 + ch]);
                const double hi = std::max(at[r * 2 + ch], bt[r * 2 + ch]);
                if (v < lo || v > hi) ++violations;
            }
        }
    }
    CHECK(violations == 0);
}

TEST_CASE("fuse_gated on equal inputs returns them unchanged") {
    BevMap a(random_tensor({4, 4, 3}, 70), Modality::camera);
    GateMap g(random_tensor({4, 4, 1}, 71, 0.0, 1.0));
    BevMap fused = fuse_gated(a, a, g);
    CHECK(max_abs_diff(fused.tensor, a.tensor) <= 1e-15);
}

TEST_CASE("fuse_gated gate gradient is a - b elementwise") {
    Tensor a = random_tensor({2, 3, 2}, 80);
    Tensor b = random_tensor({2, 3, 2}, 81);
    Tensor g({2, 3, 1});
    rng::Stream gs(82);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = gs.uniform(0.1, 0.9);

    Tape t;
    Var av = t.leaf(a), bv = t.leaf(b), gv = t.leaf(g);
    Var fused = t.gate_blend(av, bv, gv);
    t.backward(t.sum(fused));
    // d sum / d g_r = sum_ch (a - b) at that pixel
    const Tensor& gg = t.grad(gv);
    for (std::size_t r = 0; r < 6; ++r) {
        double expect = 0.0;
        for (std::size_t ch = 0; ch < 2; ++ch) expect += a[r * 2 + ch] - b[r * 2 + ch];
        CHECK(gg[r] == doctest::Approx(expect).epsilon(1e-12));
    }
    // input gradients are the gate weights
    for (std::size_t r = 0; r < 6; ++r) {
        for (std::size_t ch = 0; ch < 2; ++ch) {
            CHECK(t.grad(av)[r * 2 + ch] == doctest::Approx(g[r]).epsilon(1e-15));
            CHECK(t.grad(bv)[r * 2 + ch] == doctest::Approx(1.0 - g[r]).epsilon(1e-15));
        }
    }
}

TEST_CASE("fuse_gated rejects mismatched shapes") {
    BevMap a(Tensor({2, 2, 3}), Modality::camera);
    BevMap b(Tensor({2, 2, 3}), Modality::lidar);
    CHECK_THROWS_AS(fuse_gated(a, b, fixed_gate(0.5, 3, 2)), ContractViolation);
}

TEST_CASE("fixed_gate produces the Table-3 baseline constants") {
    GateMap g3 = fixed_gate(0.3, 4, 4);
    GateMap g7 = fixed_gate(0.7, 2, 8);
    for (std::size_t i = 0; i < g3.tensor.size(); ++i) CHECK(g3.tensor[i] == 0.3);
    for (std::size_t i = 0; i < g7.tensor.size(); ++i) CHECK(g7.tensor[i] == 0.7);
    CHECK_THROWS_AS(fixed_gate(-0.1, 2, 2), ContractViolation);
    CHECK_THROWS_AS(fixed_gate(1.1, 2, 2), ContractViolation);
}

TEST_CASE("conv_fuser_baseline with selector weights returns the camera map") {
    const std::size_t c = 3;
    BevMap cam(random_tensor({3, 4, c}, 90), Modality::camera);
    BevMap lidar(random_tensor({3, 4, c}, 91), Modality::lidar);

    Tensor w({2 * c, c});
    for (std::size_t i = 0; i < c; ++i) w.at(i, i) = 1.0;  // [I; 0]
    BevMap out = conv_fuser_baseline(cam, lidar, w, Tensor({c}));
    CHECK(bit_equal(out.tensor, cam.tensor));

    BevMap zero = conv_fuser_baseline(cam, lidar, Tensor({2 * c, c}), Tensor({c}));
    for (std::size_t i = 0; i < zero.tensor.size(); ++i) CHECK(zero.tensor[i] == 0.0);
}

TEST_CASE("conv_fuser_baseline equals a per-pixel affine reference") {
    const std::size_t c = 2;
    BevMap cam(random_tensor({2, 3, c}, 100), Modality::camera);
    BevMap lidar(random_tensor({2, 3, c}, 101), Modality::lidar);
    Tensor w = random_tensor({2 * c, c}, 102);
    Tensor b = random_tensor({c}, 103);
    BevMap out = conv_fuser_baseline(cam, lidar, w, b);

    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t col = 0; col < 3; ++col) {
            for (std::size_t j = 0; j < c; ++j) {
                double acc = b[j];
                for (std::size_t k = 0; k < c; ++k) {
                    acc += cam.tensor.at(r, col, k) * w.at(k, j);
                    acc += lidar.tensor.at(r, col, k) * w.at(c + k, j);
                }
                CHECK(out.tensor.at(r, col, j) == doctest::Approx(acc).epsilon(1e-12));
            }
        }
    }
}
