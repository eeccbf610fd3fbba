#include <catch2/catch_amalgamated.hpp>

#include "planecycle/archive.hpp"
#include "planecycle/block.hpp"

#include "oracles.hpp"

using namespace planecycle;

namespace {

BlockWeights random_block(uint64_t seed, int64_t c, int heads) {
    SynthArch arch;
    arch.depth = 1;
    arch.channels = c;
    arch.num_heads = heads;
    NetworkWeights w = synth_weights(seed, arch);
    return std::move(w.blocks.front());
}

RopeCoords grid_coords(int64_t h, int64_t w, int64_t g) {
    return coords_for_plane(Plane::HW, 1, h, w, g);
}

RopeCoords unrotated(int64_t n) {
    RopeCoords c;
    c.axes = 2;
    c.coords.assign(static_cast<size_t>(n) * 2, 0.0f);
    c.rotate.assign(static_cast<size_t>(n), 0);
    return c;
}

} // namespace

TEST_CASE("block weights validation") {
    CHECK_THROWS_AS(random_block(1, 30, 4), InvalidArch);  // 30 % 4 != 0
    CHECK_THROWS_AS(random_block(1, 12, 4), InvalidArch);  // head dim 3 is odd
    BlockWeights b = random_block(1, 16, 2);
    CHECK_NOTHROW(b.validate());
    b.proj_bias = Tensor(Shape{3});
    CHECK_THROWS_AS(b.validate(), ShapeMismatch);
}

TEST_CASE("layer norm normalizes per row") {
    const Tensor gamma = Tensor::full(Shape{4}, 1.0f);
    const Tensor beta(Shape{4});

    const Tensor constant(Shape{1, 4}, {3.5f, 3.5f, 3.5f, 3.5f});
    const Tensor z = layer_norm(constant, gamma, beta);
    for (int64_t j = 0; j < 4; ++j) CHECK(z.at(0, j) == 0.0f);

    SplitMix64 rng(3);
    const Tensor x = oracles::random_tensor(rng, Shape{5, 4});
    const Tensor beta2(Shape{4}, {1, 2, 3, 4});
    const Tensor zero_gamma(Shape{4});
    const Tensor only_beta = layer_norm(x, zero_gamma, beta2);
    for (int64_t i = 0; i < 5; ++i) {
        for (int64_t j = 0; j < 4; ++j) CHECK(only_beta.at(i, j) == beta2[j]);
    }

    const Tensor gamma2(Shape{4}, {2, -1, 0.5f, 3});
    CHECK(oracles::max_abs_diff(layer_norm(x, gamma2, beta2), oracles::layer_norm_ref(x, gamma2, beta2)) <
          1e-6f);
    CHECK_THROWS_AS(layer_norm(x, Tensor(Shape{3}), beta), ShapeMismatch);
}

TEST_CASE("gelu matches the erf form") {
    CHECK(gelu(0.0f) == 0.0f);
    CHECK(std::fabs(gelu(1.0f) - 0.8413447461f) < 1e-6f);
    for (float x : {-3.0f, -0.7f, 0.1f, 2.5f}) {
        CHECK(std::fabs(gelu(x) - static_cast<float>(oracles::gelu_ref(x))) < 1e-7f);
    }
}

TEST_CASE("rope rotation conventions") {
    SplitMix64 rng(5);

    SECTION("zero coords are a bitwise identity") {
        const Tensor qk = oracles::random_tensor(rng, Shape{2, 3, 8});
        RopeCoords c;
        c.axes = 2;
        c.coords.assign(6, 0.0f);
        c.rotate.assign(3, 1);
        CHECK(rope_rotate(qk, c) == qk);
    }

    SECTION("all-false mask is a bitwise identity") {
        const Tensor qk = oracles::random_tensor(rng, Shape{1, 4, 8});
        RopeCoords c = unrotated(4);
        c.coords.assign(8, 0.7f);
        CHECK(rope_rotate(qk, c) == qk);
    }

    SECTION("first pair rotates by exactly one radian at coord (1, 0)") {
        Tensor qk(Shape{1, 1, 4}, {1.0f, 2.0f, 5.0f, 7.0f});
        RopeCoords c;
        c.axes = 2;
        c.coords = {1.0f, 0.0f};
        c.rotate = {1};
        const Tensor r = rope_rotate(qk, c);
        const float cs = std::cos(1.0f), sn = std::sin(1.0f);
        CHECK(std::fabs(r[0] - (1.0f * cs - 2.0f * sn)) < 1e-6f);
        CHECK(std::fabs(r[1] - (1.0f * sn + 2.0f * cs)) < 1e-6f);
        CHECK(r[2] == 5.0f); // x half, coord 0
        CHECK(r[3] == 7.0f);
    }

    SECTION("rotation preserves per-token norms") {
        const Tensor qk = oracles::random_tensor(rng, Shape{2, 6, 12});
        RopeCoords c;
        c.axes = 2;
        c.rotate.assign(6, 1);
        for (int64_t i = 0; i < 12; ++i) c.coords.push_back(static_cast<float>(rng.next_gaussian()));
        const Tensor r = rope_rotate(qk, c);
        for (int64_t h = 0; h < 2; ++h) {
            for (int64_t t = 0; t < 6; ++t) {
                double before = 0.0, after = 0.0;
                for (int64_t d = 0; d < 12; ++d) {
                    before += static_cast<double>(qk.at(h, t, d)) * qk.at(h, t, d);
                    after += static_cast<double>(r.at(h, t, d)) * r.at(h, t, d);
                }
                CHECK(std::fabs(std::sqrt(before) - std::sqrt(after)) < 1e-5);
            }
        }
    }

    SECTION("agrees with the independent rotation oracle") {
        const Tensor qk = oracles::random_tensor(rng, Shape{2, 5, 12});
        RopeCoords c = grid_coords(1, 5, 0);
        CHECK(oracles::max_abs_diff(rope_rotate(qk, c), oracles::rope_ref(qk, c)) < 1e-6f);
    }
}

TEST_CASE("attention semantics") {
    SplitMix64 rng(11);

    SECTION("single token reduces to proj(v)") {
        const BlockWeights w = random_block(2, 8, 2);
        const Tensor x = oracles::random_tensor(rng, Shape{1, 8});
        const Tensor got = mhsa(x, w, unrotated(1));

        // v = x * Wv^T + bv using the oracle matmul on the qkv slice
        Tensor v(Shape{1, 8});
        for (int64_t o = 0; o < 8; ++o) {
            double acc = w.qkv_bias[16 + o];
            for (int64_t j = 0; j < 8; ++j) acc += static_cast<double>(x.at(0, j)) * w.qkv_weight.at(16 + o, j);
            v.at(0, o) = static_cast<float>(acc);
        }
        Tensor want(Shape{1, 8});
        for (int64_t o = 0; o < 8; ++o) {
            double acc = w.proj_bias[o];
            for (int64_t j = 0; j < 8; ++j) acc += static_cast<double>(v.at(0, j)) * w.proj_weight.at(o, j);
            want.at(0, o) = static_cast<float>(acc);
        }
        CHECK(oracles::max_abs_diff(got, want) < 1e-6f);
    }

    SECTION("identical tokens with zero coords give identical rows") {
        const BlockWeights w = random_block(3, 8, 2);
        Tensor x(Shape{2, 8});
        for (int64_t j = 0; j < 8; ++j) x.at(0, j) = x.at(1, j) = static_cast<float>(rng.next_gaussian());
        const Tensor y = mhsa(x, w, unrotated(2));
        for (int64_t j = 0; j < 8; ++j) CHECK(y.at(0, j) == y.at(1, j));
    }

    SECTION("matches the naive attention oracle") {
        const BlockWeights w = random_block(4, 12, 2);
        const Tensor x = oracles::random_tensor(rng, Shape{3, 12});
        const RopeCoords c = grid_coords(1, 3, 0);
        CHECK(oracles::max_abs_diff(mhsa(x, w, c), oracles::mhsa_ref(x, w, c)) < 1e-5f);
    }

    SECTION("softmax rows sum to one") {
        const BlockWeights w = random_block(5, 8, 2);
        const Tensor x = oracles::random_tensor(rng, Shape{6, 8});
        MhsaDebug dbg;
        mhsa(x, w, grid_coords(2, 3, 0), &dbg);
        REQUIRE(dbg.softmax.size() == 2);
        for (const auto& s : dbg.softmax) {
            for (int64_t i = 0; i < 6; ++i) {
                double sum = 0.0;
                for (int64_t j = 0; j < 6; ++j) sum += s.at(i, j);
                CHECK(std::fabs(sum - 1.0) < 1e-6);
            }
        }
    }
}

TEST_CASE("block forward composition") {
    SplitMix64 rng(13);

    SECTION("zero weights with unit layer scale are residual-only") {
        BlockWeights w = random_block(6, 8, 2);
        for (Tensor* t : {&w.qkv_weight, &w.qkv_bias, &w.proj_weight, &w.proj_bias, &w.fc1_weight,
                          &w.fc1_bias, &w.fc2_weight, &w.fc2_bias}) {
            *t = Tensor(t->shape());
        }
        const Tensor x = oracles::random_tensor(rng, Shape{4, 8});
        CHECK(block_forward(x, w, unrotated(4)) == x);
    }

    SECTION("zero layer scale is a bitwise identity") {
        BlockWeights w = random_block(7, 8, 2);
        w.ls1_gamma = Tensor(Shape{8});
        w.ls2_gamma = Tensor(Shape{8});
        const Tensor x = oracles::random_tensor(rng, Shape{5, 8});
        CHECK(block_forward(x, w, grid_coords(1, 5, 0)) == x);
    }

    SECTION("matches the unfused reference") {
        const BlockWeights w = random_block(8, 12, 2);
        const Tensor x = oracles::random_tensor(rng, Shape{7, 12});
        const RopeCoords c = grid_coords(1, 5, 2);
        CHECK(oracles::max_abs_diff(block_forward(x, w, c), oracles::block_ref(x, w, c)) < 1e-5f);
    }

    SECTION("token permutation equivariance") {
        const BlockWeights w = random_block(9, 12, 2);
        const int64_t n = 7;
        const Tensor x = oracles::random_tensor(rng, Shape{n, 12});
        RopeCoords c = grid_coords(1, 5, 2);

        std::vector<int64_t> pi = {3, 0, 6, 1, 5, 2, 4};
        Tensor px(x.shape());
        RopeCoords pc;
        pc.axes = 2;
        pc.coords.resize(static_cast<size_t>(n) * 2);
        pc.rotate.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < 12; ++j) px.at(i, j) = x.at(pi[static_cast<size_t>(i)], j);
            pc.coords[static_cast<size_t>(i) * 2] = c.coord(pi[static_cast<size_t>(i)], 0);
            pc.coords[static_cast<size_t>(i) * 2 + 1] = c.coord(pi[static_cast<size_t>(i)], 1);
            pc.rotate[static_cast<size_t>(i)] = c.rotate[static_cast<size_t>(pi[static_cast<size_t>(i)])];
        }

        const Tensor y = block_forward(x, w, c);
        const Tensor py = block_forward(px, w, pc);
        float worst = 0.0f;
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < 12; ++j) {
                worst = std::max(worst, std::fabs(py.at(i, j) - y.at(pi[static_cast<size_t>(i)], j)));
            }
        }
        CHECK(worst < 1e-5f);
    }
}
