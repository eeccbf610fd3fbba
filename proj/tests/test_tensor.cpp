#include <catch2/catch_amalgamated.hpp>

#include "planecycle/tensor.hpp"

#include "oracles.hpp"

using namespace planecycle;

TEST_CASE("shape rejects non-positive extents") {
    CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeMismatch);
    CHECK_THROWS_AS(Tensor(Shape{-1}), ShapeMismatch);
    CHECK(Tensor(Shape{}).numel() == 1); // rank-0 scalar
}

TEST_CASE("checked mode rejects non-finite values") {
    set_checked_mode(true);
    CHECK_THROWS_AS(Tensor(Shape{2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}), NonFiniteValue);
    CHECK_THROWS_AS(Tensor(Shape{1}, {std::numeric_limits<float>::infinity()}), NonFiniteValue);
    set_checked_mode(false);
    CHECK_NOTHROW(Tensor(Shape{1}, {std::numeric_limits<float>::infinity()}));
}

TEST_CASE("reshape relabels extents in row-major order") {
    Tensor t(Shape{2, 3}, {0, 1, 2, 3, 4, 5});
    const Tensor r = reshape(t, Shape{3, 2});
    for (int64_t i = 0; i < 6; ++i) CHECK(r[i] == static_cast<float>(i));

    const Tensor round = reshape(reshape(Tensor(Shape{6}, {0, 1, 2, 3, 4, 5}), Shape{1, 6}), Shape{6});
    CHECK(round == Tensor(Shape{6}, {0, 1, 2, 3, 4, 5}));

    CHECK_THROWS_AS(reshape(t, Shape{4}), ShapeMismatch);
}

TEST_CASE("permute transposes and inverts exactly") {
    Tensor t(Shape{2, 3}, {0, 1, 2, 3, 4, 5});
    const Tensor tr = permute(t, {1, 0});
    REQUIRE(tr.shape() == Shape{3, 2});
    for (int64_t i = 0; i < 2; ++i) {
        for (int64_t j = 0; j < 3; ++j) CHECK(tr.at(j, i) == t.at(i, j));
    }

    CHECK(permute(t, {0, 1}) == t);
    CHECK_THROWS_AS(permute(t, {0, 0}), InvalidPermutation);
    CHECK_THROWS_AS(permute(t, {0, 2}), InvalidPermutation);

    SplitMix64 rng(99);
    for (int rep = 0; rep < 20; ++rep) {
        Shape s{1 + static_cast<int64_t>(rng.next() % 4), 1 + static_cast<int64_t>(rng.next() % 4),
                1 + static_cast<int64_t>(rng.next() % 4), 1 + static_cast<int64_t>(rng.next() % 3)};
        const Tensor v = oracles::random_tensor(rng, s);
        std::vector<int64_t> axes = {0, 1, 2, 3};
        for (size_t i = 3; i > 0; --i) std::swap(axes[i], axes[rng.next() % (i + 1)]);
        CHECK(permute(permute(v, axes), inverse_permutation(axes)) == v);
    }
}

TEST_CASE("matmul matches hand values and the triple-loop oracle") {
    Tensor eye(Shape{3, 3});
    eye.at(0, 0) = eye.at(1, 1) = eye.at(2, 2) = 1.0f;
    SplitMix64 rng(7);
    const Tensor a = oracles::random_tensor(rng, Shape{3, 3});
    CHECK(matmul(eye, a) == a);

    const Tensor b(Shape{2, 2}, {1, 2, 3, 4});
    const Tensor c(Shape{2, 1}, {5, 6});
    const Tensor prod = matmul(b, c);
    CHECK(prod.at(0, 0) == 17.0f);
    CHECK(prod.at(1, 0) == 39.0f);

    const Tensor x = oracles::random_tensor(rng, Shape{4, 5});
    const Tensor y = oracles::random_tensor(rng, Shape{5, 6});
    CHECK(oracles::max_abs_diff(matmul(x, y), oracles::matmul_ref(x, y)) < 1e-6f);

    CHECK(matmul(x, y) == matmul(x, y)); // deterministic across calls
    CHECK_THROWS_AS(matmul(x, x), ShapeMismatch);
}

TEST_CASE("adaptive pool follows the floor/ceil bin formula") {
    // L=3 -> P=2: [(a+b)/2, (b+c)/2]
    const Tensor t(Shape{3, 1}, {1.0f, 5.0f, 11.0f});
    const Tensor p = adaptive_avg_pool_1d(t, 2);
    CHECK(p.at(0, 0) == 3.0f);
    CHECK(p.at(1, 0) == 8.0f);

    SplitMix64 rng(21);
    const Tensor id = oracles::random_tensor(rng, Shape{4, 3});
    CHECK(adaptive_avg_pool_1d(id, 4) == id);

    const Tensor one = oracles::random_tensor(rng, Shape{1, 3});
    const Tensor bc = adaptive_avg_pool_1d(one, 5);
    for (int64_t i = 0; i < 5; ++i) {
        for (int64_t c = 0; c < 3; ++c) CHECK(bc.at(i, c) == one.at(0, c));
    }

    CHECK_THROWS_AS(adaptive_avg_pool_1d(one, 0), InvalidLength);
}

TEST_CASE("adaptive pool equals the bin oracle and preserves divisible means") {
    SplitMix64 rng(22);
    for (int64_t L : {1, 2, 5, 9, 16}) {
        const Tensor in = oracles::random_tensor(rng, Shape{L, 4});
        for (int64_t P : {1, 2, 3, 8, 16}) {
            CHECK(adaptive_avg_pool_1d(in, P) == oracles::pool_ref(in, P));
        }
    }

    // P divides L: global mean preserved within 1e-6.
    const Tensor in = oracles::random_tensor(rng, Shape{12, 2});
    for (int64_t P : {1, 2, 3, 4, 6, 12}) {
        const Tensor out = adaptive_avg_pool_1d(in, P);
        for (int64_t c = 0; c < 2; ++c) {
            double mi = 0.0, mo = 0.0;
            for (int64_t r = 0; r < 12; ++r) mi += in.at(r, c);
            for (int64_t r = 0; r < P; ++r) mo += out.at(r, c);
            CHECK(std::fabs(mi / 12.0 - mo / static_cast<double>(P)) < 1e-6);
        }
    }
}
