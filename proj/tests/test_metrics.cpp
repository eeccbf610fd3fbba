#include <catch2/catch_amalgamated.hpp>

#include "planecycle/archive.hpp"
#include "planecycle/metrics.hpp"

#include "oracles.hpp"

using namespace planecycle;

namespace {

// Features that indicate the mask exactly: +e0 inside, -e0 outside.
VolumeFeatures indicator_features(const LesionMask& m, int64_t c, float scale = 1.0f) {
    const Shape& s = m.mask.shape();
    Tensor f(Shape{s[0], s[1], s[2], c});
    for (int64_t v = 0; v < m.mask.numel(); ++v) {
        f[v * c] = m.positive(v) ? scale : -scale;
    }
    return VolumeFeatures(std::move(f));
}

LesionMask random_mask(SplitMix64& rng, const Shape& s) {
    Tensor m(s);
    bool any = false;
    for (int64_t i = 0; i < m.numel(); ++i) {
        m[i] = (rng.next() % 4 == 0) ? 1.0f : 0.0f;
        any = any || m[i] > 0.5f;
    }
    if (!any) m[0] = 1.0f;
    return LesionMask(std::move(m));
}

} // namespace

TEST_CASE("mask reference voxel") {
    SECTION("centroid of a solid region is its center") {
        Tensor m(Shape{3, 3, 3});
        for (int64_t i = 0; i < 27; ++i) m[i] = 1.0f;
        const auto ref = detail::mask_reference_voxel(LesionMask(m));
        CHECK(ref == std::array<int64_t, 3>{1, 1, 1});
    }

    SECTION("centroid outside the lesion snaps to the nearest positive voxel") {
        // two far corners: centroid rounds to the middle, which is negative
        Tensor m(Shape{1, 5, 5});
        m.at(0, 0, 0) = 1.0f;
        m.at(0, 4, 4) = 1.0f;
        const auto ref = detail::mask_reference_voxel(LesionMask(m));
        // both corners are equidistant from (0,2,2); lowest linear index wins
        CHECK(ref == std::array<int64_t, 3>{0, 0, 0});
    }

    SECTION("empty masks are rejected") {
        CHECK_THROWS_AS(detail::mask_reference_voxel(LesionMask(Tensor(Shape{2, 2, 2}))), EmptyMask);
    }
}

TEST_CASE("similarity map") {
    SplitMix64 rng(90);

    SECTION("self-similarity is 1, opposite vectors give -1, zero vectors give 0") {
        Tensor f(Shape{1, 1, 3, 2});
        f.at(0, 0, 0, 0) = 2.0f;
        f.at(0, 0, 1, 0) = -5.0f;
        // voxel 2 stays zero
        const SimilarityMap sm = similarity_map(VolumeFeatures(f), {0, 0, 0});
        CHECK(sm.sim[0] == 1.0f);
        CHECK(sm.sim[1] == -1.0f);
        CHECK(sm.sim[2] == 0.0f);
    }

    SECTION("a zero reference vector is rejected") {
        Tensor f(Shape{1, 1, 2, 2});
        f.at(0, 0, 1, 0) = 1.0f;
        CHECK_THROWS_AS(similarity_map(VolumeFeatures(f), {0, 0, 0}), ZeroReferenceFeature);
    }

    SECTION("similarity is invariant to positive per-voxel scaling") {
        Tensor f = oracles::random_tensor(rng, Shape{2, 2, 2, 4});
        const SimilarityMap a = similarity_map(VolumeFeatures(f), {1, 0, 1});
        Tensor g = f;
        for (int64_t v = 0; v < 8; ++v) {
            for (int64_t c = 0; c < 4; ++c) g[v * 4 + c] *= 4.0f; // power of two keeps floats exact
        }
        const SimilarityMap b = similarity_map(VolumeFeatures(g), {1, 0, 1});
        CHECK(a.sim == b.sim);
    }
}

TEST_CASE("feature dice") {
    SplitMix64 rng(91);

    SECTION("an exact indicator scores 1.0") {
        const LesionMask m = random_mask(rng, Shape{3, 4, 4});
        const FeatDiceResult r = feat_dice(indicator_features(m, 6), m);
        CHECK(r.score == 1.0);
        CHECK(m.positive(((r.reference[0] * 4) + r.reference[1]) * 4 + r.reference[2]));
    }

    SECTION("power-of-two feature scaling leaves the score unchanged") {
        const LesionMask m = random_mask(rng, Shape{2, 3, 3});
        Tensor f = oracles::random_tensor(rng, Shape{2, 3, 3, 5});
        const FeatDiceResult base = feat_dice(VolumeFeatures(f), m);
        Tensor scaled = f;
        for (int64_t i = 0; i < scaled.numel(); ++i) scaled[i] *= 4.0f;
        const FeatDiceResult s = feat_dice(VolumeFeatures(scaled), m);
        CHECK(s.score == base.score);
        CHECK(s.threshold == base.threshold);
    }

    SECTION("agrees with the independent reference on random fixtures") {
        for (int rep = 0; rep < 10; ++rep) {
            const LesionMask m = random_mask(rng, Shape{4, 4, 4});
            const Tensor f = oracles::random_tensor(rng, Shape{4, 4, 4, 8});
            const FeatDiceResult r = feat_dice(VolumeFeatures(f), m);
            const double ref = oracles::featdice_ref(f, m.mask);
            CHECK(r.score == Catch::Approx(ref).epsilon(1e-12));
            CHECK(r.score >= 0.0);
            CHECK(r.score <= 1.0);
        }
    }

    SECTION("grid mismatch is rejected") {
        const LesionMask m = random_mask(rng, Shape{2, 2, 2});
        const Tensor f = oracles::random_tensor(rng, Shape{2, 2, 3, 4});
        CHECK_THROWS_AS(feat_dice(VolumeFeatures(f), m), ShapeMismatch);
    }
}

TEST_CASE("mask downsampling") {
    SECTION("majority vote with ties going positive") {
        Tensor m(Shape{1, 16, 32});
        // left patch: 128 of 256 positive (tie), right patch: 127 positive
        for (int64_t y = 0; y < 8; ++y) {
            for (int64_t x = 0; x < 16; ++x) m.at(0, y, x) = 1.0f;
        }
        int64_t placed = 0;
        for (int64_t y = 0; y < 16 && placed < 127; ++y) {
            for (int64_t x = 16; x < 32 && placed < 127; ++x) {
                m.at(0, y, x) = 1.0f;
                ++placed;
            }
        }
        const LesionMask down = downsample_mask_majority(LesionMask(m));
        REQUIRE(down.mask.shape() == Shape{1, 1, 2});
        CHECK(down.mask.at(0, 0, 0) == 1.0f);
        CHECK(down.mask.at(0, 0, 1) == 0.0f);
    }

    SECTION("depth is never reduced") {
        const LesionMask down = downsample_mask_majority(LesionMask(Tensor(Shape{5, 16, 16})));
        CHECK(down.mask.shape() == Shape{5, 1, 1});
    }

    SECTION("indivisible extents are rejected") {
        CHECK_THROWS_AS(downsample_mask_majority(LesionMask(Tensor(Shape{1, 20, 16}))), IndivisibleExtent);
    }
}

TEST_CASE("attention cost model") {
    const Schedule cycle = build_cycle_schedule(4);

    SECTION("per-mode pair counts on a 2x4x6 grid with 5 globals") {
        const ComplexityReport slice = attention_cost(LiftMode::slice2d(), 2, 4, 6, 5, 4, cycle);
        REQUIRE(slice.layers.size() == 4);
        for (const auto& l : slice.layers) {
            CHECK(l.sequence_count == 2);
            CHECK(l.sequence_length == 5 + 24);
            CHECK(l.attention_pairs == 2 * 29 * 29);
        }

        const ComplexityReport flat = attention_cost(LiftMode::flat3d(), 2, 4, 6, 5, 4, cycle);
        for (const auto& l : flat.layers) {
            CHECK(l.sequence_count == 1);
            CHECK(l.attention_pairs == 53 * 53);
        }

        const ComplexityReport pc = attention_cost(LiftMode::plane_cycle(PoolMode::PCg), 2, 4, 6, 5, 4, cycle);
        // HW: P=2, len 5+24; DW: P=4, len 5+12; DH: P=6, len 5+8; HW again
        CHECK(pc.layers[0].attention_pairs == 2 * 29 * 29);
        CHECK(pc.layers[1].attention_pairs == 4 * 17 * 17);
        CHECK(pc.layers[2].attention_pairs == 6 * 13 * 13);
        CHECK(pc.layers[3].attention_pairs == 2 * 29 * 29);
        CHECK(pc.layers[1].plane == "dw");
        CHECK(pc.total_pairs() == 2 * 2 * 29 * 29 + 4 * 17 * 17 + 6 * 13 * 13);
        CHECK(pc.total_sequences() == 2 + 4 + 6 + 2);
    }

    SECTION("with no globals on a cube, the flat-to-cycle ratio is the extent") {
        for (int64_t n : {2, 4, 8}) {
            const Schedule s = build_cycle_schedule(1);
            const int64_t flat = attention_cost(LiftMode::flat3d(), n, n, n, 0, 1, s).total_pairs();
            const int64_t pc = attention_cost(LiftMode::plane_cycle(PoolMode::PCg), n, n, n, 0, 1, s).total_pairs();
            CHECK(flat == n * pc);
        }
    }

    SECTION("csv rendering") {
        const ComplexityReport pc = attention_cost(LiftMode::plane_cycle(PoolMode::PCm), 2, 2, 2, 1, 2, build_cycle_schedule(2));
        const std::string csv = pc.to_csv();
        CHECK(csv.find("mode,layer,plane,sequence_count,sequence_length,attention_pairs\n") == 0);
        CHECK(csv.find("pcm,0,hw,2,5,50\n") != std::string::npos);
        CHECK(csv.find("pcm,1,dw,2,5,50\n") != std::string::npos);
    }

    SECTION("schedule length mismatch is rejected for cycle modes only") {
        CHECK_THROWS_AS(attention_cost(LiftMode::plane_cycle(PoolMode::PCg), 2, 2, 2, 1, 3, cycle),
                        ScheduleError);
        CHECK_NOTHROW(attention_cost(LiftMode::slice2d(), 2, 2, 2, 1, 3, cycle));
    }
}

TEST_CASE("forward benchmarking") {
    SynthArch arch;
    arch.depth = 2;
    arch.channels = 12;
    arch.num_heads = 1; // head dim 12 supports all modes
    const NetworkWeights w = synth_weights(95, arch);
    const Schedule schedule = build_cycle_schedule(2);
    const std::vector<std::array<int64_t, 3>> dims = {{2, 2, 2}, {3, 2, 2}};
    const std::vector<LiftMode> modes = {LiftMode::slice2d(), LiftMode::flat3d(),
                                         LiftMode::plane_cycle(PoolMode::PCg)};

    SECTION("one row per mode and grid, with model-consistent pair counts") {
        const auto rows = benchmark_forward(w, dims, modes, 3, schedule);
        REQUIRE(rows.size() == dims.size() * modes.size());
        for (const auto& r : rows) {
            const int64_t expect = attention_cost(parse_lift_mode(r.mode), r.d, r.h, r.w, kGlobalTokens,
                                                  w.depth(), schedule)
                                       .total_pairs();
            CHECK(r.attn_pairs == expect);
            CHECK(r.median_ms >= 0.0);
            CHECK(r.depth == 2);
        }
        const std::string csv = bench_rows_to_csv(rows);
        CHECK(csv.find("mode,D,H,W,depth,attn_pairs,median_ms\n") == 0);
        CHECK(csv.find("2d,2,2,2,2,") != std::string::npos);
    }

    SECTION("fewer than three repeats is an error") {
        CHECK_THROWS_AS(benchmark_forward(w, dims, modes, 2, schedule), InvalidLength);
    }
}
