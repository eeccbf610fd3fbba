#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "planecycle/archive.hpp"
#include "planecycle/metrics.hpp"
#include "planecycle/network.hpp"
#include "planecycle/plane_ops.hpp"
#include "planecycle/rng.hpp"
#include "planecycle/tensor.hpp"

namespace planecycle {

// The embedded invariant suite behind `selftest`. The pool hook exists so a
// harness can inject a corrupted implementation and confirm the suite
// actually detects it; the default is the library pool.
struct SelftestHooks {
    std::function<Tensor(const Tensor&, int64_t)> pool = [](const Tensor& t, int64_t p) {
        return adaptive_avg_pool_1d(t, p);
    };
};

namespace detail {

inline Tensor random_volume(SplitMix64& rng, Shape shape) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.next_gaussian());
    return t;
}

inline bool selftest_round_trips(std::string& note) {
    SplitMix64 rng(fnv1a64("selftest.roundtrip"));
    const std::vector<Shape> shapes = {Shape{2, 3, 4, 5}, Shape{1, 4, 4, 3}, Shape{5, 2, 3, 2}};
    for (const auto& s : shapes) {
        const VolumeFeatures v(random_volume(rng, s));
        for (Plane p : {Plane::HW, Plane::DW, Plane::DH}) {
            const Tensor planes = reshape_to_plane(v, p);
            const VolumeFeatures back = restore_from_plane(planes, p, v.d(), v.h(), v.w());
            if (!(back.x == v.x)) {
                note = "volume changed after reshape/restore on plane " + std::string(plane_name(p));
                return false;
            }
        }
    }
    return true;
}

inline bool selftest_slice_equivalence(std::string& note) {
    const NetworkWeights w = synth_weights(7, SynthArch{2, 32, 2, 1});
    SplitMix64 rng(fnv1a64("selftest.slice2d"));
    const VolumeFeatures v(random_volume(rng, Shape{3, 4, 4, 32}));
    const GlobalTokens g(random_volume(rng, Shape{3, kGlobalTokens, 32}));
    const Schedule all_hw = tile_schedule({Plane::HW}, w.depth());
    const LiftResult a = forward_features(v, g, w, LiftMode::plane_cycle(PoolMode::PCg), all_hw);
    const LiftResult b = forward_features(v, g, w, LiftMode::slice2d(), all_hw);
    if (!(a.features.x == b.features.x) || !(a.globals.t == b.globals.t)) {
        note = "all-HW cycle and slice-wise mode disagree";
        return false;
    }
    return true;
}

inline bool selftest_receptive_field(std::string& note) {
    const NetworkWeights w = synth_weights(11, SynthArch{2, 32, 2, 1});
    SplitMix64 rng(fnv1a64("selftest.receptive"));
    const Tensor base = random_volume(rng, Shape{4, 3, 3, 32});
    Tensor poked = base;
    poked.at(1, 1, 1, 0) += 1.0f;

    auto run = [&](const Tensor& vol, LiftMode mode, const Schedule& s) {
        const GlobalTokens g(Tensor(Shape{4, kGlobalTokens, 32}));
        return forward_features(VolumeFeatures(vol), g, w, mode, s, 1, false);
    };

    // Slice-wise: nothing outside depth slice 1 may move.
    const Schedule hw2 = tile_schedule({Plane::HW}, 2);
    const LiftResult s_base = run(base, LiftMode::slice2d(), hw2);
    const LiftResult s_poked = run(poked, LiftMode::slice2d(), hw2);
    for (int64_t d = 0; d < 4; ++d) {
        if (d == 1) continue;
        for (int64_t i = 0; i < 3 * 3 * 32; ++i) {
            if (s_base.features.x[d * 3 * 3 * 32 + i] != s_poked.features.x[d * 3 * 3 * 32 + i]) {
                note = "slice-wise mode leaked across depth slices";
                return false;
            }
        }
    }

    // HW then DW: the perturbation must reach (nearly) every voxel.
    const Schedule hw_dw = tile_schedule({Plane::HW, Plane::DW}, 2);
    const LiftResult c_base = run(base, LiftMode::plane_cycle(PoolMode::PCg), hw_dw);
    const LiftResult c_poked = run(poked, LiftMode::plane_cycle(PoolMode::PCg), hw_dw);
    int64_t changed = 0;
    const int64_t voxels = 4 * 3 * 3;
    for (int64_t vix = 0; vix < voxels; ++vix) {
        for (int64_t c = 0; c < 32; ++c) {
            if (std::fabs(c_base.features.x[vix * 32 + c] - c_poked.features.x[vix * 32 + c]) > 1e-9f) {
                ++changed;
                break;
            }
        }
    }
    if (changed < voxels) {
        note = "cycled planes reached " + std::to_string(changed) + "/" + std::to_string(voxels) + " voxels";
        return false;
    }
    return true;
}

inline bool selftest_pool_bins(const SelftestHooks& hooks, std::string& note) {
    SplitMix64 rng(fnv1a64("selftest.pool"));
    for (int64_t L : {1, 2, 3, 5, 8, 12}) {
        for (int64_t P : {1, 2, 3, 5, 7, 12}) {
            const Tensor in = random_volume(rng, Shape{L, 3});
            const Tensor out = hooks.pool(in, P);
            if (out.shape() != Shape{P, 3}) {
                note = "pool output shape is wrong for L=" + std::to_string(L) + " P=" + std::to_string(P);
                return false;
            }
            for (int64_t i = 0; i < P; ++i) {
                const int64_t start = (i * L) / P;
                const int64_t end = ((i + 1) * L + P - 1) / P;
                for (int64_t c = 0; c < 3; ++c) {
                    double s = 0.0;
                    for (int64_t r = start; r < end; ++r) s += static_cast<double>(in.at(r, c));
                    const float want = static_cast<float>(s / static_cast<double>(end - start));
                    if (std::fabs(out.at(i, c) - want) > 1e-6f) {
                        note = "pool bin mean off at L=" + std::to_string(L) + " P=" + std::to_string(P);
                        return false;
                    }
                }
            }
        }
    }
    return true;
}

inline bool selftest_complexity(std::string& note) {
    for (int64_t n : {2, 4, 8, 16}) {
        const Schedule s = build_cycle_schedule(4);
        const int64_t slice = attention_cost(LiftMode::slice2d(), n, n, n, 0, 4, s).total_pairs();
        const int64_t flat = attention_cost(LiftMode::flat3d(), n, n, n, 0, 4, s).total_pairs();
        const int64_t cycle = attention_cost(LiftMode::plane_cycle(PoolMode::PCg), n, n, n, 0, 4, s).total_pairs();
        if (slice != 4 * n * (n * n) * (n * n)) {
            note = "slice-wise pair count wrong at n=" + std::to_string(n);
            return false;
        }
        if (flat != 4 * (n * n * n) * (n * n * n)) {
            note = "flattened pair count wrong at n=" + std::to_string(n);
            return false;
        }
        if (cycle * n != flat) {
            note = "cycle/flat ratio is not the depth extent at n=" + std::to_string(n);
            return false;
        }
    }
    return true;
}

} // namespace detail

// Runs every embedded check, printing one PASS/FAIL line each.
// Returns 0 iff all pass.
inline int run_selftest(std::ostream& os, const SelftestHooks& hooks = {}) {
    struct Check {
        const char* name;
        std::function<bool(std::string&)> fn;
    };
    const std::vector<Check> checks = {
        {"plane_round_trips", [](std::string& n) { return detail::selftest_round_trips(n); }},
        {"slice_equivalence", [](std::string& n) { return detail::selftest_slice_equivalence(n); }},
        {"receptive_field", [](std::string& n) { return detail::selftest_receptive_field(n); }},
        {"pool_bins", [&hooks](std::string& n) { return detail::selftest_pool_bins(hooks, n); }},
        {"complexity_identities", [](std::string& n) { return detail::selftest_complexity(n); }},
    };

    int failures = 0;
    for (const auto& check : checks) {
        std::string note;
        bool ok = false;
        try {
            ok = check.fn(note);
        } catch (const std::exception& e) {
            note = e.what();
        }
        if (ok) {
            os << "PASS " << check.name << '\n';
        } else {
            os << "FAIL " << check.name << (note.empty() ? "" : ": " + note) << '\n';
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

} // namespace planecycle
