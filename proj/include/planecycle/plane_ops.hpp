#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "planecycle/block.hpp"
#include "planecycle/parallel.hpp"
#include "planecycle/tensor.hpp"

namespace planecycle {

// Aggregation plane of a D*H*W volume. The slicing axis runs across the
// plane: HW slices along D (axial), DW along H (coronal), DH along W
// (sagittal).
enum class Plane { HW, DW, DH };

inline int slicing_axis(Plane p) {
    switch (p) {
        case Plane::HW: return 0;
        case Plane::DW: return 1;
        default: return 2;
    }
}

inline const char* plane_name(Plane p) {
    switch (p) {
        case Plane::HW: return "hw";
        case Plane::DW: return "dw";
        default: return "dh";
    }
}

// Global-token carry strategy across a plane switch: PCm averages over slices
// and replicates; PCg pools slice-wise groups adaptively.
enum class PoolMode { PCm, PCg };

inline const char* pool_mode_name(PoolMode m) { return m == PoolMode::PCm ? "pcm" : "pcg"; }

// [D, H, W, C] patch-token volume.
struct VolumeFeatures {
    Tensor x;

    VolumeFeatures() = default;
    explicit VolumeFeatures(Tensor t) : x(std::move(t)) {
        if (x.rank() != 4) throw ShapeMismatch("volume features must be [D,H,W,C], got " + x.shape().str());
    }

    int64_t d() const { return x.dim(0); }
    int64_t h() const { return x.dim(1); }
    int64_t w() const { return x.dim(2); }
    int64_t c() const { return x.dim(3); }
};

// [P', g, C] global-token stack; one group of g tokens per slice of the
// previous plane.
struct GlobalTokens {
    Tensor t;

    GlobalTokens() = default;
    explicit GlobalTokens(Tensor tokens) : t(std::move(tokens)) {
        if (t.rank() != 3) throw ShapeMismatch("global tokens must be [P',g,C], got " + t.shape().str());
    }

    int64_t slices() const { return t.dim(0); }
    int64_t per_slice() const { return t.dim(1); }
    int64_t c() const { return t.dim(2); }
};

namespace detail {

// Remaining axes in canonical (D, H, W) order with the slicing axis removed.
inline std::array<int, 2> in_plane_axes(Plane p) {
    switch (p) {
        case Plane::HW: return {1, 2}; // (h, w)
        case Plane::DW: return {0, 2}; // (d, w)
        default: return {0, 1};        // (d, h)
    }
}

inline int64_t volume_offset(int64_t d, int64_t h, int64_t w, int64_t H, int64_t W, int64_t C) {
    return ((d * H + h) * W + w) * C;
}

} // namespace detail

// Slices the volume along the plane's axis; within a slice, tokens flatten
// row-major over the remaining axes in canonical (D, H, W) order.
inline Tensor reshape_to_plane(const VolumeFeatures& v, Plane p) {
    const int64_t D = v.d(), H = v.h(), W = v.w(), C = v.c();
    const int64_t dims[3] = {D, H, W};
    const int axis = slicing_axis(p);
    const auto in_plane = detail::in_plane_axes(p);
    const int64_t P = dims[axis];
    const int64_t n1 = dims[in_plane[0]], n2 = dims[in_plane[1]];

    Tensor out(Shape{P, n1 * n2, C});
    const float* src = v.x.data();
    float* dst = out.data();
    for (int64_t s = 0; s < P; ++s) {
        for (int64_t i = 0; i < n1; ++i) {
            for (int64_t j = 0; j < n2; ++j) {
                int64_t idx[3];
                idx[axis] = s;
                idx[in_plane[0]] = i;
                idx[in_plane[1]] = j;
                const float* from = src + detail::volume_offset(idx[0], idx[1], idx[2], H, W, C);
                float* to = dst + ((s * n1 + i) * n2 + j) * C;
                std::memcpy(to, from, static_cast<size_t>(C) * sizeof(float));
            }
        }
    }
    return out;
}

// Exact inverse of reshape_to_plane.
inline VolumeFeatures restore_from_plane(const Tensor& t, Plane p, int64_t D, int64_t H, int64_t W) {
    if (t.rank() != 3) throw ShapeMismatch("plane tensor must be [P,M,C], got " + t.shape().str());
    const int64_t dims[3] = {D, H, W};
    const int axis = slicing_axis(p);
    const auto in_plane = detail::in_plane_axes(p);
    const int64_t P = dims[axis];
    const int64_t n1 = dims[in_plane[0]], n2 = dims[in_plane[1]];
    const int64_t C = t.dim(2);
    if (t.dim(0) != P || t.dim(1) != n1 * n2) {
        throw ShapeMismatch("plane tensor " + t.shape().str() + " does not match volume dims (" +
                            std::to_string(D) + "," + std::to_string(H) + "," + std::to_string(W) + ")");
    }

    VolumeFeatures v(Tensor(Shape{D, H, W, C}));
    const float* src = t.data();
    float* dst = v.x.data();
    for (int64_t s = 0; s < P; ++s) {
        for (int64_t i = 0; i < n1; ++i) {
            for (int64_t j = 0; j < n2; ++j) {
                int64_t idx[3];
                idx[axis] = s;
                idx[in_plane[0]] = i;
                idx[in_plane[1]] = j;
                const float* from = src + ((s * n1 + i) * n2 + j) * C;
                float* to = dst + detail::volume_offset(idx[0], idx[1], idx[2], H, W, C);
                std::memcpy(to, from, static_cast<size_t>(C) * sizeof(float));
            }
        }
    }
    return v;
}

// Maps global tokens from P' slices onto target_P slices. Token positions
// never mix: each of the g positions pools independently over the slice axis.
inline Tensor pool_global_tokens(const GlobalTokens& g_in, int64_t target_P, PoolMode mode) {
    if (target_P < 1) throw InvalidLength("target slice count must be >= 1");
    const int64_t P0 = g_in.slices(), g = g_in.per_slice(), C = g_in.c();

    // View as [P0, g*C] rows, one per slice; adaptive pooling acts per column.
    Tensor rows = reshape(g_in.t, Shape{P0, g * C});
    Tensor pooled = (mode == PoolMode::PCm)
                        ? adaptive_avg_pool_1d(rows, 1)
                        : adaptive_avg_pool_1d(rows, target_P);
    if (mode == PoolMode::PCm) {
        Tensor out(Shape{target_P, g, C});
        for (int64_t s = 0; s < target_P; ++s) {
            std::memcpy(out.data() + s * g * C, pooled.data(), static_cast<size_t>(g * C) * sizeof(float));
        }
        return out;
    }
    return reshape(std::move(pooled), Shape{target_P, g, C});
}

// Rotary coordinates for one in-plane sequence: g unrotated global tokens,
// then the plane's tokens with (y, x) = remaining-axis indices mapped to
// [-1, 1] (extent 1 maps to 0).
inline RopeCoords coords_for_plane(Plane p, int64_t D, int64_t H, int64_t W, int64_t g) {
    const int64_t dims[3] = {D, H, W};
    const auto in_plane = detail::in_plane_axes(p);
    const int64_t n1 = dims[in_plane[0]], n2 = dims[in_plane[1]];

    auto norm = [](int64_t i, int64_t n) -> float {
        if (n == 1) return 0.0f;
        return static_cast<float>(-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1));
    };

    RopeCoords rc;
    rc.axes = 2;
    const int64_t n = g + n1 * n2;
    rc.coords.assign(static_cast<size_t>(n) * 2, 0.0f);
    rc.rotate.assign(static_cast<size_t>(n), 1);
    for (int64_t t = 0; t < g; ++t) rc.rotate[static_cast<size_t>(t)] = 0;
    for (int64_t i = 0; i < n1; ++i) {
        for (int64_t j = 0; j < n2; ++j) {
            const int64_t t = g + i * n2 + j;
            rc.coords[static_cast<size_t>(t) * 2] = norm(i, n1);
            rc.coords[static_cast<size_t>(t) * 2 + 1] = norm(j, n2);
        }
    }
    return rc;
}

// Instrumentation for the token-budget invariant: each step must run exactly
// `sequences` sequences of `sequence_length` tokens.
struct StepStats {
    int64_t sequences = 0;
    int64_t sequence_length = 0;
};

struct PlaneStepResult {
    VolumeFeatures features;
    GlobalTokens globals;
};

// One lifting step: reshape to the plane, pool globals to P rows, run the
// frozen block once per slice on [G, X], split globals back off, restore the
// volume. Reads BlockWeights only; no parameters are created or modified.
inline PlaneStepResult plane_cycle_step(const VolumeFeatures& v, const GlobalTokens& g_in,
                                        const BlockWeights& w, Plane p, PoolMode mode,
                                        int threads = 1, StepStats* stats = nullptr) {
    const int64_t D = v.d(), H = v.h(), W = v.w(), C = v.c();
    if (C != w.channels()) {
        throw ShapeMismatch("volume channels " + std::to_string(C) + " do not match block channels " +
                            std::to_string(w.channels()));
    }
    if (g_in.c() != C) {
        throw ShapeMismatch("global-token channels " + std::to_string(g_in.c()) +
                            " do not match volume channels " + std::to_string(C));
    }
    const int64_t dims[3] = {D, H, W};
    const int64_t P = dims[slicing_axis(p)];
    const int64_t g = g_in.per_slice();
    const int64_t M = D * H * W / P;

    Tensor x = reshape_to_plane(v, p);             // [P, M, C]
    Tensor globals = pool_global_tokens(g_in, P, mode); // [P, g, C]
    const RopeCoords coords = coords_for_plane(p, D, H, W, g);

    if (stats) {
        stats->sequences = P;
        stats->sequence_length = g + M;
    }

    Tensor out_tokens(Shape{P, g + M, C});
    parallel_for(P, threads, [&](int64_t s) {
        Tensor seq(Shape{g + M, C});
        std::memcpy(seq.data(), globals.data() + s * g * C, static_cast<size_t>(g * C) * sizeof(float));
        std::memcpy(seq.data() + g * C, x.data() + s * M * C, static_cast<size_t>(M * C) * sizeof(float));
        Tensor res = block_forward(seq, w, coords);
        std::memcpy(out_tokens.data() + s * (g + M) * C, res.data(),
                    static_cast<size_t>((g + M) * C) * sizeof(float));
    });

    Tensor patches(Shape{P, M, C});
    Tensor out_globals(Shape{P, g, C});
    for (int64_t s = 0; s < P; ++s) {
        const float* row = out_tokens.data() + s * (g + M) * C;
        std::memcpy(out_globals.data() + s * g * C, row, static_cast<size_t>(g * C) * sizeof(float));
        std::memcpy(patches.data() + s * M * C, row + g * C, static_cast<size_t>(M * C) * sizeof(float));
    }

    PlaneStepResult result;
    result.features = restore_from_plane(patches, p, D, H, W);
    result.globals = GlobalTokens(std::move(out_globals));
    return result;
}

} // namespace planecycle
