#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "planecycle/block.hpp"
#include "planecycle/parallel.hpp"
#include "planecycle/plane_ops.hpp"
#include "planecycle/tensor.hpp"

namespace planecycle {

inline constexpr int64_t kPatchSize = 16;
inline constexpr int64_t kNumRegisters = 4;
inline constexpr int64_t kGlobalTokens = 1 + kNumRegisters; // CLS + registers

// Frozen pretrained backbone.
struct NetworkWeights {
    Tensor patch_weight;    // [C, in_ch, 16, 16]
    Tensor patch_bias;      // [C]
    Tensor cls_token;       // [1, C]
    Tensor register_tokens; // [4, C]
    std::vector<BlockWeights> blocks;
    Tensor final_gamma;     // [C]
    Tensor final_beta;      // [C]

    int64_t channels() const { return patch_bias.numel(); }
    int64_t in_channels() const { return patch_weight.dim(1); }
    int depth() const { return static_cast<int>(blocks.size()); }
    int num_heads() const { return blocks.empty() ? 1 : blocks.front().num_heads; }

    void validate() const {
        if (blocks.empty()) throw InvalidArch("network needs at least one block");
        const int64_t c = channels();
        if (patch_weight.rank() != 4 || patch_weight.dim(0) != c || patch_weight.dim(2) != kPatchSize ||
            patch_weight.dim(3) != kPatchSize) {
            throw ShapeMismatch("patch weight has shape " + patch_weight.shape().str());
        }
        if (cls_token.shape() != Shape{1, c}) throw ShapeMismatch("cls token has shape " + cls_token.shape().str());
        if (register_tokens.shape() != Shape{kNumRegisters, c}) {
            throw ShapeMismatch("register tokens have shape " + register_tokens.shape().str());
        }
        if (final_gamma.numel() != c || final_beta.numel() != c) {
            throw ShapeMismatch("final norm params do not match channels");
        }
        const int heads = blocks.front().num_heads;
        for (const auto& b : blocks) {
            b.validate();
            if (b.channels() != c || b.num_heads != heads) {
                throw InvalidArch("all blocks must share channels and head count");
            }
        }
    }

    int64_t tensor_count() const {
        return 6 + 14 * static_cast<int64_t>(blocks.size());
    }
};

struct Schedule {
    std::vector<Plane> planes;

    int64_t size() const { return static_cast<int64_t>(planes.size()); }
};

// Repeats `pattern` until `depth` entries, truncating mid-cycle when depth is
// not a multiple of the pattern length.
inline Schedule tile_schedule(const std::vector<Plane>& pattern, int64_t depth) {
    if (pattern.empty()) throw ScheduleError("schedule pattern is empty");
    if (depth < 1) throw ScheduleError("depth must be >= 1");
    Schedule s;
    s.planes.reserve(static_cast<size_t>(depth));
    for (int64_t i = 0; i < depth; ++i) s.planes.push_back(pattern[static_cast<size_t>(i) % pattern.size()]);
    return s;
}

// The four-operator cycle HW -> DW -> DH -> HW. The repeated HW slot gives
// the axial plane the extra capacity.
inline Schedule build_cycle_schedule(int64_t depth) {
    return tile_schedule({Plane::HW, Plane::DW, Plane::DH, Plane::HW}, depth);
}

inline Schedule parse_schedule(const std::string& spec, int64_t depth) {
    std::vector<Plane> pattern;
    std::string token;
    auto flush = [&]() {
        if (token.empty()) return;
        if (token == "hw" || token == "HW") pattern.push_back(Plane::HW);
        else if (token == "dw" || token == "DW") pattern.push_back(Plane::DW);
        else if (token == "dh" || token == "DH") pattern.push_back(Plane::DH);
        else throw ScheduleError("unknown plane '" + token + "' (expected hw, dw, or dh)");
        token.clear();
    };
    for (char ch : spec) {
        if (ch == ',') flush();
        else if (ch != ' ') token.push_back(ch);
    }
    flush();
    return tile_schedule(pattern, depth);
}

enum class LiftKind { Slice2D, Flat3D, PlaneCycle };

struct LiftMode {
    LiftKind kind = LiftKind::PlaneCycle;
    PoolMode pool = PoolMode::PCg;

    static LiftMode slice2d() { return {LiftKind::Slice2D, PoolMode::PCg}; }
    static LiftMode flat3d() { return {LiftKind::Flat3D, PoolMode::PCg}; }
    static LiftMode plane_cycle(PoolMode pool) { return {LiftKind::PlaneCycle, pool}; }

    const char* name() const {
        switch (kind) {
            case LiftKind::Slice2D: return "2d";
            case LiftKind::Flat3D: return "3d";
            default: return pool == PoolMode::PCm ? "pcm" : "pcg";
        }
    }
};

inline LiftMode parse_lift_mode(const std::string& s) {
    if (s == "2d") return LiftMode::slice2d();
    if (s == "3d") return LiftMode::flat3d();
    if (s == "pcm") return LiftMode::plane_cycle(PoolMode::PCm);
    if (s == "pcg") return LiftMode::plane_cycle(PoolMode::PCg);
    throw ScheduleError("unknown mode '" + s + "' (expected 2d, 3d, pcm, or pcg)");
}

struct EmbeddedVolume {
    VolumeFeatures features; // [D0, H0/16, W0/16, C]
    GlobalTokens globals;    // [D0, 5, C]
};

// 2D patch projection applied independently to each axial slice; CLS and
// register tokens replicate per slice.
inline EmbeddedVolume patch_embed_volume(const Tensor& raw, const NetworkWeights& w, int threads = 1) {
    if (raw.rank() != 4) throw ShapeMismatch("raw volume must be [D,H,W,in_ch], got " + raw.shape().str());
    const int64_t D0 = raw.dim(0), H0 = raw.dim(1), W0 = raw.dim(2), in_ch = raw.dim(3);
    if (H0 % kPatchSize != 0 || W0 % kPatchSize != 0) {
        throw IndivisibleExtent("H and W must be divisible by " + std::to_string(kPatchSize) + ", got " +
                                raw.shape().str());
    }
    if (in_ch != w.in_channels()) {
        throw ShapeMismatch("volume has " + std::to_string(in_ch) + " channels, patch embed expects " +
                            std::to_string(w.in_channels()));
    }
    const int64_t C = w.channels();
    const int64_t Ht = H0 / kPatchSize, Wt = W0 / kPatchSize;

    EmbeddedVolume out;
    out.features = VolumeFeatures(Tensor(Shape{D0, Ht, Wt, C}));
    const float* rp = raw.data();
    const float* wp = w.patch_weight.data();
    float* fp = out.features.x.data();
    parallel_for(D0 * Ht * Wt, threads, [&](int64_t patch) {
        const int64_t d = patch / (Ht * Wt);
        const int64_t ph = (patch / Wt) % Ht;
        const int64_t pw = patch % Wt;
        for (int64_t c = 0; c < C; ++c) {
            double acc = static_cast<double>(w.patch_bias[c]);
            const float* kernel = wp + c * in_ch * kPatchSize * kPatchSize;
            for (int64_t ic = 0; ic < in_ch; ++ic) {
                for (int64_t py = 0; py < kPatchSize; ++py) {
                    const int64_t y = ph * kPatchSize + py;
                    const float* row = rp + ((d * H0 + y) * W0 + pw * kPatchSize) * in_ch;
                    for (int64_t px = 0; px < kPatchSize; ++px) {
                        acc += static_cast<double>(kernel[(ic * kPatchSize + py) * kPatchSize + px]) *
                               static_cast<double>(row[px * in_ch + ic]);
                    }
                }
            }
            fp[patch * C + c] = static_cast<float>(acc);
        }
    });

    Tensor globals(Shape{D0, kGlobalTokens, C});
    for (int64_t d = 0; d < D0; ++d) {
        float* slot = globals.data() + d * kGlobalTokens * C;
        std::memcpy(slot, w.cls_token.data(), static_cast<size_t>(C) * sizeof(float));
        std::memcpy(slot + C, w.register_tokens.data(), static_cast<size_t>(kNumRegisters * C) * sizeof(float));
    }
    out.globals = GlobalTokens(std::move(globals));
    return out;
}

namespace detail {

// Flat3D rotary coordinates: the per-head channel budget splits over the
// volume axes with extent > 1, in (d, h, w) order; extent-1 axes carry no
// position and are dropped from the split, so a depth-1 volume reduces to the
// in-plane (h, w) convention.
inline RopeCoords coords_for_flat3d(int64_t D, int64_t H, int64_t W, int64_t g) {
    auto norm = [](int64_t i, int64_t n) -> float {
        if (n == 1) return 0.0f;
        return static_cast<float>(-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1));
    };

    const int64_t dims[3] = {D, H, W};
    std::vector<int> active;
    for (int a = 0; a < 3; ++a) {
        if (dims[a] > 1) active.push_back(a);
    }
    if (active.empty()) active.push_back(1); // degenerate 1x1x1: coords all zero anyway

    RopeCoords rc;
    rc.axes = static_cast<int>(active.size());
    const int64_t n = g + D * H * W;
    rc.coords.assign(static_cast<size_t>(n) * rc.axes, 0.0f);
    rc.rotate.assign(static_cast<size_t>(n), 1);
    for (int64_t t = 0; t < g; ++t) rc.rotate[static_cast<size_t>(t)] = 0;
    for (int64_t d = 0; d < D; ++d) {
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t w = 0; w < W; ++w) {
                const int64_t t = g + (d * H + h) * W + w;
                const int64_t idx[3] = {d, h, w};
                for (size_t a = 0; a < active.size(); ++a) {
                    rc.coords[static_cast<size_t>(t) * rc.axes + a] =
                        norm(idx[active[a]], dims[active[a]]);
                }
            }
        }
    }
    return rc;
}

} // namespace detail

struct LiftResult {
    VolumeFeatures features;
    GlobalTokens globals;
};

// Runs the block stack on an already-embedded volume. Slice2D keeps every
// depth slice independent; Flat3D runs one full-volume sequence per block
// (globals must be a single set); PlaneCycle follows the schedule.
// final_norm applies to patch and global tokens alike.
inline LiftResult forward_features(VolumeFeatures v, GlobalTokens g, const NetworkWeights& w,
                                   LiftMode mode, const Schedule& schedule, int threads = 1,
                                   bool apply_final_norm = true) {
    w.validate();
    const int64_t C = w.channels();
    if (v.c() != C || g.c() != C) throw ShapeMismatch("feature channels do not match network channels");

    const int64_t D = v.d(), H = v.h(), W = v.w();
    const int64_t gn = g.per_slice();

    if (mode.kind == LiftKind::Slice2D) {
        if (g.slices() != D) {
            throw ShapeMismatch("slice-wise mode needs one global set per depth slice");
        }
        const RopeCoords coords = coords_for_plane(Plane::HW, D, H, W, gn);
        const int64_t M = H * W;
        Tensor volume = v.x; // [D, H, W, C]; slice d is contiguous [M, C]
        Tensor globals = g.t;
        for (const auto& block : w.blocks) {
            Tensor next_volume(volume.shape());
            Tensor next_globals(globals.shape());
            parallel_for(D, threads, [&](int64_t d) {
                Tensor seq(Shape{gn + M, C});
                std::memcpy(seq.data(), globals.data() + d * gn * C, static_cast<size_t>(gn * C) * sizeof(float));
                std::memcpy(seq.data() + gn * C, volume.data() + d * M * C,
                            static_cast<size_t>(M * C) * sizeof(float));
                Tensor res = block_forward(seq, block, coords);
                std::memcpy(next_globals.data() + d * gn * C, res.data(),
                            static_cast<size_t>(gn * C) * sizeof(float));
                std::memcpy(next_volume.data() + d * M * C, res.data() + gn * C,
                            static_cast<size_t>(M * C) * sizeof(float));
            });
            volume = std::move(next_volume);
            globals = std::move(next_globals);
        }
        v = VolumeFeatures(std::move(volume));
        g = GlobalTokens(std::move(globals));
    } else if (mode.kind == LiftKind::Flat3D) {
        if (g.slices() != 1) {
            throw ShapeMismatch("flattened-3D mode uses a single shared global set");
        }
        const int64_t dh = w.blocks.front().head_dim();
        if (dh % 6 != 0) {
            throw UnsupportedHeadDim("flattened-3D positions need per-head dim divisible by 6, got " +
                                     std::to_string(dh));
        }
        const RopeCoords coords = detail::coords_for_flat3d(D, H, W, gn);
        const int64_t M = D * H * W;
        Tensor seq(Shape{gn + M, C});
        std::memcpy(seq.data(), g.t.data(), static_cast<size_t>(gn * C) * sizeof(float));
        std::memcpy(seq.data() + gn * C, v.x.data(), static_cast<size_t>(M * C) * sizeof(float));
        for (const auto& block : w.blocks) seq = block_forward(seq, block, coords);
        Tensor globals(Shape{1, gn, C});
        std::memcpy(globals.data(), seq.data(), static_cast<size_t>(gn * C) * sizeof(float));
        Tensor volume(Shape{D, H, W, C});
        std::memcpy(volume.data(), seq.data() + gn * C, static_cast<size_t>(M * C) * sizeof(float));
        v = VolumeFeatures(std::move(volume));
        g = GlobalTokens(std::move(globals));
    } else {
        if (schedule.size() != w.depth()) {
            throw ScheduleError("schedule has " + std::to_string(schedule.size()) + " entries for depth " +
                                std::to_string(w.depth()));
        }
        for (int64_t l = 0; l < w.depth(); ++l) {
            PlaneStepResult step = plane_cycle_step(v, g, w.blocks[static_cast<size_t>(l)],
                                                    schedule.planes[static_cast<size_t>(l)], mode.pool,
                                                    threads);
            v = std::move(step.features);
            g = std::move(step.globals);
        }
    }

    if (apply_final_norm) {
        Tensor flat = reshape(std::move(v.x), Shape{D * H * W, C});
        flat = layer_norm(flat, w.final_gamma, w.final_beta);
        v = VolumeFeatures(reshape(std::move(flat), Shape{D, H, W, C}));
        const int64_t gs = g.slices();
        Tensor gflat = reshape(std::move(g.t), Shape{gs * gn, C});
        gflat = layer_norm(gflat, w.final_gamma, w.final_beta);
        g = GlobalTokens(reshape(std::move(gflat), Shape{gs, gn, C}));
    }

    return {std::move(v), std::move(g)};
}

// End-to-end lifting from a raw volume.
inline LiftResult forward(const Tensor& raw, const NetworkWeights& w, LiftMode mode,
                          const Schedule& schedule, int threads = 1) {
    EmbeddedVolume embedded = patch_embed_volume(raw, w, threads);
    GlobalTokens globals = std::move(embedded.globals);
    if (mode.kind == LiftKind::Flat3D) {
        // One shared global set: the learned tokens, not per-slice replicas.
        Tensor shared(Shape{1, kGlobalTokens, w.channels()});
        std::memcpy(shared.data(), w.cls_token.data(), static_cast<size_t>(w.channels()) * sizeof(float));
        std::memcpy(shared.data() + w.channels(), w.register_tokens.data(),
                    static_cast<size_t>(kNumRegisters * w.channels()) * sizeof(float));
        globals = GlobalTokens(std::move(shared));
    }
    return forward_features(std::move(embedded.features), std::move(globals), w, mode, schedule, threads);
}

// Mean of the CLS token (index 0) over slices: the one-vector summary a
// downstream head consumes.
inline Tensor extract_global_summary(const GlobalTokens& g) {
    const int64_t P = g.slices(), C = g.c();
    Tensor out(Shape{C});
    for (int64_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (int64_t p = 0; p < P; ++p) s += static_cast<double>(g.t.at(p, 0, c));
        out[c] = static_cast<float>(s / static_cast<double>(P));
    }
    return out;
}

} // namespace planecycle
