#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "planecycle/network.hpp"
#include "planecycle/plane_ops.hpp"
#include "planecycle/rng.hpp"
#include "planecycle/tensor.hpp"

namespace planecycle {

// Binary lesion mask on the feature grid. Values > 0.5 count as positive.
struct LesionMask {
    Tensor mask; // [D, H, W]

    LesionMask() = default;
    explicit LesionMask(Tensor m) : mask(std::move(m)) {
        if (mask.rank() != 3) throw ShapeMismatch("mask must be [D,H,W], got " + mask.shape().str());
    }

    bool positive(int64_t i) const { return mask[i] > 0.5f; }

    int64_t positive_count() const {
        int64_t n = 0;
        for (int64_t i = 0; i < mask.numel(); ++i) {
            if (positive(i)) ++n;
        }
        return n;
    }
};

// Majority vote per 16x16 patch footprint, ties positive. Depth is not
// reduced; tokenization is slice-wise.
inline LesionMask downsample_mask_majority(const LesionMask& m, int64_t patch = kPatchSize) {
    const int64_t D = m.mask.dim(0), H0 = m.mask.dim(1), W0 = m.mask.dim(2);
    if (H0 % patch != 0 || W0 % patch != 0) {
        throw IndivisibleExtent("mask extents must be divisible by the patch size");
    }
    const int64_t Ht = H0 / patch, Wt = W0 / patch;
    Tensor out(Shape{D, Ht, Wt});
    for (int64_t d = 0; d < D; ++d) {
        for (int64_t i = 0; i < Ht; ++i) {
            for (int64_t j = 0; j < Wt; ++j) {
                int64_t pos = 0;
                for (int64_t y = 0; y < patch; ++y) {
                    for (int64_t x = 0; x < patch; ++x) {
                        if (m.mask.at(d, i * patch + y, j * patch + x) > 0.5f) ++pos;
                    }
                }
                out.at(d, i, j) = (2 * pos >= patch * patch) ? 1.0f : 0.0f;
            }
        }
    }
    return LesionMask(std::move(out));
}

struct SimilarityMap {
    Tensor sim; // [D, H, W] of cosine similarities in [-1, 1]
};

namespace detail {

inline std::array<int64_t, 3> mask_reference_voxel(const LesionMask& m) {
    const int64_t D = m.mask.dim(0), H = m.mask.dim(1), W = m.mask.dim(2);
    double cd = 0.0, ch = 0.0, cw = 0.0;
    int64_t count = 0;
    for (int64_t d = 0; d < D; ++d) {
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t w = 0; w < W; ++w) {
                if (m.mask.at(d, h, w) > 0.5f) {
                    cd += static_cast<double>(d);
                    ch += static_cast<double>(h);
                    cw += static_cast<double>(w);
                    ++count;
                }
            }
        }
    }
    if (count == 0) throw EmptyMask("mask has no positive voxels");
    std::array<int64_t, 3> centroid = {
        static_cast<int64_t>(std::llround(cd / count)),
        static_cast<int64_t>(std::llround(ch / count)),
        static_cast<int64_t>(std::llround(cw / count)),
    };
    if (m.mask.at(centroid[0], centroid[1], centroid[2]) > 0.5f) return centroid;

    // Rounded centroid fell outside the lesion: snap to the nearest positive
    // voxel (squared Euclidean, lowest linear index wins ties).
    std::array<int64_t, 3> best = {0, 0, 0};
    int64_t best_dist = -1;
    for (int64_t d = 0; d < D; ++d) {
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t w = 0; w < W; ++w) {
                if (m.mask.at(d, h, w) <= 0.5f) continue;
                const int64_t dd = d - centroid[0], dv = h - centroid[1], dw = w - centroid[2];
                const int64_t dist = dd * dd + dv * dv + dw * dw;
                if (best_dist < 0 || dist < best_dist) {
                    best_dist = dist;
                    best = {d, h, w};
                }
            }
        }
    }
    return best;
}

} // namespace detail

// Cosine similarity of every voxel feature to the feature at `ref`.
// Zero-norm voxels other than the reference map to similarity 0.
inline SimilarityMap similarity_map(const VolumeFeatures& f, const std::array<int64_t, 3>& ref) {
    const int64_t D = f.d(), H = f.h(), W = f.w(), C = f.c();
    const float* rp = f.x.data() + ((ref[0] * H + ref[1]) * W + ref[2]) * C;
    double ref_norm2 = 0.0;
    for (int64_t c = 0; c < C; ++c) ref_norm2 += static_cast<double>(rp[c]) * static_cast<double>(rp[c]);
    if (ref_norm2 == 0.0) throw ZeroReferenceFeature("reference voxel has a zero feature vector");
    const double ref_norm = std::sqrt(ref_norm2);

    SimilarityMap out;
    out.sim = Tensor(Shape{D, H, W});
    const float* fp = f.x.data();
    for (int64_t v = 0; v < D * H * W; ++v) {
        const float* vp = fp + v * C;
        double dot = 0.0, norm2 = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            dot += static_cast<double>(vp[c]) * static_cast<double>(rp[c]);
            norm2 += static_cast<double>(vp[c]) * static_cast<double>(vp[c]);
        }
        out.sim[v] = norm2 == 0.0 ? 0.0f : static_cast<float>(dot / (std::sqrt(norm2) * ref_norm));
    }
    return out;
}

struct FeatDiceResult {
    double score = 0.0;
    float threshold = 0.0f;            // best threshold on (sim+1)/2
    std::array<int64_t, 3> reference{}; // voxel the similarity map is anchored to
};

inline constexpr int kFeatDiceThresholds = 21; // 0.00, 0.05, ..., 1.00

// Zero-training coherence metric: anchor at the lesion centroid, binarize the
// cosine-similarity map at each threshold in {i/20}, keep the best Dice. The
// threshold grid is part of the metric's definition.
inline FeatDiceResult feat_dice(const VolumeFeatures& f, const LesionMask& m) {
    if (f.d() != m.mask.dim(0) || f.h() != m.mask.dim(1) || f.w() != m.mask.dim(2)) {
        throw ShapeMismatch("feature grid " + f.x.shape().str() + " does not match mask grid " +
                            m.mask.shape().str());
    }
    FeatDiceResult result;
    result.reference = detail::mask_reference_voxel(m);
    const SimilarityMap sm = similarity_map(f, result.reference);

    const int64_t n = sm.sim.numel();
    int64_t mask_count = 0;
    for (int64_t v = 0; v < n; ++v) {
        if (m.positive(v)) ++mask_count;
    }

    for (int t = 0; t < kFeatDiceThresholds; ++t) {
        const float threshold = static_cast<float>(t) / 20.0f;
        int64_t pred = 0, inter = 0;
        for (int64_t v = 0; v < n; ++v) {
            const float s01 = (sm.sim[v] + 1.0f) / 2.0f;
            if (s01 >= threshold) {
                ++pred;
                if (m.positive(v)) ++inter;
            }
        }
        const double dice = 2.0 * static_cast<double>(inter) / static_cast<double>(pred + mask_count);
        if (dice > result.score) {
            result.score = dice;
            result.threshold = threshold;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Attention-cost model: attention_pairs = sequence_count * sequence_length^2,
// exact integers.

struct LayerCost {
    int layer = 0;
    std::string plane;         // plane name for lifted layers, "-" otherwise
    int64_t sequence_count = 0;
    int64_t sequence_length = 0;
    int64_t attention_pairs = 0;
};

struct ComplexityReport {
    std::string mode;
    std::vector<LayerCost> layers;

    int64_t total_pairs() const {
        int64_t t = 0;
        for (const auto& l : layers) t += l.attention_pairs;
        return t;
    }

    int64_t total_sequences() const {
        int64_t t = 0;
        for (const auto& l : layers) t += l.sequence_count;
        return t;
    }

    static std::string csv_header() { return "mode,layer,plane,sequence_count,sequence_length,attention_pairs"; }

    std::string to_csv() const {
        std::ostringstream os;
        os << csv_header() << '\n';
        for (const auto& l : layers) {
            os << mode << ',' << l.layer << ',' << l.plane << ',' << l.sequence_count << ','
               << l.sequence_length << ',' << l.attention_pairs << '\n';
        }
        return os.str();
    }
};

inline ComplexityReport attention_cost(LiftMode mode, int64_t D, int64_t H, int64_t W, int64_t g,
                                       int64_t depth, const Schedule& schedule) {
    ComplexityReport report;
    report.mode = mode.name();
    for (int64_t l = 0; l < depth; ++l) {
        LayerCost cost;
        cost.layer = static_cast<int>(l);
        cost.plane = "-";
        switch (mode.kind) {
            case LiftKind::Slice2D:
                cost.sequence_count = D;
                cost.sequence_length = g + H * W;
                break;
            case LiftKind::Flat3D:
                cost.sequence_count = 1;
                cost.sequence_length = g + D * H * W;
                break;
            case LiftKind::PlaneCycle: {
                if (schedule.size() != depth) {
                    throw ScheduleError("schedule has " + std::to_string(schedule.size()) +
                                        " entries for depth " + std::to_string(depth));
                }
                const Plane p = schedule.planes[static_cast<size_t>(l)];
                const int64_t dims[3] = {D, H, W};
                const int64_t P = dims[slicing_axis(p)];
                cost.plane = plane_name(p);
                cost.sequence_count = P;
                cost.sequence_length = g + D * H * W / P;
                break;
            }
        }
        cost.attention_pairs = cost.sequence_count * cost.sequence_length * cost.sequence_length;
        report.layers.push_back(cost);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Wall-time benchmarking of the block stack at feature level.

struct BenchRow {
    std::string mode;
    int64_t d = 0, h = 0, w = 0;
    int depth = 0;
    int64_t attn_pairs = 0;
    double median_ms = 0.0;
};

inline std::string bench_csv_header() { return "mode,D,H,W,depth,attn_pairs,median_ms"; }

inline std::string bench_rows_to_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << bench_csv_header() << '\n';
    os.setf(std::ios::fixed);
    os.precision(3);
    for (const auto& r : rows) {
        os << r.mode << ',' << r.d << ',' << r.h << ',' << r.w << ',' << r.depth << ',' << r.attn_pairs
           << ',' << r.median_ms << '\n';
    }
    return os.str();
}

// Median forward wall time per (mode, token-grid size) over `repeats` runs,
// one warm-up excluded. cost_g only affects the reported attention-pair
// model; the measured forward always carries the network's global tokens.
inline std::vector<BenchRow> benchmark_forward(const NetworkWeights& w,
                                               const std::vector<std::array<int64_t, 3>>& dims_list,
                                               const std::vector<LiftMode>& modes, int repeats,
                                               const Schedule& schedule, int64_t cost_g = kGlobalTokens,
                                               int threads = 1) {
    if (repeats < 3) throw InvalidLength("benchmark needs at least 3 repeats");
    w.validate();
    const int64_t C = w.channels();

    std::vector<BenchRow> rows;
    for (const auto& dims : dims_list) {
        const int64_t D = dims[0], H = dims[1], W = dims[2];
        SplitMix64 rng(fnv1a64("bench") ^ static_cast<uint64_t>(D * 73856093 + H * 19349663 + W * 83492791));
        Tensor vol(Shape{D, H, W, C});
        for (int64_t i = 0; i < vol.numel(); ++i) vol[i] = static_cast<float>(rng.next_gaussian());

        for (const auto& mode : modes) {
            const int64_t gp = mode.kind == LiftKind::Flat3D ? 1 : D;
            Tensor gt(Shape{gp, kGlobalTokens, C});
            for (int64_t i = 0; i < gt.numel(); ++i) gt[i] = static_cast<float>(rng.next_gaussian());

            auto run_once = [&]() {
                LiftResult r = forward_features(VolumeFeatures(vol), GlobalTokens(gt), w, mode, schedule,
                                                threads);
                return r.features.x[0];
            };

            volatile float sink = run_once(); // warm-up
            std::vector<double> samples;
            samples.reserve(static_cast<size_t>(repeats));
            for (int r = 0; r < repeats; ++r) {
                const auto start = std::chrono::steady_clock::now();
                sink = run_once();
                const auto stop = std::chrono::steady_clock::now();
                samples.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
            }
            (void)sink;
            std::sort(samples.begin(), samples.end());
            const size_t mid = samples.size() / 2;
            const double median = samples.size() % 2 ? samples[mid] : 0.5 * (samples[mid - 1] + samples[mid]);

            BenchRow row;
            row.mode = mode.name();
            row.d = D;
            row.h = H;
            row.w = W;
            row.depth = w.depth();
            row.attn_pairs = attention_cost(mode, D, H, W, cost_g, w.depth(), schedule).total_pairs();
            row.median_ms = median;
            rows.push_back(row);
        }
    }
    return rows;
}

} // namespace planecycle
