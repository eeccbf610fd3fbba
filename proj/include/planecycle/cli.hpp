#pragma once

#include <array>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "planecycle/archive.hpp"
#include "planecycle/error.hpp"
#include "planecycle/metrics.hpp"
#include "planecycle/network.hpp"
#include "planecycle/pca.hpp"
#include "planecycle/ppm.hpp"
#include "planecycle/selftest.hpp"

namespace planecycle {

enum class Command { Lift, FeatDice, Pca, Bench, Selftest };

struct CliConfig {
    Command command = Command::Selftest;
    std::string mode = "pcg";
    std::string schedule;              // plane pattern override, e.g. "hw,dw,dh,hw"
    std::string weights;               // archive path
    std::string input;                 // archive path
    std::string output;                // archive path or image basename
    uint64_t seed = 42;
    std::vector<std::string> dims;     // bench grids: "8" (cube) or "4x16x16"
    int repeats = 5;
    int threads = 1;
    int64_t cost_g = -1;               // bench pair-model override; <0 keeps the live token count
    int synth_depth = 4;               // fallback arch when bench gets no weights file
    int64_t synth_channels = 48;
    int synth_heads = 4;
    std::string save_weights;          // bench writes its weights archive here when set
};

namespace detail {

inline std::vector<std::array<int64_t, 3>> parse_dims(const std::vector<std::string>& dims) {
    if (dims.empty()) throw InvalidLength("at least one grid size is required");
    std::vector<std::array<int64_t, 3>> out;
    for (const auto& token : dims) {
        std::array<int64_t, 3> v{};
        size_t axis = 0;
        int64_t cur = -1;
        for (char ch : token) {
            if (ch >= '0' && ch <= '9') {
                cur = (cur < 0 ? 0 : cur) * 10 + (ch - '0');
            } else if (ch == 'x' || ch == 'X') {
                if (cur < 0 || axis >= 2) throw InvalidLength("bad grid size '" + token + "'");
                v[axis++] = cur;
                cur = -1;
            } else {
                throw InvalidLength("bad grid size '" + token + "'");
            }
        }
        if (cur < 0) throw InvalidLength("bad grid size '" + token + "'");
        v[axis] = cur;
        if (axis == 0) v = {cur, cur, cur};
        else if (axis != 2) throw InvalidLength("grid size '" + token + "' must be N or DxHxW");
        for (int64_t d : v) {
            if (d < 1) throw InvalidLength("grid extents must be >= 1 in '" + token + "'");
        }
        out.push_back(v);
    }
    return out;
}

inline NetworkWeights load_weights_or_fail(const CliConfig& cfg) {
    if (cfg.weights.empty()) throw MissingWeights("--weights is required");
    return load_network(cfg.weights);
}

inline TensorArchive read_input_or_fail(const CliConfig& cfg) {
    if (cfg.input.empty()) throw MissingInput("--input is required");
    return read_archive(cfg.input);
}

inline Schedule schedule_for(const CliConfig& cfg, int64_t depth) {
    return cfg.schedule.empty() ? build_cycle_schedule(depth) : parse_schedule(cfg.schedule, depth);
}

// Features for featdice/pca: a precomputed "features" entry wins; otherwise
// the raw "volume" is lifted with the configured weights and mode.
inline VolumeFeatures features_from_input(const CliConfig& cfg, const TensorArchive& in) {
    auto it = in.tensors.find("features");
    if (it != in.tensors.end()) {
        return VolumeFeatures(it->second);
    }
    auto vol = in.tensors.find("volume");
    if (vol == in.tensors.end()) {
        throw MissingInput("input archive has neither a 'features' nor a 'volume' entry");
    }
    const NetworkWeights w = load_weights_or_fail(cfg);
    const LiftMode mode = parse_lift_mode(cfg.mode);
    LiftResult r = forward(vol->second, w, mode, schedule_for(cfg, w.depth()), cfg.threads);
    return std::move(r.features);
}

} // namespace detail

inline int cmd_lift(const CliConfig& cfg, std::ostream& out) {
    const NetworkWeights w = detail::load_weights_or_fail(cfg);
    const TensorArchive in = detail::read_input_or_fail(cfg);
    auto vol = in.tensors.find("volume");
    if (vol == in.tensors.end()) throw MissingInput("input archive has no 'volume' entry");
    if (cfg.output.empty()) throw Error("E_NO_OUTPUT", "--output is required");

    const LiftMode mode = parse_lift_mode(cfg.mode);
    const Schedule schedule = detail::schedule_for(cfg, w.depth());
    LiftResult r = forward(vol->second, w, mode, schedule, cfg.threads);

    const ComplexityReport cost = attention_cost(mode, r.features.d(), r.features.h(), r.features.w(),
                                                 kGlobalTokens, w.depth(), schedule);
    out << "complexity mode=" << cost.mode << " layers=" << cost.layers.size()
        << " sequences=" << cost.total_sequences() << " attn_pairs=" << cost.total_pairs() << '\n';

    TensorArchive result;
    result.tensors.emplace("summary", extract_global_summary(r.globals));
    result.tensors.emplace("features", std::move(r.features.x));
    result.tensors.emplace("globals", std::move(r.globals.t));
    result.metadata["mode"] = mode.name();
    write_archive(result, cfg.output);
    return 0;
}

inline int cmd_featdice(const CliConfig& cfg, std::ostream& out) {
    const TensorArchive in = detail::read_input_or_fail(cfg);
    auto mask_it = in.tensors.find("mask");
    if (mask_it == in.tensors.end()) throw MissingInput("input archive has no 'mask' entry");
    const VolumeFeatures features = detail::features_from_input(cfg, in);

    LesionMask mask(mask_it->second);
    if (mask.mask.dim(0) != features.d() || mask.mask.dim(1) != features.h() ||
        mask.mask.dim(2) != features.w()) {
        // Voxel-resolution mask: reduce to the token grid by patch majority.
        mask = downsample_mask_majority(mask);
    }
    const FeatDiceResult r = feat_dice(features, mask);
    out << "featdice=" << std::fixed << std::setprecision(4) << r.score << '\n';
    return 0;
}

inline int cmd_pca(const CliConfig& cfg, std::ostream& out) {
    const TensorArchive in = detail::read_input_or_fail(cfg);
    if (cfg.output.empty()) throw Error("E_NO_OUTPUT", "--output is required");
    const VolumeFeatures features = detail::features_from_input(cfg, in);

    const Tensor proj = pca_project(features, 3, cfg.seed);
    const char* suffix[3] = {"_hw.ppm", "_dw.ppm", "_dh.ppm"};
    for (int axis = 0; axis < 3; ++axis) {
        const std::string path = cfg.output + suffix[axis];
        write_ppm(central_plane_slice(proj, axis), path);
        out << "wrote " << path << '\n';
    }
    return 0;
}

inline int cmd_bench(const CliConfig& cfg, std::ostream& out) {
    const std::vector<std::array<int64_t, 3>> dims = detail::parse_dims(cfg.dims);
    NetworkWeights w;
    if (!cfg.weights.empty()) {
        w = load_network(cfg.weights);
    } else {
        SynthArch arch;
        arch.depth = cfg.synth_depth;
        arch.channels = cfg.synth_channels;
        arch.num_heads = cfg.synth_heads;
        w = synth_weights(cfg.seed, arch);
    }
    if (!cfg.save_weights.empty()) save_network(w, cfg.save_weights);
    const Schedule schedule = detail::schedule_for(cfg, w.depth());
    const int64_t cost_g = cfg.cost_g < 0 ? kGlobalTokens : cfg.cost_g;
    const std::vector<LiftMode> modes = {LiftMode::slice2d(), LiftMode::flat3d(),
                                         LiftMode::plane_cycle(PoolMode::PCm),
                                         LiftMode::plane_cycle(PoolMode::PCg)};

    const std::vector<BenchRow> rows = benchmark_forward(w, dims, modes, cfg.repeats, schedule, cost_g,
                                                         cfg.threads);
    out << bench_rows_to_csv(rows);
    for (const auto& d : dims) {
        const int64_t flat = attention_cost(LiftMode::flat3d(), d[0], d[1], d[2], cost_g, w.depth(), schedule)
                                 .total_pairs();
        const int64_t cycle = attention_cost(LiftMode::plane_cycle(PoolMode::PCg), d[0], d[1], d[2], cost_g,
                                             w.depth(), schedule)
                                  .total_pairs();
        out << "# pair_ratio D=" << d[0] << " H=" << d[1] << " W=" << d[2] << " 3d/pcg=" << std::fixed
            << std::setprecision(3) << static_cast<double>(flat) / static_cast<double>(cycle) << '\n';
    }
    return 0;
}

inline int cmd_selftest(std::ostream& out, const SelftestHooks& hooks = {}) {
    return run_selftest(out, hooks);
}

// Dispatch with the documented exit contract: 0 success, 1 selftest failure,
// 2 on any error, each error printed as one "E_CODE: message" line.
inline int run_cli(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        switch (cfg.command) {
            case Command::Lift: return cmd_lift(cfg, out);
            case Command::FeatDice: return cmd_featdice(cfg, out);
            case Command::Pca: return cmd_pca(cfg, out);
            case Command::Bench: return cmd_bench(cfg, out);
            case Command::Selftest: return cmd_selftest(out);
        }
        return 2;
    } catch (const Error& e) {
        err << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "E_INTERNAL: " << e.what() << '\n';
        return 2;
    }
}

} // namespace planecycle
