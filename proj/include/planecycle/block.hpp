#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "planecycle/error.hpp"
#include "planecycle/tensor.hpp"

namespace planecycle {

// Frozen parameters of one pretrained transformer block. Layer-scale vectors
// default to ones when a checkpoint does not carry them.
struct BlockWeights {
    Tensor ln1_gamma;   // [C]
    Tensor ln1_beta;    // [C]
    Tensor qkv_weight;  // [3C, C]
    Tensor qkv_bias;    // [3C]
    Tensor proj_weight; // [C, C]
    Tensor proj_bias;   // [C]
    Tensor ls1_gamma;   // [C]
    Tensor ln2_gamma;   // [C]
    Tensor ln2_beta;    // [C]
    Tensor fc1_weight;  // [Ch, C]
    Tensor fc1_bias;    // [Ch]
    Tensor fc2_weight;  // [C, Ch]
    Tensor fc2_bias;    // [Ch -> C]
    Tensor ls2_gamma;   // [C]
    int num_heads = 1;

    int64_t channels() const { return ln1_gamma.numel(); }
    int64_t hidden() const { return fc1_bias.numel(); }
    int64_t head_dim() const { return channels() / num_heads; }

    void validate() const {
        const int64_t c = channels();
        if (num_heads < 1 || c % num_heads != 0) {
            throw InvalidArch("channels " + std::to_string(c) + " not divisible by heads " +
                              std::to_string(num_heads));
        }
        if (head_dim() % 2 != 0) {
            throw InvalidArch("per-head dim " + std::to_string(head_dim()) + " must be even");
        }
        auto expect = [](const Tensor& t, Shape s, const char* name) {
            if (t.shape() != s) {
                throw ShapeMismatch(std::string(name) + " has shape " + t.shape().str() +
                                    ", expected " + s.str());
            }
        };
        const int64_t ch = hidden();
        expect(ln1_beta, Shape{c}, "ln1_beta");
        expect(qkv_weight, Shape{3 * c, c}, "qkv_weight");
        expect(qkv_bias, Shape{3 * c}, "qkv_bias");
        expect(proj_weight, Shape{c, c}, "proj_weight");
        expect(proj_bias, Shape{c}, "proj_bias");
        expect(ls1_gamma, Shape{c}, "ls1_gamma");
        expect(ln2_gamma, Shape{c}, "ln2_gamma");
        expect(ln2_beta, Shape{c}, "ln2_beta");
        expect(fc1_weight, Shape{ch, c}, "fc1_weight");
        expect(fc1_bias, Shape{ch}, "fc1_bias");
        expect(fc2_weight, Shape{c, ch}, "fc2_weight");
        expect(fc2_bias, Shape{c}, "fc2_bias");
        expect(ls2_gamma, Shape{c}, "ls2_gamma");
    }
};

// Per-token rotary coordinates. `axes` is 2 for in-plane (y, x) positions and
// 3 for the flattened-3D baseline (d, h, w). Tokens with rotate == 0 (global
// tokens) pass through attention without rotation.
struct RopeCoords {
    int axes = 2;
    std::vector<float> coords;  // [N * axes], token-major
    std::vector<uint8_t> rotate; // [N]

    int64_t size() const { return static_cast<int64_t>(rotate.size()); }
    float coord(int64_t token, int axis) const { return coords[static_cast<size_t>(token) * axes + axis]; }
};

inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    if (x.rank() != 2) throw ShapeMismatch("layer_norm expects [N, C], got " + x.shape().str());
    const int64_t n = x.dim(0), c = x.dim(1);
    if (gamma.numel() != c || beta.numel() != c) {
        throw ShapeMismatch("layer_norm affine params do not match C=" + std::to_string(c));
    }
    Tensor out(x.shape());
    const float* xp = x.data();
    float* op = out.data();
    for (int64_t i = 0; i < n; ++i) {
        const float* row = xp + i * c;
        double mean = 0.0;
        for (int64_t j = 0; j < c; ++j) mean += static_cast<double>(row[j]);
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            const double d = static_cast<double>(row[j]) - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + 1e-6);
        for (int64_t j = 0; j < c; ++j) {
            const double norm = (static_cast<double>(row[j]) - mean) * inv;
            op[i * c + j] = static_cast<float>(norm * static_cast<double>(gamma[j]) +
                                               static_cast<double>(beta[j]));
        }
    }
    return out;
}

// Exact (erf-based) GELU.
inline float gelu(float x) {
    return static_cast<float>(0.5 * static_cast<double>(x) *
                              (1.0 + std::erf(static_cast<double>(x) / std::sqrt(2.0))));
}

// x[N, Cin] * weight[Cout, Cin]^T + bias. Ascending-Cin accumulation.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.rank() != 2 || weight.rank() != 2) {
        throw ShapeMismatch("linear expects rank-2 x and weight");
    }
    const int64_t n = x.dim(0), cin = x.dim(1), cout = weight.dim(0);
    if (weight.dim(1) != cin || bias.numel() != cout) {
        throw ShapeMismatch("linear weight " + weight.shape().str() + " does not match input " +
                            x.shape().str());
    }
    Tensor out(Shape{n, cout});
    const float* xp = x.data();
    const float* wp = weight.data();
    float* op = out.data();
    for (int64_t i = 0; i < n; ++i) {
        const float* row = xp + i * cin;
        for (int64_t o = 0; o < cout; ++o) {
            const float* wrow = wp + o * cin;
            double acc = static_cast<double>(bias[o]);
            for (int64_t j = 0; j < cin; ++j) {
                acc += static_cast<double>(row[j]) * static_cast<double>(wrow[j]);
            }
            op[i * cout + o] = static_cast<float>(acc);
        }
    }
    return out;
}

// Rotates adjacent channel pairs of q/k per head. The dh/2 pairs are split
// into `axes` equal groups of ppa = dh/(2*axes) pairs; group a, pair j rotates
// by angle theta_j * coord[token, a] with theta_j = 100^(-j/ppa). For axes = 2
// this is theta_j = 100^(-4j/dh) on the (y, x) halves. Pairs beyond
// axes*ppa (possible when dh % (2*axes) != 0) pass through.
inline Tensor rope_rotate(const Tensor& qk, const RopeCoords& coords) {
    if (qk.rank() != 3) throw ShapeMismatch("rope_rotate expects [H, N, dh], got " + qk.shape().str());
    const int64_t heads = qk.dim(0), n = qk.dim(1), dh = qk.dim(2);
    if (coords.size() != n) {
        throw ShapeMismatch("coords cover " + std::to_string(coords.size()) + " tokens, input has " +
                            std::to_string(n));
    }
    if (dh % 2 != 0) throw UnsupportedHeadDim("per-head dim must be even for rotary pairing");
    const int axes = coords.axes;
    const int64_t ppa = dh / (2 * axes);

    std::vector<double> theta(static_cast<size_t>(ppa));
    for (int64_t j = 0; j < ppa; ++j) {
        theta[static_cast<size_t>(j)] = std::pow(100.0, -static_cast<double>(j) / static_cast<double>(ppa));
    }

    Tensor out = qk;
    float* op = out.data();
    for (int64_t h = 0; h < heads; ++h) {
        for (int64_t t = 0; t < n; ++t) {
            if (!coords.rotate[static_cast<size_t>(t)]) continue;
            float* tok = op + (h * n + t) * dh;
            for (int a = 0; a < axes; ++a) {
                const double pos = static_cast<double>(coords.coord(t, a));
                for (int64_t j = 0; j < ppa; ++j) {
                    const double angle = theta[static_cast<size_t>(j)] * pos;
                    if (angle == 0.0) continue;
                    const float c = static_cast<float>(std::cos(angle));
                    const float s = static_cast<float>(std::sin(angle));
                    const int64_t pair = (a * ppa + j) * 2;
                    const float v0 = tok[pair];
                    const float v1 = tok[pair + 1];
                    tok[pair] = v0 * c - v1 * s;
                    tok[pair + 1] = v0 * s + v1 * c;
                }
            }
        }
    }
    return out;
}

// Optional attention introspection: per-head post-softmax matrices.
struct MhsaDebug {
    std::vector<Tensor> softmax; // one [N, N] tensor per head
};

// Scaled dot-product attention with rotary-rotated Q/K, scale 1/sqrt(dh),
// softmax over keys, then the output projection.
inline Tensor mhsa(const Tensor& x, const BlockWeights& w, const RopeCoords& coords,
                   MhsaDebug* debug = nullptr) {
    const int64_t n = x.dim(0), c = x.dim(1);
    if (c != w.channels()) {
        throw ShapeMismatch("token dim " + std::to_string(c) + " does not match block channels " +
                            std::to_string(w.channels()));
    }
    if (coords.size() != n) throw ShapeMismatch("coords length does not match token count");

    const int64_t heads = w.num_heads;
    const int64_t dh = w.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor qkv = linear(x, w.qkv_weight, w.qkv_bias); // [N, 3C]

    auto split_heads = [&](int64_t offset) {
        Tensor t(Shape{heads, n, dh});
        for (int64_t h = 0; h < heads; ++h) {
            for (int64_t i = 0; i < n; ++i) {
                for (int64_t j = 0; j < dh; ++j) {
                    t.at(h, i, j) = qkv.at(i, offset + h * dh + j);
                }
            }
        }
        return t;
    };

    Tensor q = rope_rotate(split_heads(0), coords);
    Tensor k = rope_rotate(split_heads(c), coords);
    Tensor v = split_heads(2 * c);

    if (debug) debug->softmax.assign(static_cast<size_t>(heads), Tensor(Shape{n, n}));

    Tensor merged(Shape{n, c});
    std::vector<double> logits(static_cast<size_t>(n));
    std::vector<double> probs(static_cast<size_t>(n));
    for (int64_t h = 0; h < heads; ++h) {
        const float* qh = q.data() + h * n * dh;
        const float* kh = k.data() + h * n * dh;
        const float* vh = v.data() + h * n * dh;
        for (int64_t i = 0; i < n; ++i) {
            double maxlogit = -1e300;
            for (int64_t j = 0; j < n; ++j) {
                double dot = 0.0;
                for (int64_t d = 0; d < dh; ++d) {
                    dot += static_cast<double>(qh[i * dh + d]) * static_cast<double>(kh[j * dh + d]);
                }
                logits[static_cast<size_t>(j)] = dot * scale;
                if (logits[static_cast<size_t>(j)] > maxlogit) maxlogit = logits[static_cast<size_t>(j)];
            }
            double denom = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                probs[static_cast<size_t>(j)] = std::exp(logits[static_cast<size_t>(j)] - maxlogit);
                denom += probs[static_cast<size_t>(j)];
            }
            for (int64_t j = 0; j < n; ++j) probs[static_cast<size_t>(j)] /= denom;
            if (debug) {
                for (int64_t j = 0; j < n; ++j) {
                    debug->softmax[static_cast<size_t>(h)].at(i, j) = static_cast<float>(probs[static_cast<size_t>(j)]);
                }
            }
            for (int64_t d = 0; d < dh; ++d) {
                double acc = 0.0;
                for (int64_t j = 0; j < n; ++j) {
                    acc += probs[static_cast<size_t>(j)] * static_cast<double>(vh[j * dh + d]);
                }
                merged.at(i, h * dh + d) = static_cast<float>(acc);
            }
        }
    }
    return linear(merged, w.proj_weight, w.proj_bias);
}

// Pre-norm residual block:
//   x = x + ls1 * mhsa(ln1(x));  x = x + ls2 * fc2(gelu(fc1(ln2(x))))
inline Tensor block_forward(const Tensor& x, const BlockWeights& w, const RopeCoords& coords,
                            MhsaDebug* debug = nullptr) {
    const int64_t n = x.dim(0), c = x.dim(1);
    Tensor attn = mhsa(layer_norm(x, w.ln1_gamma, w.ln1_beta), w, coords, debug);
    Tensor mid(x.shape());
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < c; ++j) {
            mid.at(i, j) = x.at(i, j) + w.ls1_gamma[j] * attn.at(i, j);
        }
    }
    Tensor hidden = linear(layer_norm(mid, w.ln2_gamma, w.ln2_beta), w.fc1_weight, w.fc1_bias);
    for (int64_t i = 0; i < hidden.numel(); ++i) hidden[i] = gelu(hidden[i]);
    Tensor mlp = linear(hidden, w.fc2_weight, w.fc2_bias);
    Tensor out(x.shape());
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < c; ++j) {
            out.at(i, j) = mid.at(i, j) + w.ls2_gamma[j] * mlp.at(i, j);
        }
    }
    return out;
}

} // namespace planecycle
