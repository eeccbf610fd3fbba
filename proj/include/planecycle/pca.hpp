#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "planecycle/error.hpp"
#include "planecycle/plane_ops.hpp"
#include "planecycle/rng.hpp"
#include "planecycle/tensor.hpp"

namespace planecycle {

struct PcaResult {
    Tensor mean;        // [C]
    Tensor components;  // [k, C], orthonormal rows, dominant first
    Tensor eigenvalues; // [k], non-increasing
};

inline constexpr double kPcaTolerance = 1e-8;
inline constexpr int kPcaMaxIterations = 1000;
inline constexpr double kPcaResidualLimit = 1e-4;

namespace detail {

// Orthogonalize v against the first `count` rows of basis (row length c).
inline void project_out(std::vector<double>& v, const std::vector<double>& basis, int64_t count, int64_t c) {
    for (int64_t j = 0; j < count; ++j) {
        const double* u = basis.data() + j * c;
        double dot = 0.0;
        for (int64_t i = 0; i < c; ++i) dot += u[i] * v[static_cast<size_t>(i)];
        for (int64_t i = 0; i < c; ++i) v[static_cast<size_t>(i)] -= dot * u[i];
    }
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace detail

// Top-k principal components of rows [N, C] by power iteration with
// deflation. Deterministic: seeded start vectors, double accumulation,
// fixed iteration order. Zero-variance directions are filled with
// coordinate axes orthogonalized against the found components.
inline PcaResult pca_fit(const Tensor& rows, int64_t k, uint64_t seed = 0x1d872b41UL) {
    if (rows.rank() != 2) throw ShapeMismatch("pca input must be [N,C], got " + rows.shape().str());
    const int64_t n = rows.dim(0), c = rows.dim(1);
    if (n < 2) throw InvalidLength("pca needs at least two rows");
    if (k < 1 || k > c) {
        throw InvalidLength("component count " + std::to_string(k) + " out of range for " +
                            std::to_string(c) + " channels");
    }

    PcaResult out;
    out.mean = Tensor(Shape{c});
    for (int64_t i = 0; i < c; ++i) {
        double s = 0.0;
        for (int64_t r = 0; r < n; ++r) s += static_cast<double>(rows[r * c + i]);
        out.mean[i] = static_cast<float>(s / static_cast<double>(n));
    }

    // C x C covariance in double, divisor N-1.
    std::vector<double> cov(static_cast<size_t>(c * c), 0.0);
    {
        std::vector<double> centered(static_cast<size_t>(c));
        for (int64_t r = 0; r < n; ++r) {
            for (int64_t i = 0; i < c; ++i) {
                centered[static_cast<size_t>(i)] =
                    static_cast<double>(rows[r * c + i]) - static_cast<double>(out.mean[i]);
            }
            for (int64_t i = 0; i < c; ++i) {
                const double ci = centered[static_cast<size_t>(i)];
                for (int64_t j = i; j < c; ++j) cov[static_cast<size_t>(i * c + j)] += ci * centered[static_cast<size_t>(j)];
            }
        }
        for (int64_t i = 0; i < c; ++i) {
            for (int64_t j = i; j < c; ++j) {
                const double v = cov[static_cast<size_t>(i * c + j)] / static_cast<double>(n - 1);
                cov[static_cast<size_t>(i * c + j)] = v;
                cov[static_cast<size_t>(j * c + i)] = v;
            }
        }
    }

    std::vector<double> basis(static_cast<size_t>(k * c), 0.0);
    std::vector<double> lambda(static_cast<size_t>(k), 0.0);
    std::vector<double> v(static_cast<size_t>(c)), w(static_cast<size_t>(c));

    for (int64_t comp = 0; comp < k; ++comp) {
        SplitMix64 rng(seed + static_cast<uint64_t>(comp) * 0x9e3779b97f4a7c15ULL);
        for (auto& x : v) x = rng.next_gaussian();
        detail::project_out(v, basis, comp, c);
        double nv = detail::norm2(v);
        if (nv > 0.0) {
            for (auto& x : v) x /= nv;
        }

        bool converged = false;
        bool deficient = nv == 0.0;
        for (int iter = 0; !deficient && iter < kPcaMaxIterations; ++iter) {
            for (int64_t i = 0; i < c; ++i) {
                double s = 0.0;
                const double* row = cov.data() + i * c;
                for (int64_t j = 0; j < c; ++j) s += row[j] * v[static_cast<size_t>(j)];
                w[static_cast<size_t>(i)] = s;
            }
            detail::project_out(w, basis, comp, c);
            const double nw = detail::norm2(w);
            if (nw < 1e-12) {
                deficient = true;
                break;
            }
            double delta = 0.0;
            for (int64_t i = 0; i < c; ++i) {
                const double next = w[static_cast<size_t>(i)] / nw;
                const double d = next - v[static_cast<size_t>(i)];
                delta += d * d;
                v[static_cast<size_t>(i)] = next;
            }
            if (std::sqrt(delta) <= kPcaTolerance) {
                converged = true;
                break;
            }
        }

        if (deficient) {
            // Deflated matrix annihilates the iterate: remaining variance is
            // zero. Fill with the coordinate axis farthest from the span.
            int64_t best_axis = 0;
            double best_norm = -1.0;
            std::vector<double> cand(static_cast<size_t>(c));
            for (int64_t axis = 0; axis < c; ++axis) {
                std::fill(cand.begin(), cand.end(), 0.0);
                cand[static_cast<size_t>(axis)] = 1.0;
                detail::project_out(cand, basis, comp, c);
                const double nn = detail::norm2(cand);
                if (nn > best_norm) {
                    best_norm = nn;
                    best_axis = axis;
                }
            }
            std::fill(v.begin(), v.end(), 0.0);
            v[static_cast<size_t>(best_axis)] = 1.0;
            detail::project_out(v, basis, comp, c);
            const double nn = detail::norm2(v);
            for (auto& x : v) x /= nn;
            lambda[static_cast<size_t>(comp)] = 0.0;
        } else {
            // Rayleigh quotient on the original covariance; v is already
            // orthogonal to the found components.
            for (int64_t i = 0; i < c; ++i) {
                double s = 0.0;
                const double* row = cov.data() + i * c;
                for (int64_t j = 0; j < c; ++j) s += row[j] * v[static_cast<size_t>(j)];
                w[static_cast<size_t>(i)] = s;
            }
            double ray = 0.0;
            for (int64_t i = 0; i < c; ++i) ray += v[static_cast<size_t>(i)] * w[static_cast<size_t>(i)];
            lambda[static_cast<size_t>(comp)] = ray;
            if (!converged) {
                detail::project_out(w, basis, comp, c);
                double res2 = 0.0;
                for (int64_t i = 0; i < c; ++i) {
                    const double r = w[static_cast<size_t>(i)] - ray * v[static_cast<size_t>(i)];
                    res2 += r * r;
                }
                if (std::sqrt(res2) > kPcaResidualLimit) {
                    throw ConvergenceFailure("power iteration did not converge for component " +
                                             std::to_string(comp));
                }
            }
        }

        // Sign convention: largest-magnitude entry positive, first wins ties.
        int64_t arg = 0;
        double mag = -1.0;
        for (int64_t i = 0; i < c; ++i) {
            const double a = std::fabs(v[static_cast<size_t>(i)]);
            if (a > mag) {
                mag = a;
                arg = i;
            }
        }
        if (v[static_cast<size_t>(arg)] < 0.0) {
            for (auto& x : v) x = -x;
        }
        for (int64_t i = 0; i < c; ++i) basis[static_cast<size_t>(comp * c + i)] = v[static_cast<size_t>(i)];
    }

    out.components = Tensor(Shape{k, c});
    for (int64_t i = 0; i < k * c; ++i) out.components[i] = static_cast<float>(basis[static_cast<size_t>(i)]);
    out.eigenvalues = Tensor(Shape{k});
    for (int64_t i = 0; i < k; ++i) out.eigenvalues[i] = static_cast<float>(lambda[static_cast<size_t>(i)]);
    return out;
}

// Projects the feature volume onto its top-k principal components and
// min-max normalizes each component to [0,1] (constant components map to 0).
inline Tensor pca_project(const VolumeFeatures& features, int64_t k, uint64_t seed = 0x1d872b41UL) {
    const int64_t D = features.d(), H = features.h(), W = features.w(), C = features.c();
    const int64_t n = D * H * W;
    Tensor flat = features.x;
    flat = reshape(std::move(flat), Shape{n, C});
    const PcaResult fit = pca_fit(flat, k, seed);

    Tensor proj(Shape{n, k});
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (int64_t i = 0; i < C; ++i) {
                s += (static_cast<double>(flat[r * C + i]) - static_cast<double>(fit.mean[i])) *
                     static_cast<double>(fit.components[j * C + i]);
            }
            proj[r * k + j] = static_cast<float>(s);
        }
    }

    // Components carrying no variance (relative to the leading one) render as
    // zero rather than min-max-amplified rounding noise.
    const double lead = static_cast<double>(fit.eigenvalues[0]);
    for (int64_t j = 0; j < k; ++j) {
        const bool dead = static_cast<double>(fit.eigenvalues[j]) <= 1e-9 * std::max(lead, 0.0);
        float lo = proj[j], hi = proj[j];
        for (int64_t r = 1; r < n; ++r) {
            lo = std::min(lo, proj[r * k + j]);
            hi = std::max(hi, proj[r * k + j]);
        }
        const float span = hi - lo;
        for (int64_t r = 0; r < n; ++r) {
            proj[r * k + j] = !dead && span > 0.0f ? (proj[r * k + j] - lo) / span : 0.0f;
        }
    }
    return reshape(std::move(proj), Shape{D, H, W, k});
}

} // namespace planecycle
