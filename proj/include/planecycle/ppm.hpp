#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "planecycle/error.hpp"
#include "planecycle/tensor.hpp"

namespace planecycle {

// Binary portable pixmap, 8-bit. `image` is [H, W, 3] with values in [0, 1];
// out-of-range values are clamped.
inline void write_ppm(const Tensor& image, const std::string& path) {
    if (image.rank() != 3 || image.dim(2) != 3) {
        throw ShapeMismatch("ppm image must be [H,W,3], got " + image.shape().str());
    }
    const int64_t h = image.dim(0), w = image.dim(1);
    std::vector<uint8_t> bytes(static_cast<size_t>(h * w * 3));
    for (int64_t i = 0; i < h * w * 3; ++i) {
        float v = image[i];
        if (!(v > 0.0f)) v = 0.0f;
        if (v > 1.0f) v = 1.0f;
        bytes[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path + "' for writing");
    out << "P6\n" << w << ' ' << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoFailure("write error on '" + path + "'");
}

// Central slice of a [D, H, W, k] volume along the axis orthogonal to the
// requested plane: HW fixes d = D/2, DW fixes h = H/2, DH fixes w = W/2.
inline Tensor central_plane_slice(const Tensor& vol, int axis) {
    if (vol.rank() != 4) throw ShapeMismatch("expected [D,H,W,k], got " + vol.shape().str());
    const int64_t D = vol.dim(0), H = vol.dim(1), W = vol.dim(2), K = vol.dim(3);
    switch (axis) {
        case 0: {
            Tensor out(Shape{H, W, K});
            const int64_t d = D / 2;
            for (int64_t i = 0; i < H * W * K; ++i) out[i] = vol[d * H * W * K + i];
            return out;
        }
        case 1: {
            Tensor out(Shape{D, W, K});
            const int64_t h = H / 2;
            for (int64_t d = 0; d < D; ++d) {
                for (int64_t w = 0; w < W; ++w) {
                    for (int64_t k = 0; k < K; ++k) out.at(d, w, k) = vol.at(d, h, w, k);
                }
            }
            return out;
        }
        case 2: {
            Tensor out(Shape{D, H, K});
            const int64_t w = W / 2;
            for (int64_t d = 0; d < D; ++d) {
                for (int64_t h = 0; h < H; ++h) {
                    for (int64_t k = 0; k < K; ++k) out.at(d, h, k) = vol.at(d, h, w, k);
                }
            }
            return out;
        }
        default:
            throw InvalidPermutation("plane axis must be 0, 1, or 2");
    }
}

} // namespace planecycle
