#pragma once

// No-reference fusion quality metrics on the [0,255] intensity scale.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "cscf/error.hpp"
#include "cscf/grid.hpp"
#include "cscf/image_io.hpp"

namespace cscf {

struct MetricReport {
    double ag = 0.0;
    double en = 0.0;
    double sf = 0.0;
    double ei = 0.0;
};

// Average gradient over the (H-1)(W-1) pixel cells. Each cell's horizontal
// and vertical differences are averaged over its two rows/columns, which
// keeps the value invariant under flips.
inline double ag(const Image &img) {
    const auto h = img.height(), w = img.width();
    if (h < 2 || w < 2) throw DimensionError("ag: image must be at least 2x2");
    double sum = 0.0;
    for (std::size_t r = 0; r + 1 < h; ++r) {
        for (std::size_t c = 0; c + 1 < w; ++c) {
            const double gx = 0.5 * ((img(r, c + 1) - img(r, c)) + (img(r + 1, c + 1) - img(r + 1, c))) * 255.0;
            const double gy = 0.5 * ((img(r + 1, c) - img(r, c)) + (img(r + 1, c + 1) - img(r, c + 1))) * 255.0;
            sum += std::sqrt((gx * gx + gy * gy) / 2.0);
        }
    }
    return sum / static_cast<double>((h - 1) * (w - 1));
}

// Shannon entropy (bits) of the 256-bin histogram of the 8-bit image.
inline double en(const Image &img) {
    if (img.empty()) throw DimensionError("en: empty image");
    std::array<std::size_t, 256> hist{};
    for (double v : img.data()) ++hist[quantize_u8(v)];
    const auto n = static_cast<double>(img.size());
    double h = 0.0;
    for (auto count : hist) {
        if (count == 0) continue;
        const double p = static_cast<double>(count) / n;
        h -= p * std::log2(p);
    }
    return h;
}

// sqrt(RF^2 + CF^2) with RF, CF the RMS horizontal and vertical forward
// differences. A single-row (column) image has CF (RF) = 0.
inline double sf(const Image &img) {
    const auto h = img.height(), w = img.width();
    if (h * w < 2) throw DimensionError("sf: image must have at least two pixels");
    double rf = 0.0, cf = 0.0;
    if (w > 1) {
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c + 1 < w; ++c) {
                const double d = (img(r, c + 1) - img(r, c)) * 255.0;
                rf += d * d;
            }
        rf /= static_cast<double>(h * (w - 1));
    }
    if (h > 1) {
        for (std::size_t r = 0; r + 1 < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const double d = (img(r + 1, c) - img(r, c)) * 255.0;
                cf += d * d;
            }
        cf /= static_cast<double>((h - 1) * w);
    }
    return std::sqrt(rf + cf);
}

// Mean Sobel gradient magnitude, replicate boundary.
inline double ei(const Image &img) {
    const auto h = img.height(), w = img.width();
    if (h < 3 || w < 3) throw DimensionError("ei: image must be at least 3x3");
    auto at = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
        r = std::clamp<std::ptrdiff_t>(r, 0, static_cast<std::ptrdiff_t>(h) - 1);
        c = std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(w) - 1);
        return img(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) * 255.0;
    };
    double sum = 0.0;
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(h); ++r) {
        for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(w); ++c) {
            const double sx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                              (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
            const double sy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                              (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
            sum += std::sqrt(sx * sx + sy * sy);
        }
    }
    return sum / static_cast<double>(h * w);
}

inline MetricReport evaluate_metrics(const Image &img) { return {ag(img), en(img), sf(img), ei(img)}; }

} // namespace cscf
