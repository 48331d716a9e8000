#pragma once

// Small elementwise helpers shared by the loss and metric code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <span>
#include <thread>
#include <vector>

#include "cscf/error.hpp"
#include "cscf/grid.hpp"

namespace cscf {

// Forward differences with replicate boundary: the last column of gx and the
// last row of gy are zero.
struct Gradient {
    Image gx;
    Image gy;
};

inline Gradient forward_gradient(const Image &img) {
    const auto h = img.height(), w = img.width();
    Gradient g{Image(h, w), Image(h, w)};
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            g.gx(r, c) = c + 1 < w ? img(r, c + 1) - img(r, c) : 0.0;
            g.gy(r, c) = r + 1 < h ? img(r + 1, c) - img(r, c) : 0.0;
        }
    }
    return g;
}

inline double mean_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("mean_abs_diff: length mismatch");
    if (a.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

inline double mean_abs_diff(const Image &a, const Image &b) {
    require_same_shape(a, b, "mean_abs_diff");
    return mean_abs_diff(a.data(), b.data());
}

// Mean over both gradient components (2HW elements).
inline double mean_abs_diff(const Gradient &a, const Gradient &b) {
    return 0.5 * (mean_abs_diff(a.gx, b.gx) + mean_abs_diff(a.gy, b.gy));
}

inline double mse(const Image &a, const Image &b) {
    require_same_shape(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

// 10 log10(1 / MSE) for [0,1]-scaled images.
inline double psnr(const Image &reference, const Image &test) {
    const double e = mse(reference, test);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / e);
}

inline Image elementwise_max(const Image &a, const Image &b) {
    require_same_shape(a, b, "elementwise_max");
    Image out(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = std::max(a.data()[i], b.data()[i]);
    return out;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). Work items must be independent.
template <class Fn> void parallel_for(std::size_t n, std::size_t threads, Fn &&fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    pool.clear();
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace cscf
