#pragma once

// Thin wrapper over FFTW's 2-D complex transforms. Plans are created once per
// (height, width) under a global lock and shared; execution is thread-safe.
// FFTW_ESTIMATE | FFTW_UNALIGNED keeps plans independent of buffer alignment,
// so results are bitwise reproducible run to run.

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "cscf/error.hpp"

namespace cscf {

using cplx = std::complex<double>;

namespace detail {

struct FftPlans {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
};

inline std::mutex &fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

inline FftPlans plans_for(std::size_t h, std::size_t w) {
    static std::map<std::pair<std::size_t, std::size_t>, FftPlans> cache;
    std::lock_guard lock(fftw_planner_mutex());
    auto it = cache.find({h, w});
    if (it != cache.end()) return it->second;
    std::vector<cplx> a(h * w), b(h * w);
    auto *pa = reinterpret_cast<fftw_complex *>(a.data());
    auto *pb = reinterpret_cast<fftw_complex *>(b.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    FftPlans p;
    p.forward = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), pa, pb, FFTW_FORWARD, flags);
    p.backward = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), pa, pb, FFTW_BACKWARD, flags);
    if (!p.forward || !p.backward) throw Error("FFTW planning failed");
    cache.emplace(std::pair{h, w}, p);
    return p;
}

} // namespace detail

class Fft2d {
public:
    Fft2d(std::size_t height, std::size_t width)
        : h_(height), w_(width), plans_(detail::plans_for(height, width)) {}

    std::size_t height() const noexcept { return h_; }
    std::size_t width() const noexcept { return w_; }
    std::size_t size() const noexcept { return h_ * w_; }

    // Unnormalized forward DFT of a real field.
    std::vector<cplx> forward(std::span<const double> in) const {
        std::vector<cplx> buf(in.begin(), in.end());
        std::vector<cplx> out(size());
        fftw_execute_dft(plans_.forward, reinterpret_cast<fftw_complex *>(buf.data()),
                         reinterpret_cast<fftw_complex *>(out.data()));
        return out;
    }

    // Forward DFT of a k x k patch zero-padded top-left into the full grid.
    std::vector<cplx> forward_padded(std::span<const double> patch, std::size_t k) const {
        std::vector<cplx> buf(size());
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < k; ++c) buf[r * w_ + c] = patch[r * k + c];
        std::vector<cplx> out(size());
        fftw_execute_dft(plans_.forward, reinterpret_cast<fftw_complex *>(buf.data()),
                         reinterpret_cast<fftw_complex *>(out.data()));
        return out;
    }

    // Normalized inverse DFT; writes the real part.
    void inverse_real(std::span<const cplx> in, std::span<double> out) const {
        std::vector<cplx> buf(in.begin(), in.end());
        std::vector<cplx> res(size());
        fftw_execute_dft(plans_.backward, reinterpret_cast<fftw_complex *>(buf.data()),
                         reinterpret_cast<fftw_complex *>(res.data()));
        const double scale = 1.0 / static_cast<double>(size());
        for (std::size_t i = 0; i < size(); ++i) out[i] = res[i].real() * scale;
    }

private:
    std::size_t h_;
    std::size_t w_;
    detail::FftPlans plans_;
};

} // namespace cscf
