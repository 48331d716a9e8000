#pragma once

// Test-only reference implementations. Everything here works in the spatial
// domain on explicit matrices and shares no code path with the FFT solvers.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cscf/grid.hpp"

namespace cscf::oracle {

inline std::size_t wrap(std::ptrdiff_t v, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    return static_cast<std::size_t>(((v % m) + m) % m);
}

// Naive circular convolution sum_k sum_y d_k(y) s_k(x - y).
inline Image spatial_reconstruct(const Dictionary &d, const CoeffMap &s) {
    Image out(s.height(), s.width());
    const auto h = s.height(), w = s.width(), k = d.kernel();
    for (std::size_t a = 0; a < d.atoms(); ++a)
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                double acc = 0.0;
                for (std::size_t dr = 0; dr < k; ++dr)
                    for (std::size_t dc = 0; dc < k; ++dc)
                        acc += d(a, dr, dc) *
                               s(a, wrap(static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(dr), h),
                                 wrap(static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(dc), w));
                out(r, c) += acc;
            }
    return out;
}

// Matrix A with A * vec(S) = vec(D * S); columns atom-major.
inline Eigen::MatrixXd synthesis_matrix(const Dictionary &d, std::size_t h, std::size_t w) {
    const auto hw = h * w;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(hw), static_cast<Eigen::Index>(d.atoms() * hw));
    for (std::size_t a = 0; a < d.atoms(); ++a)
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c)
                for (std::size_t dr = 0; dr < d.kernel(); ++dr)
                    for (std::size_t dc = 0; dc < d.kernel(); ++dc) {
                        const auto zr = wrap(static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(dr), h);
                        const auto zc = wrap(static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(dc), w);
                        A(static_cast<Eigen::Index>(r * w + c), static_cast<Eigen::Index>(a * hw + zr * w + zc)) +=
                            d(a, dr, dc);
                    }
    return A;
}

// Matrix B with B * vec(F) = vec(F * S) for full-size filters F (atom-major).
inline Eigen::MatrixXd filter_matrix(const CoeffMap &s) {
    const auto h = s.height(), w = s.width(), hw = h * w;
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(hw), static_cast<Eigen::Index>(s.atoms() * hw));
    for (std::size_t a = 0; a < s.atoms(); ++a)
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c)
                for (std::size_t yr = 0; yr < h; ++yr)
                    for (std::size_t yc = 0; yc < w; ++yc) {
                        const auto zr = wrap(static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(yr), h);
                        const auto zc = wrap(static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(yc), w);
                        B(static_cast<Eigen::Index>(r * w + c), static_cast<Eigen::Index>(a * hw + yr * w + yc)) =
                            s(a, zr, zc);
                    }
    return B;
}

inline Eigen::VectorXd vec(std::span<const double> v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Dense normal-equation solution of min 1/2|I - A s|^2 + mu/2 |s - s_prev|^2.
inline CoeffMap dense_coeff_dc(const Image &img, const Dictionary &d, const CoeffMap &s_prev, double mu) {
    const Eigen::MatrixXd A = synthesis_matrix(d, img.height(), img.width());
    Eigen::MatrixXd N = A.transpose() * A;
    N.diagonal().array() += mu;
    const Eigen::VectorXd rhs = A.transpose() * vec(img.data()) + mu * vec(s_prev.data());
    const Eigen::VectorXd x = N.ldlt().solve(rhs);
    return CoeffMap(s_prev.atoms(), s_prev.height(), s_prev.width(), std::vector<double>(x.data(), x.data() + x.size()));
}

// Dense solution of the dictionary data-consistency problem over full-size
// filters for the given (image, coefficient) observations.
inline CoeffMap dense_dict_dc(const std::vector<std::pair<Image, CoeffMap>> &obs, const Dictionary &d_prev,
                              double mu3) {
    const auto &s0 = obs.front().second;
    const auto h = s0.height(), w = s0.width(), K = s0.atoms();
    const auto n = static_cast<Eigen::Index>(K * h * w);
    Eigen::MatrixXd N = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (const auto &[img, s] : obs) {
        const Eigen::MatrixXd B = filter_matrix(s);
        N += B.transpose() * B;
        rhs += B.transpose() * vec(img.data());
    }
    CoeffMap padded(K, h, w);
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t r = 0; r < d_prev.kernel(); ++r)
            for (std::size_t c = 0; c < d_prev.kernel(); ++c) padded(a, r, c) = d_prev(a, r, c);
    N.diagonal().array() += mu3;
    rhs += mu3 * vec(padded.data());
    const Eigen::VectorXd x = N.ldlt().solve(rhs);
    return CoeffMap(K, h, w, std::vector<double>(x.data(), x.data() + x.size()));
}

inline double rel_error(std::span<const double> got, std::span<const double> want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num += (got[i] - want[i]) * (got[i] - want[i]);
        den += want[i] * want[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

// --- generators -------------------------------------------------------------

inline Image random_image(std::size_t h, std::size_t w, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(h, w);
    for (double &v : img.data()) v = u(rng);
    return img;
}

inline CoeffMap random_coeffs(std::size_t K, std::size_t h, std::size_t w, std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    CoeffMap s(K, h, w);
    for (double &v : s.data()) v = n(rng);
    return s;
}

inline Dictionary random_dictionary(std::size_t K, std::size_t k, std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Dictionary d(K, k);
    for (double &v : d.data()) v = n(rng);
    for (std::size_t a = 0; a < K; ++a) {
        const double nrm = d.atom_norm(a);
        for (double &v : d.atom(a)) v /= nrm;
    }
    return d;
}

// Sparse nonnegative codes: each entry active with probability `density`,
// amplitude uniform in [0.2, 1].
inline CoeffMap sparse_coeffs(std::size_t K, std::size_t h, std::size_t w, double density, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CoeffMap s(K, h, w);
    for (double &v : s.data())
        if (u(rng) < density) v = 0.2 + 0.8 * u(rng);
    return s;
}

// Dictionary whose single atom is the identity kernel under origin anchoring.
inline Dictionary delta_dictionary(std::size_t k) {
    Dictionary d(1, k);
    d(0, 0, 0) = 1.0;
    return d;
}

} // namespace cscf::oracle
