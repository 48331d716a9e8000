#pragma once

// Closed-form frequency-domain solvers for the two data-consistency
// subproblems of joint convolutional sparse coding, and the analytic
// proximal operators paired with them.
//
// Convolution is circular throughout: (d * s)(x) = sum_y d(y) s(x - y), with
// each k x k atom anchored at the origin when padded to H x W. Under this
// convention DFT(d * s) = DFT(d) . DFT(s) elementwise.

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cscf/error.hpp"
#include "cscf/fft.hpp"
#include "cscf/grid.hpp"

namespace cscf {

// Quadratic coupling (mu), proximal (beta) and prior (lambda) weights of one
// unfolding stage. Index 1 is the visible branch, 2 infrared, 3 dictionary.
struct StageParams {
    double mu1 = 0.1, mu2 = 0.1, mu3 = 1.0;
    double beta1 = 1.0, beta2 = 1.0, beta3 = 1.0;
    double lambda1 = 1e-3, lambda2 = 1e-3, lambda3 = 0.0;

    void validate() const {
        auto pos = [](double v, const char *name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw ArgumentError(std::string("StageParams: ") + name + " must be positive");
        };
        auto nonneg = [](double v, const char *name) {
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ArgumentError(std::string("StageParams: ") + name + " must be nonnegative");
        };
        pos(mu1, "mu1"), pos(mu2, "mu2"), pos(mu3, "mu3");
        pos(beta1, "beta1"), pos(beta2, "beta2"), pos(beta3, "beta3");
        nonneg(lambda1, "lambda1"), nonneg(lambda2, "lambda2"), nonneg(lambda3, "lambda3");
    }
};

// Stage-wise parameters: the base values, with every mu and beta multiplied
// by growth^stage.
struct StageSchedule {
    StageParams base;
    double growth = 1.0;

    StageParams at(std::size_t stage) const {
        if (growth == 1.0) return base;
        const double g = std::pow(growth, static_cast<double>(stage));
        StageParams p = base;
        p.mu1 *= g, p.mu2 *= g, p.mu3 *= g;
        p.beta1 *= g, p.beta2 *= g, p.beta3 *= g;
        return p;
    }

    void validate() const {
        base.validate();
        if (!(growth > 0.0) || !std::isfinite(growth))
            throw ArgumentError("StageSchedule: growth must be positive");
    }
};

// DFTs of the zero-padded atoms together with the per-frequency energy
// sum_k |D_k(w)|^2.
class SpectrumCache {
public:
    SpectrumCache(const Dictionary &dict, std::size_t height, std::size_t width)
        : fft_(height, width), atoms_(dict.atoms()), energy_(height * width, 0.0) {
        if (dict.atoms() == 0) throw ArgumentError("SpectrumCache: dictionary has no atoms");
        if (dict.kernel() > height || dict.kernel() > width)
            throw DimensionError("SpectrumCache: kernel larger than image");
        spectra_.reserve(atoms_ * fft_.size());
        for (std::size_t k = 0; k < atoms_; ++k) {
            const auto atom_hat = fft_.forward_padded(dict.atom(k), dict.kernel());
            for (std::size_t i = 0; i < atom_hat.size(); ++i) energy_[i] += std::norm(atom_hat[i]);
            spectra_.insert(spectra_.end(), atom_hat.begin(), atom_hat.end());
        }
    }

    std::size_t atoms() const noexcept { return atoms_; }
    std::size_t height() const noexcept { return fft_.height(); }
    std::size_t width() const noexcept { return fft_.width(); }
    const Fft2d &fft() const noexcept { return fft_; }

    std::span<const cplx> spectrum(std::size_t k) const {
        return {spectra_.data() + k * fft_.size(), fft_.size()};
    }
    std::span<const double> energy() const noexcept { return energy_; }

private:
    Fft2d fft_;
    std::size_t atoms_;
    std::vector<cplx> spectra_;
    std::vector<double> energy_;
};

namespace detail {

inline void check_coeff_problem(const Image &img, const SpectrumCache &cache, const CoeffMap &s_prev,
                                double mu, const char *what) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ArgumentError(std::string(what) + ": mu must be positive");
    if (img.height() != cache.height() || img.width() != cache.width())
        throw DimensionError(std::string(what) + ": image does not match spectrum grid");
    if (s_prev.atoms() != cache.atoms() || !s_prev.matches(img))
        throw DimensionError(std::string(what) + ": coefficient map does not match problem");
}

inline std::vector<std::vector<cplx>> channel_spectra(const Fft2d &fft, const CoeffMap &s) {
    std::vector<std::vector<cplx>> out;
    out.reserve(s.atoms());
    for (std::size_t k = 0; k < s.atoms(); ++k) out.push_back(fft.forward(s.channel(k)));
    return out;
}

inline CoeffMap inverse_channels(const Fft2d &fft, const std::vector<std::vector<cplx>> &spectra,
                                 std::size_t h, std::size_t w) {
    CoeffMap out(spectra.size(), h, w);
    for (std::size_t k = 0; k < spectra.size(); ++k) fft.inverse_real(spectra[k], out.channel(k));
    return out;
}

} // namespace detail

// Exact minimizer of 1/2 |I - D*S|^2 + mu/2 |S_prev - S|^2. Per frequency the
// K x K system (a a^H + mu I) s = a I + mu s_prev, a = conj(D(w)), is rank one
// plus identity and inverts by Sherman-Morrison.
inline CoeffMap solve_coeff_dc(const Image &img, const SpectrumCache &cache, const CoeffMap &s_prev,
                               double mu) {
    detail::check_coeff_problem(img, cache, s_prev, mu, "solve_coeff_dc");
    const auto &fft = cache.fft();
    const std::size_t K = cache.atoms();
    const auto img_hat = fft.forward(img.data());
    auto s_hat = detail::channel_spectra(fft, s_prev);
    const auto energy = cache.energy();
    std::vector<cplx> b(K);
    for (std::size_t w = 0; w < fft.size(); ++w) {
        cplx proj = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const cplx d = cache.spectrum(k)[w];
            b[k] = std::conj(d) * img_hat[w] + mu * s_hat[k][w];
            proj += d * b[k];
        }
        const cplx coef = proj / (mu + energy[w]);
        for (std::size_t k = 0; k < K; ++k)
            s_hat[k][w] = (b[k] - std::conj(cache.spectrum(k)[w]) * coef) / mu;
    }
    return detail::inverse_channels(fft, s_hat, img.height(), img.width());
}

inline CoeffMap solve_coeff_dc(const Image &img, const Dictionary &dict, const CoeffMap &s_prev, double mu) {
    return solve_coeff_dc(img, SpectrumCache(dict, img.height(), img.width()), s_prev, mu);
}

// Same subproblem solved by an explicit per-frequency Cholesky factorization.
// Slow; used to cross-check the Sherman-Morrison path.
inline CoeffMap solve_coeff_dc_cholesky(const Image &img, const SpectrumCache &cache, const CoeffMap &s_prev,
                                        double mu) {
    detail::check_coeff_problem(img, cache, s_prev, mu, "solve_coeff_dc_cholesky");
    const auto &fft = cache.fft();
    const auto K = static_cast<Eigen::Index>(cache.atoms());
    const auto img_hat = fft.forward(img.data());
    auto s_hat = detail::channel_spectra(fft, s_prev);
    Eigen::MatrixXcd A(K, K);
    Eigen::VectorXcd a(K), rhs(K);
    for (std::size_t w = 0; w < fft.size(); ++w) {
        for (Eigen::Index k = 0; k < K; ++k) a(k) = std::conj(cache.spectrum(static_cast<std::size_t>(k))[w]);
        A = a * a.adjoint();
        A.diagonal().array() += mu;
        for (Eigen::Index k = 0; k < K; ++k) rhs(k) = a(k) * img_hat[w] + mu * s_hat[static_cast<std::size_t>(k)][w];
        Eigen::LLT<Eigen::MatrixXcd> llt(A);
        if (llt.info() != Eigen::Success) throw Error("solve_coeff_dc_cholesky: factorization failed");
        const Eigen::VectorXcd x = llt.solve(rhs);
        for (Eigen::Index k = 0; k < K; ++k) s_hat[static_cast<std::size_t>(k)][w] = x(k);
    }
    return detail::inverse_channels(fft, s_hat, img.height(), img.width());
}

inline double soft_threshold(double x, double t) noexcept {
    const double m = std::abs(x) - t;
    return m > 0.0 ? std::copysign(m, x) : 0.0;
}

// Elementwise minimizer of beta/2 (x - x0)^2 + lambda |x|.
inline CoeffMap prox_coeff(const CoeffMap &s_dc, double lambda, double beta) {
    if (!(beta > 0.0)) throw ArgumentError("prox_coeff: beta must be positive");
    if (!(lambda >= 0.0)) throw ArgumentError("prox_coeff: lambda must be nonnegative");
    CoeffMap out = s_dc;
    if (lambda == 0.0) return out;
    const double t = lambda / beta;
    for (double &v : out.data()) v = soft_threshold(v, t);
    return out;
}

// An image paired with its coefficient maps; one term of the dictionary fit.
struct CodedImage {
    const Image &image;
    const CoeffMap &coeffs;
};

// Exact minimizer over full-support filters D' of
//   sum_o 1/2 |I_o - D'*S_o|^2 + mu3/2 |D_prev - D'|^2,
// D_prev zero-padded to H x W. Per frequency the K x K Hermitian system
//   (sum_o conj(S_o) S_o^T + mu3 I) d = sum_o conj(S_o) I_o + mu3 d_prev
// is factored by Cholesky.
inline FilterStack solve_dict_dc(std::span<const CodedImage> observations, const Dictionary &d_prev,
                                 double mu3) {
    if (!(mu3 > 0.0) || !std::isfinite(mu3)) throw ArgumentError("solve_dict_dc: mu3 must be positive");
    if (observations.empty()) throw ArgumentError("solve_dict_dc: no observations");
    const std::size_t h = observations.front().image.height();
    const std::size_t w = observations.front().image.width();
    const std::size_t K = d_prev.atoms();
    for (const auto &o : observations) {
        if (o.image.height() != h || o.image.width() != w || !o.coeffs.matches(o.image))
            throw DimensionError("solve_dict_dc: observation dimensions differ");
        if (o.coeffs.atoms() != K) throw DimensionError("solve_dict_dc: coefficient K differs from dictionary");
    }
    const SpectrumCache prev(d_prev, h, w);
    const auto &fft = prev.fft();

    std::vector<std::vector<cplx>> img_hat;
    std::vector<std::vector<std::vector<cplx>>> s_hat;
    for (const auto &o : observations) {
        img_hat.push_back(fft.forward(o.image.data()));
        s_hat.push_back(detail::channel_spectra(fft, o.coeffs));
    }

    const auto n = static_cast<Eigen::Index>(K);
    std::vector<std::vector<cplx>> d_hat(K, std::vector<cplx>(fft.size()));
    Eigen::MatrixXcd A(n, n);
    Eigen::VectorXcd v(n), rhs(n);
    for (std::size_t f = 0; f < fft.size(); ++f) {
        A.setZero();
        for (Eigen::Index k = 0; k < n; ++k) rhs(k) = mu3 * prev.spectrum(static_cast<std::size_t>(k))[f];
        for (std::size_t o = 0; o < observations.size(); ++o) {
            for (Eigen::Index k = 0; k < n; ++k) v(k) = std::conj(s_hat[o][static_cast<std::size_t>(k)][f]);
            A.selfadjointView<Eigen::Lower>().rankUpdate(v);
            rhs += v * img_hat[o][f];
        }
        A.diagonal().array() += mu3;
        Eigen::LLT<Eigen::MatrixXcd, Eigen::Lower> llt(A);
        if (llt.info() != Eigen::Success) throw Error("solve_dict_dc: Cholesky failed on a positive-definite system");
        const Eigen::VectorXcd x = llt.solve(rhs);
        for (Eigen::Index k = 0; k < n; ++k) d_hat[static_cast<std::size_t>(k)][f] = x(k);
    }
    return detail::inverse_channels(fft, d_hat, h, w);
}

inline FilterStack solve_dict_dc(const Image &i_vis, const Image &i_ir, const CoeffMap &s_vis,
                                 const CoeffMap &s_ir, const Dictionary &d_prev, double mu3) {
    if (s_vis.atoms() != s_ir.atoms()) throw DimensionError("solve_dict_dc: coefficient maps differ in K");
    const CodedImage obs[] = {{i_vis, s_vis}, {i_ir, s_ir}};
    return solve_dict_dc(obs, d_prev, mu3);
}

// Crop each filter to its top-left k x k support and scale it to unit norm.
// An all-zero atom becomes a unit impulse at its center.
inline Dictionary prox_dict(const FilterStack &raw, std::size_t k) {
    if (k == 0 || k % 2 == 0) throw ArgumentError("prox_dict: kernel size must be odd");
    if (k > raw.height() || k > raw.width()) throw DimensionError("prox_dict: kernel larger than filter grid");
    Dictionary d(raw.atoms(), k);
    for (std::size_t a = 0; a < raw.atoms(); ++a) {
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < k; ++c) d(a, r, c) = raw(a, r, c);
        const double norm = d.atom_norm(a);
        if (norm == 0.0) {
            d(a, k / 2, k / 2) = 1.0;
        } else if (std::abs(norm - 1.0) > 1e-13) {
            // Leave already-normalized atoms untouched so the map is idempotent.
            for (double &x : d.atom(a)) x /= norm;
        }
    }
    return d;
}

// Zero-pads a dictionary to an H x W filter stack (inverse of the crop above).
inline FilterStack pad_dictionary(const Dictionary &d, std::size_t h, std::size_t w) {
    if (d.kernel() > h || d.kernel() > w) throw DimensionError("pad_dictionary: kernel larger than grid");
    FilterStack out(d.atoms(), h, w);
    for (std::size_t a = 0; a < d.atoms(); ++a)
        for (std::size_t r = 0; r < d.kernel(); ++r)
            for (std::size_t c = 0; c < d.kernel(); ++c) out(a, r, c) = d(a, r, c);
    return out;
}

// sum_k D_k * S_k.
inline Image reconstruct(const SpectrumCache &cache, const CoeffMap &coeffs) {
    if (coeffs.atoms() != cache.atoms() || coeffs.height() != cache.height() || coeffs.width() != cache.width())
        throw DimensionError("reconstruct: coefficient map does not match dictionary grid");
    const auto &fft = cache.fft();
    std::vector<cplx> acc(fft.size());
    for (std::size_t k = 0; k < coeffs.atoms(); ++k) {
        const auto s = fft.forward(coeffs.channel(k));
        const auto d = cache.spectrum(k);
        for (std::size_t f = 0; f < fft.size(); ++f) acc[f] += d[f] * s[f];
    }
    Image out(coeffs.height(), coeffs.width());
    fft.inverse_real(acc, out.data());
    return out;
}

inline Image reconstruct(const Dictionary &dict, const CoeffMap &coeffs) {
    if (coeffs.atoms() != dict.atoms()) throw DimensionError("reconstruct: K mismatch");
    return reconstruct(SpectrumCache(dict, coeffs.height(), coeffs.width()), coeffs);
}

} // namespace cscf
