#pragma once

// Visible-guided infrared inference in the coefficient domain:
//
//   S_vis  = encode(I_vis)                    frozen dictionary
//   S0     = T(S_vis),        I0 = D * S0     first transfer
//   S_fm   = gamma . S_vis + beta             per-atom affine recalibration
//   S1     = T(S_fm),         I_p = D * S1    second transfer
//
// T is a per-pixel linear atom-mixing operator fitted by ridge regression;
// (gamma, beta) come from a pluggable semantic provider.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cscf/error.hpp"
#include "cscf/freq_solver.hpp"
#include "cscf/grid.hpp"
#include "cscf/jsrl.hpp"
#include "cscf/ops.hpp"
#include "cscf/tensor_io.hpp"

namespace cscf {

enum class Modality { visible, infrared };

// Iterates data-consistency + shrinkage from S = 0 with the dictionary held
// fixed. The visible branch uses (mu1, beta1, lambda1), infrared (mu2, ...).
inline CoeffMap encode(const Image &img, const SpectrumCache &cache, const StageParams &params,
                       std::size_t iters, Modality modality = Modality::visible) {
    params.validate();
    const bool vis = modality == Modality::visible;
    const double mu = vis ? params.mu1 : params.mu2;
    const double beta = vis ? params.beta1 : params.beta2;
    const double lambda = vis ? params.lambda1 : params.lambda2;
    CoeffMap s(cache.atoms(), img.height(), img.width());
    for (std::size_t it = 0; it < iters; ++it) s = prox_coeff(solve_coeff_dc(img, cache, s, mu), lambda, beta);
    return s;
}

inline CoeffMap encode(const Image &img, const Dictionary &dict, const StageParams &params, std::size_t iters,
                       Modality modality = Modality::visible) {
    return encode(img, SpectrumCache(dict, img.height(), img.width()), params, iters, modality);
}

// ---------------------------------------------------------------------------
// Transfer operator

// Ridge regression min_{M,b} sum_x |s_ir(x) - M s_vis(x) - b|^2 + ridge |M|_F^2
// pooled over every pixel of every pair; the intercept is not penalized.
inline TransferOp fit_transfer(std::span<const CoeffPair> pairs, double ridge) {
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ArgumentError("fit_transfer: ridge must be >= 0");
    if (pairs.empty()) throw ArgumentError("fit_transfer: no coefficient pairs");
    const std::size_t K = pairs.front().vis.atoms();
    std::size_t pixels = 0;
    for (const auto &p : pairs) {
        if (p.vis.atoms() != K || !p.vis.same_shape(p.ir))
            throw DimensionError("fit_transfer: coefficient pairs must share K and spatial dims");
        pixels += p.vis.plane();
    }
    if (pixels < K + 1) throw ArgumentError("fit_transfer: need at least K+1 pixels");

    const auto n = static_cast<Eigen::Index>(K);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n + 1, n + 1);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(n + 1, n);
    Eigen::VectorXd x(n + 1), y(n);
    for (const auto &p : pairs) {
        for (std::size_t i = 0; i < p.vis.plane(); ++i) {
            for (Eigen::Index k = 0; k < n; ++k) {
                x(k) = p.vis.channel(static_cast<std::size_t>(k))[i];
                y(k) = p.ir.channel(static_cast<std::size_t>(k))[i];
            }
            x(n) = 1.0;
            gram.selfadjointView<Eigen::Lower>().rankUpdate(x);
            cross.noalias() += x * y.transpose();
        }
    }
    gram.diagonal().head(n).array() += ridge;
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(gram);
    const Eigen::MatrixXd L = llt.matrixL();
    const double scale = gram.diagonal().maxCoeff();
    if (llt.info() != Eigen::Success || L.diagonal().array().square().minCoeff() <= 1e-12 * scale)
        throw SingularSystemError("fit_transfer: singular normal matrix; use a positive ridge (e.g. 1e-6)");
    const Eigen::MatrixXd w = llt.solve(cross);
    TransferOp op{w.topRows(n).transpose(), w.row(n).transpose(), ridge};
    if (!op.mix.allFinite() || !op.bias.allFinite()) throw SingularSystemError("fit_transfer: non-finite solution");
    return op;
}

// Per pixel: out = mix * s + bias.
inline CoeffMap apply_transfer(const TransferOp &op, const CoeffMap &s) {
    if (op.atoms() != s.atoms() || static_cast<std::size_t>(op.mix.cols()) != s.atoms() ||
        static_cast<std::size_t>(op.bias.size()) != s.atoms())
        throw DimensionError("apply_transfer: K mismatch");
    const auto n = static_cast<Eigen::Index>(s.atoms());
    const auto plane = static_cast<Eigen::Index>(s.plane());
    CoeffMap out(s.atoms(), s.height(), s.width());
    // Channels are contiguous planes: view as K x HW and multiply.
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> in(s.data().data(), n, plane);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> res(out.data().data(), n, plane);
    res.noalias() = op.mix * in;
    res.colwise() += op.bias;
    return out;
}

// ---------------------------------------------------------------------------
// FiLM recalibration

struct FilmParams {
    std::vector<double> gamma;
    std::vector<double> beta;

    std::size_t atoms() const noexcept { return gamma.size(); }

    static FilmParams identity(std::size_t atoms) { return {std::vector<double>(atoms, 1.0), std::vector<double>(atoms, 0.0)}; }
};

// Channel k becomes gamma_k * s_k + beta_k.
inline CoeffMap film_modulate(const CoeffMap &s, const FilmParams &fp) {
    if (fp.gamma.size() != s.atoms() || fp.beta.size() != s.atoms())
        throw DimensionError("film_modulate: K mismatch");
    CoeffMap out = s;
    for (std::size_t k = 0; k < s.atoms(); ++k)
        for (double &v : out.channel(k)) v = fp.gamma[k] * v + fp.beta[k];
    return out;
}

// Per-atom affine fit of the visible coefficients to the least-squares
// pre-image pinv(M) (s_ir - b) of the infrared coefficients. Channels with
// zero variance fall back to gamma = 1, beta = mean offset.
inline FilmParams calibrate_film(std::span<const CoeffPair> pairs, const TransferOp &op) {
    if (pairs.empty()) throw ArgumentError("calibrate_film: no coefficient pairs");
    const std::size_t K = op.atoms();
    for (const auto &p : pairs)
        if (p.vis.atoms() != K || !p.vis.same_shape(p.ir)) throw DimensionError("calibrate_film: K or dims mismatch");
    const Eigen::MatrixXd pinv = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(op.mix).pseudoInverse();
    if (!pinv.allFinite()) throw SingularSystemError("calibrate_film: pseudo-inverse of mix failed");

    const auto n = static_cast<Eigen::Index>(K);
    // Running sums per atom: x = s_vis, t = pre-image target.
    std::vector<double> sx(K), st(K), sxx(K), sxt(K);
    std::size_t count = 0;
    Eigen::VectorXd y(n), t(n);
    for (const auto &p : pairs) {
        for (std::size_t i = 0; i < p.vis.plane(); ++i) {
            for (Eigen::Index k = 0; k < n; ++k) y(k) = p.ir.channel(static_cast<std::size_t>(k))[i] - op.bias(k);
            t.noalias() = pinv * y;
            for (std::size_t k = 0; k < K; ++k) {
                const double xv = p.vis.channel(k)[i];
                const double tv = t(static_cast<Eigen::Index>(k));
                sx[k] += xv, st[k] += tv, sxx[k] += xv * xv, sxt[k] += xv * tv;
            }
        }
        count += p.vis.plane();
    }
    const auto cnt = static_cast<double>(count);
    FilmParams fp = FilmParams::identity(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double mx = sx[k] / cnt, mt = st[k] / cnt;
        const double var = sxx[k] / cnt - mx * mx;
        const double cov = sxt[k] / cnt - mx * mt;
        if (var <= 1e-14 * mx * mx + 1e-300) {
            fp.gamma[k] = 1.0;
            fp.beta[k] = mt - mx;
        } else {
            fp.gamma[k] = cov / var;
            fp.beta[k] = mt - fp.gamma[k] * mx;
        }
        if (!std::isfinite(fp.gamma[k]) || !std::isfinite(fp.beta[k]))
            throw SingularSystemError("calibrate_film: non-finite fit for atom " + std::to_string(k));
    }
    return fp;
}

// Stored as an Image-tagged [2, K] tensor: gamma row then beta row.
inline void save_film(const FilmParams &fp, const std::filesystem::path &path) {
    std::vector<double> v(fp.gamma);
    v.insert(v.end(), fp.beta.begin(), fp.beta.end());
    serialize_tensor(Image(2, fp.atoms(), std::move(v)), path);
}

inline FilmParams load_film(const std::filesystem::path &path) {
    const auto img = deserialize_tensor<Image>(path);
    if (img.height() != 2) throw FormatError("FiLM file must hold a [2, K] tensor", 8);
    const auto d = img.data();
    const auto K = img.width();
    return {std::vector<double>(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(K)),
            std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(K), d.end())};
}

// Source of (gamma, beta). `file` holds an external feature vector F and two
// affine maps [A | c] so that gamma = A_g F + c_g and beta = A_b F + c_b.
class SemanticProvider {
public:
    enum class Kind { identity, calibrated, file };

    static SemanticProvider identity() { return SemanticProvider(Kind::identity); }

    static SemanticProvider calibrated(FilmParams fp) {
        SemanticProvider p(Kind::calibrated);
        p.film_ = std::move(fp);
        return p;
    }

    static SemanticProvider from_features(Eigen::VectorXd features, Eigen::MatrixXd gamma_map,
                                          Eigen::MatrixXd beta_map) {
        if (gamma_map.cols() != features.size() + 1 || beta_map.cols() != features.size() + 1 ||
            gamma_map.rows() != beta_map.rows())
            throw DimensionError("SemanticProvider: affine maps must be [K, m+1] for m features");
        SemanticProvider p(Kind::file);
        const auto m = features.size();
        const Eigen::VectorXd g = gamma_map.leftCols(m) * features + gamma_map.col(m);
        const Eigen::VectorXd b = beta_map.leftCols(m) * features + beta_map.col(m);
        if (!g.allFinite() || !b.allFinite()) throw ArgumentError("SemanticProvider: non-finite modulation");
        p.film_.gamma.assign(g.data(), g.data() + g.size());
        p.film_.beta.assign(b.data(), b.data() + b.size());
        return p;
    }

    // File backend: three consecutive Image-tagged records, features [1, m],
    // gamma map [K, m+1], beta map [K, m+1].
    static SemanticProvider load(const std::filesystem::path &path) {
        const auto bytes = read_file_bytes(path);
        std::size_t off = 0;
        auto next = [&]() {
            const auto rec = decode_record(bytes, off);
            const auto img = from_record<Image>(rec);
            return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                       img.data().data(), static_cast<Eigen::Index>(img.height()), static_cast<Eigen::Index>(img.width()))
                .eval();
        };
        const Eigen::MatrixXd f = next();
        const Eigen::MatrixXd g = next();
        const Eigen::MatrixXd b = next();
        if (off != bytes.size()) throw FormatError("trailing bytes after semantic provider records", off);
        if (f.rows() != 1) throw FormatError("feature record must be [1, m]", 0);
        return from_features(f.row(0).transpose(), g, b);
    }

    static void save(const std::filesystem::path &path, const Eigen::VectorXd &features,
                     const Eigen::MatrixXd &gamma_map, const Eigen::MatrixXd &beta_map) {
        auto rec = [](const Eigen::MatrixXd &m) {
            std::vector<double> v;
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
            return encode_record(to_record(Image(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), std::move(v))));
        };
        std::vector<std::uint8_t> out;
        for (const auto &part : {rec(features.transpose()), rec(gamma_map), rec(beta_map)})
            out.insert(out.end(), part.begin(), part.end());
        write_file_bytes(path, out);
    }

    Kind kind() const noexcept { return kind_; }

    FilmParams film(std::size_t atoms) const {
        if (kind_ == Kind::identity) return FilmParams::identity(atoms);
        if (film_.atoms() != atoms) throw DimensionError("SemanticProvider: modulation has wrong K");
        return film_;
    }

private:
    explicit SemanticProvider(Kind k) : kind_(k) {}

    Kind kind_;
    FilmParams film_;
};

// ---------------------------------------------------------------------------
// Inference

struct InferResult {
    Image pseudo_ir;      // D * S1
    CoeffMap s_pseudo_ir; // S1 = T(gamma . S_vis + beta)
    Image pseudo_ir0;     // D * S0
    CoeffMap s_pseudo_ir0;
    CoeffMap s_vis;
    FilmParams film;
};

// Inference from already-encoded visible coefficients.
inline InferResult infer_from_coeffs(CoeffMap s_vis, const SpectrumCache &cache, const TransferOp &op,
                                     const SemanticProvider &provider) {
    InferResult r;
    r.s_pseudo_ir0 = apply_transfer(op, s_vis);
    r.pseudo_ir0 = reconstruct(cache, r.s_pseudo_ir0);
    r.film = provider.film(s_vis.atoms());
    r.s_pseudo_ir = apply_transfer(op, film_modulate(s_vis, r.film));
    r.pseudo_ir = reconstruct(cache, r.s_pseudo_ir);
    r.s_vis = std::move(s_vis);
    return r;
}

inline InferResult infer_ir(const Image &img_vis, const Dictionary &dict, const TransferOp &op,
                            const SemanticProvider &provider, const StageParams &params, std::size_t iters) {
    if (op.atoms() != dict.atoms()) throw DimensionError("infer_ir: transfer op K differs from dictionary");
    const SpectrumCache cache(dict, img_vis.height(), img_vis.width());
    return infer_from_coeffs(encode(img_vis, cache, params, iters), cache, op, provider);
}

// All terms are per-element means; the gradient term averages over both
// directional components.
struct InferenceLosses {
    double intensity = 0.0;
    double regularization = 0.0;
    double gradient = 0.0;
    double total = 0.0;
};

inline constexpr double weighting_map_eps = 1e-8;

// (I - min I) / (max I - min I + eps).
inline Image weighting_map(const Image &i_ir) {
    const auto d = i_ir.data();
    const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
    const double mn = *lo, den = *hi - *lo + weighting_map_eps;
    Image a(i_ir.height(), i_ir.width());
    for (std::size_t i = 0; i < d.size(); ++i) a.data()[i] = (d[i] - mn) / den;
    return a;
}

inline double gradient_loss(const Image &a, const Image &b) {
    require_same_shape(a, b, "gradient_loss");
    return mean_abs_diff(forward_gradient(a), forward_gradient(b));
}

inline InferenceLosses inference_losses(const Image &i_p_ir, const Image &i_ir, const CoeffMap &s_p_ir,
                                        const CoeffMap &s_ir, const Image &i_vis) {
    require_same_shape(i_p_ir, i_ir, "inference_losses");
    require_same_shape(i_p_ir, i_vis, "inference_losses");
    require_same_shape(s_p_ir, s_ir, "inference_losses");
    if (!s_p_ir.matches(i_p_ir)) throw DimensionError("inference_losses: coefficients do not match images");
    InferenceLosses l;
    l.intensity = mean_abs_diff(i_p_ir, i_ir) + mean_abs_diff(s_p_ir.data(), s_ir.data());
    const Image a = weighting_map(i_ir);
    double reg = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) reg += std::abs(a.data()[i] * i_p_ir.data()[i] - i_ir.data()[i]);
    l.regularization = reg / static_cast<double>(a.size());
    l.gradient = gradient_loss(i_p_ir, i_vis);
    l.total = l.intensity + l.regularization + l.gradient;
    return l;
}

} // namespace cscf
