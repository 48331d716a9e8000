#pragma once

// Atom-wise gated fusion of visible and pseudo-infrared coefficients.
//
// Saliency of each branch is the local mean of |S| over a w x w window; the
// two saliencies go through a two-way softmax at temperature tau, giving
// per-(atom, pixel) weights that sum to one. The fused map is the convex
// combination, reconstructed with the shared dictionary.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "cscf/error.hpp"
#include "cscf/freq_solver.hpp"
#include "cscf/grid.hpp"
#include "cscf/metrics.hpp"
#include "cscf/ops.hpp"
#include "cscf/vgii.hpp"

namespace cscf {

struct GateConfig {
    std::size_t window = 7;
    double temperature = 1.0;

    void validate() const {
        if (window == 0 || window % 2 == 0) throw ArgumentError("GateConfig: window must be odd");
        if (!(temperature > 0.0) || !std::isfinite(temperature))
            throw ArgumentError("GateConfig: temperature must be positive");
    }
};

struct FusionWeights {
    CoeffMap w_vis;
    CoeffMap w_pir;
};

// Mean of |S| over a w x w window per channel, replicate boundary.
inline CoeffMap local_saliency(const CoeffMap &s, std::size_t window) {
    const auto h = static_cast<std::ptrdiff_t>(s.height());
    const auto w = static_cast<std::ptrdiff_t>(s.width());
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    auto clamp_r = [&](std::ptrdiff_t r) { return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(r, 0, h - 1)); };
    auto clamp_c = [&](std::ptrdiff_t c) { return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(c, 0, w - 1)); };
    const double inv = 1.0 / static_cast<double>(window);
    CoeffMap rows(s.atoms(), s.height(), s.width());
    CoeffMap out(s.atoms(), s.height(), s.width());
    for (std::size_t k = 0; k < s.atoms(); ++k) {
        for (std::ptrdiff_t r = 0; r < h; ++r)
            for (std::ptrdiff_t c = 0; c < w; ++c) {
                double acc = 0.0;
                for (std::ptrdiff_t d = -half; d <= half; ++d) acc += std::abs(s(k, static_cast<std::size_t>(r), clamp_c(c + d)));
                rows(k, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc * inv;
            }
        for (std::ptrdiff_t r = 0; r < h; ++r)
            for (std::ptrdiff_t c = 0; c < w; ++c) {
                double acc = 0.0;
                for (std::ptrdiff_t d = -half; d <= half; ++d) acc += rows(k, clamp_r(r + d), static_cast<std::size_t>(c));
                out(k, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc * inv;
            }
    }
    return out;
}

inline FusionWeights gate(const CoeffMap &s_vis, const CoeffMap &s_pir, const GateConfig &cfg) {
    cfg.validate();
    require_same_shape(s_vis, s_pir, "gate");
    const auto sal_vis = local_saliency(s_vis, cfg.window);
    const auto sal_pir = local_saliency(s_pir, cfg.window);
    FusionWeights fw{CoeffMap(s_vis.atoms(), s_vis.height(), s_vis.width()),
                     CoeffMap(s_vis.atoms(), s_vis.height(), s_vis.width())};
    for (std::size_t i = 0; i < s_vis.size(); ++i) {
        // softmax(a, b)_a = 1 / (1 + exp(b - a)); overflow saturates to 0.
        const double z = (sal_pir.data()[i] - sal_vis.data()[i]) / cfg.temperature;
        const double wv = 1.0 / (1.0 + std::exp(z));
        fw.w_vis.data()[i] = wv;
        fw.w_pir.data()[i] = 1.0 - wv;
        assert(std::abs(fw.w_vis.data()[i] + fw.w_pir.data()[i] - 1.0) <= 1e-6);
    }
    return fw;
}

// w_vis . s_vis + w_pir . s_pir, evaluated as lerp(s_vis, s_pir, w_pir) so
// equal branches are reproduced exactly and results stay in the envelope.
inline CoeffMap fuse(const CoeffMap &s_vis, const CoeffMap &s_pir, const FusionWeights &weights) {
    require_same_shape(s_vis, s_pir, "fuse");
    require_same_shape(s_vis, weights.w_vis, "fuse");
    require_same_shape(s_vis, weights.w_pir, "fuse");
    CoeffMap out(s_vis.atoms(), s_vis.height(), s_vis.width());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double a = s_vis.data()[i], b = s_pir.data()[i];
        const double v = std::lerp(a, b, weights.w_pir.data()[i]);
        out.data()[i] = std::clamp(v, std::min(a, b), std::max(a, b));
    }
    return out;
}

struct FusionLosses {
    double intensity = 0.0;
    double gradient = 0.0;
    double total = 0.0;
};

// Distance of I_f to the elementwise max of the two sources, in intensity and
// in each forward-difference component.
inline FusionLosses fusion_losses(const Image &i_f, const Image &i_p_ir, const Image &i_vis) {
    require_same_shape(i_f, i_p_ir, "fusion_losses");
    require_same_shape(i_f, i_vis, "fusion_losses");
    FusionLosses l;
    l.intensity = mean_abs_diff(i_f, elementwise_max(i_p_ir, i_vis));
    const auto gf = forward_gradient(i_f), gp = forward_gradient(i_p_ir), gv = forward_gradient(i_vis);
    const Gradient target{elementwise_max(gp.gx, gv.gx), elementwise_max(gp.gy, gv.gy)};
    l.gradient = mean_abs_diff(gf, target);
    l.total = l.intensity + l.gradient;
    return l;
}

// Diagnostics that need no ground-truth infrared image.
struct FusionReport {
    double inference_gradient = 0.0; // gradient loss of I_p_ir against I_vis
    FusionLosses fusion;
    MetricReport metrics;
};

struct FusionResult {
    Image fused;
    InferResult inference;
    FusionWeights weights;
    FusionReport report;
};

inline FusionResult fuse_pipeline(const Image &i_vis, const Dictionary &dict, const TransferOp &op,
                                  const SemanticProvider &provider, const GateConfig &gate_cfg,
                                  const StageParams &params, std::size_t iters) {
    gate_cfg.validate();
    if (op.atoms() != dict.atoms()) throw DimensionError("fuse_pipeline: transfer op K differs from dictionary");
    const SpectrumCache cache(dict, i_vis.height(), i_vis.width());
    FusionResult r;
    r.inference = infer_from_coeffs(encode(i_vis, cache, params, iters), cache, op, provider);
    r.weights = gate(r.inference.s_vis, r.inference.s_pseudo_ir, gate_cfg);
    r.fused = reconstruct(cache, fuse(r.inference.s_vis, r.inference.s_pseudo_ir, r.weights));
    r.report.inference_gradient = gradient_loss(r.inference.pseudo_ir, i_vis);
    r.report.fusion = fusion_losses(r.fused, r.inference.pseudo_ir, i_vis);
    if (r.fused.height() >= 3 && r.fused.width() >= 3) r.report.metrics = evaluate_metrics(r.fused);
    return r;
}

// Fusion report CSV: one row per image.
inline constexpr const char *fusion_report_header = "path,ell_grad,ell_int_fuse,ell_grad_fuse,ell_f,ag,en,sf,ei";

inline void write_fusion_row(std::ostream &os, const std::string &path, const FusionReport &r) {
    os << path << ',' << r.inference_gradient << ',' << r.fusion.intensity << ',' << r.fusion.gradient << ','
       << r.fusion.total << ',' << r.metrics.ag << ',' << r.metrics.en << ',' << r.metrics.sf << ',' << r.metrics.ei
       << '\n';
}

} // namespace cscf
