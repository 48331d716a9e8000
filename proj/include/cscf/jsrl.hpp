#pragma once

// Joint shared-dictionary learning over paired visible/infrared images.
//
// One block (IV-DLB) runs, with the dictionary from the previous block held
// fixed: coefficient data-consistency + shrinkage for the visible image,
// the same for the infrared image, then the dictionary data-consistency
// solve aggregated over every pair and the support/norm projection.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "cscf/error.hpp"
#include "cscf/freq_solver.hpp"
#include "cscf/grid.hpp"
#include "cscf/ops.hpp"

namespace cscf {

struct ImagePair {
    Image vis;
    Image ir;
};

struct CoeffPair {
    CoeffMap vis;
    CoeffMap ir;
};

// Mean absolute reconstruction residuals of one block, summed over both
// modalities: ell_s uses the dictionary the coefficients were solved with,
// ell_d the updated dictionary.
struct Residual {
    double ell_s = 0.0;
    double ell_d = 0.0;
};

struct JsrlConfig {
    std::size_t atoms = 32;
    std::size_t kernel = 5;
    std::size_t inner_blocks = 1;
    std::size_t outer_iters = 50;
    StageSchedule schedule;
    std::uint64_t seed = 0;
    std::optional<Dictionary> init;
    std::size_t threads = 1;

    void validate() const {
        if (atoms == 0) throw ArgumentError("JsrlConfig: atoms must be >= 1");
        if (kernel == 0 || kernel % 2 == 0) throw ArgumentError("JsrlConfig: kernel must be odd");
        if (inner_blocks == 0) throw ArgumentError("JsrlConfig: inner_blocks must be >= 1");
        if (init && (init->atoms() != atoms || init->kernel() != kernel))
            throw ArgumentError("JsrlConfig: initial dictionary does not match atoms/kernel");
        schedule.validate();
    }
};

struct TrainState {
    Dictionary dict;
    std::vector<CoeffPair> coeffs;
    std::vector<Residual> history;
};

struct LearnResult {
    Dictionary dict;
    std::vector<Residual> history;
    std::vector<CoeffPair> coeffs;
};

// Unit-norm atoms with i.i.d. Gaussian entries from a seeded generator.
inline Dictionary random_unit_dictionary(std::size_t atoms, std::size_t kernel, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dictionary d(atoms, kernel);
    for (double &v : d.data()) v = normal(rng);
    for (std::size_t a = 0; a < atoms; ++a) {
        const double n = d.atom_norm(a);
        for (double &v : d.atom(a)) v /= n;
    }
    return d;
}

namespace detail {

inline double pair_residual(const SpectrumCache &cache, const ImagePair &p, const CoeffPair &s) {
    return mean_abs_diff(reconstruct(cache, s.vis), p.vis) + mean_abs_diff(reconstruct(cache, s.ir), p.ir);
}

// One block over all pairs; updates dict and coeffs in place and returns the
// per-pair residuals.
inline std::vector<Residual> run_block(std::span<const ImagePair> pairs, Dictionary &dict,
                                       std::vector<CoeffPair> &coeffs, const StageParams &params,
                                       std::size_t threads) {
    const std::size_t h = pairs.front().vis.height(), w = pairs.front().vis.width();
    std::vector<Residual> res(pairs.size());
    {
        const SpectrumCache cache(dict, h, w);
        parallel_for(pairs.size(), threads, [&](std::size_t i) {
            auto &s = coeffs[i];
            s.vis = prox_coeff(solve_coeff_dc(pairs[i].vis, cache, s.vis, params.mu1), params.lambda1, params.beta1);
            s.ir = prox_coeff(solve_coeff_dc(pairs[i].ir, cache, s.ir, params.mu2), params.lambda2, params.beta2);
            res[i].ell_s = pair_residual(cache, pairs[i], s);
        });
    }
    std::vector<CodedImage> obs;
    obs.reserve(2 * pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        obs.push_back({pairs[i].vis, coeffs[i].vis});
        obs.push_back({pairs[i].ir, coeffs[i].ir});
    }
    dict = prox_dict(solve_dict_dc(obs, dict, params.mu3), dict.kernel());
    const SpectrumCache updated(dict, h, w);
    parallel_for(pairs.size(), threads, [&](std::size_t i) { res[i].ell_d = pair_residual(updated, pairs[i], coeffs[i]); });
    return res;
}

inline void check_pairs(std::span<const ImagePair> pairs, std::size_t kernel) {
    if (pairs.empty()) throw ArgumentError("learn_dictionary: empty training set");
    const auto &first = pairs.front().vis;
    for (const auto &p : pairs) {
        if (!p.vis.same_shape(first) || !p.ir.same_shape(first))
            throw DimensionError("learn_dictionary: all images must share dimensions");
    }
    if (kernel > first.height() || kernel > first.width())
        throw DimensionError("learn_dictionary: kernel larger than training images");
}

} // namespace detail

// A single block on one pair. Empty state.coeffs starts from zero maps.
inline TrainState ivdlb_step(const ImagePair &pair, TrainState state, const StageParams &params) {
    params.validate();
    const ImagePair pairs[] = {pair};
    detail::check_pairs(pairs, state.dict.kernel());
    if (state.coeffs.empty()) {
        const CoeffMap zero(state.dict.atoms(), pair.vis.height(), pair.vis.width());
        state.coeffs.push_back({zero, zero});
    }
    if (state.coeffs.size() != 1 || !state.coeffs[0].vis.matches(pair.vis) ||
        state.coeffs[0].vis.atoms() != state.dict.atoms() || !state.coeffs[0].vis.same_shape(state.coeffs[0].ir))
        throw DimensionError("ivdlb_step: state coefficients inconsistent with pair/dictionary");
    const auto res = detail::run_block(pairs, state.dict, state.coeffs, params, 1);
    state.history.push_back(res.front());
    return state;
}

// Called after each sweep with (sweep index, current dictionary, sweep residual).
using SweepCallback = std::function<void(std::size_t, const Dictionary &, const Residual &)>;

inline LearnResult learn_dictionary(std::span<const ImagePair> pairs, const JsrlConfig &cfg,
                                    const SweepCallback &on_sweep = {}) {
    cfg.validate();
    detail::check_pairs(pairs, cfg.kernel);
    LearnResult out;
    out.dict = cfg.init ? *cfg.init : random_unit_dictionary(cfg.atoms, cfg.kernel, cfg.seed);
    const auto &first = pairs.front().vis;
    const CoeffMap zero(cfg.atoms, first.height(), first.width());
    out.coeffs.assign(pairs.size(), CoeffPair{zero, zero});

    for (std::size_t sweep = 0; sweep < cfg.outer_iters; ++sweep) {
        std::vector<Residual> res;
        for (std::size_t n = 0; n < cfg.inner_blocks; ++n) {
            const auto params = cfg.schedule.at(sweep * cfg.inner_blocks + n);
            res = detail::run_block(pairs, out.dict, out.coeffs, params, cfg.threads);
        }
        Residual mean;
        for (const auto &r : res) mean.ell_s += r.ell_s, mean.ell_d += r.ell_d;
        mean.ell_s /= static_cast<double>(res.size());
        mean.ell_d /= static_cast<double>(res.size());
        out.history.push_back(mean);
        if (on_sweep) on_sweep(sweep, out.dict, mean);
    }
    return out;
}

// Mean PSNR of D * S against both images of every pair.
inline double training_psnr(std::span<const ImagePair> pairs, const Dictionary &dict,
                            std::span<const CoeffPair> coeffs) {
    if (pairs.size() != coeffs.size()) throw DimensionError("training_psnr: pair/coefficient count mismatch");
    const SpectrumCache cache(dict, pairs.front().vis.height(), pairs.front().vis.width());
    double sum = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        sum += psnr(pairs[i].vis, reconstruct(cache, coeffs[i].vis));
        sum += psnr(pairs[i].ir, reconstruct(cache, coeffs[i].ir));
    }
    return sum / static_cast<double>(2 * pairs.size());
}

} // namespace cscf
