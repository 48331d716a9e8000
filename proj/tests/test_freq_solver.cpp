#include <gtest/gtest.h>

#include <random>

#include "cscf/freq_solver.hpp"
#include "support/oracles.hpp"

using namespace cscf;

namespace {

double coeff_objective(const Image &img, const Dictionary &d, const CoeffMap &s_prev, const CoeffMap &s, double mu) {
    const auto rec = oracle::spatial_reconstruct(d, s);
    double data = 0.0, prox = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) data += std::pow(img.data()[i] - rec.data()[i], 2);
    for (std::size_t i = 0; i < s.size(); ++i) prox += std::pow(s_prev.data()[i] - s.data()[i], 2);
    return 0.5 * data + 0.5 * mu * prox;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST(SpectrumCache, EnergyIsSumOfSquaredMagnitudes) {
    std::mt19937_64 rng(1);
    const auto d = oracle::random_dictionary(3, 3, rng);
    const SpectrumCache cache(d, 7, 9);
    for (std::size_t f = 0; f < 63; ++f) {
        double e = 0.0;
        for (std::size_t k = 0; k < 3; ++k) e += std::norm(cache.spectrum(k)[f]);
        EXPECT_GE(cache.energy()[f], 0.0);
        EXPECT_NEAR(cache.energy()[f], e, 1e-10 * std::max(1.0, e));
    }
}

TEST(SolveCoeffDc, DeltaAtomConstantImage) {
    const auto d = oracle::delta_dictionary(3);
    const Image img(5, 5, 0.6);
    const auto s = solve_coeff_dc(img, d, CoeffMap(1, 5, 5), 1.0);
    for (double v : s.data()) EXPECT_NEAR(v, 0.3, 1e-12);
}

TEST(SolveCoeffDc, LargeMuKeepsPrevious) {
    std::mt19937_64 rng(2);
    const auto d = oracle::random_dictionary(3, 3, rng);
    const auto img = oracle::random_image(8, 8, rng);
    const auto prev = oracle::random_coeffs(3, 8, 8, rng);
    const auto s = solve_coeff_dc(img, d, prev, 1e8);
    EXPECT_LE(oracle::rel_error(s.data(), prev.data()), 1e-6);
}

TEST(SolveCoeffDc, MatchesDenseOracle) {
    std::mt19937_64 rng(3);
    const auto d = oracle::random_dictionary(3, 3, rng);
    const auto img = oracle::random_image(6, 6, rng);
    const auto prev = oracle::random_coeffs(3, 6, 6, rng);
    const auto got = solve_coeff_dc(img, d, prev, 0.7);
    const auto want = oracle::dense_coeff_dc(img, d, prev, 0.7);
    EXPECT_LE(oracle::rel_error(got.data(), want.data()), 1e-5);
}

TEST(SolveCoeffDc, ShermanMorrisonMatchesCholesky) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const auto d = oracle::random_dictionary(4, 5, rng);
        const auto img = oracle::random_image(12, 10, rng);
        const auto prev = oracle::random_coeffs(4, 12, 10, rng);
        const SpectrumCache cache(d, 12, 10);
        const auto sm = solve_coeff_dc(img, cache, prev, 0.3);
        const auto ch = solve_coeff_dc_cholesky(img, cache, prev, 0.3);
        EXPECT_LE(oracle::rel_error(sm.data(), ch.data()), 1e-9);
    }
}

TEST(SolveCoeffDc, OutputMinimizesObjective) {
    std::mt19937_64 rng(5);
    const auto d = oracle::random_dictionary(2, 3, rng);
    const auto img = oracle::random_image(7, 7, rng);
    const auto prev = oracle::random_coeffs(2, 7, 7, rng);
    const double mu = 0.5;
    const auto s = solve_coeff_dc(img, d, prev, mu);
    const double best = coeff_objective(img, d, prev, s, mu);
    EXPECT_LE(best, coeff_objective(img, d, prev, prev, mu));
    std::normal_distribution<double> n(0.0, 1e-3);
    for (int i = 0; i < 20; ++i) {
        CoeffMap p = s;
        for (double &v : p.data()) v += n(rng);
        EXPECT_LE(best, coeff_objective(img, d, prev, p, mu));
    }
}

TEST(SolveCoeffDc, Errors) {
    const auto d = oracle::delta_dictionary(3);
    const Image img(5, 5);
    EXPECT_THROW(solve_coeff_dc(img, d, CoeffMap(1, 5, 5), 0.0), ArgumentError);
    EXPECT_THROW(solve_coeff_dc(img, d, CoeffMap(1, 5, 5), -1.0), ArgumentError);
    EXPECT_THROW(solve_coeff_dc(img, d, CoeffMap(2, 5, 5), 1.0), DimensionError);
    EXPECT_THROW(solve_coeff_dc(img, d, CoeffMap(1, 4, 5), 1.0), DimensionError);
    EXPECT_THROW(solve_coeff_dc(Image(2, 2), d, CoeffMap(1, 2, 2), 1.0), DimensionError);
}

TEST(ProxCoeff, ZeroLambdaIsIdentity) {
    std::mt19937_64 rng(6);
    const auto s = oracle::random_coeffs(2, 4, 4, rng);
    EXPECT_EQ(prox_coeff(s, 0.0, 3.0), s);
}

TEST(ProxCoeff, BelowThresholdIsZero) {
    const CoeffMap s(1, 1, 1, 0.3);
    EXPECT_EQ(prox_coeff(s, 0.5, 1.0).data()[0], 0.0);
}

TEST(ProxCoeff, ShrinksAndIsPerturbationOptimal) {
    const double x0 = -1.2, lambda = 0.4, beta = 2.0;
    const double x = prox_coeff(CoeffMap(1, 1, 1, x0), lambda, beta).data()[0];
    EXPECT_DOUBLE_EQ(x, -1.0);
    auto obj = [&](double v) { return 0.5 * beta * (v - x0) * (v - x0) + lambda * std::abs(v); };
    EXPECT_LT(obj(x), obj(x + 1e-3));
    EXPECT_LT(obj(x), obj(x - 1e-3));
}

TEST(ProxCoeff, OddAndNonExpansive) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 2.0);
    std::uniform_real_distribution<double> u(0.0, 1.5);
    for (int i = 0; i < 2000; ++i) {
        const double a = n(rng), b = n(rng), t = u(rng);
        EXPECT_EQ(soft_threshold(-a, t), -soft_threshold(a, t));
        EXPECT_LE(std::abs(soft_threshold(a, t) - soft_threshold(b, t)), std::abs(a - b) + 1e-15);
    }
}

TEST(ProxCoeff, RejectsNonPositiveBeta) {
    EXPECT_THROW(prox_coeff(CoeffMap(1, 1, 1), 0.1, 0.0), ArgumentError);
}

TEST(SolveDictDc, ZeroCoefficientsReturnPaddedPrevious) {
    std::mt19937_64 rng(8);
    const auto d = oracle::random_dictionary(3, 3, rng);
    const auto img = oracle::random_image(6, 6, rng);
    const CoeffMap zero(3, 6, 6);
    const auto out = solve_dict_dc(img, img, zero, zero, d, 2.5);
    const auto padded = pad_dictionary(d, 6, 6);
    EXPECT_LE(max_abs_diff(out.data(), padded.data()), 1e-14);
}

TEST(SolveDictDc, DeltaCodesScalarCase) {
    std::mt19937_64 rng(9);
    const auto img = oracle::random_image(6, 6, rng);
    CoeffMap s(1, 6, 6);
    s(0, 0, 0) = 1.0;
    const auto d_prev = oracle::random_dictionary(1, 3, rng);
    const auto out = solve_dict_dc(img, img, s, s, d_prev, 1.0);
    // With S a unit delta, per frequency d = (2 I + d_prev) / 3, i.e. the same in space.
    const auto padded = pad_dictionary(d_prev, 6, 6);
    for (std::size_t i = 0; i < 36; ++i)
        EXPECT_NEAR(out.data()[i], (2 * img.data()[i] + padded.data()[i]) / 3.0, 1e-12);
}

TEST(SolveDictDc, MatchesDenseOracle) {
    std::mt19937_64 rng(10);
    const auto d = oracle::random_dictionary(2, 3, rng);
    const auto iv = oracle::random_image(8, 8, rng), ii = oracle::random_image(8, 8, rng);
    const auto sv = oracle::random_coeffs(2, 8, 8, rng), si = oracle::random_coeffs(2, 8, 8, rng);
    const auto got = solve_dict_dc(iv, ii, sv, si, d, 0.9);
    const auto want = oracle::dense_dict_dc({{iv, sv}, {ii, si}}, d, 0.9);
    EXPECT_LE(oracle::rel_error(got.data(), want.data()), 1e-5);
}

TEST(SolveDictDc, Errors) {
    const auto d = oracle::delta_dictionary(3);
    const Image img(5, 5);
    const CoeffMap s(1, 5, 5);
    EXPECT_THROW(solve_dict_dc(img, img, s, s, d, 0.0), ArgumentError);
    EXPECT_THROW(solve_dict_dc(img, img, s, CoeffMap(2, 5, 5), d, 1.0), DimensionError);
    EXPECT_THROW(solve_dict_dc(img, Image(4, 5), s, s, d, 1.0), DimensionError);
}

TEST(ProxDict, NormalizesKernelSupportedAtom) {
    FilterStack raw(1, 6, 6);
    raw(0, 0, 0) = 2.0 * 0.6;
    raw(0, 1, 2) = 2.0 * 0.8;
    const auto d = prox_dict(raw, 3);
    EXPECT_DOUBLE_EQ(d(0, 0, 0), 0.6);
    EXPECT_DOUBLE_EQ(d(0, 1, 2), 0.8);
}

TEST(ProxDict, ZeroAtomBecomesCenterImpulse) {
    const auto d = prox_dict(FilterStack(2, 7, 7), 5);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(d(a, r, c), (r == 2 && c == 2) ? 1.0 : 0.0);
}

TEST(ProxDict, UnitNormAndIgnoresOffSupport) {
    std::mt19937_64 rng(11);
    auto raw = oracle::random_coeffs(3, 9, 9, rng);
    const auto d = prox_dict(raw, 5);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(d.atom_norm(a), 1.0, 1e-6);
    std::normal_distribution<double> n(0.0, 10.0);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t r = 0; r < 9; ++r)
            for (std::size_t c = 0; c < 9; ++c)
                if (r >= 5 || c >= 5) raw(a, r, c) = n(rng);
    EXPECT_EQ(prox_dict(raw, 5), d);
}

TEST(ProxDict, Idempotent) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const auto once = prox_dict(oracle::random_coeffs(4, 8, 8, rng), 5);
        const auto twice = prox_dict(pad_dictionary(once, 8, 8), 5);
        EXPECT_EQ(once, twice);
    }
}

TEST(ProxDict, RejectsEvenKernel) {
    EXPECT_THROW(prox_dict(FilterStack(1, 6, 6), 4), ArgumentError);
    EXPECT_THROW(prox_dict(FilterStack(1, 4, 4), 5), DimensionError);
}

TEST(Reconstruct, DeltaAtomIsIdentity) {
    std::mt19937_64 rng(13);
    const auto s = oracle::random_coeffs(1, 6, 7, rng);
    const auto img = reconstruct(oracle::delta_dictionary(3), s);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(img.data()[i], s.data()[i], 1e-12);
}

TEST(Reconstruct, ZeroCoefficientsGiveZeroImage) {
    std::mt19937_64 rng(14);
    const auto img = reconstruct(oracle::random_dictionary(3, 3, rng), CoeffMap(3, 5, 5));
    for (double v : img.data()) EXPECT_EQ(v, 0.0);
}

TEST(Reconstruct, MatchesSpatialConvolution) {
    std::mt19937_64 rng(15);
    const auto d = oracle::random_dictionary(3, 5, rng);
    const auto s = oracle::random_coeffs(3, 9, 11, rng);
    const auto got = reconstruct(d, s);
    const auto want = oracle::spatial_reconstruct(d, s);
    EXPECT_LE(max_abs_diff(got.data(), want.data()), 1e-6);
}

TEST(Reconstruct, KMismatch) {
    EXPECT_THROW(reconstruct(oracle::delta_dictionary(3), CoeffMap(2, 4, 4)), DimensionError);
}

TEST(Pipeline, DictionaryUpdateStaysFinite) {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 10; ++trial) {
        const auto d = oracle::random_dictionary(3, 3, rng);
        const auto iv = oracle::random_image(8, 8, rng), ii = oracle::random_image(8, 8, rng);
        const auto sv = oracle::random_coeffs(3, 8, 8, rng), si = oracle::random_coeffs(3, 8, 8, rng);
        const auto next = prox_dict(solve_dict_dc(iv, ii, sv, si, d, 0.1), 3);
        EXPECT_TRUE(all_finite(reconstruct(next, sv).data()));
    }
}

TEST(StageSchedule, GrowthScalesMuAndBeta) {
    StageSchedule sched{StageParams{}, 2.0};
    const auto p = sched.at(3);
    EXPECT_DOUBLE_EQ(p.mu1, sched.base.mu1 * 8);
    EXPECT_DOUBLE_EQ(p.beta3, sched.base.beta3 * 8);
    EXPECT_DOUBLE_EQ(p.lambda1, sched.base.lambda1);
    StageParams bad;
    bad.mu2 = 0.0;
    EXPECT_THROW(bad.validate(), ArgumentError);
    bad = StageParams{};
    bad.lambda1 = -1.0;
    EXPECT_THROW(bad.validate(), ArgumentError);
}
