#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "flowreg/regularity_probe.hpp"

using namespace flowreg;

namespace {

double lipman_k(double t, double s2) { return (t * s2 - (1 - t)) / (t * t * s2 + (1 - t) * (1 - t)); }

std::vector<double> geometric_times(double tau, int N) { return profile_time_grid(tau, N); }

}  // namespace

TEST(Profile, GaussianLipmanIsSlope) {
    const double s2 = 4.0;
    const TargetModel g = TargetModel::gaussian(Vec::Zero(2), s2);
    const auto times = geometric_times(0.999, 40);
    for (const ProbeSpec& spec : {ProbeSpec{Axis1D{5, 3.0}}, ProbeSpec{LatticeBox{2.0, 3}}, ProbeSpec{TargetSamples{16, 7}}}) {
        const auto p = profile(g, Schedule::lipman_linear(), times, spec);
        for (std::size_t k = 0; k < times.size(); ++k) {
            EXPECT_NEAR(p.lambda_max[k], lipman_k(times[k], s2), 1e-10 * (1 + std::abs(lipman_k(times[k], s2))));
            EXPECT_LE(p.lambda_max[k], p.op_norm[k] + 1e-15);
        }
    }
}

TEST(Profile, StandardGaussianDiffusionVanishes) {
    const auto p = profile(TargetModel::gaussian(3, 1.0), Schedule::rescaled_diffusion(), geometric_times(0.999, 20),
                           LatticeBox{2.0, 3});
    for (std::size_t k = 0; k < p.times.size(); ++k) {
        EXPECT_NEAR(p.lambda_max[k], 0.0, 1e-12);
        EXPECT_NEAR(p.op_norm[k], 0.0, 1e-12);
        EXPECT_NEAR(p.time_slope[k], 0.0, 1e-10);
    }
}

TEST(Profile, TruncatedGaussianEnvelopeIsBounded) {
    const TargetModel q = TargetModel::quadrature(Potential::quadratic(1.0), Perturbation::zero(), -2.0, 2.0);
    std::vector<double> times;
    for (int i = 0; i <= 30; ++i) times.push_back(1.0 - 0.1 * std::pow(0.01, i / 30.0));
    const auto p = profile(q, Schedule::lipman_linear(), times, Axis1D{81, 4.0});
    double lo = INFINITY, hi = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        EXPECT_LE(p.lambda_max[k], p.op_norm[k]);
        const double scaled = p.op_norm[k] * (1.0 - times[k]);
        lo = std::min(lo, scaled), hi = std::max(hi, scaled);
    }
    EXPECT_LT(hi, 1.5);
    EXPECT_LT(hi / lo, 2.0);
}

TEST(Profile, LatticeAndSampleProbeCounts) {
    const auto sv = eval_schedule(Schedule::lipman_linear(), 0.5);
    EXPECT_EQ(probe_points(TargetModel::gaussian(2, 1.0), sv, LatticeBox{1.0, 5}, 0).size(), 25u);
    EXPECT_EQ(probe_points(TargetModel::gaussian(6, 1.0), sv, LatticeBox{1.0, 5}, 0).size(), 35u);
    EXPECT_EQ(probe_points(TargetModel::gaussian(3, 1.0), sv, Axis1D{11, 2.0}, 0).size(), 11u);
    const auto a = probe_points(TargetModel::gaussian(3, 1.0), sv, TargetSamples{9, 4}, 2);
    const auto b = probe_points(TargetModel::gaussian(3, 1.0), sv, TargetSamples{9, 4}, 2);
    const auto c = probe_points(TargetModel::gaussian(3, 1.0), sv, TargetSamples{9, 4}, 3);
    ASSERT_EQ(a.size(), 9u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    EXPECT_NE(a[0], c[0]);
    const auto dbl = std::get<Axis1D>(doubled(Axis1D{11, 2.0}));
    EXPECT_EQ(dbl.count, 21);
    EXPECT_EQ(std::get<TargetSamples>(doubled(TargetSamples{9, 4})).n, 18u);
}

TEST(Profile, ThreadCountDoesNotChangeResults) {
    const TargetModel m = TargetModel::mixture({0.5, 0.5}, {-1.0, 1.0}, 0.25);
    const auto times = geometric_times(0.99, 32);
    const auto a = profile(m, Schedule::lipman_linear(), times, Axis1D{21, 3.0}, 1);
    const auto b = profile(m, Schedule::lipman_linear(), times, Axis1D{21, 3.0}, 4);
    EXPECT_EQ(a.lambda_max, b.lambda_max);
    EXPECT_EQ(a.op_norm, b.op_norm);
    EXPECT_EQ(a.time_slope, b.time_slope);
}

TEST(IntegralLambdaMax, GaussianClosedForms) {
    const double s = 2.0, tau = 1.0 - 1e-4;
    const TargetModel g = TargetModel::gaussian(1, s);
    const auto times = geometric_times(tau, 20000);
    const auto lip = integral_lambda_max(profile(g, Schedule::lipman_linear(), times, Axis1D{1, 0.0}), 0.0);
    const double lip_exact = 0.5 * std::log(tau * tau * s * s + (1 - tau) * (1 - tau));
    EXPECT_NEAR(lip.signed_integral, lip_exact, 1e-6);
    EXPECT_NEAR(lip_exact, std::log(2.0), 2e-4);
    const auto dif = integral_lambda_max(profile(g, Schedule::rescaled_diffusion(), times, Axis1D{1, 0.0}), 0.0);
    const double dif_exact = 0.5 * std::log(tau * tau * (s * s - 1) + 1);
    EXPECT_NEAR(dif.signed_integral, dif_exact, 1e-6);
    // Lipman k_t is negative before t = 1/(s^2+1); the positive part drops that stretch.
    EXPECT_GT(lip.positive_integral, lip.signed_integral);
    EXPECT_NEAR(dif.positive_integral, dif.signed_integral, 1e-15);
}

TEST(IntegralLambdaMax, RefinementStable) {
    const TargetModel g = TargetModel::gaussian(1, 2.0);
    const double tau = 1.0 - 1e-4;
    const double a =
        integral_lambda_max(profile(g, Schedule::lipman_linear(), geometric_times(tau, 10000), Axis1D{1, 0.0}), 0.0)
            .signed_integral;
    const double b =
        integral_lambda_max(profile(g, Schedule::lipman_linear(), geometric_times(tau, 20000), Axis1D{1, 0.0}), 0.0)
            .signed_integral;
    EXPECT_NEAR(a, b, 1e-6);
}

TEST(IntegralLambdaMax, EmptyIntervalAndPartialCell) {
    const auto p = profile(TargetModel::gaussian(1, 2.0), Schedule::lipman_linear(), geometric_times(0.9, 50),
                           Axis1D{1, 0.0});
    const auto zero = integral_lambda_max(p, p.times.back());
    EXPECT_EQ(zero.signed_integral, 0.0);
    EXPECT_EQ(zero.positive_integral, 0.0);
    // Starting inside a cell equals the full integral minus the interpolated head.
    const double z = 0.5 * (p.times[3] + p.times[4]);
    const double head = integral_lambda_max(p, 0.0).signed_integral - integral_lambda_max(p, z).signed_integral;
    double expect = 0.0;
    for (int k = 0; k < 3; ++k) expect += 0.5 * (p.lambda_max[k] + p.lambda_max[k + 1]) * (p.times[k + 1] - p.times[k]);
    const double lz = 0.5 * (p.lambda_max[3] + p.lambda_max[4]);
    expect += 0.5 * (p.lambda_max[3] + lz) * (z - p.times[3]);
    EXPECT_NEAR(head, expect, 1e-14);
    EXPECT_THROW(integral_lambda_max(p, 0.95), Error);
}

TEST(IntegralLambdaMax, DimensionFree) {
    const double s = 2.0, tau = 1.0 - 1e-4;
    const auto times = geometric_times(tau, 4000);
    std::vector<double> vals;
    for (int d : {1, 2, 16, 64}) {
        const auto p = profile(TargetModel::gaussian(d, s), Schedule::lipman_linear(), times, Axis1D{3, 1.0});
        vals.push_back(integral_lambda_max(p, 0.0).signed_integral);
    }
    for (double v : vals) EXPECT_NEAR(v, vals[0], 1e-9);
    EXPECT_NEAR(vals[0], 0.5 * std::log(tau * tau * s * s + (1 - tau) * (1 - tau)), 1e-5);
}

TEST(ExponentFit, SyntheticInverseDistance) {
    std::vector<double> ts, vs;
    for (int i = 0; i <= 50; ++i) {
        ts.push_back(1.0 - std::pow(10.0, -1.0 - 3.0 * i / 50.0));
        vs.push_back(1.0 / (1.0 - ts.back()));
    }
    const auto fit = exponent_fit(ts, vs, 0.0, 1.0);
    EXPECT_NEAR(fit.slope, 1.0, 1e-9);
    EXPECT_NEAR(fit.intercept, 0.0, 1e-9);
    EXPECT_NEAR(fit.r2, 1.0, 1e-12);
}

TEST(ExponentFit, DiracMixtureOriginSlope) {
    const TargetModel m = TargetModel::mixture({0.5, 0.5}, {-1.0, 1.0}, 0.0);
    std::vector<double> times;
    for (int i = 0; i <= 40; ++i) times.push_back(1.0 - 0.01 * std::pow(0.01, i / 40.0));
    const auto p = profile(m, Schedule::lipman_linear(), times, Axis1D{1, 0.0});
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        EXPECT_NEAR(p.lambda_max[k], -1.0 / (1 - t) + t / std::pow(1 - t, 3), 1e-9 * p.lambda_max[k]);
    }
    EXPECT_NEAR(exponent_fit(p.times, p.lambda_max, 0.99, 0.9999).slope, 3.0, 0.05);
}

TEST(ExponentFit, GaussianTimeProfileDoesNotBlowUp) {
    const auto p = profile(TargetModel::gaussian(1, 2.0), Schedule::lipman_linear(), geometric_times(0.9999, 200),
                           Axis1D{3, 1.0});
    EXPECT_NEAR(exponent_fit(p.times, p.time_slope, 0.99, 0.9999).slope, 0.0, 0.05);
}

TEST(ExponentFit, Errors) {
    EXPECT_THROW(exponent_fit({0.5}, {1.0}, 0.0, 1.0), Error);
    EXPECT_THROW(exponent_fit({0.5, 0.6}, {1.0, -1.0}, 0.0, 1.0), Error);
    try {
        loglog_fit({1.0, 1.0}, {2.0, 3.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateFit);
    }
    EXPECT_THROW(loglog_fit({1.0, 2.0}, {1.0}), Error);
}

TEST(Envelope, PicksWeightedMaximum) {
    const std::vector<double> ts = {0.0, 0.5, 0.9}, vs = {1.0, 4.0, 20.0};
    EXPECT_DOUBLE_EQ(envelope(ts, vs, 0.0, 1.0), 2.0);
    EXPECT_NEAR(envelope(ts, vs, 0.6, 1.0), 2.0, 1e-15);
    EXPECT_NEAR(envelope(ts, vs, 0.0, 2.0), 1.0, 1e-15);
}

TEST(ProbeDoubling, WeaklyLogConcaveEnvelopesAreStable) {
    const std::vector<TargetModel> targets = {TargetModel::gaussian(1, 2.0), TargetModel::holder_reference(1.0),
                                              TargetModel::quadrature(Potential::quartic(1.0), Perturbation::zero(),
                                                                      -8.0, 8.0)};
    const auto times = geometric_times(0.999, 48);
    for (const auto& tg : targets) {
        for (const auto& sch : {Schedule::lipman_linear(), Schedule::rescaled_diffusion()}) {
            const ProbeSpec base = Axis1D{61, 6.0};
            const auto a = profile(tg, sch, times, base);
            const auto b = profile(tg, sch, times, doubled(base));
            const double ea = envelope(a.times, a.op_norm, 0.5, 1.0), eb = envelope(b.times, b.op_norm, 0.5, 1.0);
            EXPECT_LT(std::abs(eb - ea), 0.05 * eb) << sch.name();
            const double sa = envelope(a.times, a.time_slope, 0.0, 2.0), sb = envelope(b.times, b.time_slope, 0.0, 2.0);
            EXPECT_LT(std::abs(sb - sa), 0.05 * sb) << sch.name();
        }
    }
}
