#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "flowreg/bessel_sphere.hpp"

using namespace flowreg;

namespace {

// log I_nu(x) from the power series, summed in log space until the terms are
// negligible (at least 64 terms).
double log_bessel_i_series(double nu, double x) {
    const double lh = std::log(0.5 * x);
    std::vector<double> logs;
    double peak = -INFINITY;
    for (int k = 0;; ++k) {
        const double lt = (2.0 * k + nu) * lh - std::lgamma(k + 1.0) - std::lgamma(k + nu + 1.0);
        logs.push_back(lt);
        peak = std::max(peak, lt);
        if (k >= 64 && lt < peak - 80.0) break;
    }
    double acc = 0.0;
    for (double lt : logs) acc += std::exp(lt - peak);
    return peak + std::log(acc);
}

double series_ratio(int d, double kappa) {
    return std::exp(log_bessel_i_series(0.5 * d, kappa) - log_bessel_i_series(0.5 * d - 1.0, kappa));
}

double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
    mx /= xs.size(), my /= ys.size();
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) sxx += (xs[i] - mx) * (xs[i] - mx), sxy += (xs[i] - mx) * (ys[i] - my);
    return sxy / sxx;
}

}  // namespace

TEST(BesselRatio, LargeKappaAsymptote) {
    // The two-term error at d=10, kappa=1e3 is 7.88e-6, dominated by (d-1)(d-3)/(8 kappa^2).
    const double k = 1e3;
    const double a = bessel_ratio(10, k).value;
    EXPECT_NEAR(a, 0.995507882855704150942, 1e-14);
    EXPECT_NEAR(a - (1.0 - 9.0 / (2.0 * k)), 63.0 / (8.0 * k * k), 1e-8);
    EXPECT_NEAR(a, series_ratio(10, k), 1e-12);
}

TEST(BesselRatio, SmallKappa) { EXPECT_LE(std::abs(bessel_ratio(10, 1e-3).value - 1e-4), 1e-7); }

TEST(BesselRatio, ClosedFormInThreeDimensions) {
    const double expect = 1.0 / std::tanh(1.0) - 1.0;
    EXPECT_NEAR(bessel_ratio(3, 1.0).value, expect, 1e-14);
    EXPECT_NEAR(expect, 0.313035, 1e-6);
}

TEST(BesselRatio, AtZero) {
    const auto br = bessel_ratio(5, 0.0);
    EXPECT_EQ(br.value, 0.0);
    EXPECT_DOUBLE_EQ(br.derivative, 0.2);
}

TEST(BesselRatio, MatchesSeriesOracle) {
    for (int d : {2, 3, 8, 32}) {
        for (double k : {1e-3, 1.0, 10.0, 100.0}) {
            const double oracle = series_ratio(d, k);
            EXPECT_LE(std::abs(bessel_ratio(d, k).value - oracle), 1e-10 * oracle) << "d=" << d << " k=" << k;
        }
    }
}

TEST(BesselRatio, MatchesStandardLibrary) {
    for (int d : {2, 3, 8, 32}) {
        for (double k : {1e-3, 1.0, 10.0, 100.0}) {
            const double lib = std::cyl_bessel_i(0.5 * d, k) / std::cyl_bessel_i(0.5 * d - 1.0, k);
            EXPECT_LE(std::abs(bessel_ratio(d, k).value - lib), 1e-10 * lib) << "d=" << d << " k=" << k;
        }
    }
}

TEST(BesselRatio, DerivativeIdentityAndFiniteDifferences) {
    for (int d : {2, 3, 8, 32}) {
        for (double k : {1e-2, 0.5, 3.0, 40.0, 500.0}) {
            const auto br = bessel_ratio(d, k);
            EXPECT_LE(std::abs(br.derivative - (1.0 - br.value * br.value - (d - 1.0) * br.value / k)), 1e-10);
            const double h = 1e-4 * std::max(1.0, k);
            const double fd = (bessel_ratio(d, k + h).value - bessel_ratio(d, k - h).value) / (2.0 * h);
            EXPECT_NEAR(br.derivative, fd, 1e-6 * std::max(1.0, std::abs(br.derivative))) << "d=" << d << " k=" << k;
        }
    }
}

TEST(BesselRatio, StrictlyIncreasingBelowOne) {
    for (int d : {2, 5, 50}) {
        double prev = 0.0;
        for (int i = 1; i <= 400; ++i) {
            const double k = std::pow(10.0, -3.0 + 9.0 * i / 400.0);
            const double a = bessel_ratio(d, k).value;
            EXPECT_GT(a, prev) << "d=" << d << " k=" << k;
            EXPECT_LT(a, 1.0);
            prev = a;
        }
    }
}

TEST(BesselRatio, Errors) {
    try {
        bessel_ratio(3, 2e8);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Overflow);
    }
    try {
        bessel_ratio(1, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidDimension);
    }
    EXPECT_THROW(bessel_ratio(3, -1.0), Error);
    EXPECT_NEAR(bessel_ratio_guarded(3, 2e8).value, 1.0 - 1.0 / 2e8, 1e-15);
}

TEST(SphereEigenvalues, TubeRegime) {
    const double t = 0.999, s2 = 1.0 - t * t;
    const auto p = sphere_eigenvalues(8, t, 1.0);
    EXPECT_LE(std::abs(p.lambda_rad + 1.0 / s2), 0.05 / s2);
    std::vector<double> scaled;
    for (double tt : {0.99, 0.999, 0.9999, 0.99999})
        scaled.push_back(std::abs(sphere_eigenvalues(8, tt, 1.0).lambda_tan) * std::sqrt(1.0 - tt * tt));
    for (std::size_t i = 1; i < scaled.size(); ++i) EXPECT_LE(scaled[i], scaled[0] + 1.0);
}

TEST(SphereEigenvalues, FiniteNearTimeZero) {
    const auto p = sphere_eigenvalues(6, 1e-6, 1.0);
    EXPECT_TRUE(std::isfinite(p.lambda_tan));
    EXPECT_TRUE(std::isfinite(p.lambda_rad));
    EXPECT_NEAR(p.lambda_tan, 0.0, 1e-5);
    EXPECT_NEAR(p.lambda_rad, 0.0, 1e-5);
}

TEST(SphereEigenvalues, TangentialDecreasesInRadius) {
    for (int d : {3, 8}) {
        for (double t : {0.3, 0.7, 0.95}) {
            const double h = 1e-4;
            const double up = sphere_eigenvalues(d, t, 1.0 + h).lambda_tan;
            const double dn = sphere_eigenvalues(d, t, 1.0 - h).lambda_tan;
            EXPECT_LT(up, dn) << "d=" << d << " t=" << t;
        }
    }
}

TEST(SphereEigenvalues, Errors) {
    EXPECT_THROW(sphere_eigenvalues(4, 0.5, 0.0), Error);
    EXPECT_THROW(sphere_eigenvalues(4, 1.0, 1.0), Error);
    EXPECT_THROW(sphere_eigenvalues(4, 0.0, 1.0), Error);
}

TEST(SphereOrigin, HandValue) {
    EXPECT_NEAR(sphere_origin_jacobian(4, 0.9), 0.9 / (4 * 0.0361) - 0.9 / 0.19, 1e-12);
    EXPECT_NEAR(sphere_origin_jacobian(4, 0.9), 1.4958, 1e-4);
    EXPECT_EQ(sphere_origin_jacobian(4, 0.0), 0.0);
}

TEST(SphereOrigin, BlowUpRate) {
    const int d = 8;
    double prev_err = INFINITY;
    for (int j = 4; j <= 20; j += 4) {
        const double t = 1.0 - std::pow(2.0, -j), s2 = 1.0 - t * t;
        const double err = std::abs(sphere_origin_jacobian(d, t) * d * s2 * s2 / t - 1.0);
        EXPECT_LT(err, prev_err);
        prev_err = err;
    }
    EXPECT_LT(prev_err, 1e-4);
}

TEST(SphereSeparation, TangentialGrowsSlowly) {
    std::vector<double> ls, lt;
    for (int j = 3; j <= 12; ++j) {
        const double t = 1.0 - std::pow(2.0, -j);
        ls.push_back(0.5 * std::log(1.0 - t * t));
        lt.push_back(std::log(std::abs(sphere_eigenvalues(8, t, 1.0).lambda_tan)));
    }
    EXPECT_GE(fit_slope(ls, lt), -1.2);
}

TEST(SphereSeparation, OriginOutpacesTube) {
    // Eigenvalue magnitude at the origin against the radial one on the sphere.
    for (int j = 8; j <= 12; ++j) {
        const double t = 1.0 - std::pow(2.0, -j);
        EXPECT_GT(std::abs(sphere_origin_jacobian(8, t)), 10.0 * std::abs(sphere_eigenvalues(8, t, 1.0).lambda_rad));
    }
}
