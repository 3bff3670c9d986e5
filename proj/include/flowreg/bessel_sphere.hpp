#pragma once

// Uniform measure on the unit sphere S^{d-1} pushed along the diffusion path
// X_t = t Y + sigma_t xi, sigma_t^2 = 1 - t^2. The posterior of Y given X_t = x
// is von Mises-Fisher with concentration kappa = t|x|/sigma_t^2, so every drift
// quantity reduces to the mean resultant length A_d(kappa) = I_{d/2}/I_{d/2-1}.

#include <cmath>
#include <limits>
#include <string>

#include "flowreg/error.hpp"

namespace flowreg {

struct BesselRatio {
    double value = 0.0;       // A_d(kappa)
    double derivative = 0.0;  // A_d'(kappa)
};

inline constexpr double kKappaOverflow = 1e8;

namespace detail {

// Perron continued fraction
//   I_nu(x)/I_{nu-1}(x) = x / (2nu + x - (2nu+1)x / (2nu+1+2x - (2nu+3)x / (2nu+2+2x - ...)))
// evaluated by modified Lentz.
inline double perron_ratio(double nu, double x) {
    constexpr double tiny = 1e-30;
    constexpr double eps = 1e-14;
    double f = 2.0 * nu + x;
    if (f == 0.0) f = tiny;
    double C = f, D = 0.0;
    for (int k = 1; k < 100000; ++k) {
        const double a = -(2.0 * nu + 2.0 * k - 1.0) * x;
        const double b = 2.0 * nu + k + 2.0 * x;
        D = b + a * D;
        if (std::abs(D) < tiny) D = tiny;
        C = b + a / C;
        if (std::abs(C) < tiny) C = tiny;
        D = 1.0 / D;
        const double delta = C * D;
        f *= delta;
        if (std::abs(delta - 1.0) < eps) break;
    }
    return x / f;
}

}  // namespace detail

/// A_d(kappa) = I_{d/2}(kappa)/I_{d/2-1}(kappa) and its derivative through
/// A' = 1 - A^2 - (d-1)A/kappa, A'(0) = 1/d.
inline BesselRatio bessel_ratio(int d, double kappa) {
    require(d >= 2, ErrorCode::InvalidDimension, "sphere dimension must be >= 2");
    require(kappa >= 0.0 && std::isfinite(kappa), ErrorCode::InvalidParameters, "kappa must be finite and >= 0");
    if (kappa > kKappaOverflow) fail(ErrorCode::Overflow, "kappa above 1e8: " + std::to_string(kappa));
    if (kappa == 0.0) return {0.0, 1.0 / d};
    const double A = detail::perron_ratio(0.5 * d, kappa);
    return {A, 1.0 - A * A - (d - 1.0) * A / kappa};
}

/// Two-term large-kappa expansion; error O(kappa^-2).
inline BesselRatio bessel_ratio_asymptotic(int d, double kappa) {
    return {1.0 - (d - 1.0) / (2.0 * kappa), (d - 1.0) / (2.0 * kappa * kappa)};
}

/// bessel_ratio with the asymptote substituted beyond the overflow guard.
inline BesselRatio bessel_ratio_guarded(int d, double kappa) {
    return kappa > kKappaOverflow ? bessel_ratio_asymptotic(d, kappa) : bessel_ratio(d, kappa);
}

struct SphereDriftPoint {
    int d = 0;
    double t = 0.0;
    double r = 0.0;
    double kappa = 0.0;
    double A = 0.0, Aprime = 0.0;
    double lambda_tan = 0.0, lambda_rad = 0.0;
};

/// Eigenvalues of the drift Jacobian at |x| = r: tangential (multiplicity d-1)
/// and radial.
inline SphereDriftPoint sphere_eigenvalues(int d, double t, double r) {
    require(t > 0.0 && t < 1.0, ErrorCode::OutOfDomain, "t must lie in (0,1)");
    require(r > 0.0, ErrorCode::OutOfDomain, "r must be positive; use sphere_origin_jacobian at the origin");
    const double s2 = 1.0 - t * t;
    SphereDriftPoint p;
    p.d = d, p.t = t, p.r = r;
    p.kappa = t * r / s2;
    const BesselRatio br = bessel_ratio_guarded(d, p.kappa);
    p.A = br.value, p.Aprime = br.derivative;
    p.lambda_tan = (p.A / r - t) / s2;
    p.lambda_rad = ((t / s2) * p.Aprime - t) / s2;
    return p;
}

/// Coefficient of Id in the drift Jacobian at the origin: t/(d sigma^4) - t/sigma^2.
inline double sphere_origin_jacobian(int d, double t) {
    require(d >= 2, ErrorCode::InvalidDimension, "sphere dimension must be >= 2");
    require(t >= 0.0 && t < 1.0, ErrorCode::OutOfDomain, "t must lie in [0,1)");
    const double s2 = 1.0 - t * t;
    return t / (d * s2 * s2) - t / s2;
}

}  // namespace flowreg
