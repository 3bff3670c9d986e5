#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowreg/error.hpp"
#include "flowreg/linalg.hpp"
#include "flowreg/parallel.hpp"
#include "flowreg/quadrature.hpp"
#include "flowreg/schedules.hpp"
#include "flowreg/targets.hpp"

namespace flowreg {

// ---------------------------------------------------------------------------
// Geometric grid
// ---------------------------------------------------------------------------

/// Nodes t_k = T (1 - r^k), r = ((T - tau)/T)^(1/N); every step is a fixed
/// fraction (1 - r) of the remaining time T - t_k.
struct GeometricGrid {
    double tau = 0.0;
    double T = 1.0;
    int N = 0;
    double r = 0.0;
    double h_max = 0.0;
    std::vector<double> nodes;
    std::vector<double> steps;
};

inline GeometricGrid build_geometric_grid(double tau, double T, int N) {
    require(T > 0.0 && tau > 0.0 && tau < T, ErrorCode::InvalidParameters, "need 0 < tau < T");
    require(N >= 1, ErrorCode::InvalidParameters, "need N >= 1");
    GeometricGrid g;
    g.tau = tau, g.T = T, g.N = N;
    g.r = std::pow((T - tau) / T, 1.0 / N);
    g.h_max = T * (1.0 - g.r);
    g.nodes.resize(N + 1);
    for (int k = 0; k <= N; ++k) g.nodes[k] = T * (1.0 - std::pow(g.r, k));
    g.nodes[0] = 0.0;
    g.steps.resize(N);
    for (int k = 0; k < N; ++k) g.steps[k] = g.nodes[k + 1] - g.nodes[k];
    return g;
}

enum class SamplerKind { Flow, Diffusion };

struct StopTimes {
    double tau = 0.0;
    double T = 1.0;
};

/// Early-stopping rule. Flow: tau = 1 - (log^2 N / N)^(1/min(p,1)), T = 1.
/// Diffusion: T = log N, tau = T - 1/N^2.
inline StopTimes select_tau(SamplerKind kind, int N, double p = 1.0) {
    require(N >= 3, ErrorCode::NTooSmall, "N must be >= 3");
    if (kind == SamplerKind::Diffusion) {
        const double T = std::log(static_cast<double>(N));
        return {T - 1.0 / (static_cast<double>(N) * N), T};
    }
    require(p > 0.0, ErrorCode::InvalidParameters, "terminal exponent must be positive");
    const double q = std::min(p, 1.0);
    const double ln = std::log(static_cast<double>(N));
    return {1.0 - std::pow(ln * ln / N, 1.0 / q), 1.0};
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

using Drift = std::function<Vec(double, const Vec&)>;

struct SamplerResult {
    std::vector<Vec> particles;
    std::vector<double> max_drift_norm;  // per step, over particles
};

namespace detail {

inline void check_finite(const Vec& x, int step) {
    if (!x.allFinite()) fail(ErrorCode::NonFinite, "state became non-finite at step " + std::to_string(step));
}

}  // namespace detail

/// Explicit Euler X_{k+1} = X_k + h_k v_{t_k}(X_k).
template <class DriftFn>
SamplerResult euler_ode(DriftFn&& drift, const GeometricGrid& grid, std::vector<Vec> particles, unsigned threads = 1) {
    SamplerResult out;
    out.max_drift_norm.assign(grid.steps.size(), 0.0);
    std::vector<std::vector<double>> norms(particles.size(), std::vector<double>(grid.steps.size(), 0.0));
    parallel_for(particles.size(), threads, [&](std::size_t i) {
        Vec& x = particles[i];
        for (std::size_t k = 0; k < grid.steps.size(); ++k) {
            const Vec v = drift(grid.nodes[k], x);
            norms[i][k] = v.norm();
            x += grid.steps[k] * v;
            detail::check_finite(x, static_cast<int>(k));
        }
    });
    for (const auto& row : norms)
        for (std::size_t k = 0; k < row.size(); ++k) out.max_drift_norm[k] = std::max(out.max_drift_norm[k], row[k]);
    out.particles = std::move(particles);
    return out;
}

/// Diffusion amplitude b_t; `constant` enables the closed-form increment variance.
struct DiffusionAmplitude {
    std::function<double(double)> b;
    std::optional<double> constant;

    static DiffusionAmplitude fixed(double value) {
        return {[value](double) { return value; }, value};
    }
};

/// Per-step increment variances v_k = int_{t_k}^{t_{k+1}} b_t^2 dt.
inline std::vector<double> increment_variances(const DiffusionAmplitude& amp, const GeometricGrid& grid) {
    std::vector<double> v(grid.steps.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (amp.constant) {
            v[k] = (*amp.constant) * (*amp.constant) * grid.steps[k];
        } else {
            v[k] = integrate_scalar([&](double t) { const double b = amp.b(t); return b * b; }, grid.nodes[k],
                                    grid.nodes[k + 1], {}, QuadratureOptions{1e-12, 2000});
        }
    }
    return v;
}

/// Euler-Maruyama with exact Gaussian increments xi_{k+1} ~ N(0, v_k Id).
/// Particle i draws from its own stream derive_seed(seed, i), so results do not
/// depend on the thread count.
template <class DriftFn>
SamplerResult euler_maruyama_exact(DriftFn&& drift, const DiffusionAmplitude& amp, const GeometricGrid& grid,
                                   std::vector<Vec> particles, std::uint64_t seed, unsigned threads = 1) {
    const std::vector<double> var = increment_variances(amp, grid);
    SamplerResult out;
    out.max_drift_norm.assign(grid.steps.size(), 0.0);
    std::vector<std::vector<double>> norms(particles.size(), std::vector<double>(grid.steps.size(), 0.0));
    parallel_for(particles.size(), threads, [&](std::size_t i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec& x = particles[i];
        for (std::size_t k = 0; k < grid.steps.size(); ++k) {
            const Vec v = drift(grid.nodes[k], x);
            norms[i][k] = v.norm();
            const double sd = std::sqrt(var[k]);
            Vec noise(x.size());
            for (Eigen::Index j = 0; j < x.size(); ++j) noise(j) = normal(rng);
            x += grid.steps[k] * v + sd * noise;
            detail::check_finite(x, static_cast<int>(k));
        }
    });
    for (const auto& row : norms)
        for (std::size_t k = 0; k < row.size(); ++k) out.max_drift_norm[k] = std::max(out.max_drift_norm[k], row[k]);
    out.particles = std::move(particles);
    return out;
}

// ---------------------------------------------------------------------------
// Exact laws for linear drifts
// ---------------------------------------------------------------------------

/// N(mean, var * Id).
struct GaussianLaw {
    Vec mean;
    double var = 0.0;
};

/// Law of the Euler iterates for v_t(x) = k_t x:
///     mean <- (1 + h_k k_k) mean,  var <- (1 + h_k k_k)^2 var + v_k.
/// `slopes[k]` is k at node t_k; `noise_var` may be empty (ODE).
inline GaussianLaw propagate_affine_law(const std::vector<double>& slopes, const GeometricGrid& grid, GaussianLaw law,
                                        const std::vector<double>& noise_var = {}) {
    require(slopes.size() == grid.steps.size(), ErrorCode::LengthMismatch, "one slope per step required");
    require(noise_var.empty() || noise_var.size() == grid.steps.size(), ErrorCode::LengthMismatch,
            "one noise variance per step required");
    for (std::size_t k = 0; k < grid.steps.size(); ++k) {
        const double m = 1.0 + grid.steps[k] * slopes[k];
        law.mean *= m;
        law.var = m * m * law.var + (noise_var.empty() ? 0.0 : noise_var[k]);
    }
    return law;
}

/// Steps where |1 + h_k lambda_k| exceeds 1 + 10 h_max. Logged, never fatal.
inline std::vector<int> stability_violations(const std::vector<double>& slopes, const GeometricGrid& grid) {
    std::vector<int> out;
    const double limit = 1.0 + 10.0 * grid.h_max;
    for (std::size_t k = 0; k < grid.steps.size() && k < slopes.size(); ++k)
        if (std::abs(1.0 + grid.steps[k] * slopes[k]) > limit) out.push_back(static_cast<int>(k));
    return out;
}

/// Coupling bound sqrt((1 - f_tau)^2 E|Y|^2 + d gbar_tau^2) on W2(Law(Y), Law(X_tau)).
inline double early_stopping_bound(double second_moment_value, const ScheduleValues& sv, int d) {
    const double one_minus_f = 1.0 - sv.f;
    return std::sqrt(one_minus_f * one_minus_f * second_moment_value + d * sv.gbar * sv.gbar);
}

inline double early_stopping_bound(const TargetModel& target, const ScheduleValues& sv) {
    return early_stopping_bound(second_moment(target).value, sv, target.dim());
}

}  // namespace flowreg
