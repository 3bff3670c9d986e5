#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "flowreg/driftfield.hpp"
#include "flowreg/error.hpp"
#include "flowreg/grids_samplers.hpp"
#include "flowreg/linalg.hpp"
#include "flowreg/parallel.hpp"
#include "flowreg/regularity_probe.hpp"
#include "flowreg/schedules.hpp"
#include "flowreg/targets.hpp"

namespace flowreg {

struct FlowMapState {
    Vec x;
    Mat J;                  // grad X_t(x0)
    double t = 0.0;
    double log_cert = 0.0;  // int_0^t lambda_max(sym grad v_s(X_s)) ds, left-point rule
};

/// Joint explicit Euler on (x, J): x <- x + h v(x), J <- (Id + h grad v(x)) J,
/// with grad v taken at the pre-update state. A grid with fewer than two nodes
/// returns the identity map.
inline FlowMapState integrate_flow(const TargetModel& target, const Schedule& schedule, const GeometricGrid& grid,
                                   const Vec& x0) {
    const auto d = x0.size();
    require(d == target.dim(), ErrorCode::InvalidDimension, "initial point dimension mismatch");
    FlowMapState s{x0, Mat::Identity(d, d), grid.nodes.empty() ? 0.0 : grid.nodes.front(), 0.0};
    if (grid.nodes.size() < 2) return s;
    for (std::size_t k = 0; k < grid.steps.size(); ++k) {
        const double h = grid.steps[k];
        const ScheduleValues sv = eval_schedule(schedule, grid.nodes[k]);
        const Vec v = velocity(target, sv, s.x);
        const Mat jac = velocity_jacobian(target, sv, s.x, JacobianMethod::Analytic);
        s.log_cert += h * lambda_max(jac);
        s.J = (Mat::Identity(d, d) + h * jac) * s.J;
        s.x += h * v;
        s.t = grid.nodes[k + 1];
        if (!s.x.allFinite() || !s.J.allFinite())
            fail(ErrorCode::NonFinite, "flow map became non-finite at t=" + std::to_string(s.t));
    }
    return s;
}

inline std::vector<FlowMapState> integrate_flows(const TargetModel& target, const Schedule& schedule,
                                                 const GeometricGrid& grid, const std::vector<Vec>& x0s,
                                                 unsigned threads = 1) {
    std::vector<FlowMapState> out(x0s.size());
    parallel_for(x0s.size(), threads, [&](std::size_t i) { out[i] = integrate_flow(target, schedule, grid, x0s[i]); });
    return out;
}

/// exp(int_z^tau lambda_bar_t dt) from the signed profile.
inline double lipschitz_certificate(const RegularityProfile& p, double z) {
    return std::exp(integral_lambda_max(p, z).signed_integral);
}

// ---------------------------------------------------------------------------
// Functional-inequality audits
// ---------------------------------------------------------------------------

struct TestFunction {
    std::string name;
    std::function<double(double)> f;
    std::function<double(double)> df;
};

inline std::vector<TestFunction> default_test_family() {
    std::vector<TestFunction> out;
    out.push_back({"x", [](double x) { return x; }, [](double) { return 1.0; }});
    out.push_back({"x^2", [](double x) { return x * x; }, [](double x) { return 2.0 * x; }});
    for (double w : {1.0, 2.0, 4.0}) {
        out.push_back({"sin(" + std::to_string(static_cast<int>(w)) + "x)", [w](double x) { return std::sin(w * x); },
                       [w](double x) { return w * std::cos(w * x); }});
    }
    out.push_back({"tanh(x)", [](double x) { return std::tanh(x); },
                   [](double x) { const double c = std::cosh(x); return 1.0 / (c * c); }});
    return out;
}

struct AuditEntry {
    std::string name;
    double lhs = 0.0;       // Var(f) or Ent(f^2)
    double grad_sq = 0.0;   // E |f'|^2
    double ratio = 0.0;
    bool passed = false;
};

struct AuditReport {
    double L = 0.0;
    double bound = 0.0;  // L^2 (Poincare) or 4 L^2 (log-Sobolev)
    std::vector<AuditEntry> entries;
    bool passed() const {
        for (const auto& e : entries)
            if (!e.passed) return false;
        return true;
    }
    double max_ratio() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.ratio);
        return m;
    }
};

namespace detail {

/// Audits act on one coordinate: quadrature targets directly, isotropic
/// Gaussians through their first marginal.
inline Density1D audit_density(const TargetModel& target) {
    if (const auto* g = std::get_if<IsotropicGaussian>(&target.variant()))
        return density_1d(TargetModel::gaussian(Vec::Constant(1, g->mean(0)), g->var));
    require(std::holds_alternative<Quadrature1D>(target.variant()), ErrorCode::UnsupportedMethod,
            "functional-inequality audits need a Gaussian or quadrature target");
    return density_1d(target);
}

inline AuditEntry finish_entry(const std::string& name, double lhs, double grad_sq, double bound) {
    AuditEntry e{name, lhs, grad_sq, 0.0, false};
    if (grad_sq <= 0.0) {
        e.ratio = 0.0;
        e.passed = std::abs(lhs) <= 1e-14;  // constant f: 0/0
    } else {
        e.ratio = lhs / grad_sq;
        e.passed = e.ratio <= bound;
    }
    return e;
}

}  // namespace detail

/// Psi-entropy E[Psi(f)] - Psi(E f) under a one-dimensional density.
inline double psi_entropy(const Density1D& p, const std::function<double(double)>& psi,
                          const std::function<double(double)>& f) {
    const double mean = expect_1d(p, f);
    return expect_1d(p, [&](double y) { return psi(f(y)); }) - psi(mean);
}

/// Var_p(f) <= L^2 E|f'|^2 for each test function.
inline AuditReport poincare_audit(const TargetModel& target, double L,
                                  const std::vector<TestFunction>& family = default_test_family()) {
    const Density1D p = detail::audit_density(target);
    AuditReport report{L, L * L, {}};
    for (const auto& tf : family) {
        const double mean = expect_1d(p, tf.f);
        const double var = expect_1d(p, [&](double y) { const double c = tf.f(y) - mean; return c * c; });
        const double grad_sq = expect_1d(p, [&](double y) { const double g = tf.df(y); return g * g; });
        report.entries.push_back(detail::finish_entry(tf.name, var, grad_sq, report.bound));
    }
    return report;
}

/// Ent_p(f^2) <= 4 L^2 E|f'|^2, the Psi(u) = u log u case applied to f^2.
inline AuditReport log_sobolev_audit(const TargetModel& target, double L,
                                     const std::vector<TestFunction>& family = default_test_family()) {
    const Density1D p = detail::audit_density(target);
    AuditReport report{L, 4.0 * L * L, {}};
    auto xlogx = [](double u) { return u > 0.0 ? u * std::log(u) : 0.0; };
    for (const auto& tf : family) {
        const double ent = psi_entropy(p, xlogx, [&](double y) { const double v = tf.f(y); return v * v; });
        const double grad_sq = expect_1d(p, [&](double y) { const double g = tf.df(y); return g * g; });
        report.entries.push_back(detail::finish_entry(tf.name, ent, grad_sq, report.bound));
    }
    return report;
}

}  // namespace flowreg
