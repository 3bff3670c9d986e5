#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "flowreg/driftfield.hpp"
#include "flowreg/error.hpp"
#include "flowreg/grids_samplers.hpp"
#include "flowreg/linalg.hpp"
#include "flowreg/parallel.hpp"
#include "flowreg/schedules.hpp"
#include "flowreg/targets.hpp"

namespace flowreg {

/// Full lattice on [-radius, radius]^d when count^d <= 4096, otherwise the
/// count points on every coordinate axis plus the main diagonal.
struct LatticeBox {
    double radius = 3.0;
    int count = 5;
};

/// n draws of X_t = f_t Y + gbar_t xi, resampled at every probe time.
struct TargetSamples {
    std::size_t n = 256;
    std::uint64_t seed = 0;
};

/// count points on the first coordinate axis in [-radius, radius].
struct Axis1D {
    int count = 201;
    double radius = 6.0;
};

using ProbeSpec = std::variant<LatticeBox, TargetSamples, Axis1D>;

inline std::string describe(const ProbeSpec& spec) {
    return std::visit(
        [](const auto& p) -> std::string {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LatticeBox>)
                return "lattice:" + std::to_string(p.radius) + ":" + std::to_string(p.count);
            else if constexpr (std::is_same_v<T, TargetSamples>)
                return "samples:" + std::to_string(p.n);
            else
                return "axis:" + std::to_string(p.count) + ":" + std::to_string(p.radius);
        },
        spec);
}

/// Same probe family with twice the points (for probe-doubling audits).
inline ProbeSpec doubled(const ProbeSpec& spec) {
    return std::visit(
        [](auto p) -> ProbeSpec {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, TargetSamples>) p.n *= 2;
            else p.count = 2 * p.count - 1;  // keeps the old points
            return p;
        },
        spec);
}

inline std::vector<Vec> probe_points(const TargetModel& target, const ScheduleValues& sv, const ProbeSpec& spec,
                                     std::uint64_t stream) {
    const int d = target.dim();
    std::vector<Vec> pts;
    auto axis_value = [](double radius, int count, int i) {
        return count == 1 ? 0.0 : -radius + 2.0 * radius * i / (count - 1.0);
    };
    if (const auto* ax = std::get_if<Axis1D>(&spec)) {
        for (int i = 0; i < ax->count; ++i) {
            Vec x = Vec::Zero(d);
            x(0) = axis_value(ax->radius, ax->count, i);
            pts.push_back(std::move(x));
        }
    } else if (const auto* box = std::get_if<LatticeBox>(&spec)) {
        const double total = std::pow(static_cast<double>(box->count), d);
        if (total <= 4096.0) {
            const int n = static_cast<int>(total);
            for (int idx = 0; idx < n; ++idx) {
                Vec x(d);
                int rem = idx;
                for (int j = 0; j < d; ++j) {
                    x(j) = axis_value(box->radius, box->count, rem % box->count);
                    rem /= box->count;
                }
                pts.push_back(std::move(x));
            }
        } else {
            for (int j = 0; j < d; ++j)
                for (int i = 0; i < box->count; ++i) {
                    Vec x = Vec::Zero(d);
                    x(j) = axis_value(box->radius, box->count, i);
                    pts.push_back(std::move(x));
                }
            for (int i = 0; i < box->count; ++i)
                pts.push_back(Vec::Constant(d, axis_value(box->radius, box->count, i) / std::sqrt(double(d))));
        }
    } else {
        const auto& ts = std::get<TargetSamples>(spec);
        const std::uint64_t sub = derive_seed(ts.seed, stream);
        const std::vector<Vec> ys = sample(target, ts.n, sub);
        std::mt19937_64 rng(derive_seed(sub, 1));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (const Vec& y : ys) {
            Vec x = sv.f * y;
            for (int j = 0; j < d; ++j) x(j) += sv.gbar * normal(rng);
            pts.push_back(std::move(x));
        }
    }
    return pts;
}

struct RegularityProfile {
    std::vector<double> times;
    std::vector<double> lambda_max;  // sup over probes of lambda_max(sym grad v_t)
    std::vector<double> op_norm;     // sup over probes of |grad v_t|_op
    std::vector<double> time_slope;  // sup over probes of |d_t v_t(x)| / (sqrt d + |x|)
    ProbeSpec probes;
    int dim = 1;
};

/// Geometric time grid on [0, tau] refined toward t = 1.
inline std::vector<double> profile_time_grid(double tau, int N) { return build_geometric_grid(tau, 1.0, N).nodes; }

/// Suprema of the three regularity quantities over the probe set at every time.
inline RegularityProfile profile(const TargetModel& target, const Schedule& schedule, const std::vector<double>& times,
                                 const ProbeSpec& probes, unsigned threads = 1) {
    RegularityProfile out;
    out.times = times;
    out.probes = probes;
    out.dim = target.dim();
    const std::size_t n = times.size();
    out.lambda_max.assign(n, -INFINITY);
    out.op_norm.assign(n, 0.0);
    out.time_slope.assign(n, 0.0);
    const double sqrt_d = std::sqrt(static_cast<double>(out.dim));
    parallel_for(n, threads, [&](std::size_t k) {
        const double t = times[k];
        const ScheduleValues sv = eval_schedule(schedule, t);
        for (const Vec& x : probe_points(target, sv, probes, k)) {
            const Mat jac = velocity_jacobian(target, sv, x, JacobianMethod::Analytic);
            const Vec dtv = velocity_time_derivative(target, schedule, t, x, TimeDerivativeMethod::Decomposition);
            out.lambda_max[k] = std::max(out.lambda_max[k], lambda_max(jac));
            out.op_norm[k] = std::max(out.op_norm[k], op_norm(jac));
            out.time_slope[k] = std::max(out.time_slope[k], dtv.norm() / (sqrt_d + x.norm()));
        }
        if (!std::isfinite(out.lambda_max[k]) || !std::isfinite(out.op_norm[k]) || !std::isfinite(out.time_slope[k]))
            fail(ErrorCode::NonFinite, "non-finite regularity profile at t=" + std::to_string(t));
    });
    return out;
}

struct LambdaIntegral {
    double signed_integral = 0.0;    // int lambda
    double positive_integral = 0.0;  // int max(lambda, 0)
};

/// Trapezoidal integral of the lambda_max profile from z to the last profile time.
inline LambdaIntegral integral_lambda_max(const RegularityProfile& p, double z) {
    const auto& ts = p.times;
    require(ts.size() >= 2, ErrorCode::InvalidParameters, "profile needs at least two times");
    require(z >= ts.front() && z <= ts.back(), ErrorCode::OutOfDomain, "z outside the profile time range");
    LambdaIntegral out;
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        double a = ts[k], b = ts[k + 1];
        if (b <= z) continue;
        double la = p.lambda_max[k];
        const double lb = p.lambda_max[k + 1];
        if (a < z) {
            la += (lb - la) * (z - a) / (b - a);
            a = z;
        }
        out.signed_integral += 0.5 * (la + lb) * (b - a);
        out.positive_integral += 0.5 * (std::max(la, 0.0) + std::max(lb, 0.0)) * (b - a);
    }
    return out;
}

struct ExponentFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares of log(y) on log(x).
inline ExponentFit loglog_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    require(xs.size() == ys.size(), ErrorCode::LengthMismatch, "fit inputs differ in length");
    require(xs.size() >= 2, ErrorCode::DegenerateFit, "need at least two points");
    const std::size_t n = xs.size();
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        require(xs[i] > 0.0 && ys[i] > 0.0, ErrorCode::DegenerateFit, "log-log fit needs positive values");
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) mx += lx[i], my += ly[i];
    mx /= n, my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    require(sxx > 0.0, ErrorCode::DegenerateFit, "degenerate abscissae");
    ExponentFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

/// Blow-up exponent: regression of log(value) on log(1/(1 - t)) over t in [t_lo, t_hi].
inline ExponentFit exponent_fit(const std::vector<double>& times, const std::vector<double>& values, double t_lo,
                                double t_hi) {
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < t_lo || times[k] > t_hi) continue;
        xs.push_back(1.0 / (1.0 - times[k]));
        ys.push_back(values[k]);
    }
    return loglog_fit(xs, ys);
}

/// max over profile times t >= t_from of values(t) * (1 - t)^power.
inline double envelope(const std::vector<double>& times, const std::vector<double>& values, double t_from,
                       double power) {
    double out = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k)
        if (times[k] >= t_from) out = std::max(out, values[k] * std::pow(1.0 - times[k], power));
    return out;
}

}  // namespace flowreg
