#pragma once

#include <cmath>
#include <string>

#include "flowreg/error.hpp"
#include "flowreg/linalg.hpp"
#include "flowreg/schedules.hpp"
#include "flowreg/targets.hpp"

namespace flowreg {

enum class JacobianMethod { Analytic, CovarianceIdentity, FiniteDiff };
enum class TimeDerivativeMethod { Decomposition, FiniteDiff };

struct DriftEvaluation {
    Vec v;
    Mat jac;
    Vec dtv;
    double lambda_max = 0.0;
};

/// Below this f the score form divides by ~0 and the posterior-mean form is used.
inline constexpr double kScoreFormThreshold = 1e-8;

/// v_t(x). Score form (f'/f) x + (f' gbar^2/f - gbar gbar') s_t(x) when f_t > 1e-8,
/// otherwise a_t x + c_t mu_t(x).
inline Vec velocity(const TargetModel& target, const ScheduleValues& sv, const Vec& x) {
    require(sv.gbar > 0.0, ErrorCode::OutOfDomain, "gbar_t = 0");
    const PosteriorMoments m = posterior_moments(target, sv, x);
    if (sv.f > kScoreFormThreshold) {
        const double gb2 = sv.gbar * sv.gbar;
        return (sv.f1 / sv.f) * x + (sv.f1 * gb2 / sv.f - sv.gbar * sv.gbar1) * m.score;
    }
    return sv.a * x + sv.c * m.mu;
}

/// Posterior-mean form a_t x + c_t mu_t(x), valid for every f_t.
inline Vec velocity_mean_form(const TargetModel& target, const ScheduleValues& sv, const Vec& x) {
    require(sv.gbar > 0.0, ErrorCode::OutOfDomain, "gbar_t = 0");
    return sv.a * x + sv.c * posterior_moments(target, sv, x).mu;
}

namespace detail {

inline constexpr double kJacobianStep = 1e-5;

inline Mat velocity_jacobian_fd(const TargetModel& target, const ScheduleValues& sv, const Vec& x) {
    const auto n = x.size();
    const double h = kJacobianStep;
    Mat jac(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Vec xp1 = x, xm1 = x, xp2 = x, xm2 = x;
        xp1(j) += h, xm1(j) -= h, xp2(j) += 2 * h, xm2(j) -= 2 * h;
        jac.col(j) = (-velocity(target, sv, xp2) + 8.0 * velocity(target, sv, xp1) - 8.0 * velocity(target, sv, xm1) +
                      velocity(target, sv, xm2)) /
                     (12.0 * h);
    }
    return jac;
}

}  // namespace detail

/// grad v_t(x).
///  - Analytic: a Id + c grad mu, with grad mu differentiated in closed form.
///  - CovarianceIdentity: reduced-model covariance formula with m_t(y) = f_t y,
///        (gbar'/gbar) Id - (gbar'/gbar^3) Var[f Y | x] + (1/gbar^2) Cov[f' Y, f Y | x].
///  - FiniteDiff: 5-point stencil, step 1e-5.
inline Mat velocity_jacobian(const TargetModel& target, const ScheduleValues& sv, const Vec& x,
                             JacobianMethod method = JacobianMethod::Analytic) {
    require(sv.gbar > 0.0, ErrorCode::OutOfDomain, "gbar_t = 0");
    const auto n = x.size();
    switch (method) {
        case JacobianMethod::Analytic:
            return sv.a * Mat::Identity(n, n) + sv.c * posterior_mean_jacobian(target, sv, x);
        case JacobianMethod::CovarianceIdentity: {
            if (target.is_sphere() && x.norm() != 0.0)
                fail(ErrorCode::UnsupportedMethod, "covariance identity off the sphere's symmetry point");
            const Mat cov = posterior_moments(target, sv, x).cov;
            const double gb = sv.gbar, gb2 = gb * gb;
            return (sv.gbar1 / gb) * Mat::Identity(n, n) - (sv.gbar1 / (gb2 * gb)) * (sv.f * sv.f) * cov +
                   (sv.f1 * sv.f / gb2) * cov;
        }
        case JacobianMethod::FiniteDiff:
            return detail::velocity_jacobian_fd(target, sv, x);
    }
    fail(ErrorCode::UnsupportedMethod, "unknown Jacobian method");
}

/// Interior window where the finite-difference time derivative is allowed.
inline constexpr double kTimeFdMargin = 1e-4;
inline constexpr double kTimeFdStep = 1e-5;

/// d/dt v_t(x).
///  - Decomposition: a_t' x + c_t' mu_t(x) + c_t d/dt mu_t(x) with
///        d/dt mu_t(x) = ((f' - 2 a f)/gbar^2) Sigma_t(x) x - c_t grad r_t(x),
///        grad r_t(x) = (f/gbar^2) Cov(Y, |Y|^2 | x).
///  - FiniteDiff: central 5-point stencil in t (step 1e-5), only inside (1e-4, 1 - 1e-4).
inline Vec velocity_time_derivative(const TargetModel& target, const Schedule& schedule, double t, const Vec& x,
                                    TimeDerivativeMethod method = TimeDerivativeMethod::Decomposition) {
    if (method == TimeDerivativeMethod::FiniteDiff) {
        require(t > kTimeFdMargin && t < 1.0 - kTimeFdMargin, ErrorCode::OutOfDomain,
                "finite-difference time derivative needs t inside (1e-4, 1-1e-4)");
        const double h = kTimeFdStep;
        auto v = [&](double s) { return velocity_mean_form(target, eval_schedule(schedule, s), x); };
        return (-v(t + 2 * h) + 8.0 * v(t + h) - 8.0 * v(t - h) + v(t - 2 * h)) / (12.0 * h);
    }
    const ScheduleValues sv = eval_schedule(schedule, t);
    if (!std::isfinite(sv.a1) || !std::isfinite(sv.c1))
        fail(ErrorCode::SecondDerivativeUnavailable, "schedule not twice differentiable at t=" + std::to_string(t));
    const PosteriorMoments m = posterior_moments(target, sv, x);
    const double gb2 = sv.gbar * sv.gbar;
    const Vec grad_r = (sv.f / gb2) * m.cov_y_ysq;
    const Vec dt_mu = ((sv.f1 - 2.0 * sv.a * sv.f) / gb2) * (m.cov * x) - sv.c * grad_r;
    return sv.a1 * x + sv.c1 * m.mu + sv.c * dt_mu;
}

/// Everything at one (t, x): velocity, analytic Jacobian, decomposed time
/// derivative and the top eigenvalue of the symmetrized Jacobian.
inline DriftEvaluation evaluate_drift(const TargetModel& target, const Schedule& schedule, double t, const Vec& x) {
    const ScheduleValues sv = eval_schedule(schedule, t);
    DriftEvaluation out;
    out.v = velocity(target, sv, x);
    out.jac = velocity_jacobian(target, sv, x, JacobianMethod::Analytic);
    out.dtv = velocity_time_derivative(target, schedule, t, x, TimeDerivativeMethod::Decomposition);
    out.lambda_max = lambda_max(out.jac);
    return out;
}

// ---------------------------------------------------------------------------
// Reverse-time diffusion
// ---------------------------------------------------------------------------

/// Reverse Ornstein-Uhlenbeck time change on [0, T]: the marginal at time t is
/// q_{T-t} = Law(theta Y + sqrt(1 - theta^2) xi) with theta(t) = exp(-(T - t)).
struct ReverseOU {
    double T = 1.0;
    double theta(double t) const { return std::exp(-(T - t)); }
};

/// x + 2 s(x) with s the score of Law(theta Y + sqrt(1 - theta^2) xi).
inline Vec reverse_sde_drift(const TargetModel& target, double theta, const Vec& x) {
    require(theta > 0.0 && theta <= 1.0, ErrorCode::OutOfDomain, "theta must lie in (0,1]");
    const double noise = std::sqrt(std::max(0.0, 1.0 - theta * theta));
    return x + 2.0 * marginal_score(target, theta, noise, x);
}

/// Slope k with reverse_sde_drift(x) = k x, for centred isotropic Gaussian targets.
inline double reverse_sde_slope_gaussian(double var, double theta) {
    return 1.0 - 2.0 / (theta * theta * var + 1.0 - theta * theta);
}

/// Slope k_t with v_t(x) = k_t x for a centred isotropic Gaussian target of variance var.
inline double velocity_slope_gaussian(const ScheduleValues& sv, double var) {
    return sv.a + sv.c * sv.f * var / (sv.f * sv.f * var + sv.gbar * sv.gbar);
}

}  // namespace flowreg
