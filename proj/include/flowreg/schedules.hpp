#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowreg/error.hpp"

namespace flowreg {

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

enum class Family { LipmanLinear, LipmanCustom, StochasticInterpolant, RescaledDiffusion };

inline std::string family_name(Family f) {
    switch (f) {
        case Family::LipmanLinear: return "lipman-linear";
        case Family::LipmanCustom: return "lipman-custom";
        case Family::StochasticInterpolant: return "stochastic-interpolant";
        case Family::RescaledDiffusion: return "diffusion";
    }
    return "unknown";
}

/// A scalar function of time with optional analytic first/second derivatives.
/// Missing derivatives fall back to finite differences.
struct ScalarFunction {
    std::function<double(double)> value;
    std::function<double(double)> d1;
    std::function<double(double)> d2;

    static ScalarFunction constant(double c) {
        return {[c](double) { return c; }, [](double) { return 0.0; }, [](double) { return 0.0; }};
    }
};

struct ScheduleParams {
    double p = 1.0;       // terminal exponent of gbar
    double t0 = 0.5;      // regime split time
    double gamma = 0.2;   // non-degeneracy level
    double delta = 0.5;   // noise-peak time (stochastic interpolant)
    double eta = 1.0;     // noise amplitude (stochastic interpolant)
    double K = 10.0;      // budget for the q-balance condition
};

/// Time schedules (f, g, sigma) of the Gaussian-mixture path
///     X_t = f_t Y + g_t X_0 + sigma_t xi,
/// whose marginals coincide with X_t = f_t Y + gbar_t xi, gbar = sqrt(g^2 + sigma^2).
class Schedule {
public:
    Schedule(Family family, ScalarFunction f, ScalarFunction g, ScalarFunction sigma, ScheduleParams params = {},
             std::string name = {})
        : family_(family),
          f_(std::move(f)),
          g_(std::move(g)),
          sigma_(std::move(sigma)),
          params_(params),
          name_(name.empty() ? family_name(family) : std::move(name)) {}

    /// f = t, sigma = 1 - t.
    static Schedule lipman_linear() {
        return Schedule(Family::LipmanLinear, identity(), ScalarFunction::constant(0.0),
                        {[](double t) { return 1.0 - t; }, [](double) { return -1.0; }, [](double) { return 0.0; }},
                        ScheduleParams{.p = 1.0});
    }

    /// f = t, sigma = (1 - t)^p.
    static Schedule lipman_custom(double p) {
        require(p > 0.0, ErrorCode::InvalidParameters, "terminal exponent must be positive");
        ScalarFunction sigma{[p](double t) { return std::pow(1.0 - t, p); },
                             [p](double t) { return -p * std::pow(1.0 - t, p - 1.0); },
                             [p](double t) { return p * (p - 1.0) * std::pow(1.0 - t, p - 2.0); }};
        return Schedule(Family::LipmanCustom, identity(), ScalarFunction::constant(0.0), std::move(sigma),
                        ScheduleParams{.p = p});
    }

    /// f = t, g = 1 - t, sigma = eta * t^delta * (1 - t)^(1 - delta); sigma peaks at t = delta.
    static Schedule stochastic_interpolant(double delta = 0.5, double eta = 1.0) {
        require(delta > 0.0 && delta < 1.0, ErrorCode::InvalidParameters, "delta must lie in (0,1)");
        require(eta > 0.0, ErrorCode::InvalidParameters, "eta must be positive");
        auto value = [delta, eta](double t) { return eta * std::pow(t, delta) * std::pow(1.0 - t, 1.0 - delta); };
        auto d1 = [delta, eta](double t) {
            return eta * (delta * std::pow(t, delta - 1.0) * std::pow(1.0 - t, 1.0 - delta) -
                          (1.0 - delta) * std::pow(t, delta) * std::pow(1.0 - t, -delta));
        };
        auto d2 = [delta, eta, value, d1](double t) {
            const double w = delta / t - (1.0 - delta) / (1.0 - t);
            const double dw = -delta / (t * t) - (1.0 - delta) / ((1.0 - t) * (1.0 - t));
            return d1(t) * w + value(t) * dw;
        };
        ScalarFunction g{[](double t) { return 1.0 - t; }, [](double) { return -1.0; }, [](double) { return 0.0; }};
        return Schedule(Family::StochasticInterpolant, identity(), std::move(g), {value, d1, d2},
                        ScheduleParams{.p = 1.0 - delta, .delta = delta, .eta = eta});
    }

    /// f = t, sigma = sqrt(1 - t^2).
    static Schedule rescaled_diffusion() {
        ScalarFunction sigma{[](double t) { return std::sqrt(1.0 - t * t); },
                             [](double t) { return -t / std::sqrt(1.0 - t * t); },
                             [](double t) { return -std::pow(1.0 - t * t, -1.5); }};
        return Schedule(Family::RescaledDiffusion, identity(), ScalarFunction::constant(0.0), std::move(sigma),
                        ScheduleParams{.p = 0.5});
    }

    /// Same values, derivatives forced through the finite-difference path.
    Schedule numeric_only() const {
        Schedule copy = *this;
        for (ScalarFunction* fn : {&copy.f_, &copy.g_, &copy.sigma_}) {
            fn->d1 = nullptr;
            fn->d2 = nullptr;
        }
        copy.name_ += "/numeric";
        return copy;
    }

    Family family() const noexcept { return family_; }
    const ScheduleParams& params() const noexcept { return params_; }
    ScheduleParams& params() noexcept { return params_; }
    const std::string& name() const noexcept { return name_; }
    const ScalarFunction& f() const noexcept { return f_; }
    const ScalarFunction& g() const noexcept { return g_; }
    const ScalarFunction& sigma() const noexcept { return sigma_; }

    double gbar(double t) const {
        const double g = g_.value(t), s = sigma_.value(t);
        return std::sqrt(g * g + s * s);
    }

private:
    static ScalarFunction identity() {
        return {[](double t) { return t; }, [](double) { return 1.0; }, [](double) { return 0.0; }};
    }

    Family family_;
    ScalarFunction f_, g_, sigma_;
    ScheduleParams params_;
    std::string name_;
};

// ---------------------------------------------------------------------------
// Tabulated schedules (natural cubic spline through user tables)
// ---------------------------------------------------------------------------

class NaturalCubicSpline {
public:
    NaturalCubicSpline(std::vector<double> xs, std::vector<double> ys) : x_(std::move(xs)), y_(std::move(ys)) {
        const std::size_t n = x_.size();
        require(n >= 3 && y_.size() == n, ErrorCode::InvalidParameters, "spline needs >= 3 matching knots");
        for (std::size_t i = 0; i + 1 < n; ++i)
            require(x_[i + 1] > x_[i], ErrorCode::InvalidParameters, "spline knots must increase");
        // Tridiagonal solve for second derivatives, natural boundary.
        m_.assign(n, 0.0);
        std::vector<double> c(n, 0.0), d(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
            const double rhs = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
            const double diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
            c[i] = h1 / diag;
            d[i] = (rhs - h0 * d[i - 1]) / diag;
        }
        for (std::size_t i = n - 2; i > 0; --i) m_[i] = d[i] - c[i] * m_[i + 1];
    }

    double operator()(double x) const {
        const std::size_t i = segment(x);
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
        return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
    }

private:
    std::size_t segment(double x) const {
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
        return std::min(i, x_.size() - 2);
    }

    std::vector<double> x_, y_, m_;
};

/// User-supplied (t, f, g, sigma) tables; derivatives come from finite differences.
inline Schedule tabulated_schedule(Family declared, const std::vector<double>& ts, const std::vector<double>& fs,
                                   const std::vector<double>& gs, const std::vector<double>& sigmas,
                                   ScheduleParams params = {}) {
    auto wrap = [&](const std::vector<double>& ys) {
        NaturalCubicSpline spline(ts, ys);
        return ScalarFunction{[spline](double t) { return spline(t); }, nullptr, nullptr};
    };
    return Schedule(declared, wrap(fs), wrap(gs), wrap(sigmas), params, family_name(declared) + "/table");
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct ScheduleValues {
    double t = 0.0;
    double f = 0.0, f1 = 0.0, f2 = 0.0;
    double g = 0.0, g1 = 0.0;
    double sigma = 0.0, sigma1 = 0.0;
    double gbar = 0.0, gbar1 = 0.0, gbar2 = 0.0;
    double a = 0.0;   // gbar'/gbar
    double c = 0.0;   // f' - a f
    double a1 = 0.0;  // d/dt a
    double c1 = 0.0;  // d/dt c
};

namespace detail {

struct Jet {
    double v, d1, d2;
};

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdBoundary = 5e-5;

// 5-point stencils; one-sided within kFdBoundary of {0, 1}.
inline Jet finite_difference(const std::function<double(double)>& fn, double t) {
    const double h = kFdStep;
    const double v = fn(t);
    if (t - kFdBoundary < 0.0) {
        const double f0 = v, f1 = fn(t + h), f2 = fn(t + 2 * h), f3 = fn(t + 3 * h), f4 = fn(t + 4 * h);
        return {v, (-25 * f0 + 48 * f1 - 36 * f2 + 16 * f3 - 3 * f4) / (12 * h),
                (35 * f0 - 104 * f1 + 114 * f2 - 56 * f3 + 11 * f4) / (12 * h * h)};
    }
    if (t + kFdBoundary > 1.0) {
        const double f0 = v, f1 = fn(t - h), f2 = fn(t - 2 * h), f3 = fn(t - 3 * h), f4 = fn(t - 4 * h);
        return {v, -(-25 * f0 + 48 * f1 - 36 * f2 + 16 * f3 - 3 * f4) / (12 * h),
                (35 * f0 - 104 * f1 + 114 * f2 - 56 * f3 + 11 * f4) / (12 * h * h)};
    }
    const double fp1 = fn(t + h), fm1 = fn(t - h), fp2 = fn(t + 2 * h), fm2 = fn(t - 2 * h);
    return {v, (-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * h), (-fp2 + 16 * fp1 - 30 * v + 16 * fm1 - fm2) / (12 * h * h)};
}

inline Jet jet(const ScalarFunction& fn, double t) {
    if (fn.d1 && fn.d2) return {fn.value(t), fn.d1(t), fn.d2(t)};
    return finite_difference(fn.value, t);
}

}  // namespace detail

/// All schedule quantities at time t. Requires gbar_t > 0.
inline ScheduleValues eval_schedule(const Schedule& s, double t) {
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::OutOfDomain, "t outside [0,1]: " + std::to_string(t));
    const double gb = s.gbar(t);
    if (!(gb > 0.0)) fail(ErrorCode::OutOfDomain, "gbar vanishes at t=" + std::to_string(t));

    const auto f = detail::jet(s.f(), t);
    const auto g = detail::jet(s.g(), t);
    const auto sg = detail::jet(s.sigma(), t);

    ScheduleValues sv;
    sv.t = t;
    sv.f = f.v, sv.f1 = f.d1, sv.f2 = f.d2;
    sv.g = g.v, sv.g1 = g.d1;
    sv.sigma = sg.v, sv.sigma1 = sg.d1;
    sv.gbar = gb;
    sv.gbar1 = (g.v * g.d1 + sg.v * sg.d1) / gb;
    sv.gbar2 = (g.d1 * g.d1 + g.v * g.d2 + sg.d1 * sg.d1 + sg.v * sg.d2 - sv.gbar1 * sv.gbar1) / gb;
    sv.a = sv.gbar1 / gb;
    sv.c = sv.f1 - sv.a * sv.f;
    sv.a1 = sv.gbar2 / gb - sv.a * sv.a;
    sv.c1 = sv.f2 - sv.a1 * sv.f - sv.a * sv.f1;

    for (double q : {sv.f, sv.f1, sv.gbar1, sv.a, sv.c})
        if (!std::isfinite(q)) fail(ErrorCode::NonFinite, "non-finite schedule derivative at t=" + std::to_string(t));
    return sv;
}

/// Schedule values of the reduced model with explicit (f, gbar); used for the
/// reversed Ornstein-Uhlenbeck marginals where only the score is needed.
inline ScheduleValues reduced_values(double f, double gbar) {
    ScheduleValues sv;
    sv.f = f;
    sv.gbar = gbar;
    sv.sigma = gbar;
    return sv;
}

// ---------------------------------------------------------------------------
// Assumption checks
// ---------------------------------------------------------------------------

struct ConditionResult {
    std::string name;
    bool passed = true;
    std::optional<double> witness;  // a t at which the condition fails
    std::string detail;
};

struct ValidationReport {
    Family family;
    std::vector<ConditionResult> conditions;
    std::optional<double> gamma_max;  // largest admissible gamma on the scan (flow-matching families)
    std::optional<double> q_min;      // smallest q passing the balance condition (stochastic interpolant)
    std::optional<double> q_constant;

    bool passed() const {
        return std::all_of(conditions.begin(), conditions.end(), [](const auto& c) { return c.passed; });
    }
    const ConditionResult* find(const std::string& name) const {
        for (const auto& c : conditions)
            if (c.name == name) return &c;
        return nullptr;
    }
};

namespace detail {

inline constexpr int kValidationPoints = 1001;
inline constexpr double kValidationTol = 1e-12;

inline std::vector<double> validation_grid() {
    std::vector<double> ts(kValidationPoints);
    for (int i = 0; i < kValidationPoints; ++i) ts[i] = (i + 1.0) / (kValidationPoints + 1.0);
    return ts;
}

inline ConditionResult endpoint(const std::string& name, const std::function<double(double)>& fn, double t,
                                double expected) {
    const double v = fn(t);
    ConditionResult r{name, std::abs(v - expected) <= kValidationTol, std::nullopt, {}};
    if (!r.passed) {
        r.witness = t;
        r.detail = "value " + std::to_string(v);
    }
    return r;
}

inline ConditionResult monotone(const std::string& name, const std::function<double(double)>& fn, bool increasing) {
    std::vector<double> ts{0.0};
    for (double t : validation_grid()) ts.push_back(t);
    ts.push_back(1.0);
    ConditionResult r{name, true, std::nullopt, {}};
    for (std::size_t i = 1; i < ts.size(); ++i) {
        const double step = fn(ts[i]) - fn(ts[i - 1]);
        if ((increasing && step < -kValidationTol) || (!increasing && step > kValidationTol)) {
            r.passed = false;
            r.witness = ts[i];
            return r;
        }
    }
    return r;
}

inline ConditionResult pointwise(const std::string& name, const std::vector<double>& ts,
                                 const std::function<bool(double)>& ok) {
    ConditionResult r{name, true, std::nullopt, {}};
    for (double t : ts) {
        if (!ok(t)) {
            r.passed = false;
            r.witness = t;
            return r;
        }
    }
    return r;
}

// Flow-matching gamma condition: gamma <= sigma_{1/2} ^ f_{1/2} and f_{1-gamma}^2 >= sigma_{1-gamma}.
inline bool gamma_admissible(const Schedule& s, double gamma) {
    const double f_half = s.f().value(0.5), s_half = s.sigma().value(0.5);
    const double f_end = s.f().value(1.0 - gamma), s_end = s.sigma().value(1.0 - gamma);
    return gamma <= std::min(f_half, s_half) && f_end * f_end >= s_end;
}

}  // namespace detail

/// Checks each bullet of the assumption matching the schedule's family on a
/// 1001-point interior grid. Failures are reported, never thrown.
inline ValidationReport validate_assumptions(const Schedule& s) {
    ValidationReport rep{s.family(), {}, std::nullopt, std::nullopt, std::nullopt};
    const auto grid = detail::validation_grid();
    auto& out = rep.conditions;
    const auto fv = s.f().value;
    const auto gv = s.g().value;
    const auto sv = s.sigma().value;

    out.push_back(detail::endpoint("f_0=0", fv, 0.0, 0.0));
    out.push_back(detail::endpoint("f_1=1", fv, 1.0, 1.0));
    out.push_back(detail::monotone("f nondecreasing", fv, true));
    out.push_back(detail::pointwise("gbar>0 on (0,1)", grid, [&](double t) { return s.gbar(t) > 0.0; }));

    auto gamma_scan = [&] {
        for (int k = 49; k >= 1; --k) {
            const double gamma = k / 100.0;
            if (detail::gamma_admissible(s, gamma)) {
                rep.gamma_max = gamma;
                break;
            }
        }
        ConditionResult r{"gamma condition", rep.gamma_max.has_value(), std::nullopt, {}};
        if (rep.gamma_max) {
            r.detail = "largest gamma " + std::to_string(*rep.gamma_max);
        } else {
            r.witness = 0.5;
            r.detail = "no gamma in {0.01..0.49} admissible";
        }
        out.push_back(r);
        const double declared = s.params().gamma;
        ConditionResult d{"gamma condition at declared gamma", detail::gamma_admissible(s, declared), std::nullopt,
                          "gamma " + std::to_string(declared)};
        if (!d.passed) d.witness = 1.0 - declared;
        out.push_back(d);
    };

    switch (s.family()) {
        case Family::LipmanLinear:
        case Family::LipmanCustom: {
            out.push_back(detail::pointwise("g=0", grid, [&](double t) { return gv(t) == 0.0; }));
            out.push_back(detail::endpoint("sigma_0=1", sv, 0.0, 1.0));
            out.push_back(detail::endpoint("sigma_1=0", sv, 1.0, 0.0));
            out.push_back(detail::monotone("sigma nonincreasing", sv, false));
            gamma_scan();
            break;
        }
        case Family::RescaledDiffusion: {
            out.push_back(detail::pointwise("g=0", grid, [&](double t) { return gv(t) == 0.0; }));
            out.push_back(detail::pointwise("f_t=t", grid, [&](double t) { return fv(t) == t; }));
            out.push_back(detail::pointwise("sigma_t=sqrt(1-t^2)", grid, [&](double t) {
                return std::abs(sv(t) - std::sqrt(1.0 - t * t)) <= detail::kValidationTol;
            }));
            out.push_back(detail::endpoint("sigma_0=1", sv, 0.0, 1.0));
            out.push_back(detail::endpoint("sigma_1=0", sv, 1.0, 0.0));
            gamma_scan();
            break;
        }
        case Family::StochasticInterpolant: {
            const double delta = s.params().delta, gamma = s.params().gamma;
            out.push_back(detail::endpoint("g_0=1", gv, 0.0, 1.0));
            out.push_back(detail::endpoint("g_1=0", gv, 1.0, 0.0));
            out.push_back(detail::monotone("g nonincreasing", gv, false));
            out.push_back(detail::endpoint("sigma_0=0", sv, 0.0, 0.0));
            out.push_back(detail::endpoint("sigma_1=0", sv, 1.0, 0.0));
            out.push_back(detail::pointwise("sigma' sign change at delta", grid, [&](double t) {
                if (std::abs(t - delta) < 1e-9) return true;
                const double d = detail::jet(s.sigma(), t).d1;
                return t < delta ? d > 0.0 : d < 0.0;
            }));

            // Smallest q in {0, 0.05, ..., 1} with both balance constants within the budget K.
            const double budget = s.params().K;
            for (int k = 0; k <= 20; ++k) {
                const double q = k / 20.0;
                double sup_ratio = 0.0, integral = 0.0;
                double prev_t = 0.0, prev_val = 0.0;
                bool first = true;
                for (double t : grid) {
                    const auto f = detail::jet(s.f(), t), g = detail::jet(s.g(), t);
                    const double sig = sv(t);
                    sup_ratio = std::max(sup_ratio, std::abs(g.d1 * f.v - f.d1 * g.v) / std::pow(sig, q));
                    const double val = std::pow(sig, q - 1.0);
                    if (!first) integral += 0.5 * (val + prev_val) * (t - prev_t);
                    prev_t = t, prev_val = val, first = false;
                }
                const double constant = std::max(sup_ratio, integral);
                if (std::isfinite(constant) && constant <= budget) {
                    rep.q_min = q;
                    rep.q_constant = constant;
                    break;
                }
            }
            ConditionResult qb{"q-balance", rep.q_min.has_value(), std::nullopt, {}};
            if (rep.q_min)
                qb.detail = "q=" + std::to_string(*rep.q_min) + " K=" + std::to_string(*rep.q_constant);
            else
                qb.detail = "no q in [0,1] within budget K=" + std::to_string(budget);
            out.push_back(qb);

            out.push_back(detail::pointwise("g+f>=gamma", grid, [&](double t) { return gv(t) + fv(t) >= gamma; }));
            out.push_back(detail::pointwise("g>=gamma on (0,delta)", grid,
                                            [&](double t) { return t >= delta || gv(t) >= gamma; }));
            break;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Terminal exponent
// ---------------------------------------------------------------------------

struct TerminalExponent {
    double p_hat = 0.0;
    double ell_min = 0.0, ell_max = 0.0;
};

/// Least-squares slope of log gbar_t against log(1 - t) over `points` window samples.
inline TerminalExponent terminal_exponent(const Schedule& s, double t_lo, double t_hi, int points = 200) {
    require(0.0 < t_lo && t_lo < t_hi && t_hi < 1.0, ErrorCode::InvalidParameters, "window must satisfy 0<lo<hi<1");
    require(points >= 10, ErrorCode::DegenerateFit, "window shorter than 10 points");
    std::vector<double> xs(points), ys(points), ts(points);
    for (int i = 0; i < points; ++i) {
        ts[i] = t_lo + (t_hi - t_lo) * i / (points - 1.0);
        const double gb = s.gbar(ts[i]);
        require(gb > 0.0, ErrorCode::OutOfDomain, "gbar vanishes inside the fit window");
        xs[i] = std::log1p(-ts[i]);
        ys[i] = std::log(gb);
    }
    double mx = 0, my = 0;
    for (int i = 0; i < points; ++i) mx += xs[i], my += ys[i];
    mx /= points, my /= points;
    double sxx = 0, sxy = 0;
    for (int i = 0; i < points; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    require(sxx > 0.0, ErrorCode::DegenerateFit, "degenerate abscissae");
    TerminalExponent out;
    out.p_hat = sxy / sxx;
    out.ell_min = INFINITY, out.ell_max = -INFINITY;
    for (int i = 0; i < points; ++i) {
        const double ell = std::exp(ys[i] - out.p_hat * xs[i]);
        out.ell_min = std::min(out.ell_min, ell);
        out.ell_max = std::max(out.ell_max, ell);
    }
    return out;
}

}  // namespace flowreg
