#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "flowreg/bessel_sphere.hpp"
#include "flowreg/error.hpp"
#include "flowreg/linalg.hpp"
#include "flowreg/quadrature.hpp"
#include "flowreg/schedules.hpp"

namespace flowreg {

// ---------------------------------------------------------------------------
// Target variants
// ---------------------------------------------------------------------------

struct IsotropicGaussian {
    Vec mean;
    double var = 1.0;
};

/// One-dimensional mixture of N(means[i], comp_var); comp_var = 0 gives Dirac atoms.
struct GaussianMixture1D {
    std::vector<double> weights;
    std::vector<double> means;
    double comp_var = 0.0;
};

/// Strongly convex part u of a weakly log-concave density exp(-u + a).
struct Potential {
    std::string name;
    double alpha = 1.0;   // curvature lower bound
    double center = 0.0;  // argmin u
    std::function<double(double)> u;

    static Potential quadratic(double alpha, double center = 0.0) {
        return {"quadratic", alpha, center, [alpha, center](double y) { return 0.5 * alpha * (y - center) * (y - center); }};
    }
    static Potential quartic(double alpha) {
        return {"quartic", alpha, 0.0, [alpha](double y) { return 0.5 * alpha * y * y + 0.25 * y * y * y * y; }};
    }
};

/// Hoelder perturbation a with declared |a(x) - a(y)| <= K |x - y|^beta.
struct Perturbation {
    std::string name = "zero";
    double K = 0.0;
    double beta = 1.0;
    std::function<double(double)> fn = [](double) { return 0.0; };
    std::vector<double> kinks;  // points where a is not smooth

    static Perturbation zero() { return {}; }
    static Perturbation abs_sqrt(double K) {
        return {"abs_sqrt", K, 0.5, [K](double y) { return K * std::sqrt(std::abs(y)); }, {0.0}};
    }
    static Perturbation cosine(double K, double omega) {
        return {"cos", K * std::abs(omega), 1.0, [K, omega](double y) { return K * std::cos(omega * y); }, {}};
    }
};

/// p*(y) proportional to exp(-u(y) + a(y)) on [lo, hi]; moments by adaptive quadrature.
struct Quadrature1D {
    Potential u;
    Perturbation a;
    double lo = -16.0, hi = 16.0;
};

struct SphereUniform {
    int dim = 3;
};

class TargetModel {
public:
    using Variant = std::variant<IsotropicGaussian, GaussianMixture1D, Quadrature1D, SphereUniform>;

    static TargetModel gaussian(Vec mean, double var) {
        require(var > 0.0, ErrorCode::InvalidParameters, "Gaussian variance must be positive");
        require(mean.size() >= 1, ErrorCode::InvalidDimension, "dimension must be >= 1");
        return TargetModel(IsotropicGaussian{std::move(mean), var});
    }
    static TargetModel gaussian(int dim, double std_dev) { return gaussian(Vec::Zero(dim), std_dev * std_dev); }

    static TargetModel mixture(std::vector<double> weights, std::vector<double> means, double comp_var) {
        require(!weights.empty() && weights.size() == means.size(), ErrorCode::InvalidParameters,
                "mixture weights/means size mismatch");
        require(comp_var >= 0.0, ErrorCode::InvalidParameters, "component variance must be >= 0");
        double total = 0.0;
        for (double w : weights) {
            require(w >= 0.0, ErrorCode::InvalidParameters, "mixture weights must be nonnegative");
            total += w;
        }
        require(std::abs(total - 1.0) <= 1e-12, ErrorCode::InvalidParameters, "mixture weights must sum to 1");
        return TargetModel(GaussianMixture1D{std::move(weights), std::move(means), comp_var});
    }

    static TargetModel quadrature(Potential u, Perturbation a, double lo, double hi) {
        require(u.alpha > 0.0, ErrorCode::InvalidParameters, "curvature alpha must be positive");
        require(a.K >= 0.0, ErrorCode::InvalidParameters, "Hoelder constant must be >= 0");
        require(a.beta > 0.0 && a.beta <= 1.0, ErrorCode::InvalidParameters, "Hoelder exponent must lie in (0,1]");
        require(lo < hi && std::isfinite(lo) && std::isfinite(hi), ErrorCode::InvalidParameters,
                "support must be a nonempty finite interval");
        return TargetModel(Quadrature1D{std::move(u), std::move(a), lo, hi});
    }

    /// The beta = 1/2 reference: u = y^2/2, a = K sqrt|y|.
    static TargetModel holder_reference(double K = 1.0) {
        return quadrature(Potential::quadratic(1.0), Perturbation::abs_sqrt(K), -16.0, 16.0);
    }

    static TargetModel sphere(int dim) {
        require(dim >= 2, ErrorCode::InvalidDimension, "sphere dimension must be >= 2");
        return TargetModel(SphereUniform{dim});
    }

    const Variant& variant() const noexcept { return v_; }

    int dim() const {
        return std::visit(
            [](const auto& t) -> int {
                using T = std::decay_t<decltype(t)>;
                if constexpr (std::is_same_v<T, IsotropicGaussian>) return static_cast<int>(t.mean.size());
                else if constexpr (std::is_same_v<T, SphereUniform>) return t.dim;
                else return 1;
            },
            v_);
    }

    /// Dirac mixtures violate the convex-support assumption; they are stress cases.
    bool is_dirac_mixture() const {
        const auto* m = std::get_if<GaussianMixture1D>(&v_);
        return m != nullptr && m->comp_var == 0.0;
    }
    bool weakly_log_concave() const {
        return !is_dirac_mixture() && !std::holds_alternative<SphereUniform>(v_);
    }
    bool is_gaussian() const { return std::holds_alternative<IsotropicGaussian>(v_); }
    bool is_sphere() const { return std::holds_alternative<SphereUniform>(v_); }

private:
    explicit TargetModel(Variant v) : v_(std::move(v)) {}
    Variant v_;
};

/// Worst observed |a(x)-a(y)| / (K |x-y|^beta) on a 10^4-point grid over the
/// support (neighbour strides 1, 10, 100, 1000 and every point against the grid
/// point nearest each kink). Values <= 1 are consistent with the declaration.
inline double holder_audit(const Quadrature1D& q, int points = 10000) {
    const Perturbation& a = q.a;
    if (a.K == 0.0) {
        double worst = 0.0;
        for (int i = 0; i < points; ++i) worst = std::max(worst, std::abs(a.fn(q.lo + (q.hi - q.lo) * i / (points - 1.0))));
        return worst == 0.0 ? 0.0 : INFINITY;
    }
    std::vector<double> ys(points), vals(points);
    for (int i = 0; i < points; ++i) {
        ys[i] = q.lo + (q.hi - q.lo) * i / (points - 1.0);
        vals[i] = a.fn(ys[i]);
    }
    double worst = 0.0;
    auto check = [&](int i, int j) {
        if (i == j) return;
        const double ratio = std::abs(vals[i] - vals[j]) / (a.K * std::pow(std::abs(ys[i] - ys[j]), a.beta));
        worst = std::max(worst, ratio);
    };
    for (int stride : {1, 10, 100, 1000})
        for (int i = 0; i + stride < points; ++i) check(i, i + stride);
    for (double kink : a.kinks) {
        int nearest = 0;
        for (int i = 1; i < points; ++i)
            if (std::abs(ys[i] - kink) < std::abs(ys[nearest] - kink)) nearest = i;
        for (int i = 0; i < points; ++i) check(i, nearest);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Posterior quantities
// ---------------------------------------------------------------------------

/// Law of Y given X_t = x under X_t = f_t Y + gbar_t xi.
struct PosteriorSummary {
    Vec mu;          // E[Y | X_t = x]
    Vec score;       // grad log p_t(x)
    Mat score_jac;   // Hessian of log p_t
    double sigma_post = 0.0;
};

/// Posterior moments needed by the drift assembly.
struct PosteriorMoments {
    Vec mu;
    Vec score;
    Mat cov;        // Cov(Y | X_t = x)
    Vec cov_y_ysq;  // Cov(Y, |Y|^2 | X_t = x)
};

namespace detail {

inline PosteriorMoments gaussian_moments(const IsotropicGaussian& g, const ScheduleValues& sv, const Vec& x) {
    const double f = sv.f, gb2 = sv.gbar * sv.gbar, s2 = g.var;
    const double D = f * f * s2 + gb2;
    const Vec centered = x - f * g.mean;
    PosteriorMoments m;
    m.mu = g.mean + (f * s2 / D) * centered;
    m.score = -centered / D;
    m.cov = (s2 * gb2 / D) * Mat::Identity(x.size(), x.size());
    m.cov_y_ysq = 2.0 * (s2 * gb2 / D) * m.mu;
    return m;
}

struct MixturePosterior {
    std::vector<double> resp;     // responsibilities
    std::vector<double> comp_mu;  // component posterior means
    std::vector<double> dlog;     // d/dx of component log-evidence
    double comp_var_post = 0.0;
    double D = 0.0;
};

inline MixturePosterior mixture_posterior(const GaussianMixture1D& m, const ScheduleValues& sv, double x) {
    const double f = sv.f, gb2 = sv.gbar * sv.gbar, v = m.comp_var;
    MixturePosterior p;
    p.D = f * f * v + gb2;
    const std::size_t K = m.weights.size();
    p.resp.assign(K, 0.0);
    p.comp_mu.assign(K, 0.0);
    p.dlog.assign(K, 0.0);
    std::vector<double> logw(K, -INFINITY);
    double top = -INFINITY;
    for (std::size_t i = 0; i < K; ++i) {
        const double r = x - f * m.means[i];
        if (m.weights[i] > 0.0) logw[i] = std::log(m.weights[i]) - 0.5 * r * r / p.D;
        top = std::max(top, logw[i]);
        p.comp_mu[i] = m.means[i] + f * v * r / p.D;
        p.dlog[i] = -r / p.D;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < K; ++i) total += (p.resp[i] = std::exp(logw[i] - top));
    for (double& r : p.resp) r /= total;
    p.comp_var_post = v * gb2 / p.D;
    return p;
}

inline PosteriorMoments mixture_moments(const GaussianMixture1D& m, const ScheduleValues& sv, const Vec& xv) {
    const MixturePosterior p = mixture_posterior(m, sv, xv(0));
    double mu = 0.0, score = 0.0;
    for (std::size_t i = 0; i < p.resp.size(); ++i) {
        mu += p.resp[i] * p.comp_mu[i];
        score += p.resp[i] * p.dlog[i];
    }
    double var = p.comp_var_post, third = 0.0;
    for (std::size_t i = 0; i < p.resp.size(); ++i) {
        const double dm = p.comp_mu[i] - mu;
        var += p.resp[i] * dm * dm;
        third += p.resp[i] * (dm * dm * dm + 3.0 * dm * p.comp_var_post);
    }
    PosteriorMoments out;
    out.mu = Vec::Constant(1, mu);
    out.score = Vec::Constant(1, score);
    out.cov = Mat::Constant(1, 1, var);
    out.cov_y_ysq = Vec::Constant(1, third + 2.0 * mu * var);
    return out;
}

/// d mu / dx for the mixture through the responsibilities:
///     mu' = sum_i r_i' mu_i + sum_i r_i mu_i',  r_i' = r_i (l_i' - sum_j r_j l_j').
inline double mixture_mean_derivative(const GaussianMixture1D& m, const ScheduleValues& sv, double x) {
    const MixturePosterior p = mixture_posterior(m, sv, x);
    double avg = 0.0;
    for (std::size_t i = 0; i < p.resp.size(); ++i) avg += p.resp[i] * p.dlog[i];
    const double dmu_comp = sv.f * m.comp_var / p.D;
    double out = 0.0;
    for (std::size_t i = 0; i < p.resp.size(); ++i)
        out += p.resp[i] * (p.dlog[i] - avg) * p.comp_mu[i] + p.resp[i] * dmu_comp;
    return out;
}

struct QuadratureMoments {
    double mu = 0.0, var = 0.0, third = 0.0;  // posterior mean, variance, third central moment
};

// Posterior of Y under the 1D quadrature prior, integrated on [lo, hi]
// intersected with c +- 12 gbar/f, where c is x/f clamped to the support.
inline QuadratureMoments quadrature_moments(const Quadrature1D& q, const ScheduleValues& sv, double x) {
    const double f = sv.f, gb2 = sv.gbar * sv.gbar;
    double lo = q.lo, hi = q.hi;
    if (f > 0.0) {
        const double c = std::clamp(x / f, q.lo, q.hi);
        lo = std::max(lo, c - 12.0 * sv.gbar / f);
        hi = std::min(hi, c + 12.0 * sv.gbar / f);
    }
    require(lo < hi, ErrorCode::QuadratureNoConvergence, "posterior window misses the support");
    auto log_w = [&](double y) {
        const double r = x - f * y;
        return -q.u.u(y) + q.a.fn(y) - 0.5 * r * r / gb2;
    };

    constexpr int scan = 257;
    double top = -INFINITY, arg = lo;
    for (int i = 0; i < scan; ++i) {
        const double y = lo + (hi - lo) * i / (scan - 1.0);
        const double lw = log_w(y);
        if (lw > top) top = lw, arg = y;
    }
    std::vector<double> cuts = q.a.kinks;
    cuts.push_back(arg);
    cuts.push_back(q.u.center);
    auto integrand = [&](double y) {
        const double w = std::exp(log_w(y) - top);
        const double z = y - arg;
        Eigen::ArrayXd out(4);
        out << w, w * z, w * z * z, w * z * z * z;
        return out;
    };
    const Eigen::ArrayXd I = integrate_adaptive(integrand, lo, hi, cuts, QuadratureOptions{1e-10, 4000});
    require(I(0) > 0.0, ErrorCode::QuadratureNoConvergence, "posterior normalizer underflowed");
    const double m1 = I(1) / I(0), m2 = I(2) / I(0), m3 = I(3) / I(0);
    QuadratureMoments out;
    out.mu = arg + m1;
    out.var = std::max(0.0, m2 - m1 * m1);
    out.third = m3 - 3.0 * m1 * m2 + 2.0 * m1 * m1 * m1;
    return out;
}

inline PosteriorMoments sphere_moments(const SphereUniform& s, const ScheduleValues& sv, const Vec& x) {
    const int d = s.dim;
    const double gb2 = sv.gbar * sv.gbar;
    const double r = x.norm();
    const double kappa = sv.f * r / gb2;
    PosteriorMoments m;
    m.cov_y_ysq = Vec::Zero(d);
    if (r == 0.0 || kappa < 1e-12) {
        m.mu = (kappa == 0.0) ? Vec::Zero(d) : Vec((sv.f / (d * gb2)) * x);
        m.cov = Mat::Identity(d, d) / d;
    } else {
        const BesselRatio br = bessel_ratio_guarded(d, kappa);
        const Vec dir = x / r;
        const Mat radial = dir * dir.transpose();
        m.mu = br.value * dir;
        m.cov = (br.value / kappa) * (Mat::Identity(d, d) - radial) + br.derivative * radial;
    }
    m.score = (sv.f * m.mu - x) / gb2;
    return m;
}

}  // namespace detail

/// Posterior moments of Y given X_t = x (gbar_t > 0).
inline PosteriorMoments posterior_moments(const TargetModel& target, const ScheduleValues& sv, const Vec& x) {
    require(sv.gbar > 0.0, ErrorCode::OutOfDomain, "gbar_t = 0");
    require(x.size() == target.dim(), ErrorCode::InvalidDimension, "state dimension mismatch");
    return std::visit(
        [&](const auto& t) -> PosteriorMoments {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, IsotropicGaussian>) {
                return detail::gaussian_moments(t, sv, x);
            } else if constexpr (std::is_same_v<T, GaussianMixture1D>) {
                return detail::mixture_moments(t, sv, x);
            } else if constexpr (std::is_same_v<T, Quadrature1D>) {
                const auto q = detail::quadrature_moments(t, sv, x(0));
                PosteriorMoments m;
                m.mu = Vec::Constant(1, q.mu);
                m.score = Vec::Constant(1, (sv.f * q.mu - x(0)) / (sv.gbar * sv.gbar));
                m.cov = Mat::Constant(1, 1, q.var);
                m.cov_y_ysq = Vec::Constant(1, q.third + 2.0 * q.mu * q.var);
                return m;
            } else {
                return detail::sphere_moments(t, sv, x);
            }
        },
        target.variant());
}

inline PosteriorSummary posterior(const TargetModel& target, const ScheduleValues& sv, const Vec& x) {
    PosteriorMoments m = posterior_moments(target, sv, x);
    const double gb2 = sv.gbar * sv.gbar;
    const auto n = x.size();
    PosteriorSummary out;
    out.mu = std::move(m.mu);
    out.score = std::move(m.score);
    out.score_jac = ((sv.f * sv.f / gb2) * m.cov - Mat::Identity(n, n)) / gb2;
    out.sigma_post = m.cov.trace() / static_cast<double>(n);
    return out;
}

/// Score of the marginal with explicit (f, gbar). Gaussian targets allow gbar = 0.
inline Vec marginal_score(const TargetModel& target, double f, double gbar, const Vec& x) {
    if (const auto* g = std::get_if<IsotropicGaussian>(&target.variant())) {
        const double D = f * f * g->var + gbar * gbar;
        require(D > 0.0, ErrorCode::OutOfDomain, "degenerate marginal variance");
        return -(x - f * g->mean) / D;
    }
    require(gbar > 0.0, ErrorCode::OutOfDomain, "gbar = 0 for a non-Gaussian target");
    return posterior_moments(target, reduced_values(f, gbar), x).score;
}

/// Jacobian of the posterior mean differentiated in closed form (Gaussian,
/// responsibility derivative for mixtures, differentiation under the integral
/// for quadrature targets, von Mises-Fisher formulas for the sphere).
inline Mat posterior_mean_jacobian(const TargetModel& target, const ScheduleValues& sv, const Vec& x) {
    require(sv.gbar > 0.0, ErrorCode::OutOfDomain, "gbar_t = 0");
    const double gb2 = sv.gbar * sv.gbar;
    return std::visit(
        [&](const auto& t) -> Mat {
            using T = std::decay_t<decltype(t)>;
            const auto n = x.size();
            if constexpr (std::is_same_v<T, IsotropicGaussian>) {
                return (sv.f * t.var / (sv.f * sv.f * t.var + gb2)) * Mat::Identity(n, n);
            } else if constexpr (std::is_same_v<T, GaussianMixture1D>) {
                return Mat::Constant(1, 1, detail::mixture_mean_derivative(t, sv, x(0)));
            } else if constexpr (std::is_same_v<T, Quadrature1D>) {
                const auto q = detail::quadrature_moments(t, sv, x(0));
                return Mat::Constant(1, 1, sv.f / gb2 * q.var);
            } else {
                const int d = t.dim;
                const double r = x.norm();
                const double kappa = sv.f * r / gb2;
                if (r == 0.0 || kappa < 1e-12) return (sv.f / (d * gb2)) * Mat::Identity(d, d);
                const BesselRatio br = bessel_ratio_guarded(d, kappa);
                const Vec dir = x / r;
                const Mat radial = dir * dir.transpose();
                return (br.value / r) * (Mat::Identity(d, d) - radial) + br.derivative * (sv.f / gb2) * radial;
            }
        },
        target.variant());
}

// ---------------------------------------------------------------------------
// Second moment and sampling
// ---------------------------------------------------------------------------

struct SecondMoment {
    double value = 0.0;    // E|Y|^2
    double per_dim = 0.0;  // E|Y|^2 / d
};

/// One-dimensional density view of a target (unnormalized log density on a
/// finite integration range), used by quadrature-based audits.
struct Density1D {
    std::function<double(double)> log_p;
    double lo = 0.0, hi = 0.0;
    std::vector<double> breakpoints;
};

inline Density1D density_1d(const TargetModel& target) {
    if (const auto* g = std::get_if<IsotropicGaussian>(&target.variant())) {
        const double m = g->mean(0), s = std::sqrt(g->var);
        return {[m, v = g->var](double y) { return -0.5 * (y - m) * (y - m) / v; }, m - 40.0 * s, m + 40.0 * s, {m}};
    }
    if (const auto* q = std::get_if<Quadrature1D>(&target.variant())) {
        std::vector<double> cuts = q->a.kinks;
        cuts.push_back(q->u.center);
        return {[q = *q](double y) { return -q.u.u(y) + q.a.fn(y); }, q->lo, q->hi, cuts};
    }
    if (const auto* m = std::get_if<GaussianMixture1D>(&target.variant())) {
        require(m->comp_var > 0.0, ErrorCode::UnsupportedMethod, "Dirac mixture has no density");
        const auto [lo_it, hi_it] = std::minmax_element(m->means.begin(), m->means.end());
        const double s = std::sqrt(m->comp_var);
        return {[m = *m](double y) {
                    double top = -INFINITY;
                    std::vector<double> l(m.weights.size());
                    for (std::size_t i = 0; i < l.size(); ++i) {
                        l[i] = std::log(m.weights[i]) - 0.5 * (y - m.means[i]) * (y - m.means[i]) / m.comp_var;
                        top = std::max(top, l[i]);
                    }
                    double acc = 0.0;
                    for (double v : l) acc += std::exp(v - top);
                    return top + std::log(acc);
                },
                *lo_it - 40.0 * s, *hi_it + 40.0 * s, m->means};
    }
    fail(ErrorCode::UnsupportedMethod, "no one-dimensional density for this target");
}

/// E_p[h] for a one-dimensional density by adaptive quadrature.
template <class H>
double expect_1d(const Density1D& p, H&& h, double rel_tol = 1e-12) {
    double top = -INFINITY;
    for (int i = 0; i <= 512; ++i) top = std::max(top, p.log_p(p.lo + (p.hi - p.lo) * i / 512.0));
    auto g = [&](double y) {
        const double w = std::exp(p.log_p(y) - top);
        Eigen::ArrayXd out(2);
        out << w, w * h(y);
        return out;
    };
    const Eigen::ArrayXd I = integrate_adaptive(g, p.lo, p.hi, p.breakpoints, QuadratureOptions{rel_tol, 8000});
    return I(1) / I(0);
}

inline SecondMoment second_moment(const TargetModel& target) {
    const double d = target.dim();
    const double value = std::visit(
        [&](const auto& t) -> double {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, IsotropicGaussian>) {
                return t.mean.squaredNorm() + d * t.var;
            } else if constexpr (std::is_same_v<T, GaussianMixture1D>) {
                double acc = 0.0;
                for (std::size_t i = 0; i < t.weights.size(); ++i)
                    acc += t.weights[i] * (t.means[i] * t.means[i] + t.comp_var);
                return acc;
            } else if constexpr (std::is_same_v<T, Quadrature1D>) {
                return expect_1d(density_1d(target), [](double y) { return y * y; });
            } else {
                return 1.0;
            }
        },
        target.variant());
    return {value, value / d};
}

/// n i.i.d. draws; deterministic for a fixed seed. Quadrature targets use an
/// inverse CDF tabulated on 4096 points.
inline std::vector<Vec> sample(const TargetModel& target, std::size_t n, std::uint64_t seed) {
    require(n >= 1, ErrorCode::InvalidParameters, "sample count must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<Vec> out;
    out.reserve(n);
    const int d = target.dim();

    std::visit(
        [&](const auto& t) {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, IsotropicGaussian>) {
                const double s = std::sqrt(t.var);
                for (std::size_t k = 0; k < n; ++k) {
                    Vec y(d);
                    for (int i = 0; i < d; ++i) y(i) = t.mean(i) + s * normal(rng);
                    out.push_back(std::move(y));
                }
            } else if constexpr (std::is_same_v<T, GaussianMixture1D>) {
                std::vector<double> cdf(t.weights.size());
                std::partial_sum(t.weights.begin(), t.weights.end(), cdf.begin());
                const double s = std::sqrt(t.comp_var);
                for (std::size_t k = 0; k < n; ++k) {
                    const double u = uniform(rng) * cdf.back();
                    std::size_t i = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
                    i = std::min(i, cdf.size() - 1);
                    const double z = normal(rng);
                    out.push_back(Vec::Constant(1, t.means[i] + s * z));
                }
            } else if constexpr (std::is_same_v<T, Quadrature1D>) {
                constexpr int table = 4096;
                const Density1D p = density_1d(target);
                std::vector<double> ys(table), cdf(table, 0.0), logp(table);
                double top = -INFINITY;
                for (int i = 0; i < table; ++i) {
                    ys[i] = p.lo + (p.hi - p.lo) * i / (table - 1.0);
                    logp[i] = p.log_p(ys[i]);
                    top = std::max(top, logp[i]);
                }
                for (int i = 1; i < table; ++i)
                    cdf[i] = cdf[i - 1] + 0.5 * (std::exp(logp[i] - top) + std::exp(logp[i - 1] - top)) * (ys[i] - ys[i - 1]);
                for (double& c : cdf) c /= cdf.back();
                for (std::size_t k = 0; k < n; ++k) {
                    const double u = uniform(rng);
                    auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
                    std::size_t j = std::clamp<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), 1, table - 1);
                    const double span = cdf[j] - cdf[j - 1];
                    const double frac = span > 0.0 ? (u - cdf[j - 1]) / span : 0.0;
                    out.push_back(Vec::Constant(1, ys[j - 1] + frac * (ys[j] - ys[j - 1])));
                }
            } else {
                for (std::size_t k = 0; k < n; ++k) {
                    Vec y(d);
                    for (int i = 0; i < d; ++i) y(i) = normal(rng);
                    out.push_back(y / y.norm());
                }
            }
        },
        target.variant());
    return out;
}

}  // namespace flowreg
