#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "flowreg/error.hpp"

namespace flowreg {

struct GaussLegendreRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

/// Gauss-Legendre nodes and weights by Newton iteration on P_n.
inline GaussLegendreRule gauss_legendre_rule(int n) {
    require(n >= 1, ErrorCode::InvalidParameters, "Gauss-Legendre order must be positive");
    GaussLegendreRule rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-16) break;
        }
        rule.nodes[i] = -z;
        rule.nodes[n - 1 - i] = z;
        rule.weights[i] = rule.weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
    return rule;
}

inline const GaussLegendreRule& default_rule() {
    static const GaussLegendreRule rule = gauss_legendre_rule(20);
    return rule;
}

struct QuadratureOptions {
    double rel_tol = 1e-10;
    int max_intervals = 4000;
};

/// Globally adaptive Gauss-Legendre integration of a vector-valued integrand
/// g: double -> Eigen::ArrayXd with a fixed number of components.
///
/// Each interval is estimated with the 20-point rule; the error estimate is the
/// difference against the two halves. The interval with the largest scaled error
/// is bisected until, for every component k,
///     err_k <= rel_tol * max(|I_k|, integral of |g_k|)
/// The L1 scale keeps components that integrate to zero by symmetry from stalling.
/// `breakpoints` (inside (lo, hi)) seed the initial partition; use them for kinks.
template <class Integrand>
Eigen::ArrayXd integrate_adaptive(Integrand&& g, double lo, double hi, std::span<const double> breakpoints = {},
                                  const QuadratureOptions& opts = {}) {
    require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, ErrorCode::InvalidParameters,
            "integration interval must be finite and ordered");
    const GaussLegendreRule& rule = default_rule();

    struct Piece {
        double a, b;
        Eigen::ArrayXd value, abs_value, err;
        double priority;
        bool operator<(const Piece& o) const { return priority < o.priority; }
    };

    auto estimate = [&](double a, double b, Eigen::ArrayXd& value, Eigen::ArrayXd& abs_value) {
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        bool first = true;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            Eigen::ArrayXd gi = g(mid + half * rule.nodes[i]);
            if (first) {
                value = Eigen::ArrayXd::Zero(gi.size());
                abs_value = Eigen::ArrayXd::Zero(gi.size());
                first = false;
            }
            value += rule.weights[i] * gi;
            abs_value += rule.weights[i] * gi.abs();
        }
        value *= half;
        abs_value *= half;
    };

    auto make_piece = [&](double a, double b) {
        Piece p{a, b, {}, {}, {}, 0.0};
        Eigen::ArrayXd whole, whole_abs, left, left_abs, right, right_abs;
        const double mid = 0.5 * (a + b);
        estimate(a, b, whole, whole_abs);
        estimate(a, mid, left, left_abs);
        estimate(mid, b, right, right_abs);
        p.value = left + right;
        p.abs_value = left_abs + right_abs;
        p.err = (p.value - whole).abs();
        return p;
    };

    std::vector<double> cuts{lo};
    for (double bp : breakpoints)
        if (bp > lo && bp < hi) cuts.push_back(bp);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::vector<Piece> pieces;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        if (cuts[i + 1] > cuts[i]) pieces.push_back(make_piece(cuts[i], cuts[i + 1]));
    if (pieces.empty()) {
        Eigen::ArrayXd probe = g(lo);
        return Eigen::ArrayXd::Zero(probe.size());
    }

    auto totals = [&](Eigen::ArrayXd& value, Eigen::ArrayXd& abs_value, Eigen::ArrayXd& err) {
        value = Eigen::ArrayXd::Zero(pieces.front().value.size());
        abs_value = value;
        err = value;
        for (const Piece& p : pieces) {
            value += p.value;
            abs_value += p.abs_value;
            err += p.err;
        }
    };

    Eigen::ArrayXd value, abs_value, err;
    for (int round = 0;; ++round) {
        totals(value, abs_value, err);
        const Eigen::ArrayXd scale = value.abs().max(abs_value).max(1e-300);
        if (((err - opts.rel_tol * scale) <= 0.0).all()) return value;
        if (!value.allFinite())
            fail(ErrorCode::QuadratureNoConvergence, "non-finite integrand values");
        if (static_cast<int>(pieces.size()) >= opts.max_intervals)
            fail(ErrorCode::QuadratureNoConvergence, "adaptive refinement stalled above tolerance");

        // Bisect the worst piece (largest error relative to its component scale).
        std::size_t worst = 0;
        double worst_score = -1.0;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            const double score = (pieces[i].err / scale).maxCoeff();
            if (score > worst_score) {
                worst_score = score;
                worst = i;
            }
        }
        const Piece p = pieces[worst];
        const double mid = 0.5 * (p.a + p.b);
        if (!(mid > p.a && mid < p.b))
            fail(ErrorCode::QuadratureNoConvergence, "interval collapsed below machine resolution");
        pieces[worst] = make_piece(p.a, mid);
        pieces.push_back(make_piece(mid, p.b));
    }
}

/// Scalar convenience wrapper.
template <class F>
double integrate_scalar(F&& f, double lo, double hi, std::span<const double> breakpoints = {},
                        const QuadratureOptions& opts = {}) {
    auto g = [&](double x) {
        Eigen::ArrayXd out(1);
        out(0) = f(x);
        return out;
    };
    return integrate_adaptive(g, lo, hi, breakpoints, opts)(0);
}

}  // namespace flowreg
