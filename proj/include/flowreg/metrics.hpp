#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "flowreg/error.hpp"
#include "flowreg/linalg.hpp"

namespace flowreg {

enum class W2Method { BuresExact, Quantile1D, AssignmentExact };

struct W2Report {
    double value = 0.0;
    W2Method method = W2Method::BuresExact;
    std::size_t n = 0;  // sample count, 0 for exact laws
};

/// W2 between N(m1, s1^2 Id) and N(m2, s2^2 Id) in dimension d (s1, s2 are
/// standard deviations).
inline W2Report w2_gaussian_isotropic(const Vec& m1, double s1, const Vec& m2, double s2, int d) {
    require(s1 >= 0.0 && s2 >= 0.0, ErrorCode::InvalidParameters, "standard deviations must be >= 0");
    require(m1.size() == m2.size(), ErrorCode::LengthMismatch, "mean dimension mismatch");
    return {std::sqrt((m1 - m2).squaredNorm() + d * (s1 - s2) * (s1 - s2)), W2Method::BuresExact, 0};
}

/// Order-statistics coupling, the optimal coupling on the line.
inline W2Report w2_empirical_1d(std::vector<double> xs, std::vector<double> ys) {
    require(xs.size() == ys.size(), ErrorCode::LengthMismatch, "sample counts differ");
    require(!xs.empty(), ErrorCode::InvalidParameters, "need at least one sample");
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) acc += (xs[i] - ys[i]) * (xs[i] - ys[i]);
    return {std::sqrt(acc / xs.size()), W2Method::Quantile1D, xs.size()};
}

struct Assignment {
    std::vector<int> col_for_row;
    double cost = 0.0;
};

/// Dense linear assignment, exact. An epsilon-scaling auction produces
/// near-optimal column prices; rows are then matched to their cheapest column
/// under those prices wherever that column is still free, and the remaining
/// rows are matched by shortest augmenting paths with Dijkstra on reduced
/// costs (Crouse). `cost(i, j)` is evaluated on demand so no n x n matrix is
/// stored. O(n^3) worst case.
template <class Cost>
Assignment solve_assignment(int n, Cost&& cost) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n, 0.0), v(n, 0.0), shortest(n);
    std::vector<int> path(n, -1), col4row(n, -1), row4col(n, -1), remaining(n);
    std::vector<char> SR(n), SC(n);

    if (n >= 2) {
        double cmax = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) cmax = std::max(cmax, std::abs(cost(i, j)));
        // Auction on prices p = -v: row i bids for argmin_j c(i,j) + p_j.
        std::vector<int> owner(n), queue;
        for (double eps = cmax / 4.0; cmax > 0.0; eps /= 6.0) {
            std::fill(owner.begin(), owner.end(), -1);
            queue.resize(n);
            for (int i = 0; i < n; ++i) queue[i] = n - 1 - i;
            while (!queue.empty()) {
                const int i = queue.back();
                queue.pop_back();
                double b1 = inf, b2 = inf;
                int j1 = -1;
                for (int j = 0; j < n; ++j) {
                    const double h = cost(i, j) - v[j];
                    if (h < b2) {
                        if (h < b1) b2 = b1, b1 = h, j1 = j;
                        else b2 = h;
                    }
                }
                v[j1] -= (b2 - b1) + eps;
                if (owner[j1] >= 0) queue.push_back(owner[j1]);
                owner[j1] = i;
            }
            if (eps < 1e-9 * cmax) break;
        }
    }

    // Row duals at their minimum reduced cost keep every reduced cost
    // non-negative; a row whose cheapest column is free takes it (tight edge).
    std::vector<int> free_rows;
    for (int i = 0; i < n; ++i) {
        double best = inf;
        int jb = -1;
        for (int j = 0; j < n; ++j) {
            const double h = cost(i, j) - v[j];
            if (h < best) best = h, jb = j;
        }
        u[i] = best;
        if (row4col[jb] == -1) col4row[i] = jb, row4col[jb] = i;
        else free_rows.push_back(i);
    }

    for (const int cur : free_rows) {
        double min_val = 0.0;
        int num_remaining = n;
        for (int it = 0; it < n; ++it) remaining[it] = n - it - 1;
        std::fill(SR.begin(), SR.end(), 0);
        std::fill(SC.begin(), SC.end(), 0);
        std::fill(shortest.begin(), shortest.end(), inf);

        int sink = -1, i = cur;
        while (sink == -1) {
            int index = -1;
            double lowest = inf;
            SR[i] = 1;
            for (int it = 0; it < num_remaining; ++it) {
                const int j = remaining[it];
                const double r = min_val + cost(i, j) - u[i] - v[j];
                if (r < shortest[j]) {
                    path[j] = i;
                    shortest[j] = r;
                }
                if (shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == -1)) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            if (index == -1 || !std::isfinite(min_val)) fail(ErrorCode::NumericalFailure, "assignment infeasible");
            const int j = remaining[index];
            if (row4col[j] == -1) sink = j;
            else i = row4col[j];
            SC[j] = 1;
            remaining[index] = remaining[--num_remaining];
        }

        u[cur] += min_val;
        for (int r = 0; r < n; ++r)
            if (SR[r] && r != cur) u[r] += min_val - shortest[col4row[r]];
        for (int c = 0; c < n; ++c)
            if (SC[c]) v[c] -= min_val - shortest[c];

        int j = sink;
        for (;;) {
            const int r = path[j];
            row4col[j] = r;
            std::swap(col4row[r], j);
            if (r == cur) break;
        }
    }

    Assignment out;
    out.col_for_row = std::move(col4row);
    for (int r = 0; r < n; ++r) out.cost += cost(r, out.col_for_row[r]);
    return out;
}

inline constexpr std::size_t kAssignmentCap = 4096;

/// Exact W2 between two equal-size empirical measures in any dimension.
inline W2Report w2_empirical_assignment(std::span<const Vec> xs, std::span<const Vec> ys) {
    require(xs.size() == ys.size(), ErrorCode::LengthMismatch, "sample counts differ");
    require(!xs.empty(), ErrorCode::InvalidParameters, "need at least one sample");
    require(xs.size() <= kAssignmentCap, ErrorCode::TooLarge, "assignment oracle capped at 4096 points");
    const int n = static_cast<int>(xs.size());
    const Assignment a = solve_assignment(n, [&](int i, int j) { return (xs[i] - ys[j]).squaredNorm(); });
    return {std::sqrt(std::max(0.0, a.cost) / n), W2Method::AssignmentExact, xs.size()};
}

}  // namespace flowreg
