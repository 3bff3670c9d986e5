#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "flowreg/metrics.hpp"
#include "flowreg/transport_flow.hpp"

using namespace flowreg;

namespace {

std::vector<Vec> normal_points(std::size_t n, int d, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sd);
    std::vector<Vec> out(n, Vec(d));
    for (auto& x : out)
        for (int j = 0; j < d; ++j) x(j) = normal(rng);
    return out;
}

}  // namespace

TEST(IntegrateFlow, StationaryStandardGaussian) {
    const auto g = build_geometric_grid(1.0 - 1e-4, 1.0, 256);
    Vec x0(2);
    x0 << 0.4, -1.7;
    const auto s = integrate_flow(TargetModel::gaussian(2, 1.0), Schedule::rescaled_diffusion(), g, x0);
    EXPECT_LE((s.x - x0).norm(), 1e-12);
    EXPECT_LE((s.J - Mat::Identity(2, 2)).norm(), 1e-12);
    EXPECT_NEAR(s.log_cert, 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(s.t, g.tau);
}

TEST(IntegrateFlow, GaussianMapConvergesToScaling) {
    const double s = 2.0;
    const TargetModel tg = TargetModel::gaussian(1, s);
    const Vec x0 = Vec::Constant(1, 0.8);
    double prev = INFINITY;
    for (int N : {512, 1024, 2048, 4096}) {
        const auto st = integrate_flow(tg, Schedule::lipman_linear(), build_geometric_grid(1.0 - 1e-4, 1.0, N), x0);
        const double err = std::abs(st.x(0) - s * x0(0));
        EXPECT_LT(err, prev);
        prev = err;
        EXPECT_NEAR(st.J(0, 0), st.x(0) / x0(0), 1e-12);
    }
    EXPECT_LT(prev, 1e-2);
}

TEST(IntegrateFlow, EmptyGridIsIdentity) {
    const Vec x0 = Vec::Constant(3, 1.5);
    const auto s = integrate_flow(TargetModel::sphere(3), Schedule::rescaled_diffusion(), GeometricGrid{}, x0);
    EXPECT_EQ(s.x, x0);
    EXPECT_EQ(s.J, Mat::Identity(3, 3));
    EXPECT_EQ(s.log_cert, 0.0);
}

TEST(IntegrateFlow, DimensionMismatch) {
    EXPECT_THROW(integrate_flow(TargetModel::gaussian(2, 1.0), Schedule::lipman_linear(),
                                build_geometric_grid(0.5, 1.0, 4), Vec::Zero(3)),
                 Error);
}

TEST(IntegrateFlow, JacobianMatchesFiniteDifferences) {
    const auto g = build_geometric_grid(0.99, 1.0, 2048);
    const TargetModel m = TargetModel::mixture({0.4, 0.6}, {-1.0, 1.5}, 0.25);
    for (double x : {-1.2, 0.1, 0.9}) {
        const Vec x0 = Vec::Constant(1, x);
        const double h = 1e-4;
        const auto c = integrate_flow(m, Schedule::lipman_linear(), g, x0);
        const auto p = integrate_flow(m, Schedule::lipman_linear(), g, Vec::Constant(1, x + h));
        const auto q = integrate_flow(m, Schedule::lipman_linear(), g, Vec::Constant(1, x - h));
        const double fd = (p.x(0) - q.x(0)) / (2 * h);
        EXPECT_NEAR(c.J(0, 0), fd, 1e-3 * std::abs(fd)) << x;
    }
    const TargetModel sph = TargetModel::sphere(3);
    const auto gs = build_geometric_grid(0.9, 1.0, 2048);
    Vec x0(3);
    x0 << 0.3, -0.2, 0.5;
    const auto c = integrate_flow(sph, Schedule::rescaled_diffusion(), gs, x0);
    Mat fd(3, 3);
    for (int j = 0; j < 3; ++j) {
        Vec xp = x0, xm = x0;
        xp(j) += 1e-4, xm(j) -= 1e-4;
        fd.col(j) = (integrate_flow(sph, Schedule::rescaled_diffusion(), gs, xp).x -
                     integrate_flow(sph, Schedule::rescaled_diffusion(), gs, xm).x) /
                    2e-4;
    }
    EXPECT_LE((c.J - fd).norm(), 1e-3 * fd.norm());
}

TEST(IntegrateFlows, ThreadCountDoesNotChangeResults) {
    const auto g = build_geometric_grid(0.95, 1.0, 64);
    const TargetModel m = TargetModel::mixture({0.5, 0.5}, {-1.0, 1.0}, 0.25);
    const auto xs = normal_points(33, 1, 1.0, 2);
    const auto a = integrate_flows(m, Schedule::lipman_linear(), g, xs, 1);
    const auto b = integrate_flows(m, Schedule::lipman_linear(), g, xs, 4);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        EXPECT_EQ(a[i].x, b[i].x);
        EXPECT_EQ(a[i].J, b[i].J);
    }
}

TEST(LipschitzCertificate, GaussianTendsToScale) {
    const double tau = 1.0 - 1e-6;
    const auto times = profile_time_grid(tau, 20000);
    for (const auto& sch : {Schedule::lipman_linear(), Schedule::rescaled_diffusion()}) {
        const auto p = profile(TargetModel::gaussian(1, 2.0), sch, times, Axis1D{1, 0.0});
        EXPECT_NEAR(lipschitz_certificate(p, 0.0), 2.0, 1e-5) << sch.name();
    }
}

TEST(LipschitzCertificate, ZeroProfileIsOne) {
    const auto p = profile(TargetModel::gaussian(2, 1.0), Schedule::rescaled_diffusion(), profile_time_grid(0.999, 64),
                           Axis1D{5, 2.0});
    EXPECT_NEAR(lipschitz_certificate(p, 0.0), 1.0, 1e-12);
}

TEST(LipschitzCertificate, DominatesFlowJacobians) {
    struct Case {
        TargetModel target;
        Schedule schedule;
    };
    const std::vector<Case> cases = {
        {TargetModel::mixture({0.5, 0.5}, {-1.0, 1.0}, 0.25), Schedule::lipman_linear()},
        {TargetModel::mixture({0.3, 0.7}, {-1.0, 1.0}, 0.5), Schedule::rescaled_diffusion()},
        {TargetModel::gaussian(3, 0.5), Schedule::lipman_linear()},
    };
    for (const auto& c : cases) {
        const int d = c.target.dim();
        const auto g = build_geometric_grid(0.999, 1.0, 256);
        const ProbeSpec probes = d == 1 ? ProbeSpec{Axis1D{401, 8.0}} : ProbeSpec{Axis1D{3, 1.0}};
        const double cert = lipschitz_certificate(profile(c.target, c.schedule, g.nodes, probes), 0.0);
        const auto flows = integrate_flows(c.target, c.schedule, g, normal_points(100, d, 1.0, 3));
        for (const auto& f : flows) {
            EXPECT_LE(op_norm(f.J), cert * (1.0 + 10.0 * g.h_max)) << c.schedule.name();
            EXPECT_LE(f.log_cert, std::log(cert) + 10.0 * g.h_max);
        }
    }
}

TEST(Pushforward, GaussianLawWithinFourStandardErrors) {
    const double s = 2.0;
    const TargetModel tg = TargetModel::gaussian(1, s);
    const Schedule sch = Schedule::lipman_linear();
    const auto g = build_geometric_grid(0.99, 1.0, 2048);
    const auto sv = eval_schedule(sch, g.tau);
    const double sd_exact = std::sqrt(sv.f * sv.f * s * s + sv.gbar * sv.gbar);
    const std::size_t n = 10000;
    // Start from Law(X_0) = N(0, gbar_0^2); the x-part of the joint recursion is euler_ode.
    const auto drift = [&](double t, const Vec& x) { return velocity(tg, eval_schedule(sch, t), x); };
    const auto out = euler_ode(drift, g, normal_points(n, 1, 1.0, 4));
    std::vector<double> pushed(n);
    for (std::size_t i = 0; i < n; ++i) pushed[i] = out.particles[i](0);
    EXPECT_EQ(integrate_flow(tg, sch, g, normal_points(1, 1, 1.0, 4)[0]).x(0), pushed[0]);
    auto exact_sample = [&](std::uint64_t seed) {
        std::vector<double> v;
        for (const auto& x : normal_points(n, 1, sd_exact, seed)) v.push_back(x(0));
        return v;
    };
    // Null distribution of the two-sample statistic under the exact law.
    const int reps = 200;
    double mean = 0.0, sq = 0.0;
    for (int r = 0; r < reps; ++r) {
        const double w = w2_empirical_1d(exact_sample(1000 + 2 * r), exact_sample(1001 + 2 * r)).value;
        mean += w, sq += w * w;
    }
    mean /= reps;
    const double se = std::sqrt(sq / reps - mean * mean);
    const double stat = w2_empirical_1d(pushed, exact_sample(99)).value;
    EXPECT_LE(stat, mean + 4.0 * se);
}

TEST(PoincareAudit, GaussianLinearIsTight) {
    const double s = 1.7;
    const auto rep = poincare_audit(TargetModel::gaussian(2, s), s);
    ASSERT_EQ(rep.entries.front().name, "x");
    EXPECT_NEAR(rep.entries.front().ratio, s * s, 1e-9);
    EXPECT_TRUE(rep.passed());
    EXPECT_DOUBLE_EQ(rep.bound, s * s);
    // Any smaller constant is violated by f(x) = x.
    EXPECT_FALSE(poincare_audit(TargetModel::gaussian(2, s), s * (1.0 - 1e-6)).passed());
}

TEST(PoincareAudit, ConstantFunctionPasses) {
    const std::vector<TestFunction> fam = {{"one", [](double) { return 1.0; }, [](double) { return 0.0; }}};
    const auto rep = poincare_audit(TargetModel::gaussian(1, 1.0), 0.5, fam);
    EXPECT_TRUE(rep.passed());
    EXPECT_EQ(rep.entries[0].ratio, 0.0);
}

TEST(PoincareAudit, HolderTargetWithFlowCertificate) {
    const TargetModel h = TargetModel::holder_reference(1.0);
    const auto p = profile(h, Schedule::lipman_linear(), profile_time_grid(1.0 - 1e-4, 256), Axis1D{101, 6.0});
    const double L = lipschitz_certificate(p, 0.0);
    const auto rep = poincare_audit(h, L);
    ASSERT_EQ(rep.entries.size(), 6u);
    for (const auto& e : rep.entries) EXPECT_LE(e.ratio, L * L) << e.name;
    EXPECT_TRUE(rep.passed());
}

TEST(PoincareAudit, UnsupportedTarget) {
    try {
        poincare_audit(TargetModel::sphere(3), 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnsupportedMethod);
    }
}

TEST(PsiEntropy, SquareIsVariance) {
    const TargetModel h = TargetModel::holder_reference(1.0);
    const Density1D p = density_1d(h);
    const auto rep = poincare_audit(h, 10.0);
    const auto fam = default_test_family();
    for (std::size_t i = 0; i < fam.size(); ++i) {
        const double ent = psi_entropy(p, [](double u) { return u * u; }, fam[i].f);
        EXPECT_NEAR(ent, rep.entries[i].lhs, 1e-9 * (1 + rep.entries[i].lhs)) << fam[i].name;
    }
}

TEST(LogSobolevAudit, GaussianWithinFourLSquared) {
    for (double s : {0.5, 1.0, 2.0}) {
        const auto rep = log_sobolev_audit(TargetModel::gaussian(1, s), s);
        EXPECT_TRUE(rep.passed());
        EXPECT_DOUBLE_EQ(rep.bound, 4 * s * s);
        // The Gaussian constant is 2 s^2, half the transferred bound.
        EXPECT_LE(rep.max_ratio(), 2 * s * s * (1 + 1e-9));
    }
}
