#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "test_util.hpp"

using namespace deflect;

namespace {

MdcForm diagonal_form(const Vector& pd, const Vector& pf, const Vector& g, double c) {
    MdcForm f;
    f.b_t = g.cwiseProduct(pd - pf);
    f.K_t = Matrix((g.cwiseAbs2().cwiseProduct(pd.cwiseProduct(Vector::Ones(pd.size()) - pd))).asDiagonal());
    f.c = c;
    return f;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

}  // namespace

TEST(Solvers, IndependentDirectionByHand) {
    const auto f = diagonal_form(vec({0.5, 0.5}), vec({0.1, 0.1}), vec({1, 1}), 1.0);
    const Vector q = tpc_independent_qk(f, 1.0);
    EXPECT_NEAR(q[0], 0.32, 1e-15);
    EXPECT_NEAR(q[1], 0.32, 1e-15);
    auto dense = f;
    dense.K_t(0, 1) = dense.K_t(1, 0) = 0.01;
    EXPECT_THROW(tpc_independent_qk(dense, 1.0), std::invalid_argument);
}

TEST(Solvers, ProjectionByHand) {
    const auto a = closest_feasible_on_shell(vec({3, 1}), 10.0, vec({4, 9}));
    ASSERT_TRUE(a.has_value());
    EXPECT_NEAR((*a)[0], 2.0, 1e-14);
    EXPECT_NEAR((*a)[1], std::sqrt(6.0), 1e-14);
    EXPECT_NEAR(a->squaredNorm(), 10.0, 1e-12);
    EXPECT_LE(projection_kkt_residual(*a, vec({3, 1}), 10.0, vec({4, 9})), 1e-9);
    EXPECT_THROW(closest_feasible_on_shell(vec({3, 1}), 13.0, vec({4, 9})), std::domain_error);
}

TEST(Solvers, ProjectionSpreadsLeftoverOverZeroEntries) {
    // a* = (sqrt 10, 0, 0): sensor 1 saturates and 6 mW is left for two zero entries
    const Vector p0 = vec({4, 4, 2});
    const auto a = closest_feasible_on_shell(vec({std::sqrt(10.0), 0, 0}), 10.0, vec({4, 4, 4}));
    ASSERT_TRUE(a.has_value());
    EXPECT_NEAR((*a)[0], 2.0, 1e-14);
    EXPECT_NEAR((*a)[1], std::sqrt(3.0), 1e-14);
    EXPECT_NEAR((*a)[2], std::sqrt(3.0), 1e-14);
    EXPECT_LE(projection_kkt_residual(*a, vec({std::sqrt(10.0), 0, 0}), 10.0, vec({4, 4, 4})), 1e-9);
    // a tight cap on one of them pushes the rest to the other
    const auto b = closest_feasible_on_shell(vec({std::sqrt(9.0), 0, 0}), 9.0, p0);
    ASSERT_TRUE(b.has_value());
    EXPECT_NEAR(b->squaredNorm(), 9.0, 1e-12);
    EXPECT_NEAR((*b)[2], std::sqrt(2.0), 1e-14);
    EXPECT_NEAR((*b)[1], std::sqrt(3.0), 1e-14);
}

TEST(Solvers, SingleSensorTakesWholeBudget) {
    const auto f = diagonal_form(vec({0.6}), vec({0.1}), vec({2.0}), 0.3);
    const auto r = solve_tpc(f, 5.0);
    EXPECT_NEAR(r.a_t[0], std::sqrt(5.0), 1e-14);
    const auto q = solve_qp(f, ConstraintSet::ipc(vec({3.0})));
    EXPECT_NEAR(q.a_t[0], std::sqrt(3.0), 1e-9);
    const auto ipc = solve_ipc(f, vec({3.0}));
    EXPECT_NEAR(ipc.a_t[0], std::sqrt(3.0), 1e-15);
}

TEST(Solvers, HomogeneousSensorsGetUniformAllocation) {
    const auto f = diagonal_form(Vector::Constant(6, 0.66), Vector::Constant(6, 0.1), Vector::Constant(6, 0.7), 0.2);
    const auto tpc = solve_tpc(f, 12.0);
    EXPECT_EQ(tpc.method, SolveMethod::AnalyticClosedForm);
    for (Eigen::Index k = 0; k < 6; ++k) EXPECT_NEAR(tpc.a_t[k], std::sqrt(2.0), 1e-14);
    const auto ipc = solve_ipc(f, Vector::Constant(6, 1.5));
    EXPECT_EQ(ipc.method, SolveMethod::AnalyticEta);
    for (Eigen::Index k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(ipc.a_t[k], std::sqrt(1.5));
}

TEST(Solvers, ZeroBiasGivesZeroAllocation) {
    const auto f = diagonal_form(vec({0.1, 0.1}), vec({0.1, 0.1}), vec({1, 2}), 1.0);
    for (const auto& cs : {ConstraintSet::tpc(1.0), ConstraintSet::tipc(1.0, vec({1, 1})), ConstraintSet::ipc(vec({1, 1}))}) {
        const auto r = solve(f, cs);
        EXPECT_EQ(r.a_t.norm(), 0.0);
        EXPECT_EQ(r.mdc, 0.0);
        EXPECT_EQ(r.method, SolveMethod::AnalyticClosedForm);
    }
}

TEST(Solvers, TpcLandsOnShellAndRadialScalingHelps) {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> dim(1, 8);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int rep = 0; rep < 1000; ++rep) {
        const auto f = fixtures::random_form(rng, dim(rng), rep % 3 != 0);
        const double p = fixtures::log_uniform(rng, 1e-3, 1e3);
        const auto r = solve_tpc(f, p);
        EXPECT_NEAR(r.a_t.squaredNorm(), p, 1e-9 * p);
        EXPECT_TRUE((r.a_t.array() >= 0.0).all());
        // any strictly interior point improves when pushed onto the shell
        const Vector x = r.a_t * u(rng);
        EXPECT_GE(mdc_value(f, std::sqrt(p) * x / x.norm()), mdc_value(f, x));
    }
}

TEST(Solvers, QpAgreesWithClosedFormOnTpc) {
    std::mt19937_64 rng(5);
    int checked = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const auto f = fixtures::random_form(rng, 2 + rep % 6, true);
        const double p = fixtures::log_uniform(rng, 1e-2, 1e2);
        const auto cs = ConstraintSet::tpc(p);
        const auto cf = tpc_candidate(f, p);
        if (!cf) continue;
        ++checked;
        const auto qp = solve_qp(f, cs);
        EXPECT_EQ(qp.method, SolveMethod::QPFallback);
        EXPECT_LE((qp.a_t - *cf).cwiseAbs().maxCoeff(), 1e-6 * std::sqrt(p));
        EXPECT_LE(qp.kkt_residual, kQpKktTolerance);
    }
    EXPECT_GT(checked, 100);
}

TEST(Solvers, MixedSignDirectionFallsBackToQp) {
    MdcForm f;
    f.b_t = vec({1.0, 0.05});
    f.K_t = Matrix(2, 2);
    f.K_t << 1.0, 0.9, 0.9, 1.0;
    f.c = 0.1;
    ASSERT_FALSE(tpc_candidate(f, 10.0).has_value());
    const auto r = solve_tpc(f, 10.0);
    EXPECT_EQ(r.method, SolveMethod::QPFallback);
    EXPECT_LE(r.kkt_residual, kQpKktTolerance);
    EXPECT_TRUE((r.a_t.array() >= 0.0).all());
    EXPECT_NEAR(r.a_t.squaredNorm(), 10.0, 1e-9);
    const auto grid = grid_search_allocation(f, ConstraintSet::tpc(10.0), 4000);
    EXPECT_GE(r.mdc, grid.mdc - 1e-9);
}

TEST(Solvers, TipcInsideBoxReturnsTpcCandidate) {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 100; ++rep) {
        const auto f = fixtures::random_form(rng, 4, true);
        const auto tpc = solve_tpc(f, 2.0);
        const auto tipc = solve_tipc(f, 2.0, Vector::Constant(4, 1e6));
        EXPECT_LE((tpc.a_t - tipc.a_t).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Solvers, TipcFeasibilityAndCertificate) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (int rep = 0; rep < 500; ++rep) {
        const Eigen::Index m = 2 + rep % 7;
        const auto f = fixtures::random_form(rng, m, rep % 2 == 0);
        Vector p0(m);
        for (Eigen::Index k = 0; k < m; ++k) p0[k] = fixtures::log_uniform(rng, 0.1, 10.0);
        const double p = u(rng) * p0.sum() * 0.999;
        const auto r = solve_tipc(f, p, p0);
        EXPECT_NEAR(r.a_t.squaredNorm(), p, 1e-9 * p);
        EXPECT_TRUE((r.powers.array() <= p0.array() * (1.0 + 1e-9)).all());
        EXPECT_TRUE((r.a_t.array() >= 0.0).all());
        const double tol = r.method == SolveMethod::QPFallback ? kQpKktTolerance : kAnalyticKktTolerance;
        EXPECT_LE(r.kkt_residual, tol) << to_string(r.method);
        // the inequality program can only do better than the shell
        const auto qp = solve_qp(f, ConstraintSet::tipc(p, p0));
        EXPECT_GE(qp.mdc, r.mdc * (1.0 - 1e-9));
    }
}

TEST(Solvers, TipcRejectsInfeasibleBudget) {
    const auto f = diagonal_form(vec({0.6, 0.6}), vec({0.1, 0.1}), vec({1, 1}), 1.0);
    EXPECT_THROW(solve_tipc(f, 3.0, vec({1, 2})), std::domain_error);
    EXPECT_THROW(solve_tpc(f, -1.0), std::domain_error);
    EXPECT_THROW(solve_ipc(f, vec({1, 0})), std::domain_error);
}

TEST(Solvers, IpcSaturatesAtLeastOneSensor) {
    std::mt19937_64 rng(33);
    for (int rep = 0; rep < 500; ++rep) {
        const Eigen::Index m = 1 + rep % 8;
        const auto f = fixtures::random_form(rng, m, false);
        const double p0 = fixtures::log_uniform(rng, 1e-3, 1e3);
        const auto r = solve_ipc(f, Vector::Constant(m, p0));
        ASSERT_EQ(r.method, SolveMethod::AnalyticEta);
        EXPECT_DOUBLE_EQ(r.a_t.maxCoeff(), std::sqrt(p0));
        EXPECT_LE(r.kkt_residual, kAnalyticKktTolerance);
        const auto qp = solve_qp(f, ConstraintSet::ipc(Vector::Constant(m, p0)));
        EXPECT_NEAR(qp.mdc, r.mdc, 1e-8 * r.mdc);
    }
}

TEST(Solvers, UniformAllocationIsNotStationaryWhenSensorsDiffer) {
    const auto f = diagonal_form(vec({0.73, 0.53}), vec({0.1, 0.1}), vec({1, 1}), 0.5);
    const auto cs = ConstraintSet::tpc(4.0);
    const auto u = uniform_allocation(f, cs);
    EXPECT_NEAR(u.powers[0], 2.0, 1e-15);
    EXPECT_GT(kkt_residual(f, cs, u.a_t), 1e-3);
    EXPECT_LE(kkt_residual(f, cs, solve_tpc(f, 4.0).a_t), kAnalyticKktTolerance);
    EXPECT_THROW(kkt_residual(f, cs, Vector::Constant(2, 5.0)), std::domain_error);
}

TEST(Solvers, WaterFillingLimits) {
    const Vector g = vec({0.5, 0.8, 1.1, 1.4, 2.0});
    const auto f = diagonal_form(Vector::Constant(5, 0.66), Vector::Constant(5, 0.1), g, 1.0);
    const Vector low = tpc_independent_qk(f, 1e-4);
    const Vector high = tpc_independent_qk(f, 1e4);
    for (Eigen::Index k = 1; k < 5; ++k) {
        EXPECT_GT(low[k], low[k - 1]);   // water filling
        EXPECT_LT(high[k], high[k - 1]);  // inverse water filling
    }
    EXPECT_TRUE((low.array() > 0.0).all());
}

TEST(Solvers, DispatcherRoutesByRegime) {
    const auto f = diagonal_form(vec({0.73, 0.53}), vec({0.1, 0.1}), vec({1, 1}), 0.5);
    EXPECT_EQ(solve(f, ConstraintSet::tpc(1.0)).regime, Regime::TPC);
    EXPECT_EQ(solve(f, ConstraintSet::tipc(1.0, vec({0.6, 0.6}))).regime, Regime::TIPC);
    EXPECT_EQ(solve(f, ConstraintSet::ipc(vec({0.6, 0.6}))).regime, Regime::IPC);
    EXPECT_EQ(to_string(SolveMethod::AnalyticProjection), "analytic-projection");
    EXPECT_EQ(to_string(Regime::TIPC), "TIPC");
}
