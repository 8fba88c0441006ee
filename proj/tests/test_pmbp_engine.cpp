#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pmbp/hawkes.hpp"
#include "pmbp/impulse_response.hpp"
#include "pmbp/pmbp.hpp"
#include "test_helpers.hpp"

using namespace pmbp;
using testing_pmbp::pmbp21_reference;
using testing_pmbp::reference_history;

// ---- conv_quadrature -------------------------------------------------------

TEST(ConvQuadrature, ZeroSource) {
    ConvGrid g(0.1, 20);
    std::vector<double> zero(g.size(), 0.0);
    auto F = [](double u) { return 1.0 - std::exp(-u); };
    EXPECT_EQ(conv_quadrature(F, zero, g, 1.0), 0.0);
}

TEST(ConvQuadrature, ExactForConstantSource) {
    for (double step : {0.5, 0.1, 0.013}) {
        auto g = ConvGrid::covering(4.0, step);
        std::vector<double> one(g.size(), 1.0);
        auto F = [](double u) { return 1.0 - std::exp(-u); };
        const double t = g.time(g.index_of(std::round(2.0 / step) * step));
        EXPECT_NEAR(conv_quadrature(F, one, g, t), 1.0 - std::exp(-t), 1e-14);
    }
    ConvGrid g(0.1, 40);
    std::vector<double> one(g.size(), 1.0);
    EXPECT_NEAR(conv_quadrature([](double u) { return 1.0 - std::exp(-u); }, one, g, 2.0), 0.8646647167633873, 1e-14);
}

TEST(ConvQuadrature, FirstOrderError) {
    auto run = [](double step) {
        auto g = ConvGrid::covering(1.0, step);
        std::vector<double> src(g.size());
        for (std::size_t q = 0; q < g.size(); ++q) src[q] = g.time(q);
        return conv_quadrature([](double u) { return u; }, src, g, 1.0);
    };
    const double e1 = std::abs(run(0.1) - 0.5), e2 = std::abs(run(0.05) - 0.5);
    EXPECT_LE(e1, 0.05 + 1e-12);
    EXPECT_NEAR(run(0.1), 0.45, 1e-12);
    EXPECT_NEAR(e2 / e1, 0.5, 1e-9);
}

TEST(ConvQuadrature, OffGridIsDomainError) {
    ConvGrid g(0.1, 10);
    std::vector<double> one(g.size(), 1.0);
    EXPECT_THROW(conv_quadrature([](double u) { return u; }, one, g, 0.55), DomainError);
}

TEST(ConvQuadrature, MatrixValuedAndRectangleAlternative) {
    auto p = make_params(2, 2, {{1, 2}, {0.5, 1}}, {{0.3, 0.2}, {0.1, 0.4}}, {0, 0}, {1, 1});
    auto g = ConvGrid::covering(5.0, 0.001);
    std::vector<MatrixD> src(g.size(), MatrixD::identity(2));
    auto m = conv_quadrature([&](double u) { return phi_integral(p, u); }, src, g, 5.0);
    auto r = conv_rectangle([&](double u) { return phi_eval(p, u); }, src, g, 5.0);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            EXPECT_NEAR(m(i, j), phi_integral(p, 5.0)(i, j), 1e-13);
            EXPECT_NEAR(r(i, j), m(i, j), 2e-3);
        }
}

TEST(ExpChannel, MatchesGenericRuleOnGridAndAugmentedPartitionOffGrid) {
    auto g = ConvGrid::covering(3.0, 0.05);
    std::vector<double> src(g.size());
    for (std::size_t q = 0; q < g.size(); ++q) src[q] = std::sin(g.time(q)) + 1.5;
    const double a = 0.7, th = 1.3;
    ExpChannel<double> ch(g, a, th, src, true);
    for (std::size_t q : {0u, 1u, 17u, 60u}) {
        const double t = g.time(q);
        EXPECT_NEAR(ch.conv1(t), conv_quadrature([&](double u) { return kernel::Phi(a, th, u); }, src, g, t), 1e-13);
        EXPECT_NEAR(ch.conv2(t), conv_quadrature([&](double u) { return kernel::Phi2(a, th, u); }, src, g, t), 1e-12);
        EXPECT_NEAR(ch.conv3(t), conv_quadrature([&](double u) { return kernel::Phi3(a, th, u); }, src, g, t), 1e-12);
    }
    // off grid: the same rule with the target inserted as an extra partition point
    for (double t : {0.013, 1.234, 2.999}) {
        const auto p = static_cast<std::size_t>(std::floor(t / g.step));
        auto rule = [&](auto K) {
            double s = 0.0;
            for (std::size_t i = 0; i <= p; ++i) {
                const double lo = g.time(i), hi = std::min(g.time(i + 1), t);
                s += (K(t - lo) - K(t - hi)) * src[i];
            }
            return s;
        };
        EXPECT_NEAR(ch.conv1(t), rule([&](double u) { return kernel::Phi(a, th, u); }), 1e-13);
        EXPECT_NEAR(ch.conv2(t), rule([&](double u) { return kernel::Phi2(a, th, u); }), 1e-12);
        EXPECT_NEAR(ch.conv3(t), rule([&](double u) { return kernel::Phi3(a, th, u); }), 1e-12);
    }
}

// ---- compute_h -------------------------------------------------------------

TEST(ComputeH, ZeroEBlock) {
    auto p = make_params(2, 1, {{1, 1}, {1, 1}}, {{0.0, 0.3}, {0.0, 0.3}}, {0, 0}, {1, 1});
    auto tab = compute_h(p, ConvGrid::covering(10, 0.01), 1e-6);
    EXPECT_EQ(tab.k_star, 1);
    for (const auto& s : tab.h)
        for (double x : s) EXPECT_EQ(x, 0.0);
}

// The left-endpoint rule makes the discrete h exactly geometric with ratio
// 1 - (1-alpha)(1-e^{-theta step}) per step instead of e^{-(1-alpha) theta step};
// at step 0.01 the relative gap passes 1% near t = 8 (1.26% at t = 10).
TEST(ComputeH, UnivariateClosedForm) {
    auto p = testing_pmbp::univariate(1.0, 0.5, 1.0, 0.0, 1);
    auto grid = ConvGrid::covering(50.0, 0.01);
    auto tab = compute_h(p, grid, 1e-6);
    for (std::size_t q = 0; grid.time(q) <= 10.0; ++q) {
        const double exact = 0.5 * std::exp(-0.5 * grid.time(q));
        EXPECT_NEAR(tab.h[0][q], exact, 0.01 * exact);
    }
    double trap = 0.0;
    for (std::size_t q = 0; q + 1 < grid.size(); ++q) trap += 0.5 * (tab.h[0][q] + tab.h[0][q + 1]) * grid.step;
    EXPECT_NEAR(trap, 1.0, 0.02);
}

TEST(ComputeH, DiscreteSolutionIsGeometric) {
    auto p = testing_pmbp::univariate(1.0, 0.5, 1.0, 0.0, 1);
    auto grid = ConvGrid::covering(20.0, 0.01);
    auto tab = compute_h(p, grid, 1e-12);
    const double r = 1.0 - 0.5 * (1.0 - std::exp(-0.01));
    for (std::size_t q = 0; q < grid.size(); q += 97) EXPECT_NEAR(tab.h[0][q], 0.5 * std::pow(r, double(q)), 1e-11);
}

TEST(ComputeH, Invariants) {
    auto p = pmbp21_reference();
    auto grid = ConvGrid::covering(30.0, 0.01);
    auto tab = compute_h(p, grid, 1e-6);
    EXPECT_LT(tab.residual_max, 1e-6);
    for (int i = 0; i < 2; ++i) {
        for (double x : tab.h_series(i, 1)) EXPECT_EQ(x, 0.0);
        for (double x : tab.H_series(i, 1)) EXPECT_EQ(x, 0.0);
        const auto& H = tab.H_series(i, 0);
        for (std::size_t q = 1; q < H.size(); ++q) EXPECT_LE(H[q - 1], H[q]);
    }
}

TEST(ComputeH, PartialSumsNonDecreasing) {
    auto p = make_params(2, 2, {{1, 2}, {0.5, 1}}, {{0.3, 0.2}, {0.1, 0.4}}, {0, 0}, {1, 1});
    auto grid = ConvGrid::covering(10.0, 0.02);
    HOptions o;
    std::vector<std::vector<double>> prev;
    for (int k = 1; k <= 6; ++k) {
        o.fixed_terms = k;
        auto tab = compute_h(p, grid, 1e-6, o);
        EXPECT_EQ(tab.k_star, k);
        if (!prev.empty()) {
            for (std::size_t s = 0; s < prev.size(); ++s)
                for (std::size_t q = 0; q < grid.size(); ++q) EXPECT_LE(prev[s][q], tab.h[s][q]);
        }
        prev = tab.h;
    }
}

TEST(ComputeH, RefusesSupercriticalAndCapsTerms) {
    auto p = testing_pmbp::univariate(1.0, 1.2, 1.0, 0.0, 1);
    EXPECT_THROW(compute_h(p, ConvGrid::covering(10, 0.1), 1e-6), DomainError);
    auto q = testing_pmbp::univariate(1.0, 0.95, 1.0, 0.0, 1);
    HOptions o;
    o.max_terms = 5;
    EXPECT_THROW(compute_h(q, ConvGrid::covering(50, 0.1), 1e-12, o), TruncationError);
}

TEST(ComputeH, SelfConvolutionNormBound) {
    auto p = make_params(3, 3, {{1, 2, 0.5}, {0.7, 1, 3}, {2, 0.4, 1}},
                         {{0.3, 0.1, 0.2}, {0.4, 0.2, 0.1}, {0.05, 0.3, 0.35}}, {0, 0, 0}, {1, 1, 1});
    auto grid = ConvGrid::covering(100.0, 0.01);
    HOptions o;
    MatrixD an = MatrixD::identity(3);
    std::vector<std::vector<double>> prev(9, std::vector<double>(grid.size(), 0.0));
    for (int n = 1; n <= 4; ++n) {
        o.fixed_terms = n;
        auto tab = compute_h(p, grid, 1e-6, o);
        an = an * p.alpha;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double norm = 0.0;
                const auto& cur = tab.h[i * 3 + j];
                const auto& pr = prev[i * 3 + j];
                for (std::size_t q = 0; q + 1 < grid.size(); ++q)
                    norm += 0.5 * ((cur[q] - pr[q]) + (cur[q + 1] - pr[q + 1])) * grid.step;
                EXPECT_LE(norm, an(i, j) * 1.02 + 1e-12);
            }
        prev = tab.h;
    }
}

// ---- grid-path evaluation --------------------------------------------------

TEST(XiEval, HawkesReduction) {
    auto p = make_params(2, 0, {{1, 2}, {0.5, 1}}, {{0.3, 0.2}, {0.1, 0.4}}, {0.2, 0.1}, {1, 0.5});
    EventHistory h(2, 10.0);
    h.times[0] = {0.3, 1.7, 4.4};
    h.times[1] = {2.0, 2.05, 8.0};
    auto grid = ConvGrid::covering(10.0, 0.05);
    auto tab = compute_h(p, grid, 1e-6);
    auto xi = xi_eval(p, h, tab, grid);
    auto Xi = compensator_eval(p, h, tab, grid);
    for (std::size_t q = 0; q < grid.size(); q += 7) {
        auto lam = hawkes_intensity(p, h, grid.time(q));
        auto Lam = hawkes_compensator(p, h, grid.time(q));
        for (int i = 0; i < 2; ++i) {
            EXPECT_NEAR(xi[q][i], lam[i], 1e-12 * lam[i]);
            EXPECT_NEAR(Xi[q][i], Lam[i], 1e-12 * std::max(1.0, Lam[i]));
        }
    }
}

TEST(XiEval, StationaryMbpRate) {
    auto p = testing_pmbp::univariate(1.0, 0.5, 1.0, 0.0, 1);
    auto grid = ConvGrid::covering(50.0, 0.01);
    auto tab = compute_h(p, grid, 1e-6);
    auto xi = xi_eval(p, EventHistory(1, 50.0), tab, grid);
    EXPECT_NEAR(xi.back()[0], 2.0, 0.02);
}

TEST(XiEval, FullyCensoredIgnoresEvents) {
    auto p = make_params(2, 2, {{1, 2}, {0.5, 1}}, {{0.3, 0.2}, {0.1, 0.4}}, {0.2, 0.1}, {1, 0.5});
    auto grid = ConvGrid::covering(10.0, 0.05);
    auto tab = compute_h(p, grid, 1e-6);
    EventHistory none(2, 10.0), fake(2, 10.0);
    fake.times[0] = {1.0, 2.0};
    fake.times[1] = {3.0};
    EXPECT_EQ(xi_eval(p, none, tab, grid), xi_eval(p, fake, tab, grid));
    EXPECT_EQ(compensator_eval(p, none, tab, grid), compensator_eval(p, fake, tab, grid));
}

TEST(XiEval, GridMismatch) {
    auto p = pmbp21_reference();
    auto tab = compute_h(p, ConvGrid::covering(30.0, 0.05), 1e-6);
    EXPECT_THROW(xi_eval(p, reference_history(), tab, ConvGrid::covering(30.0, 0.1)), DomainError);
}

TEST(CompensatorEval, PoissonCase) {
    auto p = make_params(2, 2, {{1, 1}, {1, 1}}, {{0, 0}, {0, 0}}, {0, 0}, {1.5, 0.25});
    auto grid = ConvGrid::covering(10.0, 0.1);
    auto Xi = compensator_eval(p, EventHistory(2, 10.0), compute_h(p, grid, 1e-6), grid);
    for (std::size_t q = 0; q < grid.size(); ++q) {
        EXPECT_EQ(Xi[q][0], 1.5 * grid.time(q));
        EXPECT_EQ(Xi[q][1], 0.25 * grid.time(q));
    }
}

TEST(CompensatorEval, TrapezoidConsistencyAndMonotone) {
    auto p = pmbp21_reference(0.5);
    auto h = reference_history();
    auto grid = ConvGrid::covering(30.0, 0.01);
    auto tab = compute_h(p, grid, 1e-6);
    auto xi = xi_eval(p, h, tab, grid);
    auto Xi = compensator_eval(p, h, tab, grid);
    double maxxi = 0;
    for (const auto& r : xi) maxxi = std::max({maxxi, r[0], r[1]});
    std::vector<double> trap = {Xi[1][0], Xi[1][1]};  // impulse mass sits in the first cell
    for (std::size_t q = 1; q < grid.size(); ++q) {
        for (int i = 0; i < 2; ++i) {
            if (q > 1) trap[i] += 0.5 * (xi[q - 1][i] + xi[q][i]) * grid.step;
            EXPECT_LE(Xi[q - 1][i], Xi[q][i]);
            EXPECT_LE(std::abs(trap[i] - Xi[q][i]), 3.0 * grid.step * maxxi);
        }
    }
}

TEST(FastEvaluator, AgreesWithGridPath) {
    auto p = pmbp21_reference(0.8);
    auto h = reference_history();
    auto grid = ConvGrid::covering(30.0, 0.01);
    auto tab = compute_h(p, grid, 1e-6);
    auto xi = xi_eval(p, h, tab, grid);
    auto Xi = compensator_eval(p, h, tab, grid);
    ResponseTables<double> rt(p, tab);
    PmbpEvaluator<double> ev(rt, h);
    PmbpEvaluator<double>::Values v;
    for (std::size_t q = 1; q < grid.size(); q += 13) {
        ev.at(grid.time(q), true, true, v);
        for (int i = 0; i < 2; ++i) {
            EXPECT_NEAR(v.xi[i], xi[q][i], 5.0 * grid.step * xi[q][i]);
            EXPECT_NEAR(v.Xi[i], Xi[q][i], 5.0 * grid.step * Xi[q][i]);
        }
    }
    // on-grid response tables reproduce the stored H and h exactly
    for (std::size_t q : {0u, 5u, 1234u, 3000u}) {
        EXPECT_NEAR(rt.H(0, 0, grid.time(q)), tab.H[0][q], 1e-12);
        EXPECT_NEAR(rt.h(1, 0, grid.time(q)), tab.h[2][q], 1e-12);
    }
}

// ---- closed form -----------------------------------------------------------

TEST(ClosedForm, NoExcitationIsConstant) {
    auto p = make_params(2, 1, {{1, 1}, {0.2, 0.5}}, {{0.0, 0.0}, {0.5, 0.5}}, {0, 0}, {1.3, 1.0});
    for (double t : {0.5, 3.0, 20.0}) EXPECT_NEAR(closed_form_pmbp21(p, {2.5, 5.0}, t).xi1, 1.3, 1e-12);
}

TEST(ClosedForm, SelfExcitationLimit) {
    auto p = make_params(2, 1, {{1, 1}, {0.2, 0.5}}, {{0.5, 0.0}, {0.5, 0.5}}, {0, 0}, {1.0, 1.0});
    for (double t : {0.5, 2.0, 7.0}) {
        const double expect = 1.0 * (1.0 + 0.5 / (0.5 - 1.0) * (std::exp((0.5 - 1.0) * t) - 1.0));
        EXPECT_NEAR(closed_form_pmbp21(p, {}, t).xi1, expect, 1e-12);
    }
    EXPECT_NEAR(closed_form_pmbp21(p, {}, 200.0).xi1, 2.0, 1e-12);
}

TEST(ClosedForm, CompensatorDerivativeIsIntensity) {
    auto p = pmbp21_reference(0.7);
    auto h = reference_history();
    for (double t : {1.0, 3.3, 7.0, 20.0}) {
        const double s = 1e-6;
        auto a = closed_form_pmbp21(p, h.times[1], t - s), b = closed_form_pmbp21(p, h.times[1], t + s);
        auto c = closed_form_pmbp21(p, h.times[1], t);
        EXPECT_NEAR((b.Xi1 - a.Xi1) / (2 * s), c.xi1, 1e-7);
        EXPECT_NEAR((b.Xi2 - a.Xi2) / (2 * s), c.xi2, 1e-7);
    }
}

TEST(ClosedForm, EqualRateBranchIsContinuous) {
    auto p = pmbp21_reference();
    p.theta(1, 0) = p.theta(0, 1);
    auto q = p;
    q.theta(1, 0) *= 1.0 + 1e-7;
    auto a = closed_form_pmbp21(p, {2.5, 5.0}, 9.0), b = closed_form_pmbp21(q, {2.5, 5.0}, 9.0);
    EXPECT_NEAR(a.xi2, b.xi2, 1e-5);
    EXPECT_NEAR(a.Xi2, b.Xi2, 1e-5);
}

TEST(ClosedForm, DegenerateParameters) {
    auto p = pmbp21_reference();
    p.alpha(0, 0) = 1.0;
    EXPECT_THROW(closed_form_pmbp21(p, {}, 1.0), DegenerateParameterError);
    auto q = pmbp21_reference();
    q.theta(0, 1) = 0.5;  // (0.5 - 1) * 1 + 0.5 = 0
    EXPECT_THROW(closed_form_pmbp21(q, {}, 1.0), DegenerateParameterError);
    EXPECT_THROW(closed_form_pmbp21(testing_pmbp::univariate(1, 0.5, 1, 0, 1), {}, 1.0), DimensionError);
}

TEST(ClosedForm, AgreesWithGridPath) {
    auto p = pmbp21_reference(1.0);
    auto h = reference_history();
    auto grid = ConvGrid::covering(30.0, 0.01);
    auto xi = xi_eval(p, h, compute_h(p, grid, 1e-6), grid);
    for (std::size_t q = 1; q < grid.size(); q += 11) {
        auto cf = closed_form_pmbp21(p, h.times[1], grid.time(q));
        EXPECT_NEAR(xi[q][0], cf.xi1, 0.02 * cf.xi1);
        EXPECT_NEAR(xi[q][1], cf.xi2, 0.02 * cf.xi2);
    }
}

// ---- Monte Carlo -----------------------------------------------------------

TEST(MonteCarlo, NoExcitationIsExact) {
    auto p = make_params(2, 1, {{1, 1}, {1, 1}}, {{0, 0}, {0, 0}}, {0, 0}, {0.7, 0.2});
    auto est = xi_monte_carlo(p, reference_history(), {1.0, 4.0, 12.0}, 50, 3);
    for (std::size_t q = 0; q < 3; ++q) {
        EXPECT_EQ(est.mean[q][0], 0.7);
        EXPECT_EQ(est.mean[q][1], 0.2);
        EXPECT_EQ(est.se[q][0], 0.0);
    }
}

TEST(MonteCarlo, StandardErrorScaling) {
    auto p = pmbp21_reference();
    std::vector<double> times = {3.0, 6.0, 10.0, 16.0, 25.0};
    auto a = xi_monte_carlo(p, reference_history(), times, 1000, 1);
    auto b = xi_monte_carlo(p, reference_history(), times, 2000, 2);
    double sa = 0, sb = 0;
    for (std::size_t q = 0; q < times.size(); ++q) {
        sa += a.se[q][0];
        sb += b.se[q][0];
    }
    EXPECT_NEAR(sb / sa, 1.0 / std::sqrt(2.0), 0.2 / std::sqrt(2.0));
}

// ---- grad_h ----------------------------------------------------------------

TEST(GradH, NuIsZero) {
    auto p = pmbp21_reference();
    auto g = grad_h(p, ConvGrid::covering(10, 0.05), 1e-6, {ParamId::Nu, 0, 0});
    for (const auto& s : g.dh)
        for (double x : s) EXPECT_EQ(x, 0.0);
}

TEST(GradH, UnivariateAlphaClosedForm) {
    auto p = testing_pmbp::univariate(1.0, 0.5, 1.0, 0.0, 1);
    auto grid = ConvGrid::covering(20.0, 0.01);
    auto g = grad_h(p, grid, 1e-8, {ParamId::Alpha, 0, 0});
    for (std::size_t q = 0; grid.time(q) <= 5.0; ++q) {
        const double t = grid.time(q);
        const double exact = std::exp(-0.5 * t) * (1.0 + 0.5 * t);
        EXPECT_NEAR(g.dh[0][q], exact, 0.02 * exact);
    }
}

TEST(GradH, MatchesFiniteDifferences) {
    auto p = pmbp21_reference();
    auto grid = ConvGrid::covering(15.0, 0.02);
    for (ParamId id : {ParamId{ParamId::Alpha, 0, 0}, ParamId{ParamId::Theta, 0, 0}, ParamId{ParamId::Alpha, 1, 0},
                       ParamId{ParamId::Theta, 1, 0}, ParamId{ParamId::Alpha, 0, 1}}) {
        HOptions o;
        o.fixed_terms = compute_h(p, grid, 1e-6).k_star;
        auto g = grad_h(p, grid, 1e-6, id, o);
        auto pp = p, pm = p;
        const double s = 1e-5;
        set_param(pp, id, get_param(p, id) + s);
        set_param(pm, id, get_param(p, id) - s);
        auto hp = compute_h(pp, grid, 1e-6, o), hm = compute_h(pm, grid, 1e-6, o);
        double scale = 0;
        for (const auto& ser : g.dh)
            for (double x : ser) scale = std::max(scale, std::abs(x));
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t q = 0; q < grid.size(); ++q) {
                const double fd = (hp.h[k][q] - hm.h[k][q]) / (2 * s);
                EXPECT_NEAR(g.dh[k][q], fd, 1e-3 * std::abs(fd) + 1e-6 * std::max(1.0, scale)) << id.name();
                const double fdH = (hp.H[k][q] - hm.H[k][q]) / (2 * s);
                EXPECT_NEAR(g.dH[k][q], fdH, 1e-3 * std::abs(fdH) + 1e-6 * std::max(1.0, scale)) << id.name();
            }
    }
}
