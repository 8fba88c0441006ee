#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pmbp/model.hpp"
#include "test_helpers.hpp"

using namespace pmbp;

TEST(PhiEval, ZeroBranchingGivesZeroEntry) {
    auto p = make_params(2, 0, {{1, 2}, {3, 4}}, {{0.0, 0.3}, {0.1, 0.2}}, {0, 0}, {1, 1});
    EXPECT_EQ(phi_eval(p, 0.7)(0, 0), 0.0);
}

TEST(PhiEval, DirectSubstitution) {
    auto p = testing_pmbp::univariate(1.0, 0.5, 1.0);
    EXPECT_DOUBLE_EQ(phi_eval(p, 0.0)(0, 0), 0.5);
    EXPECT_EQ(phi_eval(p, -1.0)(0, 0), 0.0);
}

TEST(PhiIntegral, Values) {
    auto p = testing_pmbp::univariate(1.0, 0.5, 1.0);
    EXPECT_EQ(phi_integral(p, 0.0)(0, 0), 0.0);
    EXPECT_NEAR(phi_integral(p, 1.0)(0, 0), 0.31606027941427883, 1e-15);
    EXPECT_NEAR(phi_integral(p, 1e3)(0, 0), 0.5, 1e-15);
    EXPECT_EQ(phi_integral(p, -2.0)(0, 0), 0.0);
}

TEST(PhiIntegral, Monotone) {
    auto p = make_params(2, 1, {{0.3, 2}, {5, 0.01}}, {{0.4, 0.3}, {0.1, 1.2}}, {0, 0}, {1, 1});
    auto prev = phi_integral(p, 0.0);
    for (double t = 0.05; t < 20; t += 0.05) {
        auto cur = phi_integral(p, t);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) EXPECT_LE(prev(i, j), cur(i, j));
        prev = cur;
    }
}

TEST(KernelPrimitives, IntegralsAgreeWithQuadrature) {
    // K2 and K3 against a fine midpoint rule of K1 and K2 (including the small-x series branch)
    for (double th : {1e-3, 0.3, 2.0}) {
        for (double t : {1e-4, 0.05, 1.0, 7.0}) {
            const int n = 20000;
            double i2 = 0, i3 = 0;
            for (int k = 0; k < n; ++k) {
                const double s = (k + 0.5) * t / n;
                i2 += kernel::Phi(0.7, th, s) * t / n;
                i3 += kernel::Phi2(0.7, th, s) * t / n;
            }
            EXPECT_NEAR(kernel::Phi2(0.7, th, t), i2, 1e-8 * std::max(1.0, i2) + 1e-14);
            EXPECT_NEAR(kernel::Phi3(0.7, th, t), i3, 1e-8 * std::max(1.0, i3) + 1e-14);
        }
    }
}

TEST(SpectralRadius, Examples) {
    EXPECT_DOUBLE_EQ(spectral_radius(MatrixD::identity(2)), 1.0);
    EXPECT_NEAR(spectral_radius(MatrixD::from_rows({{0.2, 0.2}, {0.2, 0.2}})), 0.4, 1e-14);
    EXPECT_EQ(spectral_radius(MatrixD()), 0.0);
    EXPECT_THROW(spectral_radius(MatrixD(2, 3)), DimensionError);
}

TEST(SpectralRadius, PowerIterationMatchesKnownValues) {
    // cyclic permutation: eigenvalues are cube roots of unity
    auto c = MatrixD::from_rows({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}});
    EXPECT_NEAR(spectral_radius(c), 1.0, 1e-8);
    // diagonal and triangular
    auto t = MatrixD::from_rows({{0.3, 0.5, 0.1}, {0, 0.6, 0.2}, {0, 0, 0.1}});
    EXPECT_NEAR(spectral_radius(t), 0.6, 1e-8);
    // constant matrix n x n with entry c has radius n c
    MatrixD k(4, 4, 0.1);
    EXPECT_NEAR(spectral_radius(k), 0.4, 1e-8);
}

TEST(SpectralRadius, Homogeneity) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int rep = 0; rep < 20; ++rep) {
        MatrixD m(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = u(rng);
        const double c = 3.0 * u(rng);
        EXPECT_NEAR(spectral_radius(m * c), c * spectral_radius(m), 1e-7 * (1 + c));
    }
}

TEST(Subcriticality, Examples) {
    auto p = make_params(2, 2, {{1, 1}, {1, 1}}, {{0.5, 0}, {0, 0.5}}, {0, 0}, {1, 1});
    auto r = check_subcriticality(p);
    EXPECT_NEAR(r.rho_EE, 0.5, 1e-12);
    EXPECT_EQ(r.rho_EcEc, 0.0);
    EXPECT_EQ(r.rho_cross, 0.0);
    EXPECT_TRUE(r.subcritical);

    auto q = make_params(2, 1, {{1, 1}, {1, 1}}, {{0.5, 0.5}, {0.5, 0.5}}, {0, 0}, {1, 1});
    r = check_subcriticality(q);
    EXPECT_NEAR(r.rho_EE, 0.5, 1e-12);
    EXPECT_NEAR(r.rho_EcEc, 0.5, 1e-12);
    EXPECT_NEAR(r.rho_cross, 0.5, 1e-12);
    EXPECT_TRUE(r.subcritical);
}

TEST(Subcriticality, CrossInfiniteWhenEBlockCritical) {
    auto p = make_params(2, 1, {{1, 1}, {1, 1}}, {{1.2, 0.1}, {0.1, 0.1}}, {0, 0}, {1, 1});
    auto r = check_subcriticality(p);
    EXPECT_TRUE(std::isinf(r.rho_cross));
    EXPECT_FALSE(r.subcritical);
}

TEST(Subcriticality, ReducesToSingleCondition) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 0.7);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<std::vector<double>> a(3, std::vector<double>(3));
        for (auto& row : a)
            for (auto& x : row) x = u(rng);
        const std::vector<std::vector<double>> th(3, std::vector<double>(3, 1.0));
        for (int e : {0, 3}) {
            auto p = make_params(3, e, th, a, {0, 0, 0}, {1, 1, 1});
            auto r = check_subcriticality(p);
            EXPECT_EQ(r.subcritical, spectral_radius(p.alpha) < 1.0);
        }
    }
}

TEST(SplitKernel, Complementarity) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.05, 2.0), tt(0, 10);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<std::vector<double>> a(3, std::vector<double>(3)), th = a;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                a[i][j] = u(rng) / 3;
                th[i][j] = u(rng);
            }
        auto p = make_params(3, rep % 4, th, a, {0, 0, 0}, {1, 1, 1});
        auto s = split_kernel(p);
        const double t = tt(rng);
        auto full = phi_eval(p, t), sum = s.phi_E(t) + s.phi_Ec(t);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                EXPECT_EQ(full(i, j), sum(i, j));
                if (j >= p.e) {
                    EXPECT_EQ(s.phi_E(t)(i, j), 0.0);
                } else {
                    EXPECT_EQ(s.phi_Ec(t)(i, j), 0.0);
                }
            }
    }
}

TEST(ModelParams, Validation) {
    EXPECT_THROW(make_params(1, 0, {{-1.0}}, {{0.5}}, {0}, {1}), std::invalid_argument);
    EXPECT_THROW(make_params(1, 0, {{1.0}}, {{-0.5}}, {0}, {1}), std::invalid_argument);
    EXPECT_THROW(make_params(1, 2, {{1.0}}, {{0.5}}, {0}, {1}), DimensionError);
    EXPECT_THROW(make_params(2, 0, {{1.0}}, {{0.5}}, {0}, {1}), DimensionError);
}
