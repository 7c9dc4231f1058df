#include <gtest/gtest.h>

#include <random>

#include <kmq/orthopoly.hpp>

using namespace kmq;

TEST(Poly, LowOrdersByHand)
{
    QContext<cd> ctx(0.4);
    cd xi(1.3, 0.2);
    cd P2 = xi * xi + 1.0 / (xi * xi) + 1.0 + 1.0 / (ctx.q * ctx.q);
    for (auto m : {PolyEvalMethod::explicit_sum, PolyEvalMethod::forward_recursion, PolyEvalMethod::qshift_recursion}) {
        EXPECT_LT(std::abs(poly_P(0, xi, m, ctx) - 1.0), 1e-15);
        EXPECT_LT(rel_residual(poly_P(1, xi, m, ctx), cd(xi + 1.0 / xi)), 1e-15);
        EXPECT_LT(rel_residual(poly_P(2, xi, m, ctx), P2), 1e-14) << to_string(m);
    }
}

TEST(Poly, SymmetricUnderInversion)
{
    QContext<cd> ctx(cd(0.4, 0.1));
    cd xi(0.7, 0.3);
    for (long n : {3L, 7L, 12L})
        EXPECT_LT(rel_residual(poly_P(n, xi, PolyEvalMethod::forward_recursion, ctx),
                               poly_P(n, cd(1.0 / xi), PolyEvalMethod::forward_recursion, ctx)),
                  1e-13);
}

TEST(Poly, ScaledMatchesGaussianTimesP)
{
    QContext<cd> ctx(0.45);
    cd xi(1.1, -0.4);
    auto p = poly_p_scaled(10, xi, ctx);
    auto P = poly_P_all(10, xi, ctx);
    for (long n = 0; n <= 10; ++n) EXPECT_LT(rel_residual(p[n], cd(std::pow(ctx.q, n * n / 2.0) * P[n])), 1e-12);
}

TEST(Poly, MethodsAgreeAndDifferenceEquations)
{
    QContext<cd> ctx(0.4), c35(0.35);
    EXPECT_EQ(poly_methods_check(20, cd(0.7, 0.3), ctx).verdict, Verdict::pass);
    EXPECT_EQ(poly_methods_check(30, cd(1.9, 0.3), ctx).verdict, Verdict::pass);
    EXPECT_EQ(poly_P_difference_checks(3, cd(1.3), ctx).verdict, Verdict::pass);
    EXPECT_EQ(poly_P_difference_checks(5, cd(0.7, 0.2), c35).verdict, Verdict::pass);
    EXPECT_EQ(poly_P_difference_checks(0, cd(0.7, 0.2), c35).verdict, Verdict::pass);
}

TEST(Poly, GuardsAndDegenerateArguments)
{
    QContext<cd> ctx(0.4);
    EXPECT_THROW(poly_P(-1, cd(1.2), PolyEvalMethod::explicit_sum, ctx), DomainError);
    EXPECT_THROW(poly_P(3, cd(0), PolyEvalMethod::explicit_sum, ctx), DomainError);
    EXPECT_THROW(poly_P(3, cd(1), PolyEvalMethod::qshift_recursion, ctx), DegenerateArgument);
    QContext<cd> small(0.01);
    EXPECT_THROW(poly_P(60, cd(1.2), PolyEvalMethod::forward_recursion, small), OverflowGuard);
}

TEST(GeneratingFunctions, SingleBilinearOrthogonality)
{
    QContext<cd> ctx(0.4);
    EXPECT_EQ(genfun_checks(cd(0.3), cd(1.2), cd(0.8), ctx).verdict, Verdict::pass);
    EXPECT_EQ(genfun_checks(cd(0.1, 0.2), cd(0.9, 0.4), cd(1.3, -0.2), ctx).verdict, Verdict::pass);
    EXPECT_EQ(genfun_B8_check(8, ctx).verdict, Verdict::pass);
    EXPECT_EQ(genfun_B8_check(6, QContext<cd>(cd(0.3, 0.4))).verdict, Verdict::pass);
    EXPECT_THROW(genfun_checks(cd(0.5), cd(1.2), cd(0.8), ctx), DomainError);
}

TEST(Chi, EulerAndTerminatingCases)
{
    QContext<cd> ctx(cd(0.4, 0.15));
    cd u(0.9, 0.3);
    // z = 0: Euler's product (u^2 q^2; q^2)_inf
    EXPECT_LT(rel_residual(chi(u, cd(0), ctx), qpoch_inf(cd(u * u * ctx.q2), ctx.q2, ctx)), 1e-13);
    // z = 1 truncates after the first term
    EXPECT_LT(std::abs(chi(u, cd(1), ctx) - 1.0), 1e-15);
    EXPECT_EQ(chi_poly_check(cd(1.1, 0.2), 10, QContext<cd>(0.4)).verdict, Verdict::pass);
}

TEST(Chi, EquationsAndRatio)
{
    QContext<cd> c45(0.45), c5(0.5), cz(cd(0.3, 0.4));
    EXPECT_EQ(chi_equation_checks(cd(1.1), cd(0.3), c45).verdict, Verdict::pass);
    EXPECT_EQ(chi_equation_checks(cd(0, 0.8), cd(0.2), c5).verdict, Verdict::pass);
    EXPECT_EQ(chi_equation_checks(cd(1.3), cd(1.0), c5).verdict, Verdict::pass);
    EXPECT_EQ(chi_equation_checks(cd(0.6, 1.1), cd(-0.7, 0.5), cz).verdict, Verdict::pass);
    EXPECT_EQ(chi_ratio_check(2, cd(0.3), c5).verdict, Verdict::pass);
    EXPECT_THROW(chi_equation_checks(cd(0), cd(0.3), c5), DomainError);
}

// property: three evaluation methods agree for random (n, xi, q)
TEST(Property, PolyMethodsRandom)
{
    std::mt19937_64 g(3);
    std::uniform_real_distribution<double> rq(0.2, 0.6), a(-1, 1), rx(0.5, 2);
    std::uniform_int_distribution<long> n(0, 15);
    for (int k = 0; k < 30; ++k) {
        QContext<cd> ctx(std::polar(rq(g), a(g)));
        auto r = poly_methods_check(n(g), std::polar(rx(g), 3 * a(g)), ctx);
        EXPECT_EQ(r.verdict, Verdict::pass) << r.residual;
    }
}

// property: chi(u, q^{-2m}) is a polynomial, chi(u, z) continuous in z near it
TEST(Property, ChiPolynomialRandom)
{
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> rq(0.2, 0.6), a(-2, 2), ru(0.5, 1.5);
    for (int k = 0; k < 10; ++k) {
        QContext<cd> ctx(std::polar(rq(g), 0.5 * a(g)));
        auto r = chi_poly_check(std::polar(ru(g), a(g)), 6, ctx);
        EXPECT_EQ(r.verdict, Verdict::pass) << r.residual;
    }
}
