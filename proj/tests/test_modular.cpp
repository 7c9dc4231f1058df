#include <gtest/gtest.h>

#include <random>

#include <kmq/modular.hpp>

using namespace kmq;

TEST(Context, ThetaRangeAndDerivedQuantities)
{
    EXPECT_THROW(ModularContext(0.0), DomainError);
    EXPECT_THROW(ModularContext(pi / 2), DomainError);
    EXPECT_THROW(ModularContext(2.0), DomainError);
    EXPECT_THROW(ModularContext(pi / 5, 1e-4, 0.0), DomainError);
    ModularContext mc(pi / 5);
    // |b| = 1 makes eta purely imaginary and q, qbar inside the unit disc
    EXPECT_NEAR(mc.eta.imag(), std::cos(pi / 5), 1e-15);
    EXPECT_LT(std::abs(mc.q), 1.0);
    EXPECT_LT(std::abs(mc.qbar), 1.0);
}

TEST(Faddeev, FunctionalEquationsAndPole)
{
    for (double th : {pi / 5, 0.5, 1.2}) {
        ModularContext mc(th);
        auto r = faddeev_phi_check({-0.4, -0.2, 0, 0.2, 0.4}, mc);
        EXPECT_EQ(r.verdict, Verdict::pass) << th << " " << r.residual;
    }
    ModularContext mc(pi / 5);
    EXPECT_THROW(faddeev_phi(mc.eta, mc), PoleHit);
    EXPECT_EQ(faddeev_phi_inversion_info(mc).verdict, Verdict::skipped);
}

TEST(Psi, RealityEvennessPartner)
{
    ModularContext mc(pi / 5);
    EXPECT_EQ(psi_reality_check({-1, -0.3, 0.3, 1.1}, {-0.9, 0.4, 0.7}, mc).verdict, Verdict::pass);
    EXPECT_EQ(psi_symmetry_check({{0.3, 0.4}, {cd(0.3, 0.1), cd(0.4, -0.2)}, {-0.7, cd(0.2, 0.3)}}, mc).verdict,
              Verdict::pass);
    // even in x
    EXPECT_LT(rel_residual(psi(0.4, cd(0.3, 0.1), mc), psi(0.4, cd(-0.3, -0.1), mc)), 1e-10);
}

TEST(Psi, EigenEquations)
{
    ModularContext mc(pi / 5);
    EXPECT_EQ(psi_eigen_check(0.3, 0.4, mc).verdict, Verdict::pass);
    EXPECT_EQ(psi_eigen_check(cd(0.2, 0.1), cd(-0.5, 0.1), mc).verdict, Verdict::pass);
}

TEST(Psi, PoleCancellation)
{
    ModularContext mc(pi / 5);
    EXPECT_EQ(psi_pole_cancellation_check(0.3, mc).verdict, Verdict::pass);
}

TEST(Weights, SymmetryAndIntegral)
{
    ModularContext mc(pi / 5);
    EXPECT_EQ(weight_symmetry_modular(cd(0.1, 0.3), {-0.6, 0.2, 0.9}, mc).verdict, Verdict::pass);
    auto r = weight_integral_check(cd(0.1, 0.3), 0.7, -0.2, mc);
    EXPECT_EQ(r.verdict, Verdict::pass) << r.residual << " " << r.note;
}

TEST(Weights, SummationOverY)
{
    ModularContext mc(pi / 5);
    auto r = summation_check_modular(cd(0, 0.2), cd(0, 0.25), 0.3, 0.5, mc);
    EXPECT_EQ(r.verdict, Verdict::pass) << r.residual << " " << r.note;
}

TEST(Quadrature, WindowTooSmallIsReported)
{
    ModularContext mc(pi / 5, 1e-4, 3);
    EXPECT_THROW(weight_integral_check(cd(0, 0.25), 0.4, 0.9, mc), WindowTooSmall);
}

// property: Psi is real for real arguments at random couplings
TEST(Property, PsiRealityRandomTheta)
{
    std::mt19937_64 g(37);
    std::uniform_real_distribution<double> th(0.3, 1.3), s(-1.2, 1.2);
    for (int k = 0; k < 4; ++k) {
        ModularContext mc(th(g));
        auto r = psi_reality_check({s(g), s(g)}, {s(g), s(g)}, mc);
        EXPECT_EQ(r.verdict, Verdict::pass) << mc.theta << " " << r.residual;
    }
}

// property: V_mu(x, y) = V_mu(y, x) = V_mu(-x, -y) at random mu
TEST(Property, WeightSymmetryRandomMu)
{
    std::mt19937_64 g(41);
    std::uniform_real_distribution<double> re(-0.15, 0.15), im(0.1, 0.35), x(-1, 1);
    ModularContext mc(pi / 5);
    for (int k = 0; k < 4; ++k) {
        auto r = weight_symmetry_modular(cd(re(g), im(g)), {x(g), x(g), x(g)}, mc);
        EXPECT_EQ(r.verdict, Verdict::pass) << r.residual;
    }
}
