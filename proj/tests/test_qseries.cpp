#include <gtest/gtest.h>

#include <random>

#include <kmq/qseries.hpp>
#include <kmq/quad.hpp>

using namespace kmq;

namespace {

cd euler_pentagonal(cd q)
{
    cd s = 0;
    for (long k = -40; k <= 40; ++k) s += (k % 2 ? -1.0 : 1.0) * std::pow(q, double(k * (3 * k - 1) / 2));
    return s;
}

} // namespace

TEST(QPochhammer, FiniteProductsByHand)
{
    cd x(0.3, 0.2), q(0.5, -0.1);
    EXPECT_EQ(qpoch_finite(x, q, 0), cd(1));
    EXPECT_LT(std::abs(qpoch_finite(x, q, 2) - (1.0 - x) * (1.0 - x * q)), 1e-16);
    // (x;q)_{-n} = 1 / (x q^{-n}; q)_n
    cd m2 = 1.0 / ((1.0 - x / (q * q)) * (1.0 - x / q));
    EXPECT_LT(std::abs(qpoch(x, q, -2) - m2), 1e-14);
}

TEST(QPochhammer, EulerFunctionAtOneHalf)
{
    QContext<cd> ctx(0.5, 1e-12, 1e-17);
    // (1/2; 1/2)_inf
    EXPECT_NEAR(qpoch_inf(cd(0.5), cd(0.5), ctx).real(), 0.288788095086602421278899721929, 1e-14);
}

TEST(QPochhammer, PentagonalNumberTheorem)
{
    for (cd q : {cd(0.4), cd(-0.3), cd(0.3, 0.5), cd(0.1, -0.7)}) {
        QContext<cd> ctx(q, 1e-12, 1e-17);
        EXPECT_LT(rel_residual(qpoch_inf(q, q, ctx), euler_pentagonal(q)), 1e-13) << q;
    }
}

TEST(QPochhammer, QBinomialTheorem)
{
    // sum (a;q)_n/(q;q)_n z^n = (az;q)/(z;q)
    QContext<cd> ctx(cd(0.4, 0.2), 1e-12, 1e-17);
    cd a(0.7, -0.3), z(0.35, 0.1), s = 0, t = 1;
    for (long n = 0; n < 200; ++n) {
        s += t;
        t *= (1.0 - a * std::pow(ctx.q, double(n))) / (1.0 - std::pow(ctx.q, double(n + 1))) * z;
    }
    EXPECT_LT(rel_residual(s, qpoch_inf(cd(a * z), ctx.q, ctx) / qpoch_inf(z, ctx.q, ctx)), 1e-13);
}

TEST(QPochhammer, LogFormMatchesDirect)
{
    QContext<cd> ctx(cd(0.45, 0.1));
    for (cd x : {cd(2.5, 1), cd(0.3), cd(-40, 3)}) {
        cd d = qpoch_inf(x, ctx.q2, ctx);
        EXPECT_LT(rel_residual(log_qpoch_inf(x, ctx.q2, ctx).value("t"), d), 1e-12);
    }
}

TEST(QContext, RejectsBadParameters)
{
    EXPECT_THROW(QContext<cd>(1.0), DomainError);
    EXPECT_THROW(QContext<cd>(cd(0.8, 0.7)), DomainError);
    EXPECT_THROW(QContext<cd>(0.4, 1e-9, 1e-8), DomainError);
    EXPECT_THROW(QContext<cd>(0.4, 1e-9, -1, 0), DomainError);
}

TEST(QContext, TruncationExhaustedWhenTermsCannotShrink)
{
    QContext<cd> ctx(0.999, 1e-9, 1e-300, 50);
    EXPECT_THROW(qpoch_inf(cd(0.5), ctx.q, ctx), TruncationExhausted);
}

TEST(Theta, JacobiTripleProductAllKinds)
{
    for (cd q : {cd(0.4), cd(0.3, 0.5), cd(-0.6)}) {
        QContext<cd> ctx(q);
        auto r = theta_sum_product_check<cd>({cd(1.3, 0.2), cd(0.7, -0.4), cd(-1.1, 0.5), cd(2.1)}, ctx);
        EXPECT_EQ(r.verdict, Verdict::pass) << r.residual;
    }
}

TEST(Theta, HVanishesAtOne)
{
    QContext<cd> ctx(0.4);
    EXPECT_LT(std::abs(theta(ThetaKind::H, cd(1), ctx)), 1e-14);
}

TEST(Theta, QuasiPeriodicityOfH)
{
    // H(q u) = -q^{-1} u^{-2} H(u)
    QContext<cd> ctx(cd(0.35, 0.2));
    cd u(0.8, 0.3);
    cd lhs = theta(ThetaKind::H, cd(ctx.q * u), ctx);
    cd rhs = -theta(ThetaKind::H, u, ctx) / (ctx.q * u * u);
    EXPECT_LT(rel_residual(lhs, rhs), 1e-12);
}

TEST(Theta, RepresentationMismatchIsReported)
{
    QContext<cd> loose(0.4, 1e-9, 1e-10, 3);
    EXPECT_THROW(theta(ThetaKind::theta3, cd(1.3, 0.2), loose), Error);
}

TEST(Constants, ThetaFourAndMF)
{
    for (cd q : {cd(0.4), cd(0.3, 0.5)}) {
        auto r = theta_constants_check(QContext<cd>(q));
        EXPECT_EQ(r.verdict, Verdict::pass) << r.residual;
    }
}

TEST(Gauss, DoubleSumAndSecondIdentity)
{
    QContext<cd> ctx(0.4);
    EXPECT_EQ(gauss_double_sum_check(cd(0.3), cd(0.2), ctx).verdict, Verdict::pass);
    EXPECT_EQ(gauss_check(cd(0.2), cd(0.3), ctx).verdict, Verdict::pass);
    QContext<cd> cz(cd(0.2, 0.3));
    EXPECT_EQ(gauss_double_sum_check(cd(0.1, 0.1), cd(0.15), cz).verdict, Verdict::pass);
}

TEST(Jacobi, TransformHoldsAndNegativeControlFails)
{
    for (double th : {0.4, pi / 5, 1.1}) {
        auto r = jacobi_transform_check(0.3, std::exp(cd(0, th)));
        EXPECT_EQ(r.verdict, Verdict::pass) << th << " " << r.residual;
    }
    auto neg = jacobi_transform_check(0.3, std::exp(cd(0, pi / 5)), 1e-9, 0.01);
    EXPECT_EQ(neg.verdict, Verdict::expected_fail);
    EXPECT_THROW(jacobi_transform_check(0.3, cd(1.0)), DomainError);
}

TEST(QuadPrecision, ProductsAgreeWithDouble)
{
    QContext<cq> cx(to_cq(0.4), 1e-10, 1e-32);
    QContext<cd> cd_ctx(0.4, 1e-12, 1e-17);
    cq v = qpoch_inf(to_cq(0.3), cx.q, cx);
    cd w = qpoch_inf(cd(0.3), cd_ctx.q, cd_ctx);
    EXPECT_NEAR(double(v.real()), w.real(), 1e-14);
}

// property: theta sum = product at random points of the annulus
TEST(Property, ThetaSumProductRandom)
{
    std::mt19937_64 g(7);
    std::uniform_real_distribution<double> r(0.1, 0.7), a(-3, 3), ru(0.5, 2);
    for (int k = 0; k < 20; ++k) {
        QContext<cd> ctx(std::polar(r(g), a(g)));
        auto rep = theta_sum_product_check<cd>({std::polar(ru(g), a(g))}, ctx);
        EXPECT_EQ(rep.verdict, Verdict::pass) << ctx.q << " " << rep.residual;
    }
}

// property: (x;q)_inf = (1 - x)(xq;q)_inf
TEST(Property, ShiftRelation)
{
    std::mt19937_64 g(11);
    std::uniform_real_distribution<double> r(0.05, 0.8), a(-3, 3), rx(0.1, 5);
    for (int k = 0; k < 50; ++k) {
        QContext<cd> ctx(std::polar(r(g), a(g)));
        cd x = std::polar(rx(g), a(g));
        cd lhs = qpoch_inf(x, ctx.q, ctx), rhs = (1.0 - x) * qpoch_inf(cd(x * ctx.q), ctx.q, ctx);
        EXPECT_LT(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(rhs)));
    }
}
