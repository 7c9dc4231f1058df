#include <gtest/gtest.h>

#include <random>

#include <kmq/fock.hpp>
#include <kmq/quad.hpp>

using namespace kmq;

TEST(Generators, QOscillatorRelations)
{
    // E+ E- and E- E+ are diagonal with 1 - q^{2a} and 1 - q^{2a+2}
    QContext<cd> ctx(0.4);
    auto g = fock_generators(std::exp(cd(0, 0.3)), cd(0.9, 0.2), 10, ctx);
    MatC a = g.Ep * g.Em, b = g.Em * g.Ep;
    for (long k = 0; k + 1 < 10; ++k) {
        EXPECT_LT(std::abs(a(k, k) - (1.0 - std::pow(0.4, 2.0 * k))), 1e-14);
        EXPECT_LT(std::abs(b(k, k) - (1.0 - std::pow(0.4, 2.0 * k + 2))), 1e-14);
    }
    // K E+ = q E+ K on the interior
    MatC c = g.K * g.Ep - ctx.q * g.Ep * g.K;
    EXPECT_LT(c.block(0, 0, 9, 9).norm(), 1e-14);
}

TEST(Spectrum, BranchesForRegularisationsOneAndTwo)
{
    for (auto reg : {Regularisation::I, Regularisation::II}) {
        auto rep = spectral_experiment(0.4, {16, 32}, reg);
        for (long m = 0; m < 4; ++m)
            EXPECT_NEAR(rep.rows.back().lowest[m].real(), spectral_branch(m, 0.4, reg).real(), 1e-6) << m;
    }
}

TEST(Spectrum, RegularisationThreeSubsequencesDisagree)
{
    auto rep = spectral_experiment(0.4, {29, 30, 31, 32}, Regularisation::III);
    EXPECT_GT(rep.subsequence_gap, 0.1);
    EXPECT_EQ(spectral_check(0.4, {29, 30, 31, 32}, Regularisation::III).verdict, Verdict::pass);
}

TEST(Spectrum, Errors)
{
    EXPECT_THROW(spectral_experiment(1.2, {8}, Regularisation::I), DomainError);
    EXPECT_THROW(spectral_experiment(0.4, {16, 8}, Regularisation::I), DomainError);
    EXPECT_THROW(build_truncated_H({0, Regularisation::I, 1.0}, QContext<cd>(0.4)), DomainError);
}

TEST(VForm, CompletenessAndAntisymmetricSum)
{
    FockRepParams fp{std::exp(cd(0, 0.3)), cd(0.9, 0.2), cd(1.1, -0.1)};
    for (auto& r : completeness_checks_fock(fp, 14, 50, QContext<cd>(0.4)))
        EXPECT_LT(r.residual, 1e-8) << r.identity_id;
}

TEST(Brace, BoundaryValuesAndSymmetry)
{
    QContext<cd> ctx(0.4);
    for (long a = 0; a <= 4; ++a)
        for (long b = 0; b <= 4; ++b)
            EXPECT_LT(rel_residual(brace(a, b, 0, BraceMethod::closed_form, ctx), cd(std::pow(0.4, double(a * b)))),
                      1e-13);
    cd x = brace(2, 3, 4, BraceMethod::closed_form, ctx);
    EXPECT_EQ(x, brace(4, 2, 3, BraceMethod::closed_form, ctx));
    EXPECT_EQ(x, brace(3, 4, 2, BraceMethod::closed_form, ctx));
}

TEST(Brace, ThreeMethodsAgreeInQuadPrecision)
{
    for (double q : {0.3, 0.5}) {
        QContext<cq> ctx(to_cq(q), 1e-10, 1e-32);
        auto r = brace_agreement_check(6, ctx);
        EXPECT_LT(r.residual, 1e-10) << q;
    }
}

TEST(ClebschGordan, VacuumAndRaising)
{
    QContext<cd> ctx(0.4);
    CGParams cp{std::exp(cd(0, 0.3)), cd(0.9, 0.2), std::exp(cd(0, -0.5)), 1.1, std::exp(cd(0, 0.7))};
    EXPECT_EQ(cg_vacuum_check(cp, 30, ctx).verdict, Verdict::pass);
    EXPECT_EQ(cg_raising_check(cp, 30, 6, ctx).verdict, Verdict::pass);
}

TEST(Weights, NormalisationAtOne)
{
    // V_1(m, m') = (-1)^m delta / [q^{m+1/2}]
    QContext<cd> ctx(0.4, 1e-12, 1e-16);
    FockWeights fw(ctx);
    for (long m = 0; m < 6; ++m) {
        cd xi = ctx.half_pow(2 * m + 1);
        EXPECT_LT(rel_residual(fw.V(1.0, m, m), cd((m % 2 ? -1.0 : 1.0) / (xi - 1.0 / xi))), 1e-12);
        EXPECT_EQ(fw.V(1.0, m, m + 1), cd(0));
    }
    EXPECT_EQ(weight_normalisation_check(20, ctx).verdict, Verdict::pass);
}

TEST(Weights, ClosedFormSymmetryProduct)
{
    QContext<cd> ctx(0.4);
    EXPECT_EQ(weight_closed_vs_sum_check(0.5, 6, ctx).verdict, Verdict::pass);
    EXPECT_EQ(weight_symmetry_check(0.7, 5, ctx).verdict, Verdict::pass);
    EXPECT_EQ(weight_product_check(0.6, 5, ctx).verdict, Verdict::pass);
    EXPECT_THROW(weight_V_fock(0.0, 1, 1, ctx), DomainError);
}

TEST(Weights, TransitivityTailPolicy)
{
    QContext<cd> ctx(0.4);
    EXPECT_EQ(transitivity_check_fock(0.8, 0.7, 0, 0, 0, ctx).verdict, Verdict::pass);
    EXPECT_THROW(transitivity_check_fock(0.8, 0.7, 0, 0, 3, ctx), TailTooFat);
}

TEST(StarTriangle, HoldsAndScaledRFails)
{
    QContext<cd> ctx(-0.3);
    for (long a = 0; a <= 2; ++a)
        for (long b = 0; b <= 2; ++b)
            for (long c = 0; c <= 2; ++c) {
                auto r = star_triangle_fock(0.45, 0.7, a, b, c, ctx, 1, 1e-7);
                EXPECT_EQ(r.verdict, Verdict::pass) << r.residual;
            }
    EXPECT_EQ(star_triangle_fock(0.45, 0.7, 2, 1, 2, ctx, 1.01, 1e-7).verdict, Verdict::expected_fail);
    EXPECT_EQ(star_triangle_fock(cd(0.5, 0.2), cd(0.6, -0.1), 2, 1, 2, QContext<cd>(cd(-0.3, 0.1)), 1, 1e-7).verdict,
              Verdict::pass);
}

TEST(Partition, FunctionalEquations)
{
    QContext<cd> ctx(0.4);
    EXPECT_EQ(partition_checks_fock(0.7, ctx).verdict, Verdict::pass);
    EXPECT_LT(std::abs(partition_series_fock(0.4, ctx)), 1e-15);
    EXPECT_THROW(partition_series_fock(1.2, ctx), DomainError);
}

TEST(RLL, AllSigmaPlacementsAndScrambledControl)
{
    QContext<cd> ctx(0.4);
    for (auto s : {SigmaX::none, SigmaX::right, SigmaX::left, SigmaX::both})
        EXPECT_LT(rll_check(cd(0.7, 0.2), cd(1.4, -0.1), 8, ctx, s).residual, 1e-12) << to_string(s);
    EXPECT_EQ(rll_check(cd(0.7, 0.2), cd(1.4, -0.1), 8, ctx, SigmaX::none, true).verdict, Verdict::expected_fail);
}

TEST(Box, TruncatedIntertwining)
{
    QContext<cd> ctx(0.35);
    auto r = box_intertwining_check(std::exp(cd(0, 0.25)), cd(0.9, 0.1), std::exp(cd(0, -0.35)), cd(1.1, -0.05), 20, ctx);
    EXPECT_LT(r.residual, 1e-5);
}

// property: symmetry and product relations at random spectral parameters
TEST(Property, WeightRelationsRandom)
{
    std::mt19937_64 g(19);
    std::uniform_real_distribution<double> r(0.5, 0.95), a(-0.5, 0.5);
    QContext<cd> ctx(0.4);
    for (int k = 0; k < 5; ++k) {
        cd x = std::polar(r(g), a(g));
        EXPECT_EQ(weight_symmetry_check(x, 4, ctx).verdict, Verdict::pass) << x;
        EXPECT_EQ(weight_product_check(x, 4, ctx).verdict, Verdict::pass) << x;
    }
}

// property: star-triangle at random real points inside the convergence region
TEST(Property, StarTriangleRandom)
{
    std::mt19937_64 g(23);
    std::uniform_real_distribution<double> rx(0.4, 0.8);
    std::uniform_int_distribution<long> sp(0, 3);
    QContext<cd> ctx(-0.3);
    for (int k = 0; k < 8; ++k) {
        auto r = star_triangle_fock(rx(g), rx(g), sp(g), sp(g), sp(g), ctx, 1, 1e-7);
        EXPECT_EQ(r.verdict, Verdict::pass) << r.residual;
    }
}
