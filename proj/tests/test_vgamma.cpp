#include <gtest/gtest.h>

#include <random>

#include <kmq/quad.hpp>
#include <kmq/vgamma.hpp>

using namespace kmq;

namespace {

std::vector<GammaContext> gamma_set(const QContext<cd>& ctx)
{
    return {GammaContext::from_gamma(0.7 * std::exp(cd(0, 0.4)), ctx), GammaContext::from_gamma(ctx.sqrt_q, ctx),
            GammaContext::selected_value(0, ctx), GammaContext::selected_value(1, ctx)};
}

} // namespace

TEST(Context, SelectedValuesRecognised)
{
    QContext<cd> ctx(0.4);
    auto g = GammaContext::from_gamma(cd(0, 1) * ctx.half_pow(3), ctx);
    EXPECT_TRUE(g.selected);
    EXPECT_EQ(g.two_nu(), 3);
    EXPECT_FALSE(GammaContext::from_gamma(cd(0.8, 0.3), ctx).selected);
    EXPECT_FALSE(GammaContext::from_gamma(ctx.sqrt_q, ctx).selected);
}

TEST(Context, SingularMeasureAndBadInput)
{
    QContext<cd> ctx(0.4);
    EXPECT_THROW(GammaContext::from_gamma(cd(1), ctx), SingularMeasure);
    EXPECT_THROW(GammaContext::from_gamma(cd(1.0 / (0.4 * 0.4)), ctx), SingularMeasure);
    EXPECT_THROW(GammaContext::from_gamma(cd(0), ctx), DomainError);
    EXPECT_THROW(GammaContext::from_gamma(cd(0.7), ctx, 0), DomainError);
}

TEST(Basis, CompletenessParityOldStates)
{
    QContext<cd> ctx(0.4, 1e-9);
    for (auto& g : gamma_set(ctx)) {
        EXPECT_EQ(completeness_check_vgamma(g, 1.0, 12, 5, ctx).verdict, Verdict::pass) << g.gamma;
        EXPECT_EQ(parity_check_vgamma(g, 3, 4, ctx).verdict, Verdict::pass) << g.gamma;
    }
    EXPECT_EQ(old_states_check(4, 5, ctx).verdict, Verdict::pass);
}

TEST(Weights, ClosedFormOrthogonalityProjector)
{
    QContext<cd> ctx(0.4, 1e-9);
    for (auto& g : gamma_set(ctx)) {
        EXPECT_LT(weight_Veps_closed_vs_sum_check(0.7, 3, g, ctx).residual, 1e-8) << g.gamma;
        EXPECT_LT(orthogonality_check_vgamma(0.9, 0.85, 2, g, ctx).residual, 1e-8) << g.gamma;
        EXPECT_LT(projector_check_vgamma(3, g, ctx).residual, 1e-8) << g.gamma;
        EXPECT_LT(parity_vanishing_check(0.7, 5, g, ctx).residual, 1e-8) << g.gamma;
    }
}

TEST(Brace, GammaSumMatchesClosedFormInQuad)
{
    QContext<cq> cx(to_cq(0.4), 1e-10, 1e-32);
    QContext<cd> ctx(0.4);
    std::vector<cd> gl{0.7 * std::exp(cd(0, 0.4)), ctx.sqrt_q, cd(0, 1), cd(0, 1) * ctx.sqrt_q};
    EXPECT_LT(brace_gamma_check<cq>(4, gl, cx).residual, 1e-20);
    EXPECT_THROW(brace_gamma_sum<cd>(9, 0, 0, cd(0.6), ctx), DomainError);
}

TEST(KM, BoldWeightTrivialAtQ)
{
    QContext<cd> ctx(0.4);
    KMWeights kw(GammaContext::from_gamma(cd(0.8, 0.3), ctx), ctx);
    for (long a = -3; a <= 3; ++a)
        for (long b = -3; b <= 3; ++b) EXPECT_LT(std::abs(kw.V(ctx.q, a, b) - 1.0), 1e-14);
}

TEST(KM, FormSymmetrySummationInversion)
{
    QContext<cd> ctx(0.4, 1e-9);
    for (auto& g : gamma_set(ctx)) {
        EXPECT_EQ(km_weight_form_check(0.7, 3, g, ctx).verdict, Verdict::pass) << g.gamma;
        EXPECT_EQ(km_symmetry_check(0.7, 5, g, ctx).verdict, Verdict::pass) << g.gamma;
        EXPECT_EQ(km_summation_check(0.7, 0.8, 2, g, ctx).verdict, Verdict::pass) << g.gamma;
        EXPECT_EQ(km_inversion_check(0.7, 2, g, ctx).verdict, Verdict::pass) << g.gamma;
    }
}

TEST(KM, StarTriangleSelectedHoldsGenericFails)
{
    QContext<cd> ctx(0.4, 1e-9);
    for (long t : {0L, 1L, -1L, 2L}) {
        auto g = GammaContext::selected_value(t, ctx);
        auto r = star_triangle_km(0.7, 0.6, 1, -1, 2, g, ctx);
        EXPECT_EQ(r.verdict, Verdict::pass) << t << " " << r.residual;
    }
    auto gg = GammaContext::from_gamma(0.8 * std::exp(cd(0, 0.3)), ctx);
    auto r = star_triangle_km(0.7, 0.6, 0, 0, 0, gg, ctx);
    EXPECT_EQ(r.verdict, Verdict::expected_fail);
    EXPECT_GT(r.residual, 1e-3);
}

TEST(KM, PartitionFunctions)
{
    QContext<cd> ctx(0.4, 1e-10);
    for (long t : {0L, 1L}) {
        auto g = GammaContext::selected_value(t, ctx);
        EXPECT_LT(km_partition_check(0.6, g, ctx).residual, 1e-9);
        EXPECT_LT(km_partition_check(0.75, g, ctx).residual, 1e-9);
        EXPECT_LT(km_central_spin_check(g, ctx).residual, 1e-10);
    }
    EXPECT_EQ(km_kappa_ratio_check(cd(0.7, 0.2), ctx).verdict, Verdict::pass);
    EXPECT_EQ(km_z_ratio_check(0.6, cd(0.8, 0.3), ctx).verdict, Verdict::pass);
    EXPECT_THROW(km_log_z(0.6, GammaContext::selected_value(2, ctx), ctx), DomainError);
    EXPECT_THROW(km_log_z(0.6, GammaContext::from_gamma(cd(0.8, 0.3), ctx), ctx), DomainError);
    EXPECT_THROW(km_log_z(5.0, GammaContext::selected_value(0, ctx), ctx), DomainError);
}

// property: selected star-triangle at random spins and spectral parameters
TEST(Property, StarTriangleSelectedRandom)
{
    std::mt19937_64 g(29);
    std::uniform_real_distribution<double> rx(0.55, 0.85), a(-0.3, 0.3);
    std::uniform_int_distribution<long> sp(-2, 2), nu(-2, 2);
    QContext<cd> ctx(0.4, 1e-9);
    for (int k = 0; k < 6; ++k) {
        auto gc = GammaContext::selected_value(nu(g), ctx);
        auto r = star_triangle_km(std::polar(rx(g), a(g)), rx(g), sp(g), sp(g), sp(g), gc, ctx);
        EXPECT_EQ(r.verdict, Verdict::pass) << r.residual;
    }
}

// property: bold weight symmetry at random gamma off the selected set
TEST(Property, KMSymmetryRandomGamma)
{
    std::mt19937_64 g(31);
    std::uniform_real_distribution<double> rg(0.5, 0.9), a(0.1, 1.2);
    QContext<cd> ctx(0.4, 1e-9);
    for (int k = 0; k < 4; ++k) {
        auto gc = GammaContext::from_gamma(std::polar(rg(g), a(g)), ctx);
        EXPECT_EQ(km_symmetry_check(cd(0.7, 0.1), 4, gc, ctx).verdict, Verdict::pass) << gc.gamma;
    }
}
