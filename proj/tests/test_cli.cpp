#include <gtest/gtest.h>

#include <set>

#include <kmq/registry.hpp>

using namespace kmq;

TEST(Parse, ComplexNumbers)
{
    EXPECT_EQ(parse_complex("0.8+0.3i"), cd(0.8, 0.3));
    EXPECT_EQ(parse_complex("0.3i"), cd(0, 0.3));
    EXPECT_EQ(parse_complex("-i"), cd(0, -1));
    EXPECT_EQ(parse_complex("-0.3"), cd(-0.3, 0));
    EXPECT_EQ(parse_complex("1e-1-2j"), cd(0.1, -2));
    EXPECT_EQ(parse_complex(" 0.5 - i "), cd(0.5, -1));
    for (const char* bad : {"", "abc", "0.3+", "1i2", "0.2+0.3k"}) EXPECT_THROW(parse_complex(bad), DomainError) << bad;
}

TEST(Parse, GammaSpec)
{
    QContext<cd> ctx(0.4);
    auto s = GammaSpec::parse("selected:0.5");
    EXPECT_EQ(s.kind, GammaSpec::Kind::selected);
    EXPECT_EQ(s.two_nu, 1);
    EXPECT_TRUE(s.context(ctx).selected);
    EXPECT_THROW(GammaSpec::parse("selected:0.3"), DomainError);
    auto g = GammaSpec::parse("generic:0.8+0.3i");
    EXPECT_EQ(g.kind, GammaSpec::Kind::generic);
    EXPECT_FALSE(g.context(ctx).selected);
    EXPECT_THROW(GammaSpec::parse("generic:i").context(ctx), DomainError);
    EXPECT_TRUE(GammaSpec::parse("i").context(ctx).selected);
}

TEST(Glob, Matching)
{
    EXPECT_TRUE(glob_match("*", "fock.rll.2_15"));
    EXPECT_TRUE(glob_match("fock.weight_*", "fock.weight_symmetry.4_44"));
    EXPECT_FALSE(glob_match("fock.weight_*", "fock.rll.2_15"));
    EXPECT_TRUE(glob_match("vgamma.star_triangle.*", "vgamma.star_triangle.5_27"));
    EXPECT_TRUE(glob_match("qseries.?auss.*", "qseries.gauss.A_9"));
}

TEST(Registry, AcceptanceIdentitiesRegistered)
{
    std::set<std::string> ids;
    for (auto& e : identity_registry()) ids.insert(e.ids.begin(), e.ids.end());
    for (const char* id :
         {"fock.brace.4_27_4_28_4_39", "fock.star_triangle.4_49", "fock.spectral.4_9", "fock.spectral.4_10",
          "fock.completeness.4_15", "fock.completeness.4_16", "fock.weight_symmetry.4_44", "fock.weight_product.4_47",
          "fock.weight_normalisation.4_45", "vgamma.brace.5_14_5_15", "vgamma.star_triangle.5_27",
          "vgamma.partition.5_29_5_30", "vgamma.central_spin.5_31", "fock.rll.2_15", "qseries.theta_sum_product.A_4",
          "qseries.gauss.A_9", "orthopoly.genfun.B_8", "orthopoly.chi_equations.C_3_C_6", "modular.faddeev_phi.6_17",
          "modular.weight_integral.6_21_6_22_6_23", "modular.summation.6_27", "fock.box_intertwining.3_63_4_54"})
        EXPECT_TRUE(ids.count(id)) << id;
}

TEST(Run, EmptyFilterMatchesNothing)
{
    RunConfig cfg;
    cfg.filter = "nothing.*";
    auto r = run(cfg);
    EXPECT_FALSE(r.matched);
    EXPECT_TRUE(r.reports.empty());
}

TEST(Run, SortedAndDeterministicAcrossJobs)
{
    RunConfig cfg;
    cfg.filter = "fock.weight_*";
    cfg.seed = 5;
    auto a = run(cfg);
    cfg.jobs = 4;
    auto b = run(cfg);
    ASSERT_TRUE(a.matched);
    ASSERT_EQ(a.reports.size(), b.reports.size());
    for (size_t k = 0; k < a.reports.size(); ++k) {
        EXPECT_EQ(a.reports[k].identity_id, b.reports[k].identity_id);
        EXPECT_EQ(a.reports[k].params, b.reports[k].params);
        EXPECT_EQ(a.reports[k].residual, b.reports[k].residual);
        if (k) EXPECT_FALSE(report_less(a.reports[k], a.reports[k - 1]));
    }
    EXPECT_FALSE(a.any_fail);
}

TEST(Run, ToleranceOverrideRejudges)
{
    RunConfig cfg;
    cfg.filter = "qseries.gauss.*";
    cfg.tol = 1e-300;
    auto r = run(cfg);
    ASSERT_TRUE(r.matched);
    EXPECT_TRUE(r.any_fail);
    for (auto& rep : r.reports) EXPECT_EQ(rep.tolerance, 1e-300);
}

TEST(Run, NegativeControlIsExpectedFail)
{
    RunConfig cfg;
    cfg.filter = "vgamma.star_triangle.*";
    cfg.gamma = GammaSpec::parse("generic:0.8+0.3i");
    auto r = run(cfg);
    ASSERT_FALSE(r.reports.empty());
    for (auto& rep : r.reports) EXPECT_EQ(rep.verdict, Verdict::expected_fail) << rep.residual;
    EXPECT_FALSE(r.any_fail);
}

TEST(Run, BadQIsAConfigurationError)
{
    RunConfig cfg;
    cfg.filter = "qseries.*";
    cfg.q = cd(1.5);
    EXPECT_THROW(run(cfg), DomainError);
}
