#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <fnmatch.h>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "fock.hpp"
#include "modular.hpp"
#include "orthopoly.hpp"
#include "qseries.hpp"
#include "quad.hpp"
#include "vgamma.hpp"

namespace kmq {

// "0.4", "-0.3", "0.8+0.3i", "0.3i", "-i", "1e-3-2e-2i"
inline cd parse_complex(const std::string& s)
{
    static const std::regex re(
        R"(^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*(?:([+-])\s*((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*[ij])?\s*$)");
    static const std::regex pure_imag(R"(^\s*([+-]?)((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*[ij]\s*$)");
    std::smatch m;
    if (std::regex_match(s, m, pure_imag)) {
        double v = m[2].matched ? std::stod(m[2]) : 1.0;
        return {0, m[1] == "-" ? -v : v};
    }
    if (!s.empty() && std::regex_match(s, m, re) && (m[1].matched || m[2].matched)) {
        double re_part = m[1].matched ? std::stod(m[1]) : 0.0;
        double im = 0;
        if (m[2].matched) {
            im = m[3].matched ? std::stod(m[3]) : 1.0;
            if (m[2] == "-") im = -im;
        }
        return {re_part, im};
    }
    throw DomainError("not a complex number: '" + s + "'");
}

struct GammaSpec {
    enum class Kind { value, selected, generic } kind = Kind::value;
    cd value;
    long two_nu = 0;

    // "C", "selected:NU", "generic:C"
    static GammaSpec parse(const std::string& s)
    {
        GammaSpec g;
        if (s.rfind("selected:", 0) == 0) {
            g.kind = Kind::selected;
            double nu = std::stod(s.substr(9));
            g.two_nu = std::lround(2 * nu);
            if (std::abs(2 * nu - double(g.two_nu)) > 1e-12) throw DomainError("gamma: NU must be a half-integer");
        } else if (s.rfind("generic:", 0) == 0) {
            g.kind = Kind::generic;
            g.value = parse_complex(s.substr(8));
        } else {
            g.value = parse_complex(s);
        }
        return g;
    }

    GammaContext context(const QContext<cd>& ctx) const
    {
        if (kind == Kind::selected) return GammaContext::selected_value(two_nu, ctx);
        auto gc = GammaContext::from_gamma(value, ctx);
        if (kind == Kind::generic && gc.selected) throw DomainError("gamma: generic value is one of i q^{nu}");
        return gc;
    }
};

struct RunConfig {
    std::optional<cd> q;           // unset: each identity uses its documented point(s)
    std::optional<GammaSpec> gamma; // unset: the documented gamma set
    double theta = pi / 5;
    std::optional<double> tol;     // replaces every tolerance and re-judges
    std::uint64_t seed = 1;
    std::string filter = "*";
    int jobs = 1;
    long A_max = 14;
    long M_max = 50;
    long spin_cutoff = 20;
    double quad_L = 12;
    long quad_points = 512;
    double tol_quad = 1e-4;
    bool skip_slow = false;
};

struct RegisteredIdentity {
    std::vector<std::string> ids;
    bool slow = false;
    std::function<std::vector<IdentityReport>(const RunConfig&)> run;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
    return h;
}

// Independent stream per identity, so results do not depend on job order.
inline std::mt19937_64 rng_for(const RunConfig& cfg, const std::string& id)
{
    std::uint64_t h = fnv1a(id);
    std::seed_seq seq{std::uint32_t(cfg.seed), std::uint32_t(cfg.seed >> 32), std::uint32_t(h), std::uint32_t(h >> 32)};
    return std::mt19937_64(seq);
}

// Uniform on the annular sector r0 <= |z| <= r1, a0 <= arg z <= a1.
inline cd draw_annulus(std::mt19937_64& g, double r0, double r1, double a0, double a1)
{
    std::uniform_real_distribution<double> ur(r0 * r0, r1 * r1), ua(a0, a1);
    return std::polar(std::sqrt(ur(g)), ua(g));
}

inline std::vector<cd> q_points(const RunConfig& cfg, std::vector<cd> def)
{
    if (cfg.q) return {*cfg.q};
    return def;
}

inline std::optional<double> real_q(const RunConfig& cfg, double def)
{
    cd q = cfg.q.value_or(def);
    if (q.imag() != 0) return std::nullopt;
    return q.real();
}

inline IdentityReport skipped(const std::string& id, const std::string& why)
{
    IdentityReport r;
    r.identity_id = id;
    r.verdict = Verdict::skipped;
    r.note = why;
    return r;
}

inline std::vector<GammaContext> gamma_set(const RunConfig& cfg, const QContext<cd>& ctx)
{
    if (cfg.gamma) return {cfg.gamma->context(ctx)};
    return {GammaContext::from_gamma(0.7 * std::exp(cd(0, 0.4)), ctx), GammaContext::from_gamma(ctx.sqrt_q, ctx),
            GammaContext::selected_value(0, ctx), GammaContext::selected_value(1, ctx)};
}

inline std::vector<GammaContext> selected_gammas(const RunConfig& cfg, const QContext<cd>& ctx)
{
    if (cfg.gamma) return {cfg.gamma->context(ctx)};
    return {GammaContext::selected_value(0, ctx), GammaContext::selected_value(1, ctx)};
}

inline ModularContext modular_context(const RunConfig& cfg)
{
    return ModularContext(cfg.theta, cfg.tol_quad, cfg.quad_L, cfg.quad_points);
}

using Reports = std::vector<IdentityReport>;

} // namespace detail

inline std::vector<RegisteredIdentity> identity_registry()
{
    using namespace detail;
    std::vector<RegisteredIdentity> R;
    auto add = [&](std::vector<std::string> ids, auto fn, bool slow = false) {
        R.push_back({std::move(ids), slow, std::function<Reports(const RunConfig&)>(fn)});
    };
    const cd i(0, 1);

    // ------------------------------------------------------------ qseries
    add({"qseries.theta_sum_product.A_4"}, [=](const RunConfig& c) {
        Reports out;
        for (cd q : q_points(c, {0.4, cd(0.3, 0.4)}))
            out.push_back(theta_sum_product_check<cd>({cd(1.3, 0.2), cd(0.7, -0.4), cd(-1.1, 0.5)}, QContext<cd>(q)));
        return out;
    });
    add({"qseries.jacobi_transform.A_5"}, [=](const RunConfig& c) {
        return Reports{jacobi_transform_check(0.3, std::exp(i * c.theta)),
                       jacobi_transform_check(-0.45, std::exp(i * c.theta))};
    });
    add({"qseries.theta_constants.A_6_A_7"}, [=](const RunConfig& c) {
        Reports out;
        for (cd q : q_points(c, {0.4, cd(0.3, 0.5)})) out.push_back(theta_constants_check(QContext<cd>(q)));
        return out;
    });
    add({"qseries.gauss_double_sum.A_8"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        return Reports{gauss_double_sum_check(cd(0.3), cd(0.2), ctx)};
    });
    add({"qseries.gauss.A_9"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        return Reports{gauss_check(cd(0.2), cd(0.3), ctx)};
    });

    // ------------------------------------------------------------ orthopoly
    add({"orthopoly.P_methods.B_1_B_2_B_3"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        return Reports{poly_methods_check(20, cd(0.7, 0.3), ctx), poly_methods_check(30, cd(1.9, 0.3), ctx)};
    });
    add({"orthopoly.difference.B_4_B_5"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        return Reports{poly_P_difference_checks(3, cd(1.3), ctx), poly_P_difference_checks(5, cd(0.7, 0.2), ctx)};
    });
    add({"orthopoly.genfun.B_6_B_7"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        double s = std::abs(ctx.q);
        return Reports{genfun_checks(cd(0.75 * s), cd(1.2), cd(0.8), ctx),
                       genfun_checks(0.55 * s * std::exp(cd(0, 1.1)), cd(0.9, 0.4), cd(1.3, -0.2), ctx)};
    });
    add({"orthopoly.genfun.B_8"}, [=](const RunConfig& c) {
        return Reports{genfun_B8_check(8, QContext<cd>(c.q.value_or(0.4)))};
    });
    add({"orthopoly.chi_poly.C_2"}, [=](const RunConfig& c) {
        return Reports{chi_poly_check(cd(1.1, 0.2), 10, QContext<cd>(c.q.value_or(0.4)))};
    });
    add({"orthopoly.chi_equations.C_3_C_6"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.45));
        return Reports{chi_equation_checks(cd(1.1), cd(0.3), ctx), chi_equation_checks(cd(0, 0.8), cd(0.2), ctx),
                       chi_equation_checks(cd(1.3), cd(1.0), ctx), chi_equation_checks(cd(0.6, 1.1), cd(-0.7, 0.5), ctx)};
    });
    add({"orthopoly.chi_ratio.6_15"}, [=](const RunConfig& c) {
        return Reports{chi_ratio_check(2, cd(0.3), QContext<cd>(c.q.value_or(0.5)))};
    });

    // ------------------------------------------------------------ fock
    add({"fock.spectral.4_9", "fock.spectral.4_10", "fock.spectral_reg3.4_8"}, [=](const RunConfig& c) {
        auto q = real_q(c, 0.4);
        if (!q || !(*q > 0 && *q < 1))
            return Reports{skipped("fock.spectral.4_9", "needs real 0 < q < 1"),
                           skipped("fock.spectral.4_10", "needs real 0 < q < 1"),
                           skipped("fock.spectral_reg3.4_8", "needs real 0 < q < 1")};
        return Reports{spectral_check(*q, {8, 16, 24, 32}, Regularisation::I),
                       spectral_check(*q, {8, 16, 24, 32}, Regularisation::II),
                       spectral_check(*q, {29, 30, 31, 32}, Regularisation::III)};
    });
    add({"fock.completeness.4_15", "fock.completeness.4_16", "fock.antisymmetric_sum.4_17"}, [=](const RunConfig& c) {
        FockRepParams fp{std::exp(cd(0, 0.3)), cd(0.9, 0.2), cd(1.1, -0.1)};
        return completeness_checks_fock(fp, c.A_max, c.M_max, QContext<cd>(c.q.value_or(0.4)));
    });
    add({"fock.brace.4_27_4_28_4_39"}, [=](const RunConfig& c) {
        Reports out;
        for (cd q : q_points(c, {0.3, 0.5})) {
            if (q.imag() != 0) {
                out.push_back(brace_agreement_check(6, QContext<cd>(q), 1e-10));
                continue;
            }
            QContext<cq> ctx(to_cq(q), 1e-10, 1e-32);
            out.push_back(brace_agreement_check(6, ctx));
        }
        return out;
    });
    add({"fock.cg_vacuum.4_36_4_37", "fock.cg_raising.4_38_4_40"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        CGParams cp{std::exp(cd(0, 0.3)), cd(0.9, 0.2), std::exp(cd(0, -0.5)), 1.1, std::exp(cd(0, 0.7))};
        return Reports{cg_vacuum_check(cp, 30, ctx), cg_raising_check(cp, 30, 6, ctx)};
    });
    add({"fock.weight_closed_form.4_42_4_43"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        return Reports{weight_closed_vs_sum_check(0.5, 6, ctx),
                       weight_closed_vs_sum_check(0.8 * std::exp(cd(0, 0.3)), 6, ctx)};
    });
    add({"fock.weight_symmetry.4_44"}, [=](const RunConfig& c) {
        auto g = rng_for(c, "fock.weight_symmetry.4_44");
        QContext<cd> ctx(c.q.value_or(0.4));
        Reports out;
        for (int k = 0; k < 3; ++k) out.push_back(weight_symmetry_check(draw_annulus(g, 0.5, 0.95, -0.5, 0.5), 5, ctx));
        return out;
    });
    add({"fock.weight_normalisation.4_45"}, [=](const RunConfig& c) {
        auto g = rng_for(c, "fock.weight_normalisation.4_45");
        Reports out;
        for (cd q : q_points(c, {draw_annulus(g, 0.3, 0.6, -0.5, 0.5), draw_annulus(g, 0.3, 0.6, -0.5, 0.5),
                                 draw_annulus(g, 0.3, 0.6, -0.5, 0.5)}))
            out.push_back(weight_normalisation_check(20, QContext<cd>(q)));
        return out;
    });
    add({"fock.transitivity.4_46"}, [=](const RunConfig& c) {
        auto g = rng_for(c, "fock.transitivity.4_46");
        QContext<cd> ctx(c.q.value_or(0.4));
        Reports out;
        for (int k = 0; k < 3; ++k) {
            cd x = draw_annulus(g, 0.7, 0.95, -0.3, 0.3), y = draw_annulus(g, 0.7, 0.95, -0.3, 0.3);
            out.push_back(transitivity_check_fock(x, y, k % 2, k, 0, ctx));
        }
        return out;
    });
    add({"fock.weight_product.4_47"}, [=](const RunConfig& c) {
        auto g = rng_for(c, "fock.weight_product.4_47");
        QContext<cd> ctx(c.q.value_or(0.4));
        Reports out;
        for (int k = 0; k < 3; ++k) out.push_back(weight_product_check(draw_annulus(g, 0.5, 0.9, -0.5, 0.5), 5, ctx));
        return out;
    });
    add({"fock.star_triangle.4_49"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(-0.3));
        Reports out;
        for (auto [x, y] : {std::pair<double, double>{0.5, 0.6}, {0.45, 0.7}})
            for (long a = 0; a <= 2; ++a)
                for (long b = 0; b <= 2; ++b)
                    for (long cc = 0; cc <= 2; ++cc) out.push_back(star_triangle_fock(x, y, a, b, cc, ctx, 1, 1e-7));
        return out;
    });
    add({"fock.partition.4_52_4_53"}, [=](const RunConfig& c) {
        return Reports{partition_checks_fock(0.7, QContext<cd>(c.q.value_or(0.4)))};
    });
    add({"fock.rll.2_15"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        Reports out;
        for (auto s : {SigmaX::none, SigmaX::right, SigmaX::left, SigmaX::both})
            out.push_back(rll_check(cd(0.7, 0.2), cd(1.4, -0.1), 8, ctx, s));
        return out;
    });
    add(
        {"fock.box_intertwining.3_63_4_54"},
        [=](const RunConfig& c) {
            QContext<cd> ctx(c.q.value_or(0.35));
            return Reports{box_intertwining_check(std::exp(cd(0, 0.25)), cd(0.9, 0.1), std::exp(cd(0, -0.35)),
                                                  cd(1.1, -0.05), c.spin_cutoff, ctx)};
        },
        true);

    // ------------------------------------------------------------ vgamma
    auto per_gamma = [&](std::string id, auto fn) {
        add({id}, [=](const RunConfig& c) {
            QContext<cd> ctx(c.q.value_or(0.4));
            Reports out;
            for (auto& g : gamma_set(c, ctx)) out.push_back(fn(g, ctx));
            return out;
        });
    };
    per_gamma("vgamma.completeness.5_8", [](auto& g, auto& ctx) { return completeness_check_vgamma(g, 1.0, 12, 5, ctx); });
    per_gamma("vgamma.parity.5_7", [](auto& g, auto& ctx) { return parity_check_vgamma(g, 3, 4, ctx); });
    per_gamma("vgamma.weight_closed_form.5_10_5_11",
              [](auto& g, auto& ctx) { return weight_Veps_closed_vs_sum_check(0.7, 3, g, ctx); });
    per_gamma("vgamma.orthogonality.5_12",
              [](auto& g, auto& ctx) { return orthogonality_check_vgamma(0.9, 0.85, 2, g, ctx); });
    per_gamma("vgamma.projectors.5_13", [](auto& g, auto& ctx) { return projector_check_vgamma(3, g, ctx); });
    per_gamma("vgamma.parity_vanishing.5_19", [](auto& g, auto& ctx) { return parity_vanishing_check(0.7, 5, g, ctx); });
    per_gamma("vgamma.km_weight.5_20_5_22", [](auto& g, auto& ctx) { return km_weight_form_check(0.7, 3, g, ctx); });
    per_gamma("vgamma.km_symmetry.5_24", [](auto& g, auto& ctx) { return km_symmetry_check(0.7, 5, g, ctx); });
    per_gamma("vgamma.km_summation.5_25", [](auto& g, auto& ctx) { return km_summation_check(0.7, 0.8, 2, g, ctx); });
    per_gamma("vgamma.km_inversion.5_26", [](auto& g, auto& ctx) { return km_inversion_check(0.7, 2, g, ctx); });
    add({"vgamma.old_states.5_9"}, [=](const RunConfig& c) {
        return Reports{old_states_check(4, 5, QContext<cd>(c.q.value_or(0.4)))};
    });
    add({"vgamma.brace.5_14_5_15"}, [=](const RunConfig& c) {
        cd q = c.q.value_or(0.4);
        QContext<cd> ctx(q);
        std::vector<cd> gl;
        if (c.gamma) gl = {c.gamma->context(ctx).gamma, 0.6};
        else gl = {0.7 * std::exp(cd(0, 0.4)), ctx.sqrt_q, i, i * ctx.sqrt_q, 0.6, 0.9 * std::exp(cd(0, 0.2))};
        QContext<cq> cx(to_cq(q), 1e-10, 1e-32);
        return Reports{brace_gamma_check<cq>(4, gl, cx)};
    });
    add({"vgamma.star_triangle.5_27"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        std::vector<GammaContext> gs;
        if (c.gamma) gs = {c.gamma->context(ctx)};
        else
            gs = {GammaContext::selected_value(0, ctx), GammaContext::selected_value(1, ctx),
                  GammaContext::from_gamma(0.8 * std::exp(cd(0, 0.3)), ctx)};
        Reports out;
        for (auto& g : gs) {
            out.push_back(star_triangle_km(0.7, 0.6, 0, 0, 0, g, ctx));
            out.push_back(star_triangle_km(0.7, 0.6, 1, -1, 2, g, ctx));
            out.push_back(star_triangle_km(cd(0.6, 0.2), 0.8, 2, 0, -1, g, ctx));
        }
        return out;
    });
    add({"vgamma.partition.5_29_5_30"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        Reports out;
        for (auto& g : selected_gammas(c, ctx))
            for (double x : {0.6, 0.75}) out.push_back(km_partition_check(x, g, ctx));
        return out;
    });
    add({"vgamma.central_spin.5_31"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        Reports out;
        for (auto& g : selected_gammas(c, ctx)) out.push_back(km_central_spin_check(g, ctx));
        return out;
    });
    add({"vgamma.kappa_ratio.5_28"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        return Reports{km_kappa_ratio_check(0.6, ctx), km_kappa_ratio_check(cd(0.7, 0.2), ctx)};
    });
    add({"vgamma.z_ratio.5_30"}, [=](const RunConfig& c) {
        QContext<cd> ctx(c.q.value_or(0.4));
        return Reports{km_z_ratio_check(0.6, cd(0.8, 0.3), ctx), km_z_ratio_check(0.75, i, ctx)};
    });

    // ------------------------------------------------------------ modular
    add({"modular.faddeev_phi.6_17"}, [=](const RunConfig& c) {
        return Reports{faddeev_phi_check({-0.4, -0.2, 0, 0.2, 0.4}, modular_context(c))};
    });
    add({"modular.faddeev_phi_inversion.6_18"},
        [=](const RunConfig& c) { return Reports{faddeev_phi_inversion_info(modular_context(c))}; });
    add({"modular.psi_reality.6_11"}, [=](const RunConfig& c) {
        return Reports{psi_reality_check({-1, -0.3, 0.3, 1.1}, {-0.9, 0.4, 0.7}, modular_context(c))};
    });
    add({"modular.psi_eigen.6_14"}, [=](const RunConfig& c) {
        auto mc = modular_context(c);
        return Reports{psi_eigen_check(0.3, 0.4, mc), psi_eigen_check(-0.8, 1.1, mc),
                       psi_eigen_check(cd(0.2, 0.1), cd(-0.5, 0.1), mc)};
    });
    add({"modular.psi_symmetry.6_11"}, [=](const RunConfig& c) {
        return Reports{psi_symmetry_check({{0.3, 0.4}, {cd(0.3, 0.1), cd(0.4, -0.2)}, {-0.7, cd(0.2, 0.3)}},
                                          modular_context(c))};
    });
    add({"modular.psi_pole_cancellation.6_15"},
        [=](const RunConfig& c) { return Reports{psi_pole_cancellation_check(0.3, modular_context(c))}; });
    add({"modular.weight_symmetry.6_26_6_28"}, [=](const RunConfig& c) {
        return Reports{weight_symmetry_modular(cd(0.1, 0.3), {-0.6, 0.2, 0.9}, modular_context(c))};
    });
    add({"modular.weight_integral.6_21_6_22_6_23"}, [=](const RunConfig& c) {
        auto mc = modular_context(c);
        return Reports{weight_integral_check(0.15 * i + mc.eta / 3.0, 0.3, 0.5, mc),
                       weight_integral_check(cd(0.1, 0.3), 0.7, -0.2, mc),
                       weight_integral_check(0.25 * i, 0.4, 0.9, mc)};
    });
    add({"modular.summation.6_27"}, [=](const RunConfig& c) {
        auto mc = modular_context(c);
        return Reports{summation_check_modular(0.2 * i, 0.25 * i, 0.3, 0.5, mc),
                       summation_check_modular(cd(0.1, 0.2), 0.3 * i, 0.6, -0.4, mc),
                       summation_check_modular(0.3 * i, cd(0.05, 0.15), 0.2, 0.8, mc)};
    });
    add({"modular.delta_limit.6_25"}, [=](const RunConfig& c) {
        return Reports{delta_limit_probe(0.2 * i, 0.3, 0.5, {0.2, 0.1, 0.05}, modular_context(c))};
    });
    return R;
}

inline bool glob_match(const std::string& pattern, const std::string& id)
{
    return fnmatch(pattern.c_str(), id.c_str(), 0) == 0;
}

inline bool report_less(const IdentityReport& a, const IdentityReport& b)
{
    if (a.identity_id != b.identity_id) return a.identity_id < b.identity_id;
    return a.params < b.params;
}

struct RunResult {
    std::vector<IdentityReport> reports;
    bool matched = false;
    bool any_fail = false;
};

// Runs every registered identity matching cfg.filter on cfg.jobs threads and
// returns the reports sorted by identity_id, then params. DomainError (a bad
// configuration) propagates; other library errors become FAIL reports.
inline RunResult run(const RunConfig& cfg)
{
    auto reg = identity_registry();
    std::vector<const RegisteredIdentity*> todo;
    for (auto& e : reg) {
        if (cfg.skip_slow && e.slow) continue;
        if (std::any_of(e.ids.begin(), e.ids.end(), [&](auto& id) { return glob_match(cfg.filter, id); }))
            todo.push_back(&e);
    }
    RunResult out;
    out.matched = !todo.empty();
    if (todo.empty()) return out;

    std::vector<std::vector<IdentityReport>> slots(todo.size());
    std::atomic<size_t> next{0};
    std::mutex err_mu;
    std::optional<DomainError> config_error;
    auto worker = [&] {
        for (size_t k; (k = next.fetch_add(1)) < todo.size();) {
            const auto& e = *todo[k];
            try {
                slots[k] = e.run(cfg);
            } catch (const DomainError& ex) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!config_error) config_error = ex;
            } catch (const std::exception& ex) {
                IdentityReport r;
                r.identity_id = e.ids.front();
                r.residual = std::numeric_limits<double>::quiet_NaN();
                r.verdict = Verdict::fail;
                r.note = ex.what();
                slots[k] = {r};
            }
        }
    };
    int n = std::max(1, cfg.jobs);
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (config_error) throw *config_error;

    for (auto& s : slots)
        for (auto& r : s) {
            if (!glob_match(cfg.filter, r.identity_id)) continue;
            if (cfg.tol && r.verdict != Verdict::skipped) {
                r.tolerance = *cfg.tol;
                r.verdict = judge(r.residual, r.tolerance, r.negative_control);
            }
            out.any_fail = out.any_fail || r.verdict == Verdict::fail;
            out.reports.push_back(std::move(r));
        }
    std::stable_sort(out.reports.begin(), out.reports.end(), report_less);
    return out;
}

} // namespace kmq
