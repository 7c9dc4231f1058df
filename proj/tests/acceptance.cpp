#include <chrono>
#include <cstdio>
#include <functional>

#include <kmq/registry.hpp>

using namespace kmq;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool ok = true;
    std::string detail;
};

struct Group {
    std::string glob;
    double limit;      // residuals must stay below
    size_t min_count;  // reports expected from the registry
};

std::vector<IdentityReport> reports(const std::string& glob)
{
    RunConfig cfg;
    cfg.filter = glob;
    return run(cfg).reports;
}

// every non-control report under each glob below its limit
Outcome groups(const std::vector<Group>& gs)
{
    Outcome o;
    for (auto& g : gs) {
        double worst = 0;
        size_t n = 0;
        for (auto& r : reports(g.glob)) {
            if (r.negative_control || r.verdict == Verdict::skipped) continue;
            ++n;
            if (!(r.residual < g.limit)) o.ok = false;
            worst = std::max(worst, std::isfinite(r.residual) ? r.residual : INFINITY);
        }
        if (n < g.min_count) o.ok = false;
        o.detail += g.glob + " n=" + std::to_string(n) + " max " + fmt_real(worst) + " (< " + fmt_real(g.limit) + "); ";
    }
    return o;
}

Outcome spectral()
{
    Outcome o;
    const double q = 0.4;
    double err = 0;
    for (auto reg : {Regularisation::I, Regularisation::II}) {
        auto rep = spectral_experiment(q, {8, 16, 32}, reg);
        auto& row = rep.rows.back();
        if (row.N != 32 || row.lowest.size() < 4) return {false, "missing eigenvalues"};
        for (long m = 0; m < 4; ++m) {
            double h = std::pow(q, m + 0.5) + std::pow(q, -m - 0.5);
            err = std::max(err, std::abs(row.lowest[m] - (reg == Regularisation::I ? h : -h)));
        }
    }
    auto r3 = spectral_experiment(q, {29, 30, 31, 32}, Regularisation::III);
    o.ok = err < 1e-6 && r3.subsequence_gap > 0.1;
    o.detail = "reg I/II max error " + fmt_real(err) + " (< 1e-6); reg III gap " + fmt_real(r3.subsequence_gap) +
               " (> 0.1); ";
    return o;
}

Outcome km_dichotomy()
{
    Outcome o;
    double sel = 0, gen = INFINITY;
    size_t ns = 0, ng = 0;
    for (auto& r : reports("vgamma.star_triangle.*")) {
        if (r.negative_control) {
            ++ng;
            gen = std::min(gen, r.residual);
        } else {
            ++ns;
            sel = std::max(sel, std::isfinite(r.residual) ? r.residual : INFINITY);
        }
    }
    o.ok = ns >= 2 && ng >= 1 && sel < 1e-7 && gen > 1e-3;
    o.detail = "selected n=" + std::to_string(ns) + " max " + fmt_real(sel) + " (< 1e-7); generic n=" +
               std::to_string(ng) + " min " + fmt_real(gen) + " (> 1e-3); ";
    return o;
}

struct Criterion {
    int n;
    std::string name;
    double seconds;  // 0: no runtime bound
    std::function<Outcome()> body;
};

} // namespace

int main()
{
    std::vector<Criterion> cs{
        {1, "brace identity", 10, [] { return groups({{"fock.brace.*", 1e-10, 2}}); }},
        {2, "fock star-triangle", 30, [] { return groups({{"fock.star_triangle.*", 1e-7, 54}}); }},
        {3, "spectral experiment", 5, spectral},
        {4, "completeness", 0,
         [] {
             return groups({{"fock.completeness.*", 1e-8, 2}, {"fock.antisymmetric_sum.*", 1e-8, 1}});
         }},
        {5, "weight properties", 0,
         [] {
             return groups({{"fock.weight_symmetry.*", 1e-8, 3},
                            {"fock.weight_normalisation.*", 1e-8, 3},
                            {"fock.transitivity.*", 1e-8, 3},
                            {"fock.weight_product.*", 1e-8, 3}});
         }},
        {6, "V_gamma suite", 0,
         [] {
             return groups({{"vgamma.completeness.*", 1e-8, 4},
                            {"vgamma.orthogonality.*", 1e-8, 4},
                            {"vgamma.projectors.*", 1e-8, 4},
                            {"vgamma.parity_vanishing.*", 1e-8, 4},
                            {"vgamma.brace.*", 1e-8, 1}});
         }},
        {7, "KM star-triangle dichotomy", 60, km_dichotomy},
        {8, "KM functional equations", 0,
         [] {
             return groups({{"vgamma.partition.*", 1e-9, 4}, {"vgamma.central_spin.*", 1e-10, 2}});
         }},
        {9, "RLL", 0, [] { return groups({{"fock.rll.*", 1e-12, 4}}); }},
        {10, "appendix suite", 0,
         [] {
             return groups({{"qseries.theta_sum_product.*", 1e-9, 1},
                            {"qseries.theta_constants.*", 1e-9, 1},
                            {"qseries.gauss*", 1e-9, 2},
                            {"qseries.jacobi_transform.*", 1e-9, 1},
                            {"orthopoly.genfun.*", 1e-9, 2},
                            {"orthopoly.P_methods.*", 1e-9, 1},
                            {"orthopoly.difference.*", 1e-9, 1},
                            {"orthopoly.chi_*", 1e-9, 2}});
         }},
        {11, "modular suite", 180,
         [] {
             return groups({{"modular.faddeev_phi.*", 1e-9, 1},
                            {"modular.psi_reality.*", 1e-8, 1},
                            {"modular.psi_eigen.*", 1e-7, 1},
                            {"modular.weight_integral.*", 1e-4, 3},
                            {"modular.summation.*", 1e-4, 3}});
         }},
        {12, "box intertwining", 300, [] { return groups({{"fock.box_intertwining.*", 1e-5, 1}}); }},
    };

    bool all = true;
    for (auto& c : cs) {
        auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.body();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what() + "; "};
        }
        double s = std::chrono::duration<double>(Clock::now() - t0).count();
        bool in_time = c.seconds == 0 || s < c.seconds;
        bool ok = o.ok && in_time;
        all = all && ok;
        std::printf("%s %2d %s: %sruntime %.2f s%s\n", ok ? "PASS" : "FAIL", c.n, c.name.c_str(), o.detail.c_str(), s,
                    c.seconds > 0 ? (" (< " + fmt_real(c.seconds) + " s)").c_str() : "");
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
