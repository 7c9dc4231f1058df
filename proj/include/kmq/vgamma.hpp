#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

#include "fock.hpp"
#include "orthopoly.hpp"

namespace kmq {

// ---------------------------------------------------------------- context

// Representation parameter gamma, spin window [-M, M], and the selected-value
// label nu when gamma = i q^nu with nu in Z/2.
struct GammaContext {
    cd gamma{0.7, 0};
    long M = 40;
    bool selected = false;
    double nu = 0;

    // gamma = i q^{two_nu/2}, built exactly from the nome
    static GammaContext selected_value(long two_nu, const QContext<cd>& ctx, long M = 40)
    {
        GammaContext g;
        g.gamma = cd(0, 1) * ctx.half_pow(two_nu);
        g.M = M;
        g.selected = true;
        g.nu = 0.5 * double(two_nu);
        g.check_measure(ctx);
        return g;
    }

    // any gamma; recognised as selected when within 1e-12 of i q^nu, |nu| <= 10
    static GammaContext from_gamma(cd gamma, const QContext<cd>& ctx, long M = 40)
    {
        GammaContext g;
        g.gamma = gamma;
        g.M = M;
        for (long t = -20; t <= 20; ++t)
            if (std::abs(gamma - cd(0, 1) * ctx.half_pow(t)) < 1e-12 * std::abs(gamma)) {
                g.selected = true;
                g.nu = 0.5 * double(t);
            }
        g.check_measure(ctx);
        return g;
    }

    long two_nu() const { return std::lround(2 * nu); }

    void check_measure(const QContext<cd>& ctx) const
    {
        if (gamma == cd(0)) throw DomainError("GammaContext: gamma = 0");
        if (M < 1) throw DomainError("GammaContext: M must be >= 1");
        for (long m = -M; m <= M; ++m) {
            cd xi = gamma * ipow(ctx.q, m);
            if (std::abs(xi - 1.0 / xi) < 1e-12)
                throw SingularMeasure("GammaContext: [gamma q^" + std::to_string(m) + "] vanishes");
        }
    }
};

inline Params gamma_params(const GammaContext& gc, const QContext<cd>& ctx)
{
    Params p{{"gamma", fmt_cplx(gc.gamma)}, {"q", fmt_cplx(ctx.q)}};
    if (gc.selected) p["nu"] = fmt_real(gc.nu);
    return p;
}

namespace detail {

// (c q^{e0}; q^{step})_n for any integer n, in log form; a factor is exactly
// zero when c = 1 and its exponent is 0.
inline LogProduct log_qpoch_qexp(cd c, long e0, long step, long n, const QContext<cd>& ctx)
{
    LogProduct p;
    auto factor = [&](long e) { return cd(1) - (e == 0 ? c : c * ipow(ctx.q, e)); };
    if (n >= 0)
        for (long k = 0; k < n; ++k) p.mul(factor(e0 + step * k));
    else
        for (long k = n; k < 0; ++k) p.div(factor(e0 + step * k));
    return p;
}

// p_k(xi) = xi^{s k} r_k with s = sign(log|xi|); r stays bounded for large |xi|^{+-1}.
struct FactoredP {
    std::vector<cd> r;
    int s = 1;
};

inline FactoredP factored_p(long n, cd xi, const QContext<cd>& ctx)
{
    FactoredP f;
    f.s = std::abs(xi) >= 1 ? 1 : -1;
    cd w = f.s > 0 ? 1.0 / xi : xi;  // xi^{-s}
    cd hw = 1.0 + w * w;              // (xi + 1/xi) xi^{-s}
    f.r.resize(n + 1);
    f.r[0] = 1;
    if (n >= 1) f.r[1] = ctx.sqrt_q * hw;
    cd qk = 1;
    for (long k = 1; k < n; ++k) {
        qk *= ctx.q;
        f.r[k + 1] = qk * ctx.sqrt_q * hw * f.r[k] - (qk * qk - 1.0) * w * w * f.r[k - 1];
    }
    return f;
}

} // namespace detail

// ---------------------------------------------------------------- decomposition

// Matrix elements between the spin basis |mu,m> and the two Fock towers |eps,a>:
//   <eps,a|mu,m> = N^{-1} mu^a eps^{a+m} c_a(m),  <mu,m|eps,a> = mu^{-a} (-eps)^{a+m} q^a c_a(m),
// c_a(m) = gamma^m q^{m^2/2} p_a(gamma q^m) / sqrt((q^2;q^2)_a), N = -2H(gamma).
class VGammaBasis {
public:
    VGammaBasis(const GammaContext& gc, const QContext<cd>& ctx)
        : gc_(gc), ctx_(ctx), lg_(std::log(gc.gamma)), lq_(std::log(ctx.q))
    {
        gc.check_measure(ctx);
        N_ = -2.0 * theta(ThetaKind::H, gc.gamma, ctx);
    }

    cd N() const { return N_; }
    const GammaContext& gamma_ctx() const { return gc_; }
    const QContext<cd>& ctx() const { return ctx_; }
    cd measure(long m) const { return bracket(cd(gc_.gamma * ipow(ctx_.q, m))); }

    // c_0(m) .. c_A(m)
    std::vector<cd> profile(long m, long A) const
    {
        cd lxi = lg_ + double(m) * lq_;
        auto f = detail::factored_p(A, std::exp(lxi), ctx_);
        std::vector<cd> c(A + 1);
        cd po = 1;
        for (long a = 0; a <= A; ++a) {
            if (a > 0) po *= 1.0 - ipow(ctx_.q2, a);
            cd L = double(m) * lg_ + 0.5 * double(m * m) * lq_ + double(f.s * a) * lxi;
            c[a] = std::exp(L) * f.r[a] / std::sqrt(po);
        }
        return c;
    }

    cd bra(int eps, long a, long m, cd mu = 1) const
    {
        return ipow(mu, a) * sign_pow<cd>(eps < 0 ? a + m : 0) * profile(m, a)[a] / N_;
    }
    cd ket(long m, int eps, long a, cd mu = 1) const
    {
        return ipow(1.0 / mu, a) * sign_pow<cd>(eps > 0 ? a + m : 0) * ipow(ctx_.q, a) * profile(m, a)[a];
    }

    // sum_a w^a <m|eps,a><eps,a|m'> (w = mu'/mu), summed to the tail rule
    cd occupation_sum(int eps, long m, long mp, cd w) const
    {
        long A = 64 + 2 * std::max(std::abs(m), std::abs(mp));
        while (true) {
            auto c = profile(m, A), cp = profile(mp, A);
            cd s = 0;
            double big = 0;
            TailRule tail{ctx_.tail_cut};
            long from = 2 * std::max(std::abs(m), std::abs(mp)) + 4;
            cd wa = 1, qa = 1;
            for (long a = 0; a <= A; ++a) {
                cd t = wa * qa * sign_pow<cd>(a + m) * c[a] * cp[a];
                s += t;
                big = std::max(big, std::abs(t));
                tail.cut = ctx_.tail_cut * big;
                if (a >= from && tail.done(std::abs(t))) return sign_pow<cd>(eps < 0 ? m + mp : 0) * s / N_;
                wa *= w;
                qa *= ctx_.q;
            }
            A *= 2;
            if (A > ctx_.max_terms) throw TruncationExhausted("occupation sum: tail criterion not reached");
        }
    }

private:
    GammaContext gc_;
    QContext<cd> ctx_;
    cd N_, lg_, lq_;
};

struct VGammaDecomposition {
    long A_max = 0, M = 0;
    cd N;
    // index [eps == -1]; bra(a, m + M) = <eps,a|mu,m>, ket(m + M, a) = <mu,m|eps,a>
    std::array<MatC, 2> bra, ket;
    VecC measure;
};

inline VGammaDecomposition vgamma_decomposition(const GammaContext& gc, cd mu, long A_max, const QContext<cd>& ctx)
{
    if (A_max < 0) throw DomainError("vgamma_decomposition: A_max must be >= 0");
    VGammaBasis vb(gc, ctx);
    long M = gc.M, n = 2 * M + 1;
    VGammaDecomposition d;
    d.A_max = A_max;
    d.M = M;
    d.N = vb.N();
    d.measure.resize(n);
    for (int e = 0; e < 2; ++e) {
        d.bra[e] = MatC(A_max + 1, n);
        d.ket[e] = MatC(n, A_max + 1);
    }
    for (long m = -M; m <= M; ++m) {
        d.measure(m + M) = vb.measure(m);
        auto c = vb.profile(m, A_max);
        for (long a = 0; a <= A_max; ++a) {
            cd base_bra = ipow(mu, a) * c[a] / d.N;
            cd base_ket = ipow(1.0 / mu, a) * ipow(ctx.q, a) * c[a];
            d.bra[0](a, m + M) = base_bra;
            d.bra[1](a, m + M) = sign_pow<cd>(a + m) * base_bra;
            d.ket[0](m + M, a) = sign_pow<cd>(a + m) * base_ket;
            d.ket[1](m + M, a) = base_ket;
        }
    }
    return d;
}

// occupation form: sum_{m} <eps,a|m>[gamma q^m]<m|eps',a'> = delta over the window,
// a, a' <= A_max. Spin form: sum_{a,eps} <m|eps,a><eps,a|m'> = delta/[gamma q^m] for
// |m|, |m'| <= M_spin, measured against sqrt|1/[gamma q^m][gamma q^m']|.
inline IdentityReport completeness_check_vgamma(const GammaContext& gc, cd mu, long A_max, long M_spin,
                                                const QContext<cd>& ctx)
{
    Stopwatch sw;
    auto d = vgamma_decomposition(gc, mu, A_max, ctx);
    double r_occ = 0;
    for (int e = 0; e < 2; ++e)
        for (int ep = 0; ep < 2; ++ep) {
            MatC G = d.bra[e] * d.measure.asDiagonal() * d.ket[ep];
            MatC want = MatC::Zero(A_max + 1, A_max + 1);
            if (e == ep) want.setIdentity();
            r_occ = std::max(r_occ, (G - want).cwiseAbs().maxCoeff());
        }
    VGammaBasis vb(gc, ctx);
    double r_spin = 0;
    for (long m = -M_spin; m <= M_spin; ++m)
        for (long mp = -M_spin; mp <= M_spin; ++mp) {
            cd s = vb.occupation_sum(1, m, mp, 1.0) + vb.occupation_sum(-1, m, mp, 1.0);
            double sc = 1.0 / std::sqrt(std::abs(vb.measure(m)) * std::abs(vb.measure(mp)));
            cd want = m == mp ? 1.0 / vb.measure(m) : cd(0);
            r_spin = std::max(r_spin, std::abs(s - want) / sc);
        }
    Params p = gamma_params(gc, ctx);
    p["mu"] = fmt_cplx(mu);
    p["A_max"] = std::to_string(A_max);
    p["M"] = std::to_string(gc.M);
    p["M_spin"] = std::to_string(M_spin);
    auto r = make_report("vgamma.completeness.5_8", p, std::max(r_occ, r_spin), ctx.tol_identity);
    r.note = "occupation " + fmt_real(r_occ) + ", spin " + fmt_real(r_spin);
    r.wall_time_ms = sw.ms();
    return r;
}

// K_0 acting on the wave function psi(m) = <m|eps,a>: (psi(m-1) - psi(m+1))/[gamma q^m] = eps q^{a+1/2} psi(m).
inline IdentityReport parity_check_vgamma(const GammaContext& gc, long A, long M_spin, const QContext<cd>& ctx)
{
    Stopwatch sw;
    VGammaBasis vb(gc, ctx);
    double res = 0;
    for (int eps : {1, -1})
        for (long a = 0; a <= A; ++a)
            for (long m = -M_spin; m <= M_spin; ++m) {
                cd lhs = (vb.ket(m - 1, eps, a) - vb.ket(m + 1, eps, a)) / vb.measure(m);
                cd rhs = double(eps) * ctx.half_pow(2 * a + 1) * vb.ket(m, eps, a);
                res = std::max(res, rel_residual(lhs, rhs));
            }
    Params p = gamma_params(gc, ctx);
    p["A"] = std::to_string(A);
    p["M_spin"] = std::to_string(M_spin);
    auto r = make_report("vgamma.parity.5_7", p, res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// At gamma = q^{1/2}: the antisymmetric tower vanishes on |m> + |-1-m>, and
// <+,a|old m> = (|m> + |-1-m>)/2 projected equals the Fock element <a|m>/2 (N_gamma = 2 N_F).
inline IdentityReport old_states_check(long A, long M_spin, const QContext<cd>& ctx)
{
    Stopwatch sw;
    auto gc = GammaContext::from_gamma(ctx.sqrt_q, ctx, std::max<long>(M_spin + 1, 2));
    VGammaBasis vb(gc, ctx);
    FockChi<cd> fc(ctx);
    cd NF = fock_NF(ctx);
    double res = 0;
    for (long a = 0; a <= A; ++a)
        for (long m = 0; m <= M_spin; ++m) {
            cd plus = 0.5 * (vb.bra(1, a, m) + vb.bra(1, a, -1 - m));
            cd minus = 0.5 * (vb.bra(-1, a, m) + vb.bra(-1, a, -1 - m));
            cd fock = fc.chi(a, m) / NF;
            res = std::max({res, rel_residual(cd(2.0 * plus), fock), std::abs(minus) / std::abs(fock)});
        }
    auto r = make_report("vgamma.old_states.5_9",
                         {{"q", fmt_cplx(ctx.q)}, {"A", std::to_string(A)}, {"M_spin", std::to_string(M_spin)}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// ---------------------------------------------------------------- projector weights

// V^{(eps)}_x(m, m') in closed form, log space.
inline cd weight_Veps(cd x, int eps, long m, long mp, const GammaContext& gc, const QContext<cd>& ctx)
{
    if (x == cd(0)) throw DomainError("weight_Veps: x = 0");
    cd g2 = gc.gamma * gc.gamma;
    LogProduct p;
    p.mul_log(0.5 * double(m * m + mp * mp) * std::log(ctx.q) + double(m + mp) * std::log(gc.gamma));
    p.absorb(log_qpoch_inf_qexp(g2 / x, 2 + m + mp, 2, ctx));
    p.absorb(log_qpoch_inf_qexp(1.0 / (g2 * x), 2 - m - mp, 2, ctx));
    p.absorb(log_qpoch_inf_qexp(1.0 / x, 2 + m - mp, 2, ctx));
    p.absorb(log_qpoch_inf_qexp(1.0 / x, 2 - m + mp, 2, ctx));
    p.absorb(log_qpoch_inf(ctx.q2 / (x * x), ctx.q2, ctx), true);
    cd sign = sign_pow<cd>(eps > 0 ? m : mp);
    return sign * p.value("weight_Veps") / (-2.0 * theta(ThetaKind::H, gc.gamma, ctx));
}

// defining sum over a with mu = x, mu' = 1
inline cd weight_Veps_sum(cd x, int eps, long m, long mp, const VGammaBasis& vb)
{
    return vb.occupation_sum(eps, m, mp, 1.0 / x);
}

inline IdentityReport weight_Veps_closed_vs_sum_check(cd x, long M_box, const GammaContext& gc,
                                                      const QContext<cd>& ctx)
{
    Stopwatch sw;
    VGammaBasis vb(gc, ctx);
    double res = 0;
    for (int eps : {1, -1})
        for (long m = -M_box; m <= M_box; ++m)
            for (long mp = -M_box; mp <= M_box; ++mp)
                res = std::max(res, rel_residual(weight_Veps(x, eps, m, mp, gc, ctx),
                                                 weight_Veps_sum(x, eps, m, mp, vb)));
    Params p = gamma_params(gc, ctx);
    p["x"] = fmt_cplx(x);
    p["M_box"] = std::to_string(M_box);
    auto r = make_report("vgamma.weight_closed_form.5_10_5_11", p, res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// sum_{m'} V^{(eps)}_x(m,m')[gamma q^m']V^{(eps')}_y(m',m'') = delta_{eps eps'} V^{(eps)}_{xy}(m,m'')
inline IdentityReport orthogonality_check_vgamma(cd x, cd y, long M_box, const GammaContext& gc,
                                                 const QContext<cd>& ctx)
{
    Stopwatch sw;
    double res = 0;
    for (int e : {1, -1})
        for (int ep : {1, -1})
            for (long m = -M_box; m <= M_box; ++m)
                for (long mpp = -M_box; mpp <= M_box; ++mpp) {
                    cd s = bilateral_tail_sum<cd>(
                        [&](long k) {
                            return weight_Veps(x, e, m, k, gc, ctx) * bracket(cd(gc.gamma * ipow(ctx.q, k))) *
                                   weight_Veps(y, ep, k, mpp, gc, ctx);
                        },
                        std::max(std::abs(m), std::abs(mpp)) + 2, ctx.tail_cut, ctx.max_terms, "orthogonality");
                    cd v = weight_Veps(x * y, e, m, mpp, gc, ctx);
                    cd want = e == ep ? v : cd(0);
                    res = std::max(res, std::abs(s - want) / std::max(std::abs(v), 1e-300));
                }
    Params p = gamma_params(gc, ctx);
    p["x"] = fmt_cplx(x);
    p["y"] = fmt_cplx(y);
    p["M_box"] = std::to_string(M_box);
    auto r = make_report("vgamma.orthogonality.5_12", p, res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// P^{(eps)}_{m,m'} = [gamma q^m] V^{(eps)}_1(m,m'). P+ + P- = 1 entrywise on [-M, M];
// P^{(eps)} P^{(eps')} = delta P^{(eps)} with the inner sum over Z, on [-M_box, M_box].
inline IdentityReport projector_check_vgamma(long M_box, const GammaContext& gc, const QContext<cd>& ctx)
{
    Stopwatch sw;
    auto P = [&](int e, long m, long mp) {
        return bracket(cd(gc.gamma * ipow(ctx.q, m))) * weight_Veps(1.0, e, m, mp, gc, ctx);
    };
    double r_sum = 0;
    for (long m = -gc.M; m <= gc.M; ++m)
        for (long mp = -gc.M; mp <= gc.M; ++mp) {
            cd a = P(1, m, mp), b = P(-1, m, mp);
            double sc = std::max({1.0, std::abs(a), std::abs(b)});
            r_sum = std::max(r_sum, std::abs(a + b - (m == mp ? 1.0 : 0.0)) / sc);
        }
    double r_alg = 0;
    for (int e : {1, -1})
        for (int ep : {1, -1})
            for (long m = -M_box; m <= M_box; ++m)
                for (long mpp = -M_box; mpp <= M_box; ++mpp) {
                    cd s = bilateral_tail_sum<cd>([&](long k) { return P(e, m, k) * P(ep, k, mpp); },
                                                  std::max(std::abs(m), std::abs(mpp)) + 2, ctx.tail_cut,
                                                  ctx.max_terms, "projectors");
                    cd want = e == ep ? P(e, m, mpp) : cd(0);
                    r_alg = std::max(r_alg, std::abs(s - want) / std::max(1.0, std::abs(want)));
                }
    Params p = gamma_params(gc, ctx);
    p["M"] = std::to_string(gc.M);
    p["M_box"] = std::to_string(M_box);
    auto r = make_report("vgamma.projectors.5_13", p, std::max(r_sum, r_alg), ctx.tol_identity);
    r.note = "sum " + fmt_real(r_sum) + ", algebra " + fmt_real(r_alg);
    r.wall_time_ms = sw.ms();
    return r;
}

// V^{(+)} + V^{(-)} = 0 for m + m' odd
inline IdentityReport parity_vanishing_check(cd x, long M_box, const GammaContext& gc, const QContext<cd>& ctx)
{
    Stopwatch sw;
    double res = 0;
    for (long m = -M_box; m <= M_box; ++m)
        for (long mp = -M_box; mp <= M_box; ++mp) {
            if ((m + mp) % 2 == 0) continue;
            cd a = weight_Veps(x, 1, m, mp, gc, ctx), b = weight_Veps(x, -1, m, mp, gc, ctx);
            res = std::max(res, std::abs(a + b) / std::max(std::abs(a), 1e-300));
        }
    Params p = gamma_params(gc, ctx);
    p["x"] = fmt_cplx(x);
    p["M_box"] = std::to_string(M_box);
    auto r = make_report("vgamma.parity_vanishing.5_19", p, res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// ---------------------------------------------------------------- braces

// sum_m (-1)^m q^{3m^2/2} gamma^{3m} [gamma q^m] p_a p_b p_c, p_n = q^{n^2/2} P_n(gamma q^m)
template <class C>
C brace_gamma_sum(long a, long b, long c, const C& gamma, const QContext<C>& ctx)
{
    detail::brace_guard(a, b, c);
    if (a > 8 || b > 8 || c > 8) throw DomainError("brace_gamma: indices above 8");
    long n = std::max({a, b, c});
    return bilateral_tail_sum<C>(
        [&](long m) {
            C xi = gamma * ipow(ctx.q, m);
            auto p = poly_p_scaled(n, xi, ctx);
            return sign_pow<C>(m) * ctx.half_pow(3 * m * m) * ipow(gamma, 3 * m) * (xi - C(1) / xi) * p[a] * p[b] *
                   p[c];
        },
        n + 2, ctx.tail_cut, ctx.max_terms, "brace_gamma");
}

// -H(gamma) theta_3(gamma) / (q^2;q^2)_inf
template <class C>
C m_gamma_product(const C& gamma, const QContext<C>& ctx)
{
    return -theta_product_only(ThetaKind::H, gamma, ctx) * theta_product_only(ThetaKind::theta3, gamma, ctx) /
           qpoch_inf(ctx.q2, ctx.q2, ctx);
}

// For each gamma: M_gamma as sum vs product, and the normalised sum against the
// closed form over (a,b,c) in [0,A]^3.
template <class C>
IdentityReport brace_gamma_check(long A, const std::vector<cd>& gamma_list, const QContext<C>& ctx,
                                 double tol = 1e-8)
{
    Stopwatch sw;
    double r_m = 0, r_b = 0;
    for (cd g0 : gamma_list) {
        C g(g0.real(), g0.imag());
        C Ms = brace_gamma_sum<C>(0, 0, 0, g, ctx);
        C Mp = m_gamma_product(g, ctx);
        r_m = std::max(r_m, rel_residual(Ms, Mp));
        for (long a = 0; a <= A; ++a)
            for (long b = 0; b <= A; ++b)
                for (long c = 0; c <= A; ++c) {
                    C want = brace_closed_form(a, b, c, ctx);
                    C s = brace_gamma_sum<C>(a, b, c, g, ctx);
                    r_b = std::max({r_b, rel_residual(C(s / Ms), want), rel_residual(C(s / Mp), want)});
                }
    }
    std::string gl;
    for (cd g : gamma_list) gl += (gl.empty() ? "" : ";") + fmt_cplx(g);
    auto r = make_report("vgamma.brace.5_14_5_15",
                         {{"q", fmt_cplx(to_cd(ctx.q))}, {"A", std::to_string(A)}, {"gammas", gl}},
                         std::max(r_m, r_b), tol);
    r.note = "M_gamma " + fmt_real(r_m) + ", braces " + fmt_real(r_b);
    r.wall_time_ms = sw.ms();
    return r;
}

// ---------------------------------------------------------------- Kashiwara-Miwa weights

// Bold weights of the rational model. V is the Pochhammer form
// (q/x)^{2m} (x;q^2)_{m-m'}/(q^2/x;q^2)_{m-m'} (g^2 x;q^2)_{m+m'}/(q^2 g^2/x;q^2)_{m+m'}.
class KMWeights {
public:
    KMWeights(const GammaContext& gc, const QContext<cd>& ctx) : gc_(gc), ctx_(ctx), g2_(gc.gamma * gc.gamma) {}

    const GammaContext& gamma_ctx() const { return gc_; }
    const QContext<cd>& ctx() const { return ctx_; }

    LogProduct V_log(cd x, long m, long mp) const
    {
        if (x == cd(0)) throw DomainError("km V: x = 0");
        LogProduct p;
        p.mul_log(2.0 * double(m) * std::log(ctx_.q / x));
        p.absorb(detail::log_qpoch_qexp(x, 0, 2, m - mp, ctx_));
        p.absorb(detail::log_qpoch_qexp(1.0 / x, 2, 2, m - mp, ctx_), true);
        p.absorb(detail::log_qpoch_qexp(g2_ * x, 0, 2, m + mp, ctx_));
        p.absorb(detail::log_qpoch_qexp(g2_ / x, 2, 2, m + mp, ctx_), true);
        return p;
    }

    cd V(cd x, long m, long mp) const
    {
        auto p = V_log(x, m, mp);
        if (p.zero_order < 0)
            throw PoleHit("km V: denominator Pochhammer vanishes at x=" + fmt_cplx(x) + ", m=" + std::to_string(m) +
                          ", m'=" + std::to_string(mp));
        return p.value();
    }

    cd Vbar(cd x, long a, long b) const { return V(ctx_.q / x, a, b); }

    cd S(long m) const { return bracket(cd(gc_.gamma * ipow(ctx_.q, 2 * m))) / bracket(gc_.gamma); }

    // product form
    cd Phi(cd x) const
    {
        const cd& q2 = ctx_.q2;
        auto P = [&](cd y) { return qpoch_inf(y, q2, ctx_); };
        return P(q2) * P(q2 / (x * x)) * P(q2 * g2_) * P(q2 / g2_) /
               (P(q2 / x) * P(q2 / x) * P(q2 * g2_ / x) * P(q2 / (g2_ * x)));
    }

    // defining form 1/(2[gamma] V^{(eps)}_x(0,0))
    cd Phi_def(cd x, int eps = 1) const
    {
        return 1.0 / (2.0 * bracket(gc_.gamma) * weight_Veps(x, eps, 0, 0, gc_, ctx_));
    }

    // kappa(x, i q^{1/2} g) / kappa(x, g)
    cd kappa_ratio(cd x, cd g) const
    {
        const cd &q = ctx_.q, &q2 = ctx_.q2;
        cd h2 = g * g;
        auto P = [&](cd y) { return qpoch_inf(y, q2, ctx_); };
        return P(q2 * h2 * x) * P(q2 / (h2 * x)) / (P(q * x / h2) * P(q * q2 * h2 / x));
    }

    // selected gamma only: closed forms for nu = 0 and nu = +-1/2, the ratio
    // recursion in steps of q^{1/2} for other nu
    cd kappa(cd x) const
    {
        if (!gc_.selected) throw DomainError("km kappa: defined only for gamma = i q^nu");
        const cd &q = ctx_.q, &q2 = ctx_.q2;
        long t = gc_.two_nu();
        if (t == 0) {
            cd q4 = q2 * q2;
            return qpoch_inf(q2 * x * x, q4, ctx_) / qpoch_inf(q4 / (x * x), q4, ctx_);
        }
        if (t == 1 || t == -1) {
            auto P = [&](cd y) { return qpoch_inf(y, q2, ctx_); };
            return P(q * x) * P(-q2 * x) / (P(q2 / x) * P(-q * q2 / x));
        }
        GammaContext base = GammaContext::selected_value(t > 0 ? 1 : -1, ctx_, 1);
        cd k = KMWeights(base, ctx_).kappa(x);
        if (t > 0)
            for (long u = 1; u < t; ++u) k *= kappa_ratio(x, cd(0, 1) * ctx_.half_pow(u));
        else
            for (long u = -1; u > t; --u) k /= kappa_ratio(x, cd(0, 1) * ctx_.half_pow(u - 1));
        return k;
    }

private:
    GammaContext gc_;
    QContext<cd> ctx_;
    cd g2_;
};

inline cd km_weights(cd x, long m, long mp, const GammaContext& gc, const QContext<cd>& ctx)
{
    return KMWeights(gc, ctx).V(x, m, mp);
}

// bold V against V^{(eps)}(2m,2m')/V^{(eps)}(0,0), and the product Phi against its definition
inline IdentityReport km_weight_form_check(cd x, long M_box, const GammaContext& gc, const QContext<cd>& ctx)
{
    Stopwatch sw;
    KMWeights kw(gc, ctx);
    double r_v = 0;
    for (int eps : {1, -1}) {
        cd v00 = weight_Veps(x, eps, 0, 0, gc, ctx);
        for (long m = -M_box; m <= M_box; ++m)
            for (long mp = -M_box; mp <= M_box; ++mp)
                r_v = std::max(r_v, rel_residual(kw.V(x, m, mp), cd(weight_Veps(x, eps, 2 * m, 2 * mp, gc, ctx) / v00)));
    }
    double r_phi = std::max(rel_residual(kw.Phi(x), kw.Phi_def(x, 1)), rel_residual(kw.Phi(x), kw.Phi_def(x, -1)));
    Params p = gamma_params(gc, ctx);
    p["x"] = fmt_cplx(x);
    p["M_box"] = std::to_string(M_box);
    auto r = make_report("vgamma.km_weight.5_20_5_22", p, std::max(r_v, r_phi), ctx.tol_identity);
    r.note = "V " + fmt_real(r_v) + ", Phi " + fmt_real(r_phi);
    r.wall_time_ms = sw.ms();
    return r;
}

// V_x(a,b) = V_x(b,a), V_1(a,b) = delta/S_a, V_x V_{q^2/x} = 1, V_q = 1 on [-M_box, M_box]^2
inline IdentityReport km_symmetry_check(cd x, long M_box, const GammaContext& gc, const QContext<cd>& ctx)
{
    Stopwatch sw;
    KMWeights kw(gc, ctx);
    const cd& q = ctx.q;
    double res = 0;
    for (long a = -M_box; a <= M_box; ++a)
        for (long b = -M_box; b <= M_box; ++b) {
            cd v = kw.V(x, a, b);
            cd v1 = kw.V(1.0, a, b), w1 = a == b ? 1.0 / kw.S(a) : cd(0);
            res = std::max({res, rel_residual(v, kw.V(x, b, a)), std::abs(v * kw.V(q * q / x, a, b) - 1.0),
                            std::abs(kw.V(q, a, b) - 1.0), std::abs(v1 - w1) / std::abs(1.0 / kw.S(a))});
        }
    Params p = gamma_params(gc, ctx);
    p["x"] = fmt_cplx(x);
    p["M_box"] = std::to_string(M_box);
    auto r = make_report("vgamma.km_symmetry.5_24", p, res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// sum_b V_x(a,b) S_b V_y(b,c) = Phi(x)Phi(y)/Phi(xy) V_xy(a,c), a, c in [-M_box, M_box]
inline IdentityReport km_summation_check(cd x, cd y, long M_box, const GammaContext& gc, const QContext<cd>& ctx)
{
    Stopwatch sw;
    KMWeights kw(gc, ctx);
    cd k = kw.Phi(x) * kw.Phi(y) / kw.Phi(x * y);
    double res = 0;
    for (long a = -M_box; a <= M_box; ++a)
        for (long c = -M_box; c <= M_box; ++c) {
            cd s = bilateral_tail_sum<cd>([&](long b) { return kw.V(x, a, b) * kw.S(b) * kw.V(y, b, c); },
                                          std::max(std::abs(a), std::abs(c)) + 2, ctx.tail_cut, ctx.max_terms,
                                          "km summation");
            res = std::max(res, rel_residual(s, cd(k * kw.V(x * y, a, c))));
        }
    Params p = gamma_params(gc, ctx);
    p["x"] = fmt_cplx(x);
    p["y"] = fmt_cplx(y);
    p["M_box"] = std::to_string(M_box);
    auto r = make_report("vgamma.km_summation.5_25", p, res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// y = 1/x: sum_b V_x(a,b) S_b V_{1/x}(b,c) = Phi(x)Phi(1/x) delta/S_a
inline IdentityReport km_inversion_check(cd x, long M_box, const GammaContext& gc, const QContext<cd>& ctx)
{
    Stopwatch sw;
    KMWeights kw(gc, ctx);
    cd k = kw.Phi(x) * kw.Phi(1.0 / x);
    double res = 0;
    for (long a = -M_box; a <= M_box; ++a)
        for (long c = -M_box; c <= M_box; ++c) {
            cd s = bilateral_tail_sum<cd>([&](long b) { return kw.V(x, a, b) * kw.S(b) * kw.V(1.0 / x, b, c); },
                                          std::max(std::abs(a), std::abs(c)) + 2, ctx.tail_cut, ctx.max_terms,
                                          "km inversion");
            cd diag = k / kw.S(a);
            res = std::max(res, std::abs(s - (a == c ? diag : cd(0))) / std::abs(diag));
        }
    Params p = gamma_params(gc, ctx);
    p["x"] = fmt_cplx(x);
    p["M_box"] = std::to_string(M_box);
    auto r = make_report("vgamma.km_inversion.5_26", p, res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// ---------------------------------------------------------------- star-triangle

struct StarTriangleSides {
    cd star, triangle;  // triangle without the kappa factor
};

inline StarTriangleSides star_triangle_sides(cd x, cd y, long a, long b, long c, const KMWeights& kw)
{
    const QContext<cd>& ctx = kw.ctx();
    const cd& q = ctx.q;
    cd z = q / (x * y);
    cd star = bilateral_tail_sum<cd>(
        [&](long d) { return kw.S(d) * kw.V(x, a, d) * kw.V(y, b, d) * kw.V(z, c, d); },
        std::max({std::abs(a), std::abs(b), std::abs(c)}) + 2, ctx.tail_cut, ctx.max_terms, "star-triangle");
    cd tri = kw.V(q / x, b, c) * kw.V(q / y, a, c) * kw.V(q / z, a, b);
    return {star, tri};
}

// Selected gamma: relative residual of the star-triangle relation with its kappa. Generic gamma
// has no kappa, so the residual is the spread of star/triangle over the spin set
// {(a,b,c), (0,0,0), (1,-1,2), (2,0,-1), (1,1,1)}; it is a negative control.
inline IdentityReport star_triangle_km(cd x, cd y, long a, long b, long c, const GammaContext& gc,
                                       const QContext<cd>& ctx, double tol = 1e-7)
{
    Stopwatch sw;
    KMWeights kw(gc, ctx);
    cd z = ctx.q / (x * y);
    double res = 0;
    if (gc.selected) {
        auto s = star_triangle_sides(x, y, a, b, c, kw);
        cd k = kw.kappa(x) * kw.kappa(y) * kw.kappa(z) / kw.kappa(1.0);
        res = rel_residual(s.star, cd(k * s.triangle));
    } else {
        std::vector<std::array<long, 3>> spins{{a, b, c}, {0, 0, 0}, {1, -1, 2}, {2, 0, -1}, {1, 1, 1}};
        cd r0 = 0;
        for (size_t i = 0; i < spins.size(); ++i) {
            auto s = star_triangle_sides(x, y, spins[i][0], spins[i][1], spins[i][2], kw);
            cd ratio = s.star / s.triangle;
            if (i == 0) r0 = ratio;
            else res = std::max(res, rel_residual(ratio, r0));
        }
    }
    Params p = gamma_params(gc, ctx);
    p["x"] = fmt_cplx(x);
    p["y"] = fmt_cplx(y);
    p["spins"] = std::to_string(a) + "," + std::to_string(b) + "," + std::to_string(c);
    auto r = make_report("vgamma.star_triangle.5_27", p, res, tol, !gc.selected);
    if (!gc.selected) r.note = "generic gamma: spread of star/triangle ratios";
    r.wall_time_ms = sw.ms();
    return r;
}

// ---------------------------------------------------------------- partition functions

// log z(x) for gamma = i (nu = 0) and gamma = i q^{+-1/2}
inline cd km_log_z(cd x, const GammaContext& gc, const QContext<cd>& ctx)
{
    if (!gc.selected || std::abs(gc.two_nu()) > 1)
        throw DomainError("km_log_z: series given for gamma = i and i q^{+-1/2} only");
    const cd &q = ctx.q, &q2 = ctx.q2;
    if (gc.two_nu() == 0) {
        cd a = q2 * x * x, b = q2 * q2 * q2 / (x * x);
        if (!(std::abs(a) < 1 && std::abs(b) < 1)) throw DomainError("km_log_z: outside the convergence annulus");
        cd an = 1, bn = 1, q2n = 1;
        return -tail_sum<cd>(
            [&](long n) {
                an *= a;
                bn *= b;
                q2n *= q2;
                return (an - bn) / (double(n) * (1.0 - q2n * q2n) * (1.0 + q2n));
            },
            1, 1, ctx.tail_cut, ctx.max_terms, "log z");
    }
    cd a = q * x, b = q * q2 / x;
    if (!(std::abs(a) < 1 && std::abs(b) < 1)) throw DomainError("km_log_z: outside the convergence annulus");
    cd xn = 1, yn = 1, qn = 1, mq2n = 1;
    cd y = q2 / x;
    return -tail_sum<cd>(
        [&](long n) {
            xn *= x;
            yn *= y;
            qn *= q;
            mq2n *= -q2;
            return (qn + mq2n) / (double(n) * (1.0 - qn * qn) * (1.0 + qn)) * (xn - yn);
        },
        1, 1, ctx.tail_cut, ctx.max_terms, "log z");
}

// z(x) z(q^2/x) = 1 and z(x)/z(q/x) = kappa(x)
inline IdentityReport km_partition_check(cd x, const GammaContext& gc, const QContext<cd>& ctx)
{
    Stopwatch sw;
    KMWeights kw(gc, ctx);
    const cd& q = ctx.q;
    cd lx = km_log_z(x, gc, ctx);
    double r1 = std::abs(std::exp(lx + km_log_z(q * q / x, gc, ctx)) - 1.0);
    double r2 = rel_residual(cd(std::exp(lx - km_log_z(q / x, gc, ctx))), kw.kappa(x));
    Params p = gamma_params(gc, ctx);
    p["x"] = fmt_cplx(x);
    auto r = make_report("vgamma.partition.5_29_5_30", p, std::max(r1, r2), ctx.tol_identity);
    r.note = "inversion " + fmt_real(r1) + ", kappa " + fmt_real(r2);
    r.wall_time_ms = sw.ms();
    return r;
}

// z_s = 1/kappa(1) = kappa(q)
inline IdentityReport km_central_spin_check(const GammaContext& gc, const QContext<cd>& ctx)
{
    Stopwatch sw;
    KMWeights kw(gc, ctx);
    double res = std::abs(kw.kappa(ctx.q) * kw.kappa(1.0) - 1.0);
    auto r = make_report("vgamma.central_spin.5_31", gamma_params(gc, ctx), res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// kappa(x, i q^{1/2}) / kappa(x, i) against the general ratio formula at gamma = i
inline IdentityReport km_kappa_ratio_check(cd x, const QContext<cd>& ctx)
{
    Stopwatch sw;
    auto g0 = GammaContext::selected_value(0, ctx, 1), g1 = GammaContext::selected_value(1, ctx, 1);
    KMWeights k0(g0, ctx), k1(g1, ctx);
    double res = rel_residual(cd(k1.kappa(x) / k0.kappa(x)), k0.kappa_ratio(x, g0.gamma));
    auto r = make_report("vgamma.kappa_ratio.5_28", {{"x", fmt_cplx(x)}, {"q", fmt_cplx(ctx.q)}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// z(x, q g)/z(x, g) from the general formula.
inline cd km_z_ratio(cd x, cd g, const QContext<cd>& ctx)
{
    const cd& q2 = ctx.q2;
    cd h2 = g * g;
    auto P = [&](cd y) { return qpoch_inf(y, q2, ctx); };
    return P(q2 / (h2 * x)) * P(q2 * h2 * x) / (P(x / h2) * P(q2 * q2 * h2 / x));
}

// Between i q^{-1/2} and i q^{1/2} the series coincide, so the ratio must be 1.
// For generic g the ratio must be compatible with the kappa recursion:
// R(x)/R(q/x) = rho(x, g) rho(x, q^{1/2} g), rho = kappa ratio.
inline IdentityReport km_z_ratio_check(cd x, cd g_generic, const QContext<cd>& ctx)
{
    Stopwatch sw;
    auto gm = GammaContext::selected_value(-1, ctx, 1), gp = GammaContext::selected_value(1, ctx, 1);
    double r1 = std::abs(km_z_ratio(x, gm.gamma, ctx) * std::exp(km_log_z(x, gm, ctx) - km_log_z(x, gp, ctx)) - 1.0);
    KMWeights kw(gm, ctx);
    cd lhs = km_z_ratio(x, g_generic, ctx) / km_z_ratio(ctx.q / x, g_generic, ctx);
    cd rhs = kw.kappa_ratio(x, g_generic) * kw.kappa_ratio(x, g_generic * ctx.sqrt_q);
    double r2 = rel_residual(lhs, rhs);
    auto r = make_report("vgamma.z_ratio.5_30",
                         {{"x", fmt_cplx(x)}, {"gamma", fmt_cplx(g_generic)}, {"q", fmt_cplx(ctx.q)}},
                         std::max(r1, r2), ctx.tol_identity);
    r.note = "selected " + fmt_real(r1) + ", generic " + fmt_real(r2);
    r.wall_time_ms = sw.ms();
    return r;
}

} // namespace kmq
