#pragma once

#include <vector>

#include "qseries.hpp"

namespace kmq {

enum class PolyEvalMethod { explicit_sum, forward_recursion, qshift_recursion };

inline const char* to_string(PolyEvalMethod m)
{
    switch (m) {
    case PolyEvalMethod::explicit_sum: return "explicit_sum";
    case PolyEvalMethod::forward_recursion: return "forward_recursion";
    case PolyEvalMethod::qshift_recursion: return "qshift_recursion";
    }
    return "?";
}

namespace detail {

template <class C>
void poly_guard(long n, const C& xi, const QContext<C>& ctx)
{
    if (n < 0) throw DomainError("poly_P: n must be >= 0");
    if (mag(xi) == 0) throw DomainError("poly_P: xi = 0");
    if (n <= 30) return;
    double lq = std::log10(mag(ctx.q));
    double lx = std::abs(std::log10(mag(xi)));
    if (-lq * double(n) * n / 2 + lx * n > 300) throw OverflowGuard("poly_P: terms exceed 1e300, reduce n");
}

// (q^2;q^2)_k for k = 0..n
template <class C>
std::vector<C> q2_pochs(long n, const QContext<C>& ctx)
{
    std::vector<C> p(n + 1);
    p[0] = C(1);
    C t = ctx.q2;
    for (long k = 1; k <= n; ++k) {
        p[k] = p[k - 1] * (C(1) - t);
        t *= ctx.q2;
    }
    return p;
}

} // namespace detail

// P_0..P_n by the three-term recursion.
template <class C>
std::vector<C> poly_P_all(long n, const C& xi, const QContext<C>& ctx)
{
    detail::poly_guard(n, xi, ctx);
    std::vector<C> P(n + 1);
    C h = xi + C(1) / xi;
    P[0] = C(1);
    if (n >= 1) P[1] = h;
    for (long k = 1; k < n; ++k) P[k + 1] = h * P[k] - (C(1) - ipow(ctx.q, -2 * k)) * P[k - 1];
    return P;
}

// p_n = q^{n^2/2} P_n, bounded in n; used wherever P_n meets a Gaussian factor.
template <class C>
std::vector<C> poly_p_scaled(long n, const C& xi, const QContext<C>& ctx)
{
    if (mag(xi) == 0) throw DomainError("poly_p_scaled: xi = 0");
    std::vector<C> p(n + 1);
    C h = xi + C(1) / xi;
    p[0] = C(1);
    if (n >= 1) p[1] = ctx.sqrt_q * h;
    C qk(1);
    for (long k = 1; k < n; ++k) {
        qk *= ctx.q;
        p[k + 1] = qk * ctx.sqrt_q * h * p[k] - (qk * qk - C(1)) * p[k - 1];
    }
    return p;
}

template <class C>
C poly_P(long n, const C& xi, PolyEvalMethod method, const QContext<C>& ctx)
{
    detail::poly_guard(n, xi, ctx);
    switch (method) {
    case PolyEvalMethod::forward_recursion: return poly_P_all(n, xi, ctx)[n];
    case PolyEvalMethod::explicit_sum: {
        auto po = detail::q2_pochs(n, ctx);
        C s(0);
        for (long k = 0; k <= n; ++k)
            s += ipow(xi, 2 * k - n) * ipow(ctx.q, -2 * k * (n - k)) * po[n] / (po[k] * po[n - k]);
        return s;
    }
    case PolyEvalMethod::qshift_recursion: {
        // row[j + n] holds P_k(xi q^j) for |j| <= n - k
        std::vector<C> row(2 * n + 1, C(1)), next(2 * n + 1);
        for (long k = 0; k < n; ++k) {
            long w = n - k - 1;
            for (long j = -w; j <= w; ++j) {
                C x = xi * ipow(ctx.q, j);
                C d = x - C(1) / x;
                if (mag(d) < 1e-12) throw DegenerateArgument("poly_P: xi q^j hits +-1 in the shift recursion");
                next[j + n] = ipow(ctx.q, -k) * (x * x * row[j + 1 + n] - row[j - 1 + n] / (x * x)) / d;
            }
            std::swap(row, next);
        }
        return row[n];
    }
    }
    throw DomainError("poly_P: unknown method");
}

// Pairwise agreement of the three evaluation methods.
template <class C>
IdentityReport poly_methods_check(long n, const C& xi, const QContext<C>& ctx)
{
    Stopwatch sw;
    C a = poly_P(n, xi, PolyEvalMethod::explicit_sum, ctx);
    C b = poly_P(n, xi, PolyEvalMethod::forward_recursion, ctx);
    C c = poly_P(n, xi, PolyEvalMethod::qshift_recursion, ctx);
    double res = std::max({rel_residual(a, b), rel_residual(b, c), rel_residual(a, c)});
    auto r = make_report("orthopoly.P_methods.B_1_B_2_B_3",
                         {{"n", std::to_string(n)}, {"xi", fmt_cplx(to_cd(xi))}, {"q", fmt_cplx(to_cd(ctx.q))}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

template <class C>
IdentityReport poly_P_difference_checks(long n, const C& xi, const QContext<C>& ctx)
{
    Stopwatch sw;
    if (mag(C(xi - C(1))) < 1e-6 || mag(C(xi + C(1))) < 1e-6)
        throw DegenerateArgument("poly_P_difference_checks: xi too close to +-1");
    const C& q = ctx.q;
    C d = xi - C(1) / xi;
    auto P = [&](long k, C x) { return poly_P(k, x, PolyEvalMethod::explicit_sum, ctx); };
    C Pn = P(n, xi), Pu = P(n, C(q * xi)), Pd = P(n, C(xi / q));
    C qn = ipow(q, -n);
    double scale4 = mag(C(qn * xi * Pu / d)) + mag(C(qn * Pd / (xi * d)));
    double r4 = rel_residual(Pn, C(qn * (xi * Pu - Pd / xi) / d), scale4);
    double r5 = 0;
    if (n >= 1) {
        C lhs = (C(1) - ipow(q, -2 * n)) * P(n - 1, xi);
        C rhs = qn * (Pu - Pd) / d;
        r5 = rel_residual(lhs, rhs, mag(C(qn * Pu / d)) + mag(C(qn * Pd / d)));
    }
    auto r = make_report("orthopoly.difference.B_4_B_5",
                         {{"n", std::to_string(n)}, {"xi", fmt_cplx(to_cd(xi))}, {"q", fmt_cplx(to_cd(q))}},
                         std::max(r4, r5), ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

namespace detail {

// Sums term(n) for n >= 0 with the tail rule; returns the sum of magnitudes via scale.
template <class C, class F>
C series(F&& term, const QContext<C>& ctx, const char* who, double* scale = nullptr)
{
    C s(0);
    double a = 0;
    TailRule tail{ctx.tail_cut * 1e-3};
    for (long n = 0; n < ctx.max_terms; ++n) {
        C t = term(n);
        s += t;
        a += mag(t);
        if (tail.done(mag(t))) {
            if (scale) *scale = a;
            return s;
        }
    }
    throw TruncationExhausted(std::string(who) + ": tail criterion not reached");
}

// Scaled polynomials grown on demand inside a series.
template <class C>
struct ScaledP {
    C h, prev{0}, cur{1};
    const QContext<C>& ctx;
    long n = 0;
    C qk{1};
    ScaledP(C xi, const QContext<C>& c) : h(xi + C(1) / xi), ctx(c) {}
    C at(long k)
    {
        while (n < k) {
            C nxt = (n == 0) ? C(ctx.sqrt_q * h) : C(qk * ctx.sqrt_q * h * cur - (qk * qk - C(1)) * prev);
            prev = cur;
            cur = nxt;
            ++n;
            qk *= ctx.q;
        }
        return cur;
    }
};

} // namespace detail

// single generating function at (z, xi=u) and the bilinear one at (z, u, v).
template <class C>
IdentityReport genfun_checks(const C& z, const C& u, const C& v, const QContext<C>& ctx)
{
    Stopwatch sw;
    const C& q = ctx.q;
    if (!(mag(z) < 0.9 * mag(ctx.sqrt_q) || mag(z) == 0))
        throw DomainError("genfun_checks: need |z| < 0.9 |q|^{1/2}");
    if (!(mag(z) < mag(q) || mag(z) == 0)) throw DomainError("genfun_checks: bilinear series needs |z| < |q|");
    // single: term_n = (-1)^n q^{-n/2} z^n p_n / (q;q)_n
    detail::ScaledP<C> pu(u, ctx), pv(v, ctx), pu2(u, ctx);
    C c6(1), c7(1);
    C lhs6 = detail::series<C>(
        [&](long n) {
            if (n > 0) c6 *= -z / (ctx.sqrt_q * (C(1) - ipow(q, n)));
            return c6 * pu.at(n);
        },
        ctx, "genfun single");
    C rhs6 = qpoch_inf(C(z * u), q, ctx) * qpoch_inf(C(z / u), q, ctx) / qpoch_inf(C(z * z / q), ctx.q2, ctx);
    // bilinear: term_n = (-1)^n q^{-n} z^n p_n(u) p_n(v) / (q^2;q^2)_n
    C lhs7 = detail::series<C>(
        [&](long n) {
            if (n > 0) c7 *= -z / (q * (C(1) - ipow(ctx.q2, n)));
            return c7 * pu2.at(n) * pv.at(n);
        },
        ctx, "genfun bilinear");
    C rhs7 = qpoch_inf(C(z * u * v), ctx.q2, ctx) * qpoch_inf(C(z / (u * v)), ctx.q2, ctx) *
             qpoch_inf(C(z * u / v), ctx.q2, ctx) * qpoch_inf(C(z * v / u), ctx.q2, ctx) /
             qpoch_inf(C(z * z / ctx.q2), ctx.q2, ctx);
    double res = std::max(rel_residual(lhs6, rhs6), rel_residual(lhs7, rhs7));
    auto r = make_report("orthopoly.genfun.B_6_B_7",
                         {{"z", fmt_cplx(to_cd(z))}, {"u", fmt_cplx(to_cd(u))}, {"v", fmt_cplx(to_cd(v))},
                          {"q", fmt_cplx(to_cd(q))}},
                         res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// orthogonality of P over m, m' in [0, M]; off-diagonal residuals are measured against the
// geometric mean of the two diagonal values.
template <class C>
IdentityReport genfun_B8_check(long M, const QContext<C>& ctx)
{
    Stopwatch sw;
    const C& q = ctx.q;
    C th = theta4_constant(ctx);
    auto lhs = [&](long m, long mp) {
        detail::ScaledP<C> a(ctx.half_pow(2 * m + 1), ctx), b(ctx.half_pow(2 * mp + 1), ctx);
        C c(1);
        return detail::series<C>(
            [&](long n) {
                if (n > 0) c *= -q / (C(1) - ipow(ctx.q2, n));
                return c * a.at(n) * b.at(n);
            },
            ctx, "genfun orthogonality");
    };
    // rescale: sum of (-1)^n q^{n(n+1)} P P/(q^2;q^2)_n = sum of (-1)^n q^n p p/(q^2;q^2)_n
    auto diag = [&](long m) { return sign_pow<C>(m) * ipow(q, -m * m) / (C(1) - ipow(q, 2 * m + 1)) * th; };
    double res = 0;
    for (long m = 0; m <= M; ++m)
        for (long mp = 0; mp <= M; ++mp) {
            C l = lhs(m, mp);
            C rhs = m == mp ? diag(m) : C(0);
            double s = std::sqrt(mag(diag(m)) * mag(diag(mp)));
            res = std::max(res, mag(C(l - rhs)) / s);
        }
    auto r = make_report("orthopoly.genfun.B_8", {{"M", std::to_string(M)}, {"q", fmt_cplx(to_cd(q))}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// chi(u, z; nome) as a basic hypergeometric series; the nome is the context's q.
template <class C>
C chi(const C& u, const C& z, const QContext<C>& ctx, double* scale = nullptr)
{
    const C& q2 = ctx.q2;
    C u2 = u * u, t(1);
    C qq(1);
    return detail::series<C>(
        [&](long n) {
            if (n > 0) {
                // q^{n(n+1)} = q^{(n-1)n} q^{2n}
                qq *= ipow(q2, n);
                t *= -u2 * (C(1) - z * ipow(q2, n - 1)) / (C(1) - ipow(q2, n));
            }
            return t * qq;
        },
        ctx, "chi", scale);
}

// chi(u, q^{-2m}) = u^m P_m(u) for m = 0..M
template <class C>
IdentityReport chi_poly_check(const C& u, long M, const QContext<C>& ctx)
{
    Stopwatch sw;
    auto P = poly_P_all(M, u, ctx);
    double res = 0;
    for (long m = 0; m <= M; ++m) {
        double sc = 0;
        C c = chi(u, ipow(ctx.q, -2 * m), ctx, &sc);
        res = std::max(res, rel_residual(c, C(ipow(u, m) * P[m]), sc * 1e-3));
    }
    auto r = make_report("orthopoly.chi_poly.C_2",
                         {{"u", fmt_cplx(to_cd(u))}, {"M", std::to_string(M)}, {"q", fmt_cplx(to_cd(ctx.q))}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// u-shift relation, both z-shift forms, the mixed relation and the Wronskian-type product of chi.
template <class C>
IdentityReport chi_equation_checks(const C& u, const C& z, const QContext<C>& ctx)
{
    Stopwatch sw;
    if (mag(u) == 0) throw DomainError("chi_equation_checks: u = 0");
    const C& q = ctx.q;
    const C& q2 = ctx.q2;
    auto X = [&](C uu, C zz) { return chi(uu, zz, ctx); };
    C u2 = u * u;
    C c_d = X(C(u / q), z), c0 = X(u, z), c_u = X(C(q * u), z);
    C c_zu = X(u, C(q2 * z)), c_zd = X(u, C(z / q2));
    double r3 = rel_residual(c_d, C((C(1) - u2) * c0 + z * u2 * c_u),
                             mag(C((C(1) - u2) * c0)) + mag(C(z * u2 * c_u)));
    double r4a = rel_residual(C((C(1) - z) * (C(1) - u2) * c_zu), C(c_d - z * c_u), mag(c_d) + mag(C(z * c_u)));
    double r4b = rel_residual(C((C(1) - u2) * c_zd), C(c_d - z * u2 * u2 * c_u), mag(c_d) + mag(C(z * u2 * u2 * c_u)));
    double r5 = rel_residual(C(c_zd / u + u * (C(1) - z) * c_zu), C((u + C(1) / u) * c0),
                             mag(C(c_zd / u)) + mag(C(u * (C(1) - z) * c_zu)));
    C w1 = c_d * X(C(C(1) / u), z), w2 = z * c0 * X(C(q / u), z);
    C rhs6 = qpoch_inf(u2, q2, ctx) * qpoch_inf(C(q2 / u2), q2, ctx) * qpoch_inf(z, q2, ctx);
    double r6 = rel_residual(C(w1 - w2), rhs6, mag(w1) + mag(w2));
    double res = std::max({r3, r4a, r4b, r5, r6});
    auto r = make_report("orthopoly.chi_equations.C_3_C_6",
                         {{"u", fmt_cplx(to_cd(u))}, {"z", fmt_cplx(to_cd(z))}, {"q", fmt_cplx(to_cd(q))}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// chi(q^{-m}) / chi(q^m) = z^m
template <class C>
IdentityReport chi_ratio_check(long m, const C& z, const QContext<C>& ctx)
{
    Stopwatch sw;
    C a = chi(ipow(ctx.q, -m), z, ctx), b = chi(ipow(ctx.q, m), z, ctx);
    auto r = make_report("orthopoly.chi_ratio.6_15",
                         {{"m", std::to_string(m)}, {"z", fmt_cplx(to_cd(z))}, {"q", fmt_cplx(to_cd(ctx.q))}},
                         rel_residual(C(a / b), ipow(z, m)), ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

} // namespace kmq
