#pragma once

#include <string>
#include <vector>

#include "errors.hpp"
#include "report.hpp"
#include "scalar.hpp"

namespace kmq {

// Deformation parameter plus the truncation policy shared by every series.
template <class C = cd>
struct QContext {
    C q;
    double tol_identity = 1e-9;
    double tail_cut = 1e-11;
    long max_terms = 10000;

    // principal-branch half and quarter powers, computed once
    C sqrt_q;
    C quarter_q;
    C q2;

    explicit QContext(C q_, double tol = 1e-9, double tail = -1, long max_terms_ = 10000)
        : q(q_), tol_identity(tol), tail_cut(tail > 0 ? tail : tol / 100), max_terms(max_terms_)
    {
        using std::sqrt;
        if (!(mag(q) < 1)) throw DomainError("QContext: |q| must be < 1");
        if (!(0 < tail_cut && tail_cut < tol_identity && tol_identity < 1))
            throw DomainError("QContext: need 0 < tail_cut < tol_identity < 1");
        if (max_terms < 1) throw DomainError("QContext: max_terms must be positive");
        sqrt_q = sqrt(q);
        quarter_q = sqrt(sqrt_q);
        q2 = q * q;
    }

    // q^{n/2}
    C half_pow(long n) const { return ipow(sqrt_q, n); }
};

// Counts consecutive small terms; the series ends after three in a row.
struct TailRule {
    double cut;
    int run = 0;
    bool done(double term_mag)
    {
        run = term_mag <= cut ? run + 1 : 0;
        return run >= 3;
    }
};

// Sums term(n) for n = start, start+1, ... The tail rule applies once n >= from,
// against tail_cut times the largest term seen (or floor, if larger).
template <class T, class F>
T tail_sum(F&& term, long start, long from, double tail_cut, long max_terms, const char* who, double floor = 0,
           double* last = nullptr)
{
    T s(0);
    double big = floor;
    TailRule tail{1};
    for (long n = start; n < start + max_terms; ++n) {
        T t = term(n);
        s += t;
        double a = mag(t);
        big = std::max(big, a);
        if (n >= from) {
            tail.cut = tail_cut * big;
            if (tail.done(a)) {
                if (last) *last = a / std::max(big, 1e-300);
                return s;
            }
        }
    }
    throw TruncationExhausted(std::string(who) + ": tail criterion not reached");
}

// Sum over n in Z: both half-lines are summed with their own tail rule, the
// second one seeded with the largest term of the first.
template <class T, class F>
T bilateral_tail_sum(F&& term, long from, double tail_cut, long max_terms, const char* who)
{
    double big = 0;
    T right = tail_sum<T>(
        [&](long n) {
            T t = term(n);
            big = std::max(big, mag(t));
            return t;
        },
        0, from, tail_cut, max_terms, who);
    T left = tail_sum<T>([&](long n) { return term(-n); }, 1, from, tail_cut, max_terms, who, big);
    return right + left;
}

// prod_{k<n} (1 - x q^k); the nome is taken literally.
template <class C>
C qpoch_finite(const C& x, const C& q, long n)
{
    if (n < 0) throw DomainError("qpoch_finite: n must be >= 0");
    C p(1), t = x;
    for (long k = 0; k < n; ++k) {
        p *= C(1) - t;
        t *= q;
    }
    return p;
}

// Extension to negative n: (x;q)_{-n} = 1/(x q^{-n};q)_n.
template <class C>
C qpoch(const C& x, const C& q, long n)
{
    if (n >= 0) return qpoch_finite(x, q, n);
    return C(1) / qpoch_finite(C(x * ipow(q, n)), q, -n);
}

template <class C>
C qpoch_inf(const C& x, const C& q, const QContext<C>& ctx)
{
    C p(1), t = x;
    TailRule tail{ctx.tail_cut};
    for (long k = 0; k < ctx.max_terms; ++k) {
        p *= C(1) - t;
        if (tail.done(mag(t))) return p;
        t *= q;
    }
    throw TruncationExhausted("qpoch_inf: tail criterion not reached");
}

// (q^2;q^2)_a (q^2;q^2)_b ...
template <class C>
C qpoch_q2_multi(const QContext<C>& ctx, std::initializer_list<long> ns)
{
    C r(1);
    for (long n : ns) r *= qpoch_finite(ctx.q2, ctx.q2, n);
    return r;
}

// Product of Pochhammer factors carried in log form, with exact zeros counted
// separately so that delta-type cancellations stay exact.
struct LogProduct {
    cd log{0, 0};
    int zero_order = 0;

    void mul(cd f)
    {
        if (f == cd(0)) ++zero_order;
        else log += std::log(f);
    }
    void div(cd f)
    {
        if (f == cd(0)) --zero_order;
        else log -= std::log(f);
    }
    void mul_log(cd l) { log += l; }
    void absorb(const LogProduct& o, bool inverse = false)
    {
        if (inverse) {
            log -= o.log;
            zero_order -= o.zero_order;
        } else {
            log += o.log;
            zero_order += o.zero_order;
        }
    }
    cd value(const char* where = "LogProduct") const
    {
        if (zero_order > 0) return 0;
        if (zero_order < 0) throw PoleHit(std::string(where) + ": denominator factor vanishes");
        return std::exp(log);
    }
};

// (c q^{e0}; q^{step})_inf in log form. Powers of q are built from integer
// exponents so a factor is exactly zero when c = 1 and the exponent hits 0.
inline LogProduct log_qpoch_inf_qexp(cd c, long e0, long step, const QContext<cd>& ctx)
{
    LogProduct p;
    TailRule tail{ctx.tail_cut * 1e-6};
    for (long k = 0; k < ctx.max_terms; ++k) {
        long e = e0 + step * k;
        cd t = (e == 0) ? c : c * ipow(ctx.q, e);
        p.mul(cd(1) - t);
        if (tail.done(std::abs(t))) return p;
    }
    throw TruncationExhausted("log_qpoch_inf: tail criterion not reached");
}

inline LogProduct log_qpoch_inf(cd x, cd base, const QContext<cd>& ctx)
{
    LogProduct p;
    TailRule tail{ctx.tail_cut * 1e-6};
    cd t = x;
    for (long k = 0; k < ctx.max_terms; ++k) {
        p.mul(cd(1) - t);
        if (tail.done(std::abs(t))) return p;
        t *= base;
    }
    throw TruncationExhausted("log_qpoch_inf: tail criterion not reached");
}

// (x; base)_n for any integer n, in log form.
inline LogProduct log_qpoch(cd x, cd base, long n)
{
    LogProduct p;
    if (n >= 0) {
        cd t = x;
        for (long k = 0; k < n; ++k) {
            p.mul(cd(1) - t);
            t *= base;
        }
        return p;
    }
    cd t = x * ipow(base, n);
    for (long k = 0; k < -n; ++k) {
        p.div(cd(1) - t);
        t *= base;
    }
    return p;
}

template <class C>
C bracket(const C& z)
{
    if (mag(z) == 0) throw DomainError("bracket: z = 0");
    return z - C(1) / z;
}

enum class ThetaKind { theta4, theta3, Theta4, Theta3, H };

inline const char* to_string(ThetaKind k)
{
    switch (k) {
    case ThetaKind::theta4: return "theta4";
    case ThetaKind::theta3: return "theta3";
    case ThetaKind::Theta4: return "Theta4";
    case ThetaKind::Theta3: return "Theta3";
    case ThetaKind::H: return "H";
    }
    return "?";
}

namespace detail {

// Symmetric-window sum over n in Z. term(n) must decay in both directions.
template <class C, class F>
C bilateral_sum(F&& term, const QContext<C>& ctx, double* abs_sum = nullptr)
{
    C s = term(0);
    double a = mag(s);
    TailRule tail{ctx.tail_cut * 1e-3};
    for (long n = 1; n < ctx.max_terms; ++n) {
        C tp = term(n), tm = term(-n);
        s += tp + tm;
        double m = mag(tp) + mag(tm);
        a += m;
        if (tail.done(m)) {
            if (abs_sum) *abs_sum = a;
            return s;
        }
    }
    throw TruncationExhausted("bilateral_sum: tail criterion not reached");
}

template <class C>
C theta_sum(ThetaKind kind, const C& u, const QContext<C>& ctx, double* abs_sum)
{
    switch (kind) {
    case ThetaKind::theta4:
    case ThetaKind::theta3: {
        C v = kind == ThetaKind::theta4 ? C(-u) : u;
        return bilateral_sum<C>([&](long n) { return ctx.half_pow(n * n) * ipow(v, n); }, ctx, abs_sum);
    }
    case ThetaKind::Theta4:
    case ThetaKind::Theta3: {
        C v = kind == ThetaKind::Theta4 ? C(-u) : u;
        return bilateral_sum<C>([&](long n) { return ipow(ctx.q, n * n) * ipow(v, n); }, ctx, abs_sum);
    }
    case ThetaKind::H:
        return bilateral_sum<C>(
            [&](long n) { return sign_pow<C>(n) * ipow(ctx.q, n * (n - 1)) * ipow(u, 2 * n - 1); }, ctx,
            abs_sum);
    }
    throw DomainError("theta: unknown kind");
}

template <class C>
C theta_product(ThetaKind kind, const C& u, const QContext<C>& ctx)
{
    const C& q = ctx.q;
    switch (kind) {
    case ThetaKind::theta4:
    case ThetaKind::theta3: {
        C v = kind == ThetaKind::theta4 ? u : C(-u);
        return qpoch_inf(C(ctx.sqrt_q * v), q, ctx) * qpoch_inf(C(ctx.sqrt_q / v), q, ctx) * qpoch_inf(q, q, ctx);
    }
    case ThetaKind::Theta4:
    case ThetaKind::Theta3: {
        C v = kind == ThetaKind::Theta4 ? u : C(-u);
        return qpoch_inf(C(q * v), ctx.q2, ctx) * qpoch_inf(C(q / v), ctx.q2, ctx) * qpoch_inf(ctx.q2, ctx.q2, ctx);
    }
    case ThetaKind::H:
        return qpoch_inf(C(u * u), ctx.q2, ctx) * qpoch_inf(C(ctx.q2 / (u * u)), ctx.q2, ctx) *
               qpoch_inf(ctx.q2, ctx.q2, ctx) / u;
    }
    throw DomainError("theta: unknown kind");
}

} // namespace detail

// Evaluates both representations; they must agree relative to the size of the
// summed terms (the value itself may vanish, e.g. H(1)).
template <class C>
C theta(ThetaKind kind, const C& u, const QContext<C>& ctx)
{
    if (mag(u) == 0) throw DomainError("theta: u = 0");
    double scale = 0;
    C s = detail::theta_sum(kind, u, ctx, &scale);
    C p = detail::theta_product(kind, u, ctx);
    if (mag(C(s - p)) > ctx.tol_identity * std::max({mag(s), mag(p), scale * 1e-6}))
        throw RepresentationMismatch(std::string("theta ") + to_string(kind) + ": sum and product disagree");
    return s;
}

template <class C>
C theta_sum_only(ThetaKind kind, const C& u, const QContext<C>& ctx)
{
    return detail::theta_sum(kind, u, ctx, nullptr);
}

template <class C>
C theta_product_only(ThetaKind kind, const C& u, const QContext<C>& ctx)
{
    return detail::theta_product(kind, u, ctx);
}

// Sum against product for every kind at each u; relative to the summed |terms|.
template <class C>
IdentityReport theta_sum_product_check(const std::vector<C>& us, const QContext<C>& ctx)
{
    Stopwatch sw;
    double res = 0;
    for (ThetaKind k : {ThetaKind::theta3, ThetaKind::theta4, ThetaKind::Theta3, ThetaKind::Theta4, ThetaKind::H})
        for (const C& u : us) {
            double scale = 0;
            C s = detail::theta_sum(k, u, ctx, &scale);
            C p = detail::theta_product(k, u, ctx);
            res = std::max(res, mag(C(s - p)) / std::max({mag(s), mag(p), scale * 1e-6}));
        }
    std::string pts;
    for (const C& u : us) pts += (pts.empty() ? "" : ";") + fmt_cplx(to_cd(u));
    auto r = make_report("qseries.theta_sum_product.A_4", {{"q", fmt_cplx(to_cd(ctx.q))}, {"u", pts}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// Theta_4(1) = (q;q)/(-q;q)
template <class C>
C theta4_constant(const QContext<C>& ctx)
{
    return qpoch_inf(ctx.q, ctx.q, ctx) / qpoch_inf(C(-ctx.q), ctx.q, ctx);
}

// M_F = -q^{-1/2} (q;q)_inf
template <class C>
C mf_constant(const QContext<C>& ctx)
{
    return -qpoch_inf(ctx.q, ctx.q, ctx) / ctx.sqrt_q;
}

template <class C>
C mf_constant_sum(const QContext<C>& ctx)
{
    C s = detail::bilateral_sum<C>(
        [&](long m) { return sign_pow<C>(m) * ctx.half_pow(m * (3 * m + 1)); }, ctx);
    return -s / ctx.sqrt_q;
}

// Modular pair of nomes for b = e^{i theta}-type parameters.
struct NomePair {
    cd b, q, qbar;
};

inline NomePair nomes_from_b(cd b)
{
    const cd i(0, 1);
    return {b, std::exp(i * pi * b * b), std::exp(-i * pi / (b * b))};
}

// Jacobi transform of H. lhs uses nome q, rhs nome qbar; phase_tweak multiplies
// the rhs (negative controls pass a small rotation).
inline IdentityReport jacobi_transform_check(double x, cd b, double tol = 1e-9, double phase_tweak = 0)
{
    Stopwatch sw;
    const cd i(0, 1);
    NomePair n = nomes_from_b(b);
    if (!(std::abs(n.q) < 1 && std::abs(n.qbar) < 1)) throw DomainError("jacobi_transform_check: b outside the wedge");
    QContext<cd> cq(n.q, tol), cb(n.qbar, tol);
    cd u = std::exp(pi * b * x), ub = std::exp(pi * x / b);
    auto prod = [](cd v, const QContext<cd>& c) {
        return qpoch_inf(v * v, c.q2, c) * qpoch_inf(c.q2 / (v * v), c.q2, c) * qpoch_inf(c.q2, c.q2, c) / v;
    };
    cd lhs = cq.quarter_q * prod(u, cq);
    cd rhs = std::exp(3 * pi * i / 4.0 + i * pi * x * x + i * phase_tweak) / b * cb.quarter_q * prod(ub, cb);
    auto r = make_report("qseries.jacobi_transform.A_5",
                         {{"x", fmt_real(x)}, {"b", fmt_cplx(b)}, {"phase_tweak", fmt_real(phase_tweak)}},
                         rel_residual(lhs, rhs), tol, phase_tweak != 0);
    r.wall_time_ms = sw.ms();
    return r;
}

// First and third identities of the double Gauss sum set.
template <class C>
IdentityReport gauss_double_sum_check(const C& z1, const C& z2, const QContext<C>& ctx)
{
    Stopwatch sw;
    if (!(mag(z1) < 1 && mag(z2) < 1)) throw DomainError("gauss_double_sum_check: need |z1|,|z2| < 1");
    const C& q2 = ctx.q2;
    // rows n1, columns n2; both geometric in |z|
    std::vector<C> inv_poch;
    auto ip = [&](long n) {
        while ((long)inv_poch.size() <= n) {
            long k = (long)inv_poch.size();
            inv_poch.push_back(k == 0 ? C(1) : inv_poch.back() / (C(1) - ipow(q2, k)));
        }
        return inv_poch[n];
    };
    C s(0);
    TailRule rows{ctx.tail_cut};
    C z1n(1);
    long n1 = 0;
    for (; n1 < ctx.max_terms; ++n1) {
        C row(0), z2n(1);
        TailRule cols{ctx.tail_cut};
        double rowmag = 0;
        for (long n2 = 0; n2 < ctx.max_terms; ++n2) {
            C t = ipow(q2, n1 * n2) * ip(n1) * ip(n2) * z1n * z2n;
            row += t;
            rowmag += mag(t);
            if (cols.done(mag(t))) break;
            z2n *= z2;
        }
        s += row;
        if (rows.done(rowmag)) break;
        z1n *= z1;
    }
    if (n1 >= ctx.max_terms) throw TruncationExhausted("gauss_double_sum_check: rows");
    C rhs1 = qpoch_inf(C(z1 * z2), q2, ctx) / (qpoch_inf(z1, q2, ctx) * qpoch_inf(z2, q2, ctx));
    C s3(0);
    TailRule t3{ctx.tail_cut};
    for (long n = 0; n < ctx.max_terms; ++n) {
        C t = ipow(q2, n * n) * ip(n) * ip(n);
        s3 += t;
        if (t3.done(mag(t))) break;
    }
    C rhs3 = C(1) / qpoch_inf(q2, q2, ctx);
    double res = std::max(rel_residual(s, rhs1), rel_residual(s3, rhs3));
    auto r = make_report("qseries.gauss_double_sum.A_8",
                         {{"z1", fmt_cplx(to_cd(z1))}, {"z2", fmt_cplx(to_cd(z2))}, {"q", fmt_cplx(to_cd(ctx.q))}},
                         res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// Gauss identity sum_n x^n (z;q)_n/(q;q)_n = (xz;q)/(x;q), base q literal.
template <class C>
IdentityReport gauss_check(const C& x, const C& z, const QContext<C>& ctx)
{
    Stopwatch sw;
    const C& q = ctx.q;
    C s(0), t(1);
    TailRule tail{ctx.tail_cut};
    long n = 0;
    for (; n < ctx.max_terms; ++n) {
        s += t;
        if (tail.done(mag(t))) break;
        t *= x * (C(1) - z * ipow(q, n)) / (C(1) - ipow(q, n + 1));
    }
    if (n >= ctx.max_terms) throw TruncationExhausted("gauss_check");
    C rhs = qpoch_inf(C(x * z), q, ctx) / qpoch_inf(x, q, ctx);
    auto r = make_report("qseries.gauss.A_9",
                         {{"x", fmt_cplx(to_cd(x))}, {"z", fmt_cplx(to_cd(z))}, {"q", fmt_cplx(to_cd(q))}},
                         rel_residual(s, rhs), ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// Theta_4(1) three ways (sum, product, (q;q)/(-q;q)) and M_F two ways.
template <class C>
IdentityReport theta_constants_check(const QContext<C>& ctx)
{
    Stopwatch sw;
    C one(1);
    C s = theta_sum_only(ThetaKind::Theta4, one, ctx);
    C p = theta_product_only(ThetaKind::Theta4, one, ctx);
    C c = theta4_constant(ctx);
    double res = std::max({rel_residual(s, p), rel_residual(p, c), rel_residual(s, c),
                           rel_residual(mf_constant(ctx), mf_constant_sum(ctx))});
    auto r = make_report("qseries.theta_constants.A_6_A_7", {{"q", fmt_cplx(to_cd(ctx.q))}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

} // namespace kmq
