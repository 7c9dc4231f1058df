#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <vector>

#include "orthopoly.hpp"

namespace kmq {

using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;

// N_F = -q^{-1/2} Theta_4
template <class C>
C fock_NF(const QContext<C>& ctx)
{
    return -theta4_constant(ctx) / ctx.sqrt_q;
}

// S_m = (-1)^m [q^{m+1/2}], any integer m
template <class C>
C fock_S(long m, const QContext<C>& ctx)
{
    C xi = ctx.half_pow(2 * m + 1);
    return sign_pow<C>(m) * (xi - C(1) / xi);
}

struct FockRepParams {
    cd omega{1, 0};
    cd lambda{1, 0};
    cd mu{1, 0};
};

struct Generators {
    MatC Em, Ep, K, Kp;
};

// Fock action on |0>..|dim-1>; matrix columns are input states. eps is the
// sign in front of the K eigenvalue.
inline Generators fock_generators(cd omega, cd lambda, long dim, const QContext<cd>& ctx, double eps = 1)
{
    Generators g{MatC::Zero(dim, dim), MatC::Zero(dim, dim), MatC::Zero(dim, dim), MatC::Zero(dim, dim)};
    for (long a = 0; a < dim; ++a) {
        cd qa = ctx.half_pow(2 * a + 1);
        g.K(a, a) = eps * omega * qa;
        g.Kp(a, a) = eps * qa / omega;
        if (a > 0) g.Em(a - 1, a) = lambda * std::sqrt(cd(1) - ipow(ctx.q, 2 * a));
        if (a + 1 < dim) g.Ep(a + 1, a) = std::sqrt(cd(1) - ipow(ctx.q, 2 * a + 2)) / lambda;
    }
    return g;
}

// ---------------------------------------------------------------- spectra

enum class Regularisation { I, II, III };

inline const char* to_string(Regularisation r)
{
    switch (r) {
    case Regularisation::I: return "I";
    case Regularisation::II: return "II";
    case Regularisation::III: return "III";
    }
    return "?";
}

struct TruncatedHamiltonian {
    long N = 1;
    Regularisation reg = Regularisation::I;
    cd lambda_over_mu{1, 0};
};

inline MatC build_truncated_H(const TruncatedHamiltonian& th, const QContext<cd>& ctx)
{
    if (th.N < 1) throw DomainError("build_truncated_H: N must be >= 1");
    long N = th.N;
    cd r = th.lambda_over_mu;
    MatC H = MatC::Zero(N + 1, N + 1);
    for (long a = 0; a <= N; ++a) {
        cd c = ctx.half_pow(-2 * a - 1);
        if (a + 1 <= N) H(a, a + 1) = c * r * std::sqrt(cd(1) - ipow(ctx.q, 2 * a + 2));
        if (a >= 1) H(a, a - 1) = -c / r * std::sqrt(cd(1) - ipow(ctx.q, 2 * a));
    }
    // psi_{N+1} = +-(mu/lambda) psi_N folds back onto the diagonal
    cd edge = ctx.half_pow(-2 * N - 1) * std::sqrt(cd(1) - ipow(ctx.q, 2 * N + 2));
    if (th.reg == Regularisation::I) H(N, N) += edge;
    if (th.reg == Regularisation::II) H(N, N) -= edge;
    return H;
}

inline std::vector<cd> sorted_spectrum(const MatC& H)
{
    std::vector<cd> ev;
    // the real solver is markedly more accurate on these graded matrices
    if (H.imag().isZero(0)) {
        Eigen::EigenSolver<Eigen::MatrixXd> es(H.real(), false);
        if (es.info() != Eigen::Success) throw EigensolverFailure("truncated H: eigensolver did not converge");
        ev.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    } else {
        Eigen::ComplexEigenSolver<MatC> es(H, false);
        if (es.info() != Eigen::Success) throw EigensolverFailure("truncated H: eigensolver did not converge");
        ev.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    }
    // snap rounding noise so the ordering is stable
    for (auto& e : ev) {
        double s = 1e-9 * std::max(1.0, std::abs(e));
        e = {std::abs(e.real()) < s ? 0.0 : e.real(), std::abs(e.imag()) < s ? 0.0 : e.imag()};
    }
    std::sort(ev.begin(), ev.end(), [](cd a, cd b) {
        if (std::abs(std::abs(a) - std::abs(b)) > 1e-9 * std::max(1.0, std::abs(a))) return std::abs(a) < std::abs(b);
        if (a.imag() != b.imag()) return a.imag() < b.imag();
        return a.real() < b.real();
    });
    return ev;
}

struct SpectralRow {
    long N = 0;
    std::vector<cd> lowest;      // up to 8 eigenvalues of smallest modulus
    std::vector<double> error;   // |h_k(N) - h_k(inf)| for k < 4 (reg I/II only)
};

struct SpectralReport {
    double q = 0;
    Regularisation reg = Regularisation::I;
    std::vector<SpectralRow> rows;
    std::vector<cd> odd_limit, even_limit;  // reg III: lowest four at the largest odd/even N
    double subsequence_gap = 0;
};

// Branch values q^{m+1/2} + q^{-m-1/2} (reg I) and their negatives (reg II).
inline cd spectral_branch(long m, double q, Regularisation reg)
{
    double h = std::pow(q, m + 0.5) + std::pow(q, -m - 0.5);
    return reg == Regularisation::II ? -h : h;
}

inline SpectralReport spectral_experiment(double q, const std::vector<long>& N_list, Regularisation reg)
{
    if (!(q > 0 && q < 1)) throw DomainError("spectral_experiment: need 0 < q < 1");
    for (size_t i = 1; i < N_list.size(); ++i)
        if (N_list[i] <= N_list[i - 1]) throw DomainError("spectral_experiment: N_list must increase");
    QContext<cd> ctx(q);
    SpectralReport rep;
    rep.q = q;
    rep.reg = reg;
    for (long N : N_list) {
        auto ev = sorted_spectrum(build_truncated_H({N, reg, 1.0}, ctx));
        SpectralRow row;
        row.N = N;
        row.lowest.assign(ev.begin(), ev.begin() + std::min<size_t>(8, ev.size()));
        if (reg != Regularisation::III)
            for (long k = 0; k < 4 && k < (long)ev.size(); ++k)
                row.error.push_back(std::abs(ev[k] - spectral_branch(k, q, reg)));
        if (reg == Regularisation::III) {
            auto& lim = (N % 2) ? rep.odd_limit : rep.even_limit;
            lim.assign(ev.begin(), ev.begin() + std::min<size_t>(4, ev.size()));
        }
        rep.rows.push_back(std::move(row));
    }
    if (reg == Regularisation::III && !rep.odd_limit.empty() && !rep.even_limit.empty()) {
        size_t n = std::min(rep.odd_limit.size(), rep.even_limit.size());
        for (size_t k = 0; k < n; ++k)
            rep.subsequence_gap = std::max(rep.subsequence_gap, std::abs(rep.odd_limit[k] - rep.even_limit[k]));
    }
    return rep;
}

// Reg I/II: worst of the four lowest branch errors at the last N.
inline IdentityReport spectral_check(double q, const std::vector<long>& N_list, Regularisation reg,
                                     double tol = 1e-6)
{
    Stopwatch sw;
    auto rep = spectral_experiment(q, N_list, reg);
    IdentityReport r;
    Params p{{"q", fmt_real(q)}, {"reg", to_string(reg)}, {"N", std::to_string(N_list.back())}};
    if (reg == Regularisation::III) {
        // the two subsequences must disagree; a small gap is the failure mode
        r = make_report("fock.spectral_reg3.4_8", p, rep.subsequence_gap > 0 ? 1 / rep.subsequence_gap : 1e300,
                        10.0);
        r.note = "gap " + fmt_real(rep.subsequence_gap);
    } else {
        double e = 0;
        for (double x : rep.rows.back().error) e = std::max(e, x);
        r = make_report(reg == Regularisation::I ? "fock.spectral.4_9" : "fock.spectral.4_10", p, e, tol);
    }
    r.wall_time_ms = sw.ms();
    return r;
}

// ---------------------------------------------------------------- V-form

// chi_{a,m} (including q^{m(m+1)/2}, without N_F), any integer m.
// Written as one sum over k with exponent ((2k+m-a+1/2)^2 - 1/4)/2 >= 0, so
// no intermediate value exceeds the binomial weights.
template <class C>
class FockChi {
public:
    explicit FockChi(const QContext<C>& ctx) : ctx_(ctx) { po_.push_back(C(1)); }

    C chi(long a, long m)
    {
        if (a < 0) throw DomainError("chi: a must be >= 0");
        if (m < 0) m = -1 - m;
        grow(a);
        C s(0);
        for (long k = 0; k <= a; ++k) {
            long e2 = 4 * k * k + 2 * k * (2 * m + 1 - 2 * a) + a * a - a * (2 * m + 1) + m * (m + 1);
            s += ctx_.half_pow(e2) * po_[a] / (po_[k] * po_[a - k]);
        }
        using std::sqrt;
        return s / sqrt(po_[a]);
    }
    C chibar(long m, long a) { return sign_pow<C>(a) * ipow(ctx_.q, a) * chi(a, m); }
    const QContext<C>& ctx() const { return ctx_; }

private:
    void grow(long a)
    {
        while ((long)po_.size() <= a) po_.push_back(po_.back() * (C(1) - ipow(ctx_.q2, (long)po_.size())));
    }
    QContext<C> ctx_;
    std::vector<C> po_;
};

struct VFormMatrices {
    MatC chi;     // (A_max+1) x (M_max+1), chi_{a,m}
    MatC chibar;  // (M_max+1) x (A_max+1)
    MatC lam_mu;  // <lambda,a|mu,m> = N_F^{-1} (mu/lambda)^a chi_{a,m}
    MatC mu_lam;  // <mu,m|lambda,a> = (lambda/mu)^a chibar_{m,a}
    VecC S;
    cd NF;
};

inline VFormMatrices vform_matrices(const FockRepParams& p, long A_max, long M_max, const QContext<cd>& ctx)
{
    if (A_max < 1 || M_max < 1) throw DomainError("vform_matrices: need A_max, M_max >= 1");
    FockChi<cd> fc(ctx);
    VFormMatrices v;
    v.NF = fock_NF(ctx);
    v.chi.resize(A_max + 1, M_max + 1);
    v.chibar.resize(M_max + 1, A_max + 1);
    v.lam_mu.resize(A_max + 1, M_max + 1);
    v.mu_lam.resize(M_max + 1, A_max + 1);
    v.S.resize(M_max + 1);
    for (long m = 0; m <= M_max; ++m) v.S(m) = fock_S(m, ctx);
    for (long a = 0; a <= A_max; ++a)
        for (long m = 0; m <= M_max; ++m) {
            v.chi(a, m) = fc.chi(a, m);
            v.chibar(m, a) = fc.chibar(m, a);
            v.lam_mu(a, m) = ipow(p.mu / p.lambda, a) * v.chi(a, m) / v.NF;
            v.mu_lam(m, a) = ipow(p.lambda / p.mu, a) * v.chibar(m, a);
        }
    return v;
}

// state completeness: sum over m of <lambda,a|mu,m> S_m <mu,m|lambda,b> = delta_{ab}, a,b <= A_max.
// spin completeness: sum over a of chibar_{m,a} chi_{a,m'} = delta (-1)^m N_F/[q^{m+1/2}], m,m' <= M_max,
//         off-diagonal entries measured against sqrt|D_m D_m'|.
// antisymmetric sum: over m in [-M, M-1] of chi_{a,m}[q^{m+1/2}]chibar_{m,b}, relative to the sum of |terms|.
inline std::vector<IdentityReport> completeness_checks_fock(const FockRepParams& p, long A_max, long M_max,
                                                            const QContext<cd>& ctx)
{
    std::vector<IdentityReport> out;
    FockChi<cd> fc(ctx);
    cd NF = fock_NF(ctx);
    Params base{{"q", fmt_cplx(ctx.q)}, {"A_max", std::to_string(A_max)}, {"M_max", std::to_string(M_max)}};
    {
        Stopwatch sw;
        double res = 0;
        for (long a = 0; a <= A_max; ++a)
            for (long b = 0; b <= A_max; ++b) {
                cd s = tail_sum<cd>(
                    [&](long m) { return fc.chi(a, m) * fock_S(m, ctx) * fc.chibar(m, b); }, 0,
                    std::max(a, b) + 1, ctx.tail_cut, ctx.max_terms, "completeness (states)");
                s *= ipow(p.mu / p.lambda, a) * ipow(p.lambda / p.mu, b) / NF;
                res = std::max(res, std::abs(s - (a == b ? 1.0 : 0.0)));
            }
        auto r = make_report("fock.completeness.4_15", base, res, ctx.tol_identity);
        r.wall_time_ms = sw.ms();
        out.push_back(r);
    }
    {
        Stopwatch sw;
        auto D = [&](long m) { return sign_pow<cd>(m) * NF / bracket(ctx.half_pow(2 * m + 1)); };
        double res = 0;
        for (long m = 0; m <= M_max; ++m)
            for (long mp = 0; mp <= M_max; ++mp) {
                double sc = std::sqrt(std::abs(D(m)) * std::abs(D(mp)));
                cd s = tail_sum<cd>([&](long a) { return fc.chibar(m, a) * fc.chi(a, mp); }, 0,
                                    std::max(m, mp) + 1, ctx.tail_cut, ctx.max_terms, "completeness (spins)", sc);
                res = std::max(res, std::abs(s - (m == mp ? D(m) : cd(0))) / sc);
            }
        auto r = make_report("fock.completeness.4_16", base, res, ctx.tol_identity);
        r.wall_time_ms = sw.ms();
        out.push_back(r);
    }
    {
        Stopwatch sw;
        double res = 0;
        for (long a = 0; a <= A_max; ++a)
            for (long b = 0; b <= A_max; ++b) {
                cd s = 0;
                double sc = 0;
                for (long m = -M_max; m <= M_max - 1; ++m) {
                    cd t = fc.chi(a, m) * bracket(ctx.half_pow(2 * m + 1)) * fc.chibar(m, b);
                    s += t;
                    sc += std::abs(t);
                }
                res = std::max(res, std::abs(s) / std::max(sc, 1e-300));
            }
        auto r = make_report("fock.antisymmetric_sum.4_17", base, res, ctx.tol_identity);
        r.wall_time_ms = sw.ms();
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------- braces

enum class BraceMethod { spin_sum, closed_form, recursion };

inline const char* to_string(BraceMethod m)
{
    switch (m) {
    case BraceMethod::spin_sum: return "spin_sum";
    case BraceMethod::closed_form: return "closed_form";
    case BraceMethod::recursion: return "recursion";
    }
    return "?";
}

namespace detail {

inline void brace_guard(long a, long b, long c)
{
    if (a < 0 || b < 0 || c < 0) throw DomainError("brace: indices must be >= 0");
    if (a > 30 || b > 30 || c > 30) throw OverflowGuard("brace: indices above 30");
}

template <class C>
C q2poch(long n, const QContext<C>& ctx)
{
    return qpoch_finite(ctx.q2, ctx.q2, n);
}

} // namespace detail

// Alternating finite sum; indices are sorted first so permutations give
// bit-identical results.
template <class C>
C brace_closed_form(long a, long b, long c, const QContext<C>& ctx)
{
    detail::brace_guard(a, b, c);
    std::array<long, 3> s{a, b, c};
    std::sort(s.begin(), s.end());
    a = s[0], b = s[1], c = s[2];
    auto P = [&](long n) { return detail::q2poch(n, ctx); };
    C sum(0);
    for (long k = 0; k <= a; ++k)
        sum += sign_pow<C>(k) * ipow(ctx.q, 3 * k * k - k - 2 * k * (a + b + c)) /
               (P(k) * P(a - k) * P(b - k) * P(c - k));
    return P(a) * P(b) * P(c) * ipow(ctx.q, a * b + a * c + b * c) * sum;
}

// M_F^{-1} sum_m (-1)^m q^{3m(m+1)/2} [xi] p_a p_b p_c with xi = q^{m+1/2},
// where p_n = q^{n^2/2} P_n absorbs the prefactor.
template <class C>
C brace_spin_sum(long a, long b, long c, const QContext<C>& ctx)
{
    detail::brace_guard(a, b, c);
    long n = std::max({a, b, c});
    C s(0);
    TailRule tail{ctx.tail_cut * 1e-20};
    for (long m = 0; m < ctx.max_terms; ++m) {
        C xi = ctx.half_pow(2 * m + 1);
        auto p = poly_p_scaled(n, xi, ctx);
        C t = sign_pow<C>(m) * ctx.half_pow(3 * m * (m + 1)) * (xi - C(1) / xi) * p[a] * p[b] * p[c];
        s += t;
        if (m > a + b + c && tail.done(mag(t))) return s / mf_constant(ctx);
    }
    throw TruncationExhausted("brace_spin_sum: tail criterion not reached");
}

// {a,b,c+1} = q^{a+b}{a,b,c} - q^{-1}(1-q^{2a})(1-q^{2b}){a-1,b-1,c}, {a,b,0} = q^{ab}
template <class C>
class BraceRecursion {
public:
    BraceRecursion(long A, const QContext<C>& ctx) : A_(A), q_(ctx.q), v_((A + 1) * (A + 1) * (A + 1))
    {
        for (long a = 0; a <= A; ++a)
            for (long b = 0; b <= A; ++b) at(a, b, 0) = ipow(q_, a * b);
        for (long c = 0; c < A; ++c)
            for (long a = 0; a <= A; ++a)
                for (long b = 0; b <= A; ++b) {
                    C r = ipow(q_, a + b) * at(a, b, c);
                    if (a > 0 && b > 0)
                        r -= (C(1) - ipow(q_, 2 * a)) * (C(1) - ipow(q_, 2 * b)) / q_ * at(a - 1, b - 1, c);
                    at(a, b, c + 1) = r;
                }
    }
    const C& operator()(long a, long b, long c) const { return v_[(a * (A_ + 1) + b) * (A_ + 1) + c]; }

private:
    C& at(long a, long b, long c) { return v_[(a * (A_ + 1) + b) * (A_ + 1) + c]; }
    long A_;
    C q_;
    std::vector<C> v_;
};

template <class C>
C brace(long a, long b, long c, BraceMethod method, const QContext<C>& ctx)
{
    detail::brace_guard(a, b, c);
    switch (method) {
    case BraceMethod::closed_form: return brace_closed_form(a, b, c, ctx);
    case BraceMethod::spin_sum: return brace_spin_sum(a, b, c, ctx);
    case BraceMethod::recursion: return BraceRecursion<C>(std::max({a, b, c}), ctx)(a, b, c);
    }
    throw DomainError("brace: unknown method");
}

template <class C>
struct BraceTensor {
    long A = 0;
    BraceMethod method = BraceMethod::closed_form;
    std::vector<C> values;
    const C& operator()(long a, long b, long c) const { return values[(a * (A + 1) + b) * (A + 1) + c]; }
};

template <class C>
BraceTensor<C> brace_tensor(long A, BraceMethod method, const QContext<C>& ctx)
{
    detail::brace_guard(A, A, A);
    BraceTensor<C> t{A, method, std::vector<C>((A + 1) * (A + 1) * (A + 1))};
    if (method == BraceMethod::recursion) {
        BraceRecursion<C> br(A, ctx);
        for (long a = 0; a <= A; ++a)
            for (long b = 0; b <= A; ++b)
                for (long c = 0; c <= A; ++c) t.values[(a * (A + 1) + b) * (A + 1) + c] = br(a, b, c);
        return t;
    }
    for (long a = 0; a <= A; ++a)
        for (long b = 0; b <= A; ++b)
            for (long c = 0; c <= A; ++c) t.values[(a * (A + 1) + b) * (A + 1) + c] = brace(a, b, c, method, ctx);
    return t;
}

// Max pairwise relative deviation of the three methods over [0,A]^3.
template <class C>
IdentityReport brace_agreement_check(long A, const QContext<C>& ctx, double tol = 1e-10)
{
    Stopwatch sw;
    auto s = brace_tensor(A, BraceMethod::spin_sum, ctx);
    auto f = brace_tensor(A, BraceMethod::closed_form, ctx);
    auto r = brace_tensor(A, BraceMethod::recursion, ctx);
    double res = 0;
    for (size_t i = 0; i < s.values.size(); ++i)
        res = std::max({res, rel_residual(s.values[i], f.values[i]), rel_residual(f.values[i], r.values[i]),
                        rel_residual(s.values[i], r.values[i])});
    auto rep = make_report("fock.brace.4_27_4_28_4_39", {{"A", std::to_string(A)}, {"q", fmt_cplx(to_cd(ctx.q))}},
                           res, tol);
    rep.wall_time_ms = sw.ms();
    return rep;
}

// ---------------------------------------------------------------- Clebsch-Gordan

enum class CGSide { ket, bra };

struct CGParams {
    cd omega1{1, 0}, lambda1{1, 0};
    cd omega2{1, 0}, lambda2{1, 0};
    cd omega{1, 0};
};

// <a,b||omega,c> (ket) and <omega,c||a,b> (bra) dressed around a brace value
template <class C>
C cg_dress(CGSide side, long a, long b, long c, const C& br, const CGParams& p, const QContext<C>& ctx)
{
    using std::sqrt;
    C u1 = C(p.omega / (p.lambda1 * p.omega2));
    C u2 = C(p.omega1 / (p.lambda2 * p.omega));
    C norm = sqrt(detail::q2poch(a, ctx) * detail::q2poch(b, ctx) * detail::q2poch(c, ctx));
    if (side == CGSide::ket)
        return ipow(u1, a) * ipow(u2, b) * ipow(C(-ctx.q * C(p.omega2 / p.omega1)), c) * br / norm;
    return ipow(u1, -a) * ipow(u2, -b) * ipow(C(-ctx.q * C(p.omega1 / p.omega2)), c) * br / norm;
}

template <class C>
C cg_coefficient(CGSide side, long a, long b, long c, const CGParams& p, const QContext<C>& ctx,
                 BraceMethod method = BraceMethod::closed_form)
{
    C br = brace(a, b, c, method, ctx);
    return cg_dress(side, a, b, c, br, p, ctx);
}

namespace detail {

// Co-product generators applied to a two-site vector stored as V(a,b):
// (X (x) Y) v  <->  X V Y^T,   w (X (x) Y)  <->  X^T W Y.
struct CoproductAction {
    const Generators &g1, &g2;
    MatC DEm(const MatC& V) const { return g1.Em * V * g2.Em.transpose() - g1.K * V * g2.Kp.transpose(); }
    MatC DK(const MatC& V) const { return g1.Em * V * g2.K.transpose() + g1.K * V * g2.Ep.transpose(); }
    MatC DKp(const MatC& V) const { return g1.Kp * V * g2.Em.transpose() + g1.Ep * V * g2.Kp.transpose(); }
    MatC DEp(const MatC& V) const { return g1.Ep * V * g2.Ep.transpose() - g1.Kp * V * g2.K.transpose(); }
    MatC wDEm(const MatC& W) const { return g1.Em.transpose() * W * g2.Em - g1.K.transpose() * W * g2.Kp; }
    MatC wDK(const MatC& W) const { return g1.Em.transpose() * W * g2.K + g1.K.transpose() * W * g2.Ep; }
    MatC wDEp(const MatC& W) const { return g1.Ep.transpose() * W * g2.Ep - g1.Kp.transpose() * W * g2.K; }
};

inline MatC cg_state(CGSide side, long c, long A, const CGParams& p, const BraceRecursion<cd>& br,
                     const QContext<cd>& ctx)
{
    MatC V(A, A);
    for (long a = 0; a < A; ++a)
        for (long b = 0; b < A; ++b) V(a, b) = cg_dress(side, a, b, c, br(a, b, c), p, ctx);
    return V;
}

inline double window_max(const MatC& X, long W) { return X.topLeftCorner(W, W).cwiseAbs().maxCoeff(); }

inline MatC kron(const MatC& A, const MatC& B)
{
    MatC K(A.rows() * B.rows(), A.cols() * B.cols());
    for (long i = 0; i < A.rows(); ++i)
        for (long j = 0; j < A.cols(); ++j) K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

} // namespace detail

// vacuum and co-vacuum on the occupation window a,b < A-2.
inline IdentityReport cg_vacuum_check(const CGParams& p, long A, const QContext<cd>& ctx)
{
    Stopwatch sw;
    auto g1 = fock_generators(p.omega1, p.lambda1, A, ctx), g2 = fock_generators(p.omega2, p.lambda2, A, ctx);
    detail::CoproductAction D{g1, g2};
    BraceRecursion<cd> br(A, ctx);
    long W = A - 2;
    MatC v0 = detail::cg_state(CGSide::ket, 0, A, p, br, ctx);
    MatC w0 = detail::cg_state(CGSide::bra, 0, A, p, br, ctx);
    // closed form of the vacuum
    MatC v37(A, A);
    for (long a = 0; a < A; ++a)
        for (long b = 0; b < A; ++b)
            v37(a, b) = ipow(p.omega / (p.lambda1 * p.omega2), a) * ipow(p.omega1 / (p.lambda2 * p.omega), b) *
                        ipow(ctx.q, a * b) / std::sqrt(detail::q2poch(a, ctx) * detail::q2poch(b, ctx));
    cd k0 = p.omega * ctx.sqrt_q;
    double sc = std::max(detail::window_max(v0, W), detail::window_max(w0, W));
    double res = std::max({detail::window_max(D.DEm(v0), W), detail::window_max(D.DK(v0) - k0 * v0, W),
                           detail::window_max(v37 - v0, W), detail::window_max(D.wDEp(w0), W),
                           detail::window_max(D.wDK(w0) - k0 * w0, W)}) /
                 sc;
    auto r = make_report("fock.cg_vacuum.4_36_4_37", {{"A", std::to_string(A)}, {"q", fmt_cplx(ctx.q)}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// raising and co-raising for c < c_max.
inline IdentityReport cg_raising_check(const CGParams& p, long A, long c_max, const QContext<cd>& ctx)
{
    Stopwatch sw;
    auto g1 = fock_generators(p.omega1, p.lambda1, A, ctx), g2 = fock_generators(p.omega2, p.lambda2, A, ctx);
    detail::CoproductAction D{g1, g2};
    BraceRecursion<cd> br(A, ctx);
    long W = A - 2;
    double res = 0;
    for (long c = 0; c < c_max; ++c) {
        cd s = std::sqrt(cd(1) - ipow(ctx.q, 2 * c + 2));
        MatC v = detail::cg_state(CGSide::ket, c, A, p, br, ctx), v1 = detail::cg_state(CGSide::ket, c + 1, A, p, br, ctx);
        MatC w = detail::cg_state(CGSide::bra, c, A, p, br, ctx), w1 = detail::cg_state(CGSide::bra, c + 1, A, p, br, ctx);
        double sc = std::max({detail::window_max(v1, W), detail::window_max(w1, W), 1e-300});
        res = std::max(res, detail::window_max(D.DEp(v) - s * v1, W) / sc);
        res = std::max(res, detail::window_max(D.wDEm(w) - s * w1, W) / sc);
        cd kc = p.omega * ctx.half_pow(2 * c + 1);
        res = std::max(res, detail::window_max(D.DK(v) - kc * v, W) / std::max(detail::window_max(v, W), 1e-300));
    }
    auto r = make_report("fock.cg_raising.4_38_4_40",
                         {{"A", std::to_string(A)}, {"c_max", std::to_string(c_max)}, {"q", fmt_cplx(ctx.q)}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// ---------------------------------------------------------------- weights

// Fock weights with N_F and log q cached. x = mu/mu'.
class FockWeights {
public:
    explicit FockWeights(const QContext<cd>& ctx) : ctx_(ctx), NF_(fock_NF(ctx)), logq_(std::log(ctx.q)) {}

    const QContext<cd>& ctx() const { return ctx_; }
    cd NF() const { return NF_; }
    cd S(long m) const { return fock_S(m, ctx_); }

    // closed form: prefactor and the four-factor numerator, no denominator
    LogProduct numerator(cd x, long m, long mp) const
    {
        if (x == cd(0)) throw DomainError("weight_V_fock: x = 0");
        LogProduct p;
        p.mul_log(logq_ * double((m * (m + 1) + mp * (mp + 1)) / 2));
        cd c = cd(1) / x;
        for (long e : {2 + m - mp, 2 - m + mp, 3 + m + mp, 1 - m - mp})
            p.absorb(log_qpoch_inf_qexp(c, e, 2, ctx_));
        return p;
    }

    cd V(cd x, long m, long mp) const
    {
        LogProduct p = numerator(x, m, mp);
        p.absorb(log_qpoch_inf(ctx_.q2 / (x * x), ctx_.q2, ctx_), true);
        return p.value("weight_V_fock") / NF_;
    }

    // kappa_w V_{-q/w}(m, m'), finite at w = 1 where kappa vanishes and V has a pole
    cd kappa_V(cd w, long m, long mp) const
    {
        LogProduct p = numerator(-ctx_.q / w, m, mp);
        p.absorb(log_qpoch_inf(-ctx_.q / w, ctx_.q, ctx_), true);
        p.absorb(log_qpoch_inf(-w, ctx_.q, ctx_), true);
        return p.value("kappa_V") / NF_;
    }

    cd kappa(cd x) const { return qpoch_inf(x, ctx_.q, ctx_) / qpoch_inf(-ctx_.q / x, ctx_.q, ctx_); }

    // defining sum over occupation numbers: N_F^{-1} sum_a x^{-a} chibar_{m,a} chi_{a,m'}
    cd V_sum(cd x, long m, long mp) const
    {
        FockChi<cd> fc(ctx_);
        cd s = tail_sum<cd>([&](long a) { return ipow(cd(1) / x, a) * fc.chibar(m, a) * fc.chi(a, mp); }, 0,
                            std::max(std::abs(m), std::abs(mp)) + 2, ctx_.tail_cut, ctx_.max_terms, "weight sum");
        return s / NF_;
    }

    // right side of the product relation
    cd product_constant(cd z) const
    {
        const cd& q = ctx_.q;
        return qpoch_inf(z, q, ctx_) * qpoch_inf(q * q / z, q, ctx_) /
               (qpoch_inf(-z / q, q, ctx_) * qpoch_inf(-q / z, q, ctx_)) / (NF_ * NF_);
    }

private:
    QContext<cd> ctx_;
    cd NF_;
    cd logq_;
};

inline cd weight_V_fock(cd x, long m, long mp, const QContext<cd>& ctx) { return FockWeights(ctx).V(x, m, mp); }

struct SpinWeightTable {
    long m_lo = 0, m_hi = 0;
    cd x;
    MatC V;  // V(i, j) = V_x(m_lo + i, m_lo + j)
    VecC S;
    cd at(long m, long mp) const { return V(m - m_lo, mp - m_lo); }
};

inline SpinWeightTable weight_table_fock(cd x, long m_lo, long m_hi, const FockWeights& fw)
{
    long n = m_hi - m_lo + 1;
    SpinWeightTable t{m_lo, m_hi, x, MatC(n, n), VecC(n)};
    for (long i = 0; i < n; ++i) {
        t.S(i) = fw.S(m_lo + i);
        for (long j = 0; j < n; ++j) t.V(i, j) = fw.V(x, m_lo + i, m_lo + j);
    }
    return t;
}

inline IdentityReport weight_closed_vs_sum_check(cd x, long M, const QContext<cd>& ctx)
{
    Stopwatch sw;
    FockWeights fw(ctx);
    double res = 0;
    for (long m = 0; m <= M; ++m)
        for (long mp = 0; mp <= M; ++mp) res = std::max(res, rel_residual(fw.V(x, m, mp), fw.V_sum(x, m, mp)));
    auto r = make_report("fock.weight_closed_form.4_42_4_43",
                         {{"x", fmt_cplx(x)}, {"M", std::to_string(M)}, {"q", fmt_cplx(ctx.q)}}, res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

inline IdentityReport weight_symmetry_check(cd x, long M, const QContext<cd>& ctx)
{
    Stopwatch sw;
    FockWeights fw(ctx);
    double res = 0;
    for (long m = -M; m <= M; ++m)
        for (long mp = -M; mp <= M; ++mp) {
            cd v = fw.V(x, m, mp);
            res = std::max({res, rel_residual(v, fw.V(x, mp, m)), rel_residual(v, fw.V(x, -1 - m, mp))});
        }
    auto r = make_report("fock.weight_symmetry.4_44",
                         {{"x", fmt_cplx(x)}, {"M", std::to_string(M)}, {"q", fmt_cplx(ctx.q)}}, res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// V_1(m, m') = (-1)^m delta / [q^{m+1/2}]; off-diagonal entries must vanish exactly.
inline IdentityReport weight_normalisation_check(long M, const QContext<cd>& ctx)
{
    Stopwatch sw;
    FockWeights fw(ctx);
    double res = 0;
    for (long m = 0; m <= M; ++m)
        for (long mp = 0; mp <= M; ++mp) {
            cd v = fw.V(1.0, m, mp);
            cd want = m == mp ? sign_pow<cd>(m) / bracket(ctx.half_pow(2 * m + 1)) : cd(0);
            double sc = std::abs(sign_pow<cd>(m) / bracket(ctx.half_pow(2 * m + 1)));
            res = std::max(res, std::abs(v - want) / sc);
        }
    auto r = make_report("fock.weight_normalisation.4_45", {{"M", std::to_string(M)}, {"q", fmt_cplx(ctx.q)}}, res,
                         ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// sum over m' of V_x(m,m') S_m' V_y(m',m'') against V_{xy}(m,m''). M_sum = 0 sums to
// the tail rule; otherwise exactly M_sum+1 terms and TailTooFat if the last is large.
inline IdentityReport transitivity_check_fock(cd x, cd y, long m, long mpp, long M_sum, const QContext<cd>& ctx)
{
    Stopwatch sw;
    FockWeights fw(ctx);
    auto term = [&](long k) { return fw.V(x, m, k) * fw.S(k) * fw.V(y, k, mpp); };
    cd s = 0;
    if (M_sum <= 0) {
        s = tail_sum<cd>(term, 0, std::max(m, mpp) + 2, ctx.tail_cut, ctx.max_terms, "transitivity");
    } else {
        double big = 0, last = 0;
        for (long k = 0; k <= M_sum; ++k) {
            cd t = term(k);
            s += t;
            big = std::max(big, std::abs(t));
            last = std::abs(t);
        }
        if (last > ctx.tail_cut * big)
            throw TailTooFat("transitivity: last retained term " + fmt_real(last / big) +
                             " of the largest; increase M_sum");
    }
    cd rhs = fw.V(x * y, m, mpp);
    auto r = make_report("fock.transitivity.4_46",
                         {{"x", fmt_cplx(x)}, {"y", fmt_cplx(y)}, {"m", std::to_string(m)},
                          {"m2", std::to_string(mpp)}, {"q", fmt_cplx(ctx.q)}},
                         rel_residual(s, rhs), ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

inline IdentityReport weight_product_check(cd z, long M, const QContext<cd>& ctx)
{
    Stopwatch sw;
    FockWeights fw(ctx);
    cd k = fw.product_constant(z);
    double res = 0;
    for (long m = 0; m <= M; ++m)
        for (long mp = 0; mp <= M; ++mp)
            res = std::max(res, rel_residual(cd(fw.V(z, m, mp) * fw.V(ctx.q2 / z, m, mp)), k));
    auto r = make_report("fock.weight_product.4_47",
                         {{"z", fmt_cplx(z)}, {"M", std::to_string(M)}, {"q", fmt_cplx(ctx.q)}}, res, ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// star-triangle with R = N_F kappa_x kappa_y kappa_{-q/xy}. R_scale multiplies R
// (a negative control passes something other than 1).
inline IdentityReport star_triangle_fock(cd x, cd y, long ma, long mb, long mc, const QContext<cd>& ctx,
                                         double R_scale = 1, double tol = -1)
{
    Stopwatch sw;
    FockWeights fw(ctx);
    const cd& q = ctx.q;
    cd w = -q / (x * y);
    cd lhs = tail_sum<cd>([&](long m) { return fw.V(x, ma, m) * fw.S(m) * fw.V(w, m, mc) * fw.V(y, mb, m); }, 0,
                          std::max({ma, mb, mc}) + 2, ctx.tail_cut, ctx.max_terms, "star-triangle");
    // kappa_w V_{xy} is taken together: at xy = -q both factors are singular
    cd rhs = R_scale * fw.NF() * fw.kappa(x) * fw.kappa(y) * fw.kappa_V(w, ma, mb) * fw.V(-q / y, ma, mc) *
             fw.V(-q / x, mb, mc);
    if (tol <= 0) tol = ctx.tol_identity;
    auto r = make_report("fock.star_triangle.4_49",
                         {{"x", fmt_cplx(x)}, {"y", fmt_cplx(y)}, {"spins", std::to_string(ma) + "," +
                                                                                std::to_string(mb) + "," +
                                                                                std::to_string(mc)},
                          {"q", fmt_cplx(q)}, {"R_scale", fmt_real(R_scale)}},
                         rel_residual(lhs, rhs), tol, R_scale != 1);
    r.wall_time_ms = sw.ms();
    return r;
}

// log z_x = sum_n (x^n - (q^2/x)^n) / (n (1-q^n)(1+(-q)^n))
inline cd partition_series_fock(cd x, const QContext<cd>& ctx)
{
    const cd& q = ctx.q;
    cd y = q * q / x;
    if (!(std::abs(x) < 1 && std::abs(y) < 1)) throw DomainError("partition_series_fock: need |x|, |q^2/x| < 1");
    cd xn = 1, yn = 1, qn = 1;
    return tail_sum<cd>(
        [&](long n) {
            xn *= x;
            yn *= y;
            qn *= q;
            return (xn - yn) / (double(n) * (1.0 - qn) * (1.0 + sign_pow<cd>(n) * qn));
        },
        1, 1, ctx.tail_cut, ctx.max_terms, "partition series");
}

// log z_q = 0, log z_x + log z_{q^2/x} = 0, and <V_x><V_{q^2/x}> against the product constant.
inline IdentityReport partition_checks_fock(cd x, const QContext<cd>& ctx)
{
    Stopwatch sw;
    FockWeights fw(ctx);
    const cd& q = ctx.q;
    cd y = q * q / x;
    cd lx = partition_series_fock(x, ctx), ly = partition_series_fock(y, ctx);
    double r1 = std::abs(partition_series_fock(q, ctx));
    double r2 = std::abs(lx + ly) / std::max(std::abs(lx), 1e-300);
    cd vx = fw.kappa(x) / fw.NF() * std::exp(lx), vy = fw.kappa(y) / fw.NF() * std::exp(ly);
    double r3 = rel_residual(cd(vx * vy), fw.product_constant(x));
    auto r = make_report("fock.partition.4_52_4_53", {{"x", fmt_cplx(x)}, {"q", fmt_cplx(q)}},
                         std::max({r1, r2, r3}), ctx.tol_identity);
    r.wall_time_ms = sw.ms();
    return r;
}

// ---------------------------------------------------------------- RLL

enum class SigmaX { none, right, left, both };

inline const char* to_string(SigmaX s)
{
    switch (s) {
    case SigmaX::none: return "none";
    case SigmaX::right: return "right";
    case SigmaX::left: return "left";
    case SigmaX::both: return "both";
    }
    return "?";
}

using LMatrix = std::array<std::array<MatC, 2>, 2>;

inline LMatrix l_operator(const Generators& g, cd lam, SigmaX s = SigmaX::none)
{
    LMatrix L{{{g.Em, MatC(-g.K / lam)}, {MatC(lam * g.Kp), g.Ep}}};
    if (s == SigmaX::right || s == SigmaX::both)
        for (auto& row : L) std::swap(row[0], row[1]);
    if (s == SigmaX::left || s == SigmaX::both) std::swap(L[0], L[1]);
    return L;
}

// R[i1][i2][j1][j2] of the six-vertex matrix; scramble swaps the two weights
// [q mu/lambda] and [mu/lambda] as a negative control.
inline std::array<cd, 16> six_vertex_R(cd lam, cd mu, const QContext<cd>& ctx, bool scramble = false)
{
    std::array<cd, 16> R{};
    cd a = bracket(ctx.q * mu / lam), b = bracket(mu / lam), c = bracket(ctx.q);
    if (scramble) std::swap(a, b);
    auto at = [&](int i1, int i2, int j1, int j2) -> cd& { return R[((i1 * 2 + i2) * 2 + j1) * 2 + j2]; };
    at(0, 0, 0, 0) = at(1, 1, 1, 1) = a;
    at(0, 1, 0, 1) = at(1, 0, 1, 0) = b;
    at(0, 1, 1, 0) = at(1, 0, 0, 1) = c;
    return R;
}

// RLL relation on the truncated Fock space a <= A_max; matrix elements with both
// indices <= A_max - 2 are exact.
inline IdentityReport rll_check(cd lam, cd mu, long A_max, const QContext<cd>& ctx, SigmaX s = SigmaX::none,
                                bool scramble = false, cd omega = std::exp(cd(0, 0.4)), cd lambda0 = 1.3)
{
    Stopwatch sw;
    auto g = fock_generators(omega, lambda0, A_max + 1, ctx);
    auto Ll = l_operator(g, lam, s), Lm = l_operator(g, mu, s);
    auto R = six_vertex_R(lam, mu, ctx, scramble);
    auto Rat = [&](int i1, int i2, int j1, int j2) { return R[((i1 * 2 + i2) * 2 + j1) * 2 + j2]; };
    long W = A_max - 1;
    double res = 0, sc = 0;
    for (int i1 = 0; i1 < 2; ++i1)
        for (int i2 = 0; i2 < 2; ++i2)
            for (int k1 = 0; k1 < 2; ++k1)
                for (int k2 = 0; k2 < 2; ++k2) {
                    MatC lhs = MatC::Zero(A_max + 1, A_max + 1), rhs = lhs;
                    for (int j1 = 0; j1 < 2; ++j1)
                        for (int j2 = 0; j2 < 2; ++j2) {
                            lhs += Rat(i1, i2, j1, j2) * (Ll[j1][k1] * Lm[j2][k2]);
                            rhs += (Lm[i2][j2] * Ll[i1][j1]) * Rat(j1, j2, k1, k2);
                        }
                    res = std::max(res, detail::window_max(lhs - rhs, W));
                    sc = std::max(sc, detail::window_max(lhs, W));
                }
    auto r = make_report("fock.rll.2_15",
                         {{"lambda", fmt_cplx(lam)}, {"mu", fmt_cplx(mu)}, {"A_max", std::to_string(A_max)},
                          {"sigma_x", to_string(s)}, {"scramble", scramble ? "1" : "0"}, {"q", fmt_cplx(ctx.q)}},
                         res / std::max(sc, 1.0), 1e-12, scramble);
    r.wall_time_ms = sw.ms();
    return r;
}

// ---------------------------------------------------------------- box R-matrix

// Generators in the V-form on spins m in [0, M), with |-1> identified with |0>.
inline Generators vform_generators(cd omega, cd mu, long M, const QContext<cd>& ctx)
{
    MatC K0 = MatC::Zero(M, M);
    Generators g{MatC::Zero(M, M), MatC::Zero(M, M), MatC::Zero(M, M), MatC::Zero(M, M)};
    for (long m = 0; m < M; ++m) {
        cd xi = ctx.half_pow(2 * m + 1), d = xi - 1.0 / xi;
        long up = m + 1, dn = m > 0 ? m - 1 : 0;
        if (up < M) {
            K0(up, m) += 1.0 / d;
            g.Ep(up, m) += -(1.0 / xi) / (mu * d);
            g.Em(up, m) += mu * xi / d;
        }
        K0(dn, m) -= 1.0 / d;
        g.Ep(dn, m) += xi / (mu * d);
        g.Em(dn, m) += -mu / (xi * d);
    }
    g.K = omega * K0;
    g.Kp = K0 / omega;
    return g;
}

// Four-factor product with Vbar_z = V_{-q/z} and eps = -1:
// Vbar_{-q x'/y}(m1,m2) V_{x/y}(m1,n1) V_{x'/y'}(m2,n2) Vbar_{-x/(q y')}(n1,n2)
inline cd box_rmatrix_fock(cd x, cd xp, cd y, cd yp, long m1, long m2, long n1, long n2, const FockWeights& fw)
{
    const cd& q = fw.ctx().q;
    return fw.V(y / xp, m1, m2) * fw.V(x / y, m1, n1) * fw.V(xp / yp, m2, n2) * fw.V(q * q * yp / x, n1, n2);
}

// Delta^{12}(L_ik) T = T Delta^{21}(L_ik) with T carrying the measure S_m1 S_m2.
// Spins below M; rows/cols with both spins < M - 4 are compared.
inline IdentityReport box_intertwining_check(cd omega1, cd mu1, cd omega2, cd mu2, long M, const QContext<cd>& ctx)
{
    Stopwatch sw;
    FockWeights fw(ctx);
    cd x = mu1 * omega1, xp = omega1 / mu1, y = mu2 * omega2, yp = omega2 / mu2;
    auto A1 = weight_table_fock(y / xp, 0, M - 1, fw), B1 = weight_table_fock(x / y, 0, M - 1, fw);
    auto B2 = weight_table_fock(xp / yp, 0, M - 1, fw), A2 = weight_table_fock(ctx.q2 * yp / x, 0, M - 1, fw);
    long M2 = M * M;
    MatC T(M2, M2);
    for (long m1 = 0; m1 < M; ++m1)
        for (long m2 = 0; m2 < M; ++m2)
            for (long n1 = 0; n1 < M; ++n1)
                for (long n2 = 0; n2 < M; ++n2)
                    T(m1 * M + m2, n1 * M + n2) =
                        A1.S(m1) * A1.S(m2) * A1.V(m1, m2) * B1.V(m1, n1) * B2.V(m2, n2) * A2.V(n1, n2);
    auto g1 = vform_generators(omega1, mu1, M, ctx), g2 = vform_generators(omega2, mu2, M, ctx);
    auto L1 = l_operator(g1, 1.0), L2 = l_operator(g2, 1.0);
    long W = M - 4;
    std::vector<long> idx;
    for (long m1 = 0; m1 < W; ++m1)
        for (long m2 = 0; m2 < W; ++m2) idx.push_back(m1 * M + m2);
    auto sub = [&](const MatC& X) {
        double mx = 0;
        for (long i : idx)
            for (long j : idx) mx = std::max(mx, std::abs(X(i, j)));
        return mx;
    };
    double sc = sub(T), res = 0;
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 2; ++k) {
            MatC D12 = MatC::Zero(M2, M2), D21 = MatC::Zero(M2, M2);
            for (int j = 0; j < 2; ++j) {
                D12 += detail::kron(L1[i][j], L2[j][k]);
                D21 += detail::kron(L2[i][j], L1[j][k]);
            }
            res = std::max(res, sub(D12 * T - T * D21) / sc);
        }
    auto r = make_report("fock.box_intertwining.3_63_4_54",
                         {{"omega1", fmt_cplx(omega1)}, {"mu1", fmt_cplx(mu1)}, {"omega2", fmt_cplx(omega2)},
                          {"mu2", fmt_cplx(mu2)}, {"M", std::to_string(M)}, {"q", fmt_cplx(ctx.q)}},
                         res, 1e-5);
    r.wall_time_ms = sw.ms();
    return r;
}

} // namespace kmq
