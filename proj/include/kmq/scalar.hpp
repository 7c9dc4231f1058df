#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>

namespace kmq {

using cd = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;

// |z| as a double, for any complex scalar (std::complex or a multiprecision complex).
template <class C>
double mag(const C& z)
{
    using std::abs;
    return static_cast<double>(abs(z));
}

template <class C>
cd to_cd(const C& z)
{
    using std::imag;
    using std::real;
    return {static_cast<double>(real(z)), static_cast<double>(imag(z))};
}

// x^n for signed integer n by repeated squaring.
template <class C>
C ipow(C x, long n)
{
    if (n < 0) return C(1) / ipow(x, -n);
    C r(1);
    while (n) {
        if (n & 1) r *= x;
        x *= x;
        n >>= 1;
    }
    return r;
}

template <class C>
C sign_pow(long n)
{
    return (n % 2 == 0) ? C(1) : C(-1);
}

// |a - b| / max(|a|, |b|, 1e-300)
template <class C>
double rel_residual(const C& a, const C& b)
{
    double d = mag(C(a - b));
    double s = std::max({mag(a), mag(b), 1e-300});
    return d / s;
}

// Same, with an extra floor for identities whose two sides may both vanish.
template <class C>
double rel_residual(const C& a, const C& b, double scale)
{
    double d = mag(C(a - b));
    double s = std::max({mag(a), mag(b), scale, 1e-300});
    return d / s;
}

inline bool is_nan_residual(double r) { return !(r == r); }

} // namespace kmq
