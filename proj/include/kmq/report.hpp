#pragma once

#include <chrono>
#include <cstdio>
#include <map>
#include <string>
#include <utility>

#include "scalar.hpp"

namespace kmq {

enum class Verdict { pass, fail, expected_fail, skipped };

inline const char* to_string(Verdict v)
{
    switch (v) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    case Verdict::expected_fail: return "EXPECTED_FAIL";
    case Verdict::skipped: return "SKIPPED";
    }
    return "?";
}

using Params = std::map<std::string, std::string>;

struct IdentityReport {
    std::string identity_id;
    Params params;
    double residual = 0;
    double tolerance = 0;
    Verdict verdict = Verdict::skipped;
    double wall_time_ms = 0;
    bool negative_control = false;
    std::string note;

    bool ok() const { return verdict != Verdict::fail; }
};

inline std::string fmt_real(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

inline std::string fmt_cplx(cd z)
{
    if (z.imag() == 0) return fmt_real(z.real());
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.12g%+.12gi", z.real(), z.imag());
    return buf;
}

// Positive identities pass when residual <= tol. Negative controls are
// EXPECTED_FAIL only when the residual clears 10*tol; anything else is a FAIL.
inline Verdict judge(double residual, double tol, bool negative_control)
{
    if (is_nan_residual(residual)) return Verdict::fail;
    if (negative_control) return residual > 10 * tol ? Verdict::expected_fail : Verdict::fail;
    return residual <= tol ? Verdict::pass : Verdict::fail;
}

inline IdentityReport make_report(std::string id, Params params, double residual, double tol,
                                  bool negative_control = false)
{
    IdentityReport r;
    r.identity_id = std::move(id);
    r.params = std::move(params);
    r.residual = residual;
    r.tolerance = tol;
    r.negative_control = negative_control;
    r.verdict = judge(residual, tol, negative_control);
    return r;
}

class Stopwatch {
public:
    Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
    double ms() const
    {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

} // namespace kmq
