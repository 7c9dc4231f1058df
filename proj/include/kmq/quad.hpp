#pragma once

#include <boost/multiprecision/cpp_complex.hpp>

#include "scalar.hpp"

namespace kmq {

// 113-bit complex scalar for sums that cancel beyond double precision.
using cq = boost::multiprecision::cpp_complex_quad;

inline cq to_cq(cd z) { return cq(z.real(), z.imag()); }

} // namespace kmq
