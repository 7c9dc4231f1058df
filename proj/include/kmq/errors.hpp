#pragma once

#include <stdexcept>
#include <string>

namespace kmq {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : Error { using Error::Error; };
struct TruncationExhausted : Error { using Error::Error; };
struct RepresentationMismatch : Error { using Error::Error; };
struct OverflowGuard : Error { using Error::Error; };
struct DegenerateArgument : Error { using Error::Error; };
struct SingularMeasure : Error { using Error::Error; };
struct PoleHit : Error { using Error::Error; };
struct TailTooFat : Error { using Error::Error; };
struct WindowTooSmall : Error { using Error::Error; };
struct EigensolverFailure : Error { using Error::Error; };

} // namespace kmq
