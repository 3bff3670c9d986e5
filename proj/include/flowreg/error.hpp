#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flowreg {

enum class ErrorCode {
    OutOfDomain,
    NonFinite,
    DegenerateFit,
    QuadratureNoConvergence,
    Overflow,
    InvalidDimension,
    UnsupportedMethod,
    SecondDerivativeUnavailable,
    InvalidParameters,
    NTooSmall,
    LengthMismatch,
    TooLarge,
    ConfigInvalid,
    NumericalFailure,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::OutOfDomain: return "OutOfDomain";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::DegenerateFit: return "DegenerateFit";
        case ErrorCode::QuadratureNoConvergence: return "QuadratureNoConvergence";
        case ErrorCode::Overflow: return "Overflow";
        case ErrorCode::InvalidDimension: return "InvalidDimension";
        case ErrorCode::UnsupportedMethod: return "UnsupportedMethod";
        case ErrorCode::SecondDerivativeUnavailable: return "SecondDerivativeUnavailable";
        case ErrorCode::InvalidParameters: return "InvalidParameters";
        case ErrorCode::NTooSmall: return "NTooSmall";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::NumericalFailure: return "NumericalFailure";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const char* what) {
    if (!condition) fail(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) fail(code, what);
}

}  // namespace flowreg
