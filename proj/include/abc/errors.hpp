#pragma once

#include <stdexcept>
#include <string>

namespace abc {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PoleError : Error { using Error::Error; };
struct RangeError : Error { using Error::Error; };
struct OriginError : Error { using Error::Error; };
struct IntegratorError : Error { using Error::Error; };
struct SearchExhausted : Error { using Error::Error; };
struct QuadratureError : Error { using Error::Error; };
struct SingularJacobian : Error { using Error::Error; };
struct WitnessNotFound : Error { using Error::Error; };
struct PreconditionError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct UnknownCheck : Error { using Error::Error; };
struct MissingStage : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

// Carries the stage (or list index) and the residual that broke the certificate.
struct CertificateFailure : Error {
    CertificateFailure(const std::string& what, long index, double residual)
        : Error(what), index(index), residual(residual) {}
    long index;
    double residual;
};

}  // namespace abc
