#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsparse {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed arguments: empty apertures, duplicate indices, non-unit states.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A linear system that cannot be solved to the requested accuracy.
class DegenerateSystem : public Error {
public:
    using Error::Error;
};

/// No eta in the search grid made the scaled spectrum integral.
/// `fractional_residuals` holds |2^f lambda_j - round(2^f lambda_j)| at the
/// largest fraction-bit count tried, one per eigenvalue.
class CalibrationError : public Error {
public:
    CalibrationError(const std::string& what, std::vector<double> residuals)
        : Error(what), fractional_residuals(std::move(residuals)) {}

    std::vector<double> fractional_residuals;
};

/// Config parse or schema error. `line` is 1-based, 0 when unknown.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line_number)
        : Error(line_number > 0 ? "line " + std::to_string(line_number) + ": " + what : what),
          line(line_number) {}

    int line;
};

inline std::size_t ceil_log2(std::size_t n) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    return bits;
}

}  // namespace qsparse
