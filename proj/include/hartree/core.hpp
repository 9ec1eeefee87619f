#pragma once

#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hartree {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kPi2 = kPi * kPi;
// area of the unit 3-sphere
inline constexpr double kS3 = 2.0 * kPi2;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// bad user input: rejected parameters, malformed files handed in as configuration
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// a computation that could not deliver a trustworthy result
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hartree
