#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace tcstab {

using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using cplx = std::complex<double>;

inline constexpr cplx I{0.0, 1.0};

// Error taxonomy mirrored by the CLI exit codes: parameter/usage problems (2),
// numerical breakdown (3), and checks that could not reach a verdict (4).
struct param_error : std::invalid_argument {
  explicit param_error(const std::string& msg) : std::invalid_argument(msg) {}
};

struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct inconclusive_error : std::runtime_error {
  explicit inconclusive_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tcstab
