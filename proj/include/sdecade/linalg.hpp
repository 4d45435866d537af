#pragma once

#include <Eigen/Dense>

namespace sdecade {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Matrix exponential by scaling and squaring with a diagonal (6,6) Pade
/// approximant. The argument is scaled so that its infinity norm is at most
/// 1/2, which keeps the truncation error near 3.4e-16 relative.
Matrix expm(const Matrix& a);

/// Closed-form exponential of a 3x3 skew-symmetric matrix (Rodrigues).
/// Throws std::invalid_argument when the input is not 3x3.
Eigen::Matrix3d expm_skew3(const Eigen::Matrix3d& a);

/// True when a + a^T vanishes entrywise within tol.
bool is_skew(const Matrix& a, double tol = 0.0);

/// Max-norm of a matrix; zero for empty matrices.
double max_abs(const Matrix& a);

}  // namespace sdecade
