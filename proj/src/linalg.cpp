#include "sdecade/linalg.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace sdecade {

namespace {

// c_k = (2q-k)! q! / ((2q)! k! (q-k)!) for q = 6.
constexpr std::array<double, 7> pade6_coefficients() {
  std::array<double, 7> c{};
  c[0] = 1.0;
  constexpr int q = 6;
  for (int k = 1; k <= q; ++k) {
    c[k] = c[k - 1] * static_cast<double>(q - k + 1) /
           static_cast<double>(k * (2 * q - k + 1));
  }
  return c;
}

}  // namespace

Matrix expm(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("expm: matrix must be square, got " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  const Eigen::Index n = a.rows();
  if (n == 0) return a;
  if (n == 1) return Matrix::Constant(1, 1, std::exp(a(0, 0)));

  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  if (!std::isfinite(norm)) throw std::domain_error("expm: non-finite entries");

  int squarings = 0;
  if (norm > 0.5) {
    int exponent = 0;
    std::frexp(norm, &exponent);
    squarings = std::max(0, exponent + 1);
  }
  const Matrix scaled = std::ldexp(1.0, -squarings) * a;

  static constexpr auto c = pade6_coefficients();
  const Matrix id = Matrix::Identity(n, n);
  const Matrix a2 = scaled * scaled;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix even = c[0] * id + c[2] * a2 + c[4] * a4 + c[6] * a6;
  const Matrix odd = scaled * (c[1] * id + c[3] * a2 + c[5] * a4);

  Matrix result = (even - odd).partialPivLu().solve(even + odd);
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

Eigen::Matrix3d expm_skew3(const Eigen::Matrix3d& a) {
  const Eigen::Vector3d omega(a(2, 1), a(0, 2), a(1, 0));
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  double s = 0.0;
  double c = 0.0;
  if (theta < 1e-4) {
    // Taylor series of sin(t)/t and (1-cos t)/t^2, exact to double precision here.
    s = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    c = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    s = std::sin(theta) / theta;
    c = (1.0 - std::cos(theta)) / theta2;
  }
  Eigen::Matrix3d k;
  k << 0.0, -omega.z(), omega.y(),
       omega.z(), 0.0, -omega.x(),
       -omega.y(), omega.x(), 0.0;
  return Eigen::Matrix3d::Identity() + s * k + c * (k * k);
}

bool is_skew(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  return (a + a.transpose()).cwiseAbs().maxCoeff() <= tol;
}

double max_abs(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

}  // namespace sdecade
