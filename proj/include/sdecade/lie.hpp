#pragma once

#include <span>
#include <string>
#include <vector>

#include "sdecade/activation.hpp"
#include "sdecade/linalg.hpp"

namespace sdecade {

/// Ordered basis of a matrix Lie algebra acting on R^n.
struct MatrixBasis {
  int n = 0;
  std::string kind;  // "skew" or "gl"
  std::vector<Matrix> generators;

  int dim() const { return static_cast<int>(generators.size()); }
};

/// Canonical basis of Skew(n): one generator per pair (p, q), p < q, in
/// lexicographic order, with +1 at (p, q) and -1 at (q, p). n = 1 gives the
/// empty basis.
MatrixBasis skew_basis(int n);

/// Elementary matrices E_pq of gl(n) in row-major order.
MatrixBasis gl_basis(int n);

/// Coefficients theta_ij, i = 0..m (row 0 is the drift), j = 1..d.
class ThetaParams {
 public:
  ThetaParams() = default;
  explicit ThetaParams(Matrix coeffs);
  static ThetaParams zeros(int m, int d) { return ThetaParams(Matrix::Zero(m + 1, d)); }

  int noise_dim() const { return static_cast<int>(coeffs_.rows()) - 1; }
  int algebra_dim() const { return static_cast<int>(coeffs_.cols()); }
  const Matrix& coeffs() const { return coeffs_; }

  /// Row-major flattening, (m+1)*d entries.
  std::vector<double> flat() const;
  static ThetaParams from_flat(int m, int d, std::span<const double> values);

 private:
  Matrix coeffs_ = Matrix::Zero(1, 0);
};

/// A(theta) and B_1(theta)..B_m(theta).
struct Generators {
  Matrix drift;
  std::vector<Matrix> diffusion;
};

/// A = sum_j theta_0j G_j, B_i = sum_j theta_ij G_j.
Generators assemble_generators(const ThetaParams& theta, const MatrixBasis& basis);

/// XY - YX.
Matrix commutator(const Matrix& x, const Matrix& y);

/// The vector field z -> sigma(W z), sigma applied coordinatewise.
/// Its Jacobian at z is diag(sigma'(W z)) W.
struct NeuralField {
  Matrix weights;
  Activation sigma;

  Vector operator()(const Vector& z) const;
  Matrix jacobian(const Vector& z) const;
};

/// Lie bracket of neural fields, [g, g2](z) = Dg2(z) g(z) - Dg(z) g2(z).
///
/// With this sign convention two linear fields z -> Wz and z -> W'z bracket
/// to (W'W - WW')z. Requires square weights of equal size and a sigma with
/// a first derivative.
Vector vf_bracket(const NeuralField& g, const NeuralField& g2, const Vector& z);

inline constexpr int kMaxBracketDepth = 6;

/// ad_g^k g2 evaluated at z, with ad_g^0 g2 = g2 and ad_g^{k+1} g2 = [g, ad_g^k g2].
/// The inner brackets are differentiated exactly with nested dual numbers, so
/// sigma needs derivatives up to order max(k, 1). k above max_depth
/// (itself capped at kMaxBracketDepth) is rejected.
Vector iterated_ad(const NeuralField& g, const NeuralField& g2, int k, const Vector& z,
                   int max_depth = 4);

/// Degree of the lowest-degree polynomial interpolating (xs, ys), read off
/// the Newton divided-difference table. Coefficients below
/// rel_tol * max|ys| count as zero. Requires distinct nodes.
int polynomial_degree(std::span<const double> xs, std::span<const double> ys, double rel_tol = 1e-7);

}  // namespace sdecade
