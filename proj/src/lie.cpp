#include "sdecade/lie.hpp"

#include <cmath>
#include <stdexcept>

namespace sdecade {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Generic evaluation of sigma(W z) and of its directional derivative on
// scalar type T (double or nested Dual). Summation order is fixed so the
// double and dual paths round identically.
template <class T>
std::vector<T> field_apply(const NeuralField& g, const std::vector<T>& z) {
  const auto rows = g.weights.rows();
  const auto cols = g.weights.cols();
  std::vector<T> out(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) {
    T acc{};
    for (Eigen::Index j = 0; j < cols; ++j) acc = acc + g.weights(i, j) * z[j];
    out[i] = g.sigma.eval(acc, 0);
  }
  return out;
}

template <class T>
std::vector<T> field_jvp(const NeuralField& g, const std::vector<T>& z, const std::vector<T>& dir) {
  const auto rows = g.weights.rows();
  const auto cols = g.weights.cols();
  std::vector<T> out(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) {
    T u{};
    T v{};
    for (Eigen::Index j = 0; j < cols; ++j) {
      u = u + g.weights(i, j) * z[j];
      v = v + g.weights(i, j) * dir[j];
    }
    out[i] = g.sigma.eval(u, 1) * v;
  }
  return out;
}

template <int K, class T>
std::vector<T> ad_power(const NeuralField& g, const NeuralField& g2, const std::vector<T>& z) {
  if constexpr (K == 0) {
    return field_apply(g2, z);
  } else {
    const std::size_t n = z.size();
    const std::vector<T> gz = field_apply(g, z);
    std::vector<Dual<T>> seeded(n);
    for (std::size_t i = 0; i < n; ++i) seeded[i] = Dual<T>{z[i], gz[i]};
    const std::vector<Dual<T>> inner = ad_power<K - 1, Dual<T>>(g, g2, seeded);

    std::vector<T> prev(n);
    for (std::size_t i = 0; i < n; ++i) prev[i] = inner[i].re;
    const std::vector<T> dg_prev = field_jvp(g, z, prev);

    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = inner[i].du - dg_prev[i];
    return out;
  }
}

template <int K>
std::vector<double> dispatch_ad(int k, const NeuralField& g, const NeuralField& g2, const std::vector<double>& z) {
  if constexpr (K > kMaxBracketDepth) {
    throw std::logic_error("iterated_ad: depth dispatch overflow");
  } else {
    if (k == K) return ad_power<K, double>(g, g2, z);
    return dispatch_ad<K + 1>(k, g, g2, z);
  }
}

void check_bracket_fields(const NeuralField& g, const NeuralField& g2, const Vector& z, int order) {
  if (g.weights.rows() != g.weights.cols() || g2.weights.rows() != g2.weights.cols()) {
    throw std::invalid_argument("bracket: weights must be square, got " + dims(g.weights) + " and " +
                                dims(g2.weights));
  }
  if (g.weights.rows() != g2.weights.rows() || g.weights.rows() != z.size()) {
    throw std::invalid_argument("bracket: dimension mismatch between " + dims(g.weights) + ", " +
                                dims(g2.weights) + " and z of length " + std::to_string(z.size()));
  }
  for (const auto* f : {&g, &g2}) {
    if (!f->sigma.has_order(order)) {
      throw std::invalid_argument("bracket: activation '" + f->sigma.name() +
                                  "' lacks a derivative of order " + std::to_string(order));
    }
  }
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

MatrixBasis skew_basis(int n) {
  if (n < 1) throw std::invalid_argument("skew_basis: n must be >= 1, got " + std::to_string(n));
  MatrixBasis basis{n, "skew", {}};
  basis.generators.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (int p = 0; p < n; ++p) {
    for (int q = p + 1; q < n; ++q) {
      Matrix g = Matrix::Zero(n, n);
      g(p, q) = 1.0;
      g(q, p) = -1.0;
      basis.generators.push_back(std::move(g));
    }
  }
  return basis;
}

MatrixBasis gl_basis(int n) {
  if (n < 1) throw std::invalid_argument("gl_basis: n must be >= 1, got " + std::to_string(n));
  MatrixBasis basis{n, "gl", {}};
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      Matrix g = Matrix::Zero(n, n);
      g(p, q) = 1.0;
      basis.generators.push_back(std::move(g));
    }
  }
  return basis;
}

ThetaParams::ThetaParams(Matrix coeffs) : coeffs_(std::move(coeffs)) {
  if (coeffs_.rows() < 1) throw std::invalid_argument("ThetaParams: need at least the drift row");
  if (!coeffs_.allFinite()) throw std::invalid_argument("ThetaParams: non-finite coefficient");
}

std::vector<double> ThetaParams::flat() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(coeffs_.size()));
  for (Eigen::Index i = 0; i < coeffs_.rows(); ++i) {
    for (Eigen::Index j = 0; j < coeffs_.cols(); ++j) out.push_back(coeffs_(i, j));
  }
  return out;
}

ThetaParams ThetaParams::from_flat(int m, int d, std::span<const double> values) {
  if (m < 0 || d < 0 || values.size() != static_cast<std::size_t>((m + 1) * d)) {
    throw std::invalid_argument("ThetaParams::from_flat: expected " + std::to_string((m + 1) * d) +
                                " values for shape (" + std::to_string(m + 1) + ", " + std::to_string(d) +
                                "), got " + std::to_string(values.size()));
  }
  Matrix c(m + 1, d);
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j < d; ++j) c(i, j) = values[static_cast<std::size_t>(i * d + j)];
  }
  return ThetaParams(std::move(c));
}

Generators assemble_generators(const ThetaParams& theta, const MatrixBasis& basis) {
  if (theta.algebra_dim() != basis.dim()) {
    throw std::invalid_argument("assemble_generators: theta has d = " + std::to_string(theta.algebra_dim()) +
                                " columns but the basis has " + std::to_string(basis.dim()) + " generators");
  }
  const int n = basis.n;
  const auto& c = theta.coeffs();
  auto combine = [&](Eigen::Index row) {
    Matrix out = Matrix::Zero(n, n);
    for (int j = 0; j < basis.dim(); ++j) out += c(row, j) * basis.generators[j];
    return out;
  };
  Generators gens;
  gens.drift = combine(0);
  for (int i = 1; i <= theta.noise_dim(); ++i) gens.diffusion.push_back(combine(i));
  return gens;
}

Matrix commutator(const Matrix& x, const Matrix& y) {
  if (x.rows() != x.cols() || y.rows() != y.cols() || x.rows() != y.rows()) {
    throw std::invalid_argument("commutator: need equal square matrices, got " + dims(x) + " and " + dims(y));
  }
  return x * y - y * x;
}

Vector NeuralField::operator()(const Vector& z) const {
  if (weights.cols() != z.size()) {
    throw std::invalid_argument("NeuralField: weights " + dims(weights) + " applied to vector of length " +
                                std::to_string(z.size()));
  }
  return to_eigen(field_apply(*this, to_std(z)));
}

Matrix NeuralField::jacobian(const Vector& z) const {
  if (weights.cols() != z.size()) {
    throw std::invalid_argument("NeuralField::jacobian: dimension mismatch");
  }
  const Vector u = weights * z;
  Vector d(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) d(i) = sigma.derivative(1, u(i));
  return d.asDiagonal() * weights;
}

Vector vf_bracket(const NeuralField& g, const NeuralField& g2, const Vector& z) {
  check_bracket_fields(g, g2, z, 1);
  const auto zs = to_std(z);
  const auto a = field_jvp(g2, zs, field_apply(g, zs));
  const auto b = field_jvp(g, zs, field_apply(g2, zs));
  std::vector<double> out(zs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return to_eigen(out);
}

Vector iterated_ad(const NeuralField& g, const NeuralField& g2, int k, const Vector& z, int max_depth) {
  if (k < 0) throw std::invalid_argument("iterated_ad: k must be non-negative");
  const int cap = std::min(max_depth, kMaxBracketDepth);
  if (k > cap) {
    throw std::invalid_argument("iterated_ad: depth " + std::to_string(k) + " exceeds the configured maximum " +
                                std::to_string(cap));
  }
  check_bracket_fields(g, g2, z, std::max(k, 1));
  return to_eigen(dispatch_ad<0>(k, g, g2, to_std(z)));
}

int polynomial_degree(std::span<const double> xs, std::span<const double> ys, double rel_tol) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw std::invalid_argument("polynomial_degree: need equally many (>0) nodes and values");
  }
  double scale = 0.0;
  for (const double y : ys) scale = std::max(scale, std::abs(y));
  if (scale == 0.0) return 0;

  std::vector<double> table(ys.begin(), ys.end());
  int degree = 0;
  const std::size_t n = xs.size();
  for (std::size_t order = 1; order < n; ++order) {
    for (std::size_t i = n - 1; i >= order; --i) {
      const double dx = xs[i] - xs[i - order];
      if (dx == 0.0) throw std::invalid_argument("polynomial_degree: repeated node");
      table[i] = (table[i] - table[i - 1]) / dx;
    }
    // table[order] now holds f[x_0..x_order], the leading Newton coefficient.
    if (std::abs(table[order]) > rel_tol * scale) degree = static_cast<int>(order);
  }
  return degree;
}

}  // namespace sdecade
