#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "sdecade/lie.hpp"

using namespace sdecade;

namespace {

Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

Vector random_vector(std::mt19937_64& rng, int n, double scale = 1.0) { return random_matrix(rng, n, 1, scale).col(0); }

Matrix flatten(const MatrixBasis& b) {
  Matrix out(b.n * b.n, b.dim());
  for (int j = 0; j < b.dim(); ++j) out.col(j) = b.generators[j].reshaped();
  return out;
}

}  // namespace

TEST_SUITE("lie") {
  TEST_CASE("skew_basis sizes and ordering") {
    CHECK(skew_basis(3).dim() == 3);
    CHECK(skew_basis(1).dim() == 0);
    const auto b4 = skew_basis(4);
    REQUIRE(b4.dim() == 6);
    for (const auto& g : b4.generators) CHECK(oracle::max_abs(g + g.transpose()) == 0.0);
    CHECK(oracle::gauss_rank(flatten(b4)) == 6);

    // (0,1), (0,2), (0,3), (1,2), ...
    CHECK(b4.generators[0](0, 1) == 1.0);
    CHECK(b4.generators[0](1, 0) == -1.0);
    CHECK(b4.generators[2](0, 3) == 1.0);
    CHECK(b4.generators[3](1, 2) == 1.0);
    CHECK(b4.generators[5](3, 2) == -1.0);
  }

  TEST_CASE("gl basis spans all matrices") {
    const auto b = gl_basis(3);
    CHECK(b.dim() == 9);
    CHECK(oracle::gauss_rank(flatten(b)) == 9);
  }

  TEST_CASE("assemble_generators") {
    const auto basis = skew_basis(3);
    SUBCASE("zero theta") {
      const auto gens = assemble_generators(ThetaParams::zeros(2, 3), basis);
      CHECK(oracle::max_abs(gens.drift) == 0.0);
      REQUIRE(gens.diffusion.size() == 2);
      for (const auto& b : gens.diffusion) CHECK(oracle::max_abs(b) == 0.0);
    }
    SUBCASE("one-hot reproduces a basis element") {
      for (int j = 0; j < 3; ++j) {
        Matrix c = Matrix::Zero(3, 3);
        c(0, j) = 1.0;
        CHECK(oracle::max_abs(assemble_generators(ThetaParams(c), basis).drift - basis.generators[j]) == 0.0);
      }
    }
    SUBCASE("linear in theta and skew") {
      std::mt19937_64 rng(1);
      for (int trial = 0; trial < 20; ++trial) {
        const Matrix t1 = random_matrix(rng, 3, 3);
        const Matrix t2 = random_matrix(rng, 3, 3);
        const auto a = assemble_generators(ThetaParams(t1), basis);
        const auto b = assemble_generators(ThetaParams(t2), basis);
        const auto s = assemble_generators(ThetaParams(t1 + t2), basis);
        CHECK(oracle::max_abs(s.drift - (a.drift + b.drift)) <= 1e-14);
        for (int i = 0; i < 2; ++i) {
          CHECK(oracle::max_abs(s.diffusion[i] - (a.diffusion[i] + b.diffusion[i])) <= 1e-14);
          CHECK(oracle::max_abs(s.diffusion[i] + s.diffusion[i].transpose()) == 0.0);
        }
      }
    }
    SUBCASE("dimension mismatch names both sizes") {
      try {
        (void)assemble_generators(ThetaParams::zeros(1, 4), basis);
        FAIL("expected an exception");
      } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find('4') != std::string::npos);
        CHECK(msg.find('3') != std::string::npos);
      }
    }
  }

  TEST_CASE("ThetaParams flat round trip") {
    Matrix c(3, 2);
    c << 1, 2, 3, 4, 5, 6;
    const ThetaParams t(c);
    CHECK(t.flat() == std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK(ThetaParams::from_flat(2, 2, t.flat()).coeffs() == c);
    Matrix bad = c;
    bad(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ThetaParams{bad}, std::invalid_argument);
  }

  TEST_CASE("commutator") {
    std::mt19937_64 rng(2);
    const Matrix x = random_matrix(rng, 4, 4);
    CHECK(oracle::max_abs(commutator(x, x)) == 0.0);
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix a = random_matrix(rng, 4, 4), b = random_matrix(rng, 4, 4), c = random_matrix(rng, 4, 4);
      const Matrix jacobi = commutator(a, commutator(b, c)) + commutator(b, commutator(c, a)) +
                            commutator(c, commutator(a, b));
      CHECK(oracle::max_abs(jacobi) <= 1e-12);
    }
    CHECK_THROWS_AS(commutator(Matrix::Zero(2, 2), Matrix::Zero(3, 3)), std::invalid_argument);

    // [G_(1,2), G_(1,3)] = -G_(2,3) in 1-based pair labels, by hand.
    const auto b = skew_basis(3);
    Matrix expected(3, 3);
    expected << 0, 0, 0,
                0, 0, -1,
                0, 1, 0;
    CHECK(oracle::max_abs(commutator(b.generators[0], b.generators[1]) - expected) == 0.0);
    CHECK(oracle::max_abs(expected + b.generators[2]) == 0.0);
  }

  TEST_CASE("neural field and its Jacobian") {
    std::mt19937_64 rng(3);
    const NeuralField g{random_matrix(rng, 3, 3), Activation::tanh()};
    const Vector z = random_vector(rng, 3);
    const Vector wz = g.weights * z;
    for (int i = 0; i < 3; ++i) CHECK(g(z)(i) == doctest::Approx(std::tanh(wz(i))).epsilon(1e-15));
    const Matrix fd = oracle::fd_jacobian([&](const Vector& v) { return g(v); }, z, 1e-6);
    CHECK(oracle::max_abs(g.jacobian(z) - fd) <= 1e-8);
  }

  TEST_CASE("vf_bracket") {
    std::mt19937_64 rng(4);
    SUBCASE("field with itself") {
      const NeuralField g{random_matrix(rng, 3, 3), Activation::tanh()};
      CHECK(vf_bracket(g, g, random_vector(rng, 3)).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("finite-difference Jacobians") {
      for (int trial = 0; trial < 10; ++trial) {
        const NeuralField g{random_matrix(rng, 3, 3), Activation::tanh()};
        const NeuralField g2{random_matrix(rng, 3, 3), Activation::tanh()};
        const Vector z = random_vector(rng, 3);
        const Matrix dg = oracle::fd_jacobian([&](const Vector& v) { return g(v); }, z, 1e-5);
        const Matrix dg2 = oracle::fd_jacobian([&](const Vector& v) { return g2(v); }, z, 1e-5);
        const Vector expected = dg2 * g(z) - dg * g2(z);
        CHECK((vf_bracket(g, g2, z) - expected).norm() <= 1e-6 * expected.norm());
      }
    }
    SUBCASE("identity activation gives the matrix commutator") {
      for (int trial = 0; trial < 10; ++trial) {
        const Matrix w = random_matrix(rng, 4, 4), w2 = random_matrix(rng, 4, 4);
        const Vector z = random_vector(rng, 4);
        const Vector expected = (w2 * w - w * w2) * z;
        CHECK(oracle::max_abs(vf_bracket({w, Activation::identity()}, {w2, Activation::identity()}, z) - expected) <=
              1e-13);
      }
    }
    SUBCASE("antisymmetric and bilinear") {
      for (int trial = 0; trial < 10; ++trial) {
        const NeuralField g{random_matrix(rng, 3, 3), Activation::tanh()};
        const NeuralField g2{random_matrix(rng, 3, 3), Activation::tanh()};
        const Vector z = random_vector(rng, 3);
        CHECK(oracle::max_abs(vf_bracket(g, g2, z) + vf_bracket(g2, g, z)) <= 1e-12);
      }
      // Linear fields are linear in W, so bilinearity can be checked on them.
      const Matrix a = random_matrix(rng, 3, 3), b = random_matrix(rng, 3, 3), c = random_matrix(rng, 3, 3);
      const Vector z = random_vector(rng, 3);
      const auto id = Activation::identity();
      const Vector lhs = vf_bracket({a + 2.0 * b, id}, {c, id}, z);
      const Vector rhs = vf_bracket({a, id}, {c, id}, z) + 2.0 * vf_bracket({b, id}, {c, id}, z);
      CHECK(oracle::max_abs(lhs - rhs) <= 1e-12);
    }
    SUBCASE("Jacobi identity for linear fields") {
      const auto id = Activation::identity();
      for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = random_matrix(rng, 3, 3), b = random_matrix(rng, 3, 3), c = random_matrix(rng, 3, 3);
        const Vector z = random_vector(rng, 3);
        // [g_x, g_y] is the linear field of y x - x y.
        auto br = [](const Matrix& x, const Matrix& y) -> Matrix { return y * x - x * y; };
        const Vector sum = vf_bracket({a, id}, {br(b, c), id}, z) + vf_bracket({b, id}, {br(c, a), id}, z) +
                           vf_bracket({c, id}, {br(a, b), id}, z);
        CHECK(oracle::max_abs(sum) <= 1e-10);
      }
    }
    SUBCASE("activation without a derivative is rejected") {
      const auto flat = Activation::custom("plain", {[](double r) { return r; }});
      CHECK_THROWS_AS(vf_bracket({Matrix::Identity(2, 2), flat}, {Matrix::Identity(2, 2), flat}, Vector::Ones(2)),
                      std::invalid_argument);
    }
  }

  TEST_CASE("iterated_ad") {
    std::mt19937_64 rng(5);
    const NeuralField g{random_matrix(rng, 3, 3, 0.7), Activation::tanh()};
    const NeuralField g2{random_matrix(rng, 3, 3, 0.7), Activation::tanh()};
    const Vector z = random_vector(rng, 3);

    CHECK(oracle::max_abs(iterated_ad(g, g2, 0, z) - g2(z)) == 0.0);
    CHECK(oracle::max_abs(iterated_ad(g, g2, 1, z) - vf_bracket(g, g2, z)) == 0.0);
    CHECK_THROWS_AS(iterated_ad(g, g2, 5, z), std::invalid_argument);
    CHECK_THROWS_AS(iterated_ad(g, g2, -1, z), std::invalid_argument);

    SUBCASE("each level is the bracket of the previous one (finite differences)") {
      for (int k = 1; k <= 3; ++k) {
        auto prev = [&](const Vector& v) { return iterated_ad(g, g2, k - 1, v); };
        const Matrix d_prev = oracle::fd_jacobian(prev, z, 1e-5);
        const Vector expected = d_prev * g(z) - g.jacobian(z) * prev(z);
        CHECK((iterated_ad(g, g2, k, z) - expected).norm() <= 1e-6 * std::max(1.0, expected.norm()));
      }
    }

    SUBCASE("1-D cubic activation matches the hand expansion") {
      // g = 1 + z^3, g' = 1 + 8 z^3:
      //   ad^1 = 21 z^2, ad^2 = 42 z - 21 z^4, ad^3 = 42 - 168 z^3 - 21 z^6.
      const auto cubic = Activation::cubic_plus_one();
      const NeuralField f{Matrix::Constant(1, 1, 1.0), cubic};
      const NeuralField f2{Matrix::Constant(1, 1, 2.0), cubic};
      std::vector<double> xs;
      std::vector<std::vector<double>> ys(4);
      for (int p = 0; p <= 10; ++p) {
        const double t = -1.0 + 0.2 * p;
        xs.push_back(t);
        const double expected[4] = {1 + 8 * t * t * t, 21 * t * t, 42 * t - 21 * std::pow(t, 4),
                                    42 - 168 * t * t * t - 21 * std::pow(t, 6)};
        for (int k = 0; k <= 3; ++k) {
          const double v = iterated_ad(f, f2, k, Vector::Constant(1, t))(0);
          CHECK(v == doctest::Approx(expected[k]).epsilon(1e-12).scale(1.0));
          ys[k].push_back(v);
        }
      }
      CHECK(polynomial_degree(xs, ys[1]) == 2);
      CHECK(polynomial_degree(xs, ys[2]) == 4);
      CHECK(polynomial_degree(xs, ys[3]) == 6);
    }
  }

  TEST_CASE("polynomial_degree") {
    std::vector<double> xs, ys;
    for (int i = 0; i < 9; ++i) {
      const double x = -2.0 + 0.5 * i;
      xs.push_back(x);
      ys.push_back(3.0 - x + 0.5 * x * x * x);
    }
    CHECK(polynomial_degree(xs, ys) == 3);
    std::vector<double> constant(9, 4.0);
    CHECK(polynomial_degree(xs, constant) == 0);
  }
}
