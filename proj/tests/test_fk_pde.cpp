#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "sdecade/fk_pde.hpp"
#include "sdecade/realization.hpp"

using namespace sdecade;

namespace {

constexpr double kA = 0.1;
constexpr double kB = 0.4;

SdeModel gbm_model() {
  return SdeModel::linear(ThetaParams((Matrix(2, 1) << kA, kB).finished()), gl_basis(1), Matrix::Constant(1, 1, 1.0));
}

GeneratorCoefficients1D heat() {
  return {[](double) { return 0.0; }, [](double) { return 0.5; }};
}

Grid1D gbm_grid(int nodes, int steps) { return {-2.0, 4.0, nodes, steps, 1.0}; }

}  // namespace

TEST_SUITE("fk_pde") {
  TEST_CASE("generator coefficients of the linear model") {
    const auto c = GeneratorCoefficients1D::from_model(gbm_model());
    CHECK(c.drift(2.0) == doctest::Approx((kA + 0.5 * kB * kB) * 2.0).epsilon(1e-15));
    CHECK(c.diffusion(2.0) == doctest::Approx(0.5 * kB * kB * 4.0).epsilon(1e-15));
  }

  TEST_CASE("heat flow keeps affine data") {
    const Grid1D grid{-5.0, 5.0, 201, 100, 1.0};
    const double value = solve_fk(heat(), {}, Activation::identity(), 2.0, 0.3, grid);
    CHECK(std::abs(value - 0.6) <= 1e-8);
  }

  TEST_CASE("constant initial data is preserved on every grid") {
    const auto one = Activation::custom("one", {[](double) { return 1.0; }, [](double) { return 0.0; }});
    const auto coeffs = GeneratorCoefficients1D::from_model(gbm_model());
    for (int nodes : {51, 101, 401}) {
      CHECK(std::abs(solve_fk(coeffs, {}, one, 1.0, 1.0, gbm_grid(nodes, 50)) - 1.0) <= 1e-13);
    }
  }

  TEST_CASE("constant potential factorizes") {
    const auto coeffs = GeneratorCoefficients1D::from_model(gbm_model());
    const double c = 0.3;
    const Grid1D grid = gbm_grid(401, 1000);
    const double plain = solve_fk(coeffs, {}, Activation::tanh(), 1.0, 1.0, grid);
    const double weighted = solve_fk(coeffs, [c](double, double) { return c; }, Activation::tanh(), 1.0, 1.0, grid);
    MESSAGE("relative factorization error " << std::abs(weighted - std::exp(c) * plain) / std::abs(weighted));
    CHECK(std::abs(weighted - std::exp(c) * plain) <= 1e-8 * std::abs(weighted));
  }

  TEST_CASE("maximum principle and the sup bound") {
    const auto coeffs = GeneratorCoefficients1D::from_model(gbm_model());
    const Potential1D h = [](double w, double t) { return -0.5 * w * w - t; };
    const auto sol = solve_fk_profile(coeffs, h, Activation::tanh(), 1.3, 1.0, gbm_grid(201, 200));
    double sup0 = 0.0;
    for (double w : sol.w) sup0 = std::max(sup0, std::abs(std::tanh(1.3 * w)));
    CHECK(sol.max_u <= sup0 + 1e-10);
    CHECK(sol.min_u >= -sup0 - 1e-10);
    CHECK(std::abs(sol.value) <= sup0);
  }

  TEST_CASE("convergence study") {
    const auto coeffs = GeneratorCoefficients1D::from_model(gbm_model());
    std::vector<Grid1D> grids;
    for (int level = 0; level < 4; ++level) grids.push_back(gbm_grid(100 * (1 << level) + 1, 100 * (1 << level)));
    const auto table = convergence_study(coeffs, {}, Activation::tanh(), 1.0, 1.0, grids);
    REQUIRE(table.rows.size() == 4);
    for (int i = 0; i < 2; ++i) {
      const double ratio = table.rows[i].error / table.rows[i + 1].error;
      MESSAGE("error ratio " << ratio);
      CHECK(ratio >= 3.0);
      CHECK(ratio <= 6.0);
    }
    const auto again = convergence_study(coeffs, {}, Activation::tanh(), 1.0, 1.0, {grids[0], grids[0], grids[0]});
    CHECK(again.rows[0].value == again.rows[1].value);
    CHECK(again.rows[1].value == again.rows[2].value);
    CHECK_THROWS_AS(convergence_study(coeffs, {}, Activation::tanh(), 1.0, 1.0, {grids[0], grids[1]}),
                    std::invalid_argument);
  }

  TEST_CASE("time-dependent potential agrees with Monte Carlo") {
    // h(w, t) = -t w^2 weights late times more than early ones, so solving
    // with h(w, t) in place of h(w, 1 - t) would miss the estimate.
    const auto model = gbm_model();
    const auto coeffs = GeneratorCoefficients1D::from_model(model);
    const Potential1D h1 = [](double w, double t) { return -t * w * w; };
    const PotentialFn hmc = [](const Matrix& w, double t) { return -t * w(0, 0) * w(0, 0); };
    const double pde = solve_fk(coeffs, h1, Activation::tanh(), 1.0, 1.0, gbm_grid(401, 400));
    const Potential1D wrong_h = [](double w, double t) { return -(1.0 - t) * w * w; };
    const double wrong = solve_fk(coeffs, wrong_h, Activation::tanh(), 1.0, 1.0, gbm_grid(401, 400));
    const auto mc = realize_mc(model, ScalarNeuron{Activation::tanh()}, hmc, Vector::Ones(1), 40000,
                               TimeGrid::unit(128), 5);
    MESSAGE("pde " << pde << " mc " << mc.mean << " +- " << mc.std_error << " (unreversed " << wrong << ")");
    CHECK(std::abs(pde - mc.mean) <= 3.0 * mc.std_error + 1e-3);
    CHECK(std::abs(wrong - mc.mean) > 3.0 * mc.std_error + 1e-3);
  }

  TEST_CASE("domain and solver errors") {
    const auto coeffs = GeneratorCoefficients1D::from_model(gbm_model());
    CHECK_THROWS_AS(solve_fk(coeffs, {}, Activation::tanh(), 1.0, 5.0, gbm_grid(101, 10)), std::invalid_argument);
    CHECK_THROWS_AS(solve_fk(coeffs, {}, Activation::tanh(), 1.0, 1.0, gbm_grid(50, 10)), std::invalid_argument);
    const GeneratorCoefficients1D negative{[](double) { return 0.0; }, [](double) { return -1.0; }};
    CHECK_THROWS_AS(solve_fk(negative, {}, Activation::tanh(), 1.0, 1.0, gbm_grid(101, 10)), std::domain_error);
    CHECK_THROWS_AS(solve_fk(coeffs, [](double, double) { return NAN; }, Activation::tanh(), 1.0, 1.0,
                             gbm_grid(101, 10)),
                    std::domain_error);
    CHECK_THROWS_AS(GeneratorCoefficients1D::from_model(SdeModel::linear(ThetaParams::zeros(1, 1), gl_basis(1),
                                                                         Matrix::Ones(2, 1))),
                    std::invalid_argument);
  }

  TEST_CASE("slice CSV") {
    const Grid1D grid{-1.0, 1.0, 51, 1, 1.0};
    const auto sol = solve_fk_profile(heat(), {}, Activation::identity(), 1.0, 0.0, grid);
    std::stringstream ss;
    write_fk_slice_csv(ss, sol);
    CHECK(ss.str().rfind("w,u\n-1,-1\n", 0) == 0);
  }
}
