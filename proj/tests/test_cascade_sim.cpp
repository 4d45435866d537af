#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "sdecade/cascade_sim.hpp"

using namespace sdecade;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Matrix product_oracle(const Vector& w, const SimulationSetup& s) {
  Matrix p = Matrix::Identity(s.state_dim(), s.state_dim());
  for (int j = 0; j < s.algebra_dim(); ++j) p = p * oracle::expm_taylor(w(j) * s.generators[j]);
  return p;
}

}  // namespace

TEST_SUITE("cascade_sim") {
  TEST_CASE("decoder basics") {
    const auto s = presets::heisenberg();
    const Vector x = vec({0.5, -0.3, 0.8});
    CHECK(decode_phi(Vector::Zero(3), x, s) == x);
    const Vector w = vec({0.7, -1.1, 0.4});
    CHECK((decode_phi(w, x, s) - product_oracle(w, s) * x).norm() <= 1e-13);

    const auto scalar = presets::scalar_linear();
    CHECK(decode_phi(vec({0.3}), vec({2.0}), scalar)(0) == doctest::Approx(2.0 * std::exp(0.3)).epsilon(1e-15));
  }

  TEST_CASE("commuting factors can be reordered") {
    auto s = presets::abelian_rotation_scaling();
    const Vector w = vec({0.9, -0.4});
    const Vector x = vec({1.0, 0.5, -0.5});
    const Vector a = decode_phi(w, x, s);
    std::swap(s.generators[0], s.generators[1]);
    const Vector b = decode_phi(vec({-0.4, 0.9}), x, s);
    CHECK((a - b).norm() <= 1e-14);
  }

  TEST_CASE("Jacobians") {
    const auto s = presets::heisenberg();
    const Vector x = vec({0.5, -0.3, 0.8});
    const Vector w = vec({0.7, -1.1, 0.4});
    CHECK(oracle::max_abs(jacobian_phi_z(Vector::Zero(3), x, s) - Matrix::Identity(3, 3)) == 0.0);
    const Matrix jz = oracle::fd_jacobian([&](const Vector& z) { return decode_phi(w, z, s); }, x, 1e-5);
    CHECK(oracle::max_abs(jacobian_phi_z(w, x, s) - jz) <= 1e-7);
    const Matrix jw = oracle::fd_jacobian([&](const Vector& ww) { return decode_phi(ww, x, s); }, w, 1e-5);
    CHECK(oracle::max_abs(jacobian_phi_w(w, x, s) - jw) <= 1e-7);

    const auto ab = presets::abelian_rotation_scaling();
    const Vector wa = vec({0.9, -0.4});
    double trace = 0.0;
    for (int j = 0; j < 2; ++j) trace += wa(j) * ab.generators[j].trace();
    CHECK(jacobian_phi_z(wa, x, ab).determinant() == doctest::Approx(std::exp(trace)).epsilon(1e-13));
  }

  TEST_CASE("cascade drift") {
    auto s = presets::abelian_rotation_scaling();
    const Vector z = vec({0.2, -0.7, 1.3});
    const Vector w = vec({0.9, -0.4});
    CHECK(cascade_drift_h(z, w, s).norm() == 0.0);

    Matrix a(3, 3);
    a << -0.5, 0.3, 0.0, 0.1, -0.2, 0.4, 0.0, 0.6, -1.0;
    s.drift = [a](const Vector& x) -> Vector { return a * x; };
    CHECK((cascade_drift_h(z, Vector::Zero(2), s) - a * z).norm() <= 1e-15);
    const Matrix p = product_oracle(w, s);
    const Vector expected = p.inverse() * a * p * z;
    CHECK((cascade_drift_h(z, w, s) - expected).norm() <= 1e-10);
  }

  TEST_CASE("Heisenberg weight fields") {
    const auto s = presets::heisenberg();
    std::mt19937_64 rng(31);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 5; ++trial) {
      const Vector w = vec({normal(rng), normal(rng), normal(rng)});
      Matrix expected = Matrix::Identity(3, 3);
      expected(2, 1) = -w(0);
      CHECK(oracle::max_abs(weight_fields(w, s) - expected) <= 1e-12);
      Engine e = make_engine({7, static_cast<std::uint64_t>(trial)});
      const auto c = check_weight_fields(w, s, 10, e);
      CHECK(c.max_field_deviation <= 1e-8);
      CHECK(c.max_residual <= 1e-8);
    }
    CHECK(oracle::max_abs(weight_fields(vec({0.3, 0.1}), presets::abelian_rotation_scaling()) -
                          Matrix::Identity(2, 2)) == 0.0);
  }

  TEST_CASE("paired simulation on the worked examples") {
    SUBCASE("abelian") {
      const auto rep = verify_simulation(presets::abelian_rotation_scaling(), vec({1.0, 0.5, -0.5}),
                                         TimeGrid::unit(512), 11, 100);
      MESSAGE("q95 " << rep.gap_quantile(0.95));
      CHECK(rep.gap_quantile(0.95) <= 2e-3);
    }
    SUBCASE("scalar") {
      const auto rep = verify_simulation(presets::scalar_linear(), vec({1.0}), TimeGrid::unit(512), 11, 100);
      MESSAGE("q95 " << rep.gap_quantile(0.95));
      CHECK(rep.gap_quantile(0.95) <= 2e-3);
    }
    SUBCASE("heisenberg") {
      const auto rep = verify_simulation(presets::heisenberg(), vec({0.5, -0.3, 0.8}), TimeGrid::unit(1024), 11, 100);
      MESSAGE("q95 " << rep.gap_quantile(0.95) << " deviation " << rep.max_field_deviation);
      CHECK(rep.gap_quantile(0.95) <= 5e-3);
      CHECK(rep.max_field_deviation <= 1e-8);
      CHECK(rep.max_field_residual <= 1e-8);
    }
  }

  TEST_CASE("gap shrinks linearly under refinement") {
    const auto s = presets::abelian_rotation_scaling();
    const Vector x = vec({1.0, 0.5, -0.5});
    const TimeGrid coarse = TimeGrid::unit(64);
    double g1 = 0.0, g2 = 0.0;
    for (std::uint64_t p = 0; p < 40; ++p) {
      const Matrix inc = brownian_increments(coarse, 2, {77, p});
      Engine rng = make_engine({77, p}, 1);
      const Matrix fine = refine_increments(inc, coarse, rng);
      const auto a = simulate_pair(s, x, coarse, inc);
      const auto b = simulate_pair(s, x, coarse.refined(), fine);
      if (a.tau_index <= coarse.steps || b.tau_index <= 2 * coarse.steps) continue;
      g1 += a.sup_gap;
      g2 += b.sup_gap;
    }
    const double ratio = g1 / g2;
    MESSAGE("gap ratio " << ratio);
    CHECK(ratio >= 2.0 * 0.6);
    CHECK(ratio <= 2.0 * 1.4);
  }

  TEST_CASE("exit index") {
    const Vector x = vec({0.0});
    std::vector<Vector> w = {vec({0.0}), vec({0.5}), vec({1.5}), vec({3.0})};
    std::vector<Vector> z(4, vec({0.0}));
    CHECK(exit_index(w, z, x, 10.0, 1.0) == 4);
    CHECK(exit_index(w, z, x, 2.0, 1.0) == 3);
    CHECK(exit_index(w, z, x, 1.0, 1.0) == 2);
    z[1] = vec({2.0});
    CHECK(exit_index(w, z, x, 10.0, 1.0) == 1);

    const auto s = presets::scalar_linear();
    const auto path = simulate_pair(s, vec({1.0}), TimeGrid::unit(256), brownian_increments(TimeGrid::unit(256), 1, {5, 0}));
    int previous = path.tau_index;
    for (double r : {3.0, 1.0, 0.5, 0.2}) {
      const int tau = exit_index(path.weights, path.activations, vec({1.0}), r, r);
      CHECK(tau <= previous);
      previous = tau;
    }

    auto tight = presets::scalar_linear();
    tight.radius_w = 1e-6;
    CHECK_THROWS_AS(verify_simulation(tight, vec({1.0}), TimeGrid::unit(16), 1, 4), std::invalid_argument);
  }

  TEST_CASE("setup validation") {
    auto s = presets::abelian_rotation_scaling();
    CHECK_NOTHROW(s.validate());
    auto dependent = s;
    dependent.generators[1] = 2.0 * dependent.generators[0];
    CHECK_THROWS_AS(dependent.validate(), std::invalid_argument);
    auto noncommuting = presets::heisenberg();
    noncommuting.mode = FieldMode::abelian;
    CHECK_THROWS_AS(noncommuting.validate(), std::invalid_argument);
    auto radius = s;
    radius.radius_z = 0.0;
    CHECK_THROWS_AS(radius.validate(), std::invalid_argument);
    auto shape = s;
    shape.beta = Matrix::Ones(2, 3);
    CHECK_THROWS_AS(shape.validate(), std::invalid_argument);
    auto readout = s;
    readout.readout = Vector::Ones(2);
    CHECK_THROWS_AS(readout.validate(), std::invalid_argument);
  }

  TEST_CASE("report CSV") {
    SimulationReport rep;
    rep.tau_index = {5, 3};
    rep.sup_gap = {0.5, 0.25};
    rep.exit_fraction = 0.5;
    std::stringstream ss;
    write_simulation_report_csv(ss, rep);
    CHECK(ss.str().rfind("path_id,tau,sup_gap\n0,5,0.5\n1,3,0.25\n# summary", 0) == 0);
  }
}
