#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "sdecade/parallel.hpp"
#include "sdecade/realization.hpp"
#include "sdecade/sde.hpp"

using namespace sdecade;

namespace {

ThetaParams brockett_theta() {
  Matrix c(3, 3);
  c << 0.3, -0.2, 0.5,
       0.6, 0.0, 0.2,
       0.0, 0.5, -0.3;
  return ThetaParams(c);
}

Matrix e2() {
  Matrix w = Matrix::Zero(3, 1);
  w(2, 0) = 1.0;
  return w;
}

SdeModel gbm(double a, double b, double w0) {
  return SdeModel::linear(Matrix::Constant(1, 1, a), {Matrix::Constant(1, 1, b)}, Matrix::Constant(1, 1, w0));
}

}  // namespace

TEST_SUITE("sde") {
  TEST_CASE("time grid") {
    const TimeGrid g = TimeGrid::unit(4);
    CHECK(g.step() == 0.25);
    CHECK(g.time(4) == 1.0);
    CHECK(g.refined(2).steps == 8);
    CHECK_THROWS_AS(TimeGrid::unit(0).validate(), std::invalid_argument);
  }

  TEST_CASE("ito_correction") {
    SUBCASE("constant diffusion leaves the drift alone") {
      const auto model = SdeModel::general([](const Matrix& w) -> Matrix { return -w; },
                                           {[](const Matrix& w) -> Matrix { return Matrix::Constant(w.rows(), 1, 0.7); }},
                                           Matrix::Constant(1, 1, 0.5),
                                           {[](const Matrix& w, const Matrix&) -> Matrix { return Matrix::Zero(w.rows(), 1); }});
      CHECK(ito_correction(model, Matrix::Constant(1, 1, 2.0))(0, 0) == -2.0);
    }
    SUBCASE("linear model, one channel") {
      const auto model = SdeModel::linear(brockett_theta(), skew_basis(3), e2());
      const auto& dyn = model.linear_dynamics();
      std::mt19937_64 rng(3);
      std::normal_distribution<double> normal;
      Matrix w(3, 1);
      for (int i = 0; i < 3; ++i) w(i, 0) = normal(rng);
      Matrix expected = dyn.drift * w;
      for (const auto& b : dyn.diffusion) expected += 0.5 * (b * (b * w));
      CHECK(oracle::max_abs(ito_correction(model, w) - expected) <= 1e-13);
    }
    SUBCASE("general model b(w) = w^2 gives w^3") {
      const auto model = SdeModel::general([](const Matrix& w) -> Matrix { return Matrix::Zero(w.rows(), 1); },
                                           {[](const Matrix& w) -> Matrix { return w.cwiseProduct(w); }},
                                           Matrix::Constant(1, 1, 1.0),
                                           {[](const Matrix& w, const Matrix& dir) -> Matrix {
                                             return 2.0 * w.cwiseProduct(dir);
                                           }});
      for (double w : {-1.5, 0.2, 2.0}) {
        const double got = ito_correction(model, Matrix::Constant(1, 1, w))(0, 0);
        CHECK(got == doctest::Approx(w * w * w).epsilon(1e-15));
        const double h = 1e-5;
        const double db = ((w + h) * (w + h) - (w - h) * (w - h)) / (2 * h);
        CHECK(std::abs(got - 0.5 * db * w * w) <= 1e-6 * std::max(1.0, std::abs(got)));
      }
    }
    SUBCASE("missing Jacobian is rejected") {
      const auto model = SdeModel::general([](const Matrix& w) -> Matrix { return w; },
                                           {[](const Matrix& w) -> Matrix { return w; }}, Matrix::Ones(1, 1));
      CHECK_THROWS_AS(ito_correction(model, Matrix::Ones(1, 1)), std::invalid_argument);
    }
  }

  TEST_CASE("exponential integrator") {
    SUBCASE("zero noise is the matrix exponential") {
      ThetaParams theta = brockett_theta();
      Matrix c = theta.coeffs();
      c.bottomRows(2).setZero();
      const auto model = SdeModel::linear(ThetaParams(c), skew_basis(3), e2());
      const auto traj = sample_path_linear(model, TimeGrid::unit(1), {1, 0});
      const Matrix expected = oracle::expm_taylor(model.linear_dynamics().drift) * e2();
      CHECK((traj.terminal() - expected).norm() <= 1e-10 * expected.norm());
    }
    SUBCASE("sphere and orthogonal group are preserved") {
      const auto sphere = SdeModel::linear(brockett_theta(), skew_basis(3), e2());
      CHECK(sphere.manifold_preserving());
      const auto traj = sample_path_linear(sphere, TimeGrid::unit(1000), {9, 0});
      double worst = 0.0;
      for (const auto& s : traj.states) worst = std::max(worst, std::abs(s.norm() - 1.0));
      CHECK(worst <= 1e-12);

      const auto group = SdeModel::linear(brockett_theta(), skew_basis(3), Matrix::Identity(3, 3));
      CHECK(group.manifold_preserving());
      const auto mtraj = sample_path_linear(group, TimeGrid::unit(1000), {9, 1});
      double gram = 0.0;
      for (const auto& s : mtraj.states) gram = std::max(gram, oracle::max_abs(s.transpose() * s - Matrix::Identity(3, 3)));
      CHECK(gram <= 1e-11);
    }
    SUBCASE("4x4 skew generators (Pade path)") {
      const auto basis = skew_basis(4);
      std::mt19937_64 rng(8);
      std::normal_distribution<double> normal;
      Matrix c(3, 6);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 6; ++j) c(i, j) = 0.5 * normal(rng);
      }
      Matrix w0 = Matrix::Zero(4, 1);
      w0(0, 0) = 1.0;
      const auto traj = sample_path_linear(SdeModel::linear(ThetaParams(c), basis, w0), TimeGrid::unit(1000), {2, 0});
      double worst = 0.0;
      for (const auto& s : traj.states) worst = std::max(worst, std::abs(s.norm() - 1.0));
      CHECK(worst <= 1e-12);
    }
    SUBCASE("non-linear models are rejected") {
      const auto model = SdeModel::general([](const Matrix& w) -> Matrix { return w; }, {}, Matrix::Ones(1, 1));
      CHECK_THROWS_AS(sample_path_linear(model, TimeGrid::unit(4), {0, 0}), std::invalid_argument);
    }
  }

  TEST_CASE("Heun scheme") {
    SUBCASE("deterministic decay") {
      const auto model = SdeModel::general([](const Matrix& w) -> Matrix { return -w; }, {}, Matrix::Constant(1, 1, 2.0));
      const auto traj = sample_path_heun(model, TimeGrid::unit(1000), {0, 0});
      CHECK(std::abs(traj.terminal()(0, 0) - 2.0 * std::exp(-1.0)) <= 1e-4);
    }
    SUBCASE("additive noise is integrated exactly") {
      const double b = 0.8;
      const auto model = SdeModel::general([](const Matrix& w) -> Matrix { return Matrix::Zero(w.rows(), 1); },
                                           {[b](const Matrix& w) -> Matrix { return Matrix::Constant(w.rows(), 1, b); }},
                                           Matrix::Constant(1, 1, 0.3));
      const auto traj = sample_path_heun(model, TimeGrid::unit(500), {4, 2});
      const double v1 = traj.increments.col(0).sum();
      CHECK(std::abs(traj.terminal()(0, 0) - (0.3 + b * v1)) <= 1e-12);
    }
    SUBCASE("converges to the exponential integrator at first order") {
      const auto model = SdeModel::linear(brockett_theta(), skew_basis(3), e2());
      const TimeGrid coarse = TimeGrid::unit(200);
      double gap_coarse = 0.0, gap_fine = 0.0;
      const int paths = 100;
      for (int p = 0; p < paths; ++p) {
        const SeedRecord rec{31, static_cast<std::uint64_t>(p)};
        const Matrix inc = brownian_increments(coarse, 2, rec);
        Engine rng = make_engine(rec, stream_label::bridge);
        const Matrix fine_inc = refine_increments(inc, coarse, rng);
        gap_coarse += (integrate_heun(model, coarse, inc).terminal() -
                       integrate_exponential(model, coarse, inc).terminal()).norm();
        gap_fine += (integrate_heun(model, coarse.refined(), fine_inc).terminal() -
                     integrate_exponential(model, coarse.refined(), fine_inc).terminal()).norm();
      }
      const double ratio = gap_coarse / gap_fine;
      MESSAGE("Heun/exponential gap ratio " << ratio);
      CHECK(ratio >= 2.0 / 1.25);
      CHECK(ratio <= 2.0 * 1.25);
    }
    SUBCASE("weak consistency with the geometric Brownian motion mean") {
      const double a = 0.1, b = 0.4, w0 = 1.0;
      const auto model = gbm(a, b, w0);
      const std::size_t n = 100000;
      const TimeGrid grid = TimeGrid::unit(64);
      std::vector<double> ys(n);
      parallel_for(n, 0, [&](std::size_t v) {
        ys[v] = integrate_terminal(model, grid, brownian_increments(grid, 1, {77, v}), Scheme::heun)(0, 0);
      });
      const auto stats = mean_and_error(ys);
      const double exact = oracle::gbm_mean(w0, a, b);
      MESSAGE("Heun mean " << stats.mean << " exact " << exact << " stderr " << stats.std_error);
      CHECK(std::abs(stats.mean - exact) <= 3.0 * stats.std_error);
    }
  }

  TEST_CASE("Levy refinement keeps the coarse increments") {
    const TimeGrid grid = TimeGrid::unit(16);
    const Matrix inc = brownian_increments(grid, 3, {1, 1});
    Engine rng = make_engine({1, 1}, stream_label::bridge);
    const Matrix fine = refine_increments(inc, grid, rng);
    REQUIRE(fine.rows() == 32);
    for (int k = 0; k < 16; ++k) CHECK(oracle::max_abs(fine.row(2 * k) + fine.row(2 * k + 1) - inc.row(k)) <= 1e-15);
  }

  TEST_CASE("Brownian increments have variance h") {
    const TimeGrid grid = TimeGrid::unit(50);
    const Matrix inc = brownian_increments(grid, 2, {5, 0});
    double sum2 = 0.0;
    int count = 0;
    for (int p = 0; p < 400; ++p) {
      const Matrix i = brownian_increments(grid, 2, {5, static_cast<std::uint64_t>(p)});
      sum2 += i.squaredNorm();
      count += static_cast<int>(i.size());
    }
    const double var = sum2 / count;
    CHECK(var == doctest::Approx(grid.step()).epsilon(0.05));
    CHECK(inc == brownian_increments(grid, 2, {5, 0}));
  }

  TEST_CASE("reproducibility and stream independence") {
    const auto model = SdeModel::linear(brockett_theta(), skew_basis(3), e2());
    const TimeGrid grid = TimeGrid::unit(64);
    const auto a = sample_path(model, grid, {12, 5});
    const auto b = sample_path(model, grid, {12, 5});
    for (std::size_t k = 0; k < a.states.size(); ++k) CHECK(a.states[k] == b.states[k]);

    std::vector<WeightTrajectory> batch(8);
    parallel_for(batch.size(), 4, [&](std::size_t p) { batch[p] = sample_path(model, grid, {12, p}); });
    CHECK(batch[5].terminal() == a.terminal());
    CHECK(batch[5].seed == SeedRecord{12, 5});
  }

  TEST_CASE("fk_weight") {
    const auto model = SdeModel::linear(brockett_theta(), skew_basis(3), e2());
    const auto traj = sample_path(model, TimeGrid::unit(100), {3, 0});
    CHECK(fk_weight(traj, PotentialFn{}) == 1.0);
    CHECK(fk_weight(traj, [](const Matrix&, double) { return 0.0; }) == 1.0);
    const double c = -0.37;
    CHECK(fk_weight(traj, [c](const Matrix&, double) { return c; }) == doctest::Approx(std::exp(c)).epsilon(1e-15));
    CHECK(fk_weight(traj, reference_penalty(traj)) == 1.0);
    CHECK_THROWS_AS(fk_weight(traj, [](const Matrix&, double) { return std::numeric_limits<double>::infinity(); }),
                    std::domain_error);
    CHECK_THROWS_AS(fk_weight(traj, [](const Matrix&, double) { return 1e6; }), std::overflow_error);
    CHECK(fk_log_weight(traj, [](const Matrix&, double) { return 1e6; }) == doctest::Approx(1e6));
  }

  TEST_CASE("fk log-weight converges at first order under Levy refinement") {
    // A single skew channel and no drift: exp(dV B) is exact, so only the
    // trapezoid rule is refined.
    Matrix c = Matrix::Zero(2, 3);
    c(1, 0) = 1.0;
    c(1, 2) = 0.6;
    const auto model = SdeModel::linear(ThetaParams(c), skew_basis(3), e2());
    const PotentialFn h = [](const Matrix& w, double t) { return std::sin(3.0 * w(0, 0)) + t * w(1, 0); };
    const TimeGrid g0 = TimeGrid::unit(64);
    double d1 = 0.0, d2 = 0.0;
    for (int p = 0; p < 200; ++p) {
      const SeedRecord rec{44, static_cast<std::uint64_t>(p)};
      const Matrix inc0 = brownian_increments(g0, 1, rec);
      Engine r1 = make_engine(rec, stream_label::bridge);
      const Matrix inc1 = refine_increments(inc0, g0, r1);
      Engine r2 = make_engine(rec, stream_label::bridge + 1);
      const Matrix inc2 = refine_increments(inc1, g0.refined(), r2);
      const double l0 = fk_log_weight(integrate_exponential(model, g0, inc0), h);
      const double l1 = fk_log_weight(integrate_exponential(model, g0.refined(2), inc1), h);
      const double l2 = fk_log_weight(integrate_exponential(model, g0.refined(4), inc2), h);
      d1 += std::abs(l0 - l1);
      d2 += std::abs(l1 - l2);
    }
    const double ratio = d1 / d2;
    MESSAGE("log-weight refinement ratio " << ratio);
    CHECK(ratio >= 2.0 * 0.7);
    CHECK(ratio <= 2.0 * 1.3);
  }

  TEST_CASE("trajectory CSV round trip") {
    const auto vec = sample_path(SdeModel::linear(brockett_theta(), skew_basis(3), e2()), TimeGrid::unit(10), {8, 2});
    std::stringstream ss;
    write_trajectory_csv(ss, vec);
    const std::string text = ss.str();
    CHECK(text.rfind("# seed=8 stream=2\nt,state_0,state_1,state_2\n", 0) == 0);
    const auto back = read_trajectory_csv(ss);
    CHECK(back.seed == vec.seed);
    CHECK(back.grid == vec.grid);
    for (std::size_t k = 0; k < vec.states.size(); ++k) CHECK(back.states[k] == vec.states[k]);

    const auto mat =
        sample_path(SdeModel::linear(brockett_theta(), skew_basis(3), Matrix::Identity(3, 3)), TimeGrid::unit(5), {8, 3});
    std::stringstream ms;
    write_trajectory_csv(ms, mat);
    CHECK(ms.str().find("t,w_00,w_01,w_02,w_10") != std::string::npos);
    const auto mback = read_trajectory_csv(ms);
    CHECK(mback.terminal() == mat.terminal());
  }
}
