#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "sdecade/activation.hpp"
#include "sdecade/sde.hpp"

namespace sdecade {

/// Uniform spatial grid on [w_min, w_max] with `nodes` points and
/// `time_steps` Crank-Nicolson steps over [0, horizon]. Dirichlet boundary
/// values start at sigma(w_b x) and change only through the potential,
/// u_b(t) = exp(int_0^t h(w_b, s) ds) sigma(w_b x); for h = 0 they stay frozen.
struct Grid1D {
  double w_min = -1.0;
  double w_max = 1.0;
  int nodes = 201;
  int time_steps = 200;
  double horizon = 1.0;

  double spacing() const { return (w_max - w_min) / static_cast<double>(nodes - 1); }
  double node(int i) const { return i == nodes - 1 ? w_max : w_min + i * spacing(); }
  void validate(double w0) const;
};

/// L phi = drift(w) phi' + diffusion(w) phi'' with diffusion = b^2 / 2 and
/// drift the Ito-corrected drift.
struct GeneratorCoefficients1D {
  std::function<double(double)> drift;
  std::function<double(double)> diffusion;

  /// Coefficients of a scalar model (1 x 1 state) via ito_correction.
  static GeneratorCoefficients1D from_model(const SdeModel& model);
};

/// Potential h(w, t) of the path functional. An empty function means h = 0.
using Potential1D = std::function<double(double w, double t)>;

struct FkSolution {
  std::vector<double> w;
  std::vector<double> u;  // u(w, horizon)
  double value = 0.0;     // u(w0, horizon), linearly interpolated
  double min_u = 0.0;     // extrema over every time slice
  double max_u = 0.0;
};

/// Crank-Nicolson solve of u_t = L u + h u, u(w, 0) = sigma(w x), returning
/// u(w0, horizon), so that u(w0, 1) = E[exp(int_0^1 h(W_s, s) ds) sigma(W_1 x)].
/// For time-dependent h the forward variable t sees h(w, horizon - t); for
/// time-homogeneous h this is the textbook equation.
FkSolution solve_fk_profile(const GeneratorCoefficients1D& coeffs, const Potential1D& h, const Activation& sigma,
                            double x, double w0, const Grid1D& grid);
double solve_fk(const GeneratorCoefficients1D& coeffs, const Potential1D& h, const Activation& sigma, double x,
                double w0, const Grid1D& grid);

struct ConvergenceRow {
  int nodes = 0;
  int time_steps = 0;
  double value = 0.0;
  double error = 0.0;  // |value - reference|
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  double reference = 0.0;  // Richardson extrapolation of the two finest grids
};

/// Solves on each grid (coarse to fine, each halving the spacing) and
/// extrapolates assuming second-order error. Needs at least three grids.
ConvergenceTable convergence_study(const GeneratorCoefficients1D& coeffs, const Potential1D& h,
                                   const Activation& sigma, double x, double w0, const std::vector<Grid1D>& grids);

/// `w,u` rows of the final time slice.
void write_fk_slice_csv(std::ostream& os, const FkSolution& sol);

}  // namespace sdecade
