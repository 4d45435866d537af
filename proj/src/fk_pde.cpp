#include "sdecade/fk_pde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "sdecade/csv.hpp"

namespace sdecade {

namespace {

// Solves a tridiagonal system in place (Thomas algorithm); sub[0] and sup[n-1]
// are ignored.
void thomas_solve(std::vector<double> sub, std::vector<double> diag, std::vector<double> sup,
                  std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      const double factor = sub[i] / diag[i - 1];
      diag[i] -= factor * sup[i - 1];
      rhs[i] -= factor * rhs[i - 1];
    }
    if (!(std::abs(diag[i]) > 1e-300) || !std::isfinite(diag[i])) {
      throw std::runtime_error("solve_fk: singular tridiagonal system at row " + std::to_string(i) +
                               " (pivot " + format_double(diag[i]) + ")");
    }
  }
  rhs[n - 1] /= diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

double interpolate(const std::vector<double>& w, const std::vector<double>& u, double at) {
  const auto it = std::upper_bound(w.begin(), w.end(), at);
  const auto hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - w.begin(), 1, static_cast<std::ptrdiff_t>(w.size()) - 1));
  const std::size_t lo = hi - 1;
  const double lambda = (at - w[lo]) / (w[hi] - w[lo]);
  if (lambda == 0.0) return u[lo];
  return (1.0 - lambda) * u[lo] + lambda * u[hi];
}

}  // namespace

void Grid1D::validate(double w0) const {
  if (nodes < 51) throw std::invalid_argument("Grid1D: need at least 51 nodes, got " + std::to_string(nodes));
  if (time_steps < 1) throw std::invalid_argument("Grid1D: need at least one time step");
  if (!(w_max > w_min)) throw std::invalid_argument("Grid1D: empty domain");
  if (!(horizon > 0.0)) throw std::invalid_argument("Grid1D: horizon must be positive");
  if (!(w0 > w_min && w0 < w_max)) {
    throw std::invalid_argument("Grid1D: w0 = " + format_double(w0) + " is not strictly inside [" +
                                format_double(w_min) + ", " + format_double(w_max) + "]");
  }
}

GeneratorCoefficients1D GeneratorCoefficients1D::from_model(const SdeModel& model) {
  if (model.w0().rows() != 1 || model.w0().cols() != 1) {
    throw std::invalid_argument("GeneratorCoefficients1D: model state must be scalar");
  }
  GeneratorCoefficients1D c;
  c.drift = [model](double w) { return ito_correction(model, Matrix::Constant(1, 1, w))(0, 0); };
  c.diffusion = [model](double w) {
    const Matrix state = Matrix::Constant(1, 1, w);
    double acc = 0.0;
    for (int i = 0; i < model.noise_dim(); ++i) {
      const double b = model.diffusion(i, state)(0, 0);
      acc += b * b;
    }
    return 0.5 * acc;
  };
  return c;
}

FkSolution solve_fk_profile(const GeneratorCoefficients1D& coeffs, const Potential1D& h, const Activation& sigma,
                            double x, double w0, const Grid1D& grid) {
  grid.validate(w0);
  if (!coeffs.drift || !coeffs.diffusion) throw std::invalid_argument("solve_fk: missing generator coefficients");

  const int m = grid.nodes;
  const double dw = grid.spacing();
  const double dt = grid.horizon / grid.time_steps;

  FkSolution sol;
  sol.w.resize(m);
  sol.u.resize(m);
  std::vector<double> drift(m), diff(m);
  for (int i = 0; i < m; ++i) {
    sol.w[i] = grid.node(i);
    drift[i] = coeffs.drift(sol.w[i]);
    diff[i] = coeffs.diffusion(sol.w[i]);
    sol.u[i] = sigma(sol.w[i] * x);
    if (!std::isfinite(drift[i]) || !std::isfinite(diff[i]) || !std::isfinite(sol.u[i])) {
      throw std::domain_error("solve_fk: non-finite coefficient or initial value at w = " + format_double(sol.w[i]));
    }
    if (diff[i] < 0.0) throw std::domain_error("solve_fk: negative diffusion at w = " + format_double(sol.w[i]));
  }
  sol.min_u = *std::min_element(sol.u.begin(), sol.u.end());
  sol.max_u = *std::max_element(sol.u.begin(), sol.u.end());

  // Operator row i (interior): lower*u[i-1] + centre*u[i] + upper*u[i+1].
  const int interior = m - 2;
  std::vector<double> lower(interior), upper(interior), base(interior);
  for (int j = 0; j < interior; ++j) {
    const int i = j + 1;
    lower[j] = diff[i] / (dw * dw) - drift[i] / (2.0 * dw);
    upper[j] = diff[i] / (dw * dw) + drift[i] / (2.0 * dw);
    base[j] = -2.0 * diff[i] / (dw * dw);
  }
  auto potential = [&](int i, double t) {
    if (!h) return 0.0;
    const double v = h(sol.w[i], grid.horizon - t);
    if (!std::isfinite(v)) throw std::domain_error("solve_fk: non-finite potential");
    return v;
  };

  // Boundary values start at sigma(w x) and only feel the potential,
  // u_b' = h(w_b, t) u_b (trapezoid in the exponent); with h = 0 they stay frozen.
  double left = sol.u.front();
  double right = sol.u.back();
  std::vector<double> sub(interior), diag(interior), sup(interior), rhs(interior);
  for (int n = 0; n < grid.time_steps; ++n) {
    const double t_now = n * dt;
    const double t_next = (n + 1) * dt;
    if (h) {
      left *= std::exp(0.5 * dt * (potential(0, t_now) + potential(0, t_next)));
      right *= std::exp(0.5 * dt * (potential(m - 1, t_now) + potential(m - 1, t_next)));
    }
    for (int j = 0; j < interior; ++j) {
      const int i = j + 1;
      const double centre_now = base[j] + potential(i, t_now);
      const double centre_next = base[j] + potential(i, t_next);
      rhs[j] = sol.u[i] + 0.5 * dt * (lower[j] * sol.u[i - 1] + centre_now * sol.u[i] + upper[j] * sol.u[i + 1]);
      sub[j] = -0.5 * dt * lower[j];
      diag[j] = 1.0 - 0.5 * dt * centre_next;
      sup[j] = -0.5 * dt * upper[j];
    }
    rhs.front() -= sub.front() * left;
    rhs.back() -= sup.back() * right;
    thomas_solve(sub, diag, sup, rhs);
    for (int j = 0; j < interior; ++j) sol.u[j + 1] = rhs[j];
    sol.u.front() = left;
    sol.u.back() = right;
    const auto [lo, hi] = std::minmax_element(sol.u.begin(), sol.u.end());
    sol.min_u = std::min(sol.min_u, *lo);
    sol.max_u = std::max(sol.max_u, *hi);
  }
  sol.value = interpolate(sol.w, sol.u, w0);
  return sol;
}

double solve_fk(const GeneratorCoefficients1D& coeffs, const Potential1D& h, const Activation& sigma, double x,
                double w0, const Grid1D& grid) {
  return solve_fk_profile(coeffs, h, sigma, x, w0, grid).value;
}

ConvergenceTable convergence_study(const GeneratorCoefficients1D& coeffs, const Potential1D& h,
                                   const Activation& sigma, double x, double w0, const std::vector<Grid1D>& grids) {
  if (grids.size() < 3) throw std::invalid_argument("convergence_study: need at least three grids");
  ConvergenceTable table;
  for (const auto& g : grids) table.rows.push_back({g.nodes, g.time_steps, solve_fk(coeffs, h, sigma, x, w0, g), 0.0});
  const double fine = table.rows.back().value;
  const double coarse = table.rows[table.rows.size() - 2].value;
  table.reference = fine + (fine - coarse) / 3.0;
  for (auto& r : table.rows) r.error = std::abs(r.value - table.reference);
  return table;
}

void write_fk_slice_csv(std::ostream& os, const FkSolution& sol) {
  os << "w,u\n";
  for (std::size_t i = 0; i < sol.w.size(); ++i) os << format_double(sol.w[i]) << ',' << format_double(sol.u[i]) << '\n';
}

}  // namespace sdecade
