#include "sdecade/cascade_ode.hpp"

#include <ostream>
#include <stdexcept>

#include "sdecade/csv.hpp"

namespace sdecade {

namespace {

Vector neural_rhs(const Matrix& w, const Vector& z, const Activation& sigma) {
  Vector out = w * z;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = sigma(out(i));
  return out;
}

void check_inputs(const WeightTrajectory& traj, const Vector& x) {
  if (traj.states.size() != static_cast<std::size_t>(traj.grid.steps) + 1) {
    throw std::invalid_argument("solve_activation: trajectory does not match its grid");
  }
  const Matrix& w0 = traj.states.front();
  if (w0.rows() != w0.cols() || w0.rows() != x.size()) {
    throw std::invalid_argument("solve_activation: need n x n weights and x of length n, got " +
                                std::to_string(w0.rows()) + "x" + std::to_string(w0.cols()) + " and " +
                                std::to_string(x.size()));
  }
}

template <class Visit>
void rk4(const WeightTrajectory& traj, const Vector& x, const Activation& sigma, Visit&& visit) {
  check_inputs(traj, x);
  const double h = traj.grid.step();
  Vector z = x;
  Matrix mid;
  for (int k = 0; k < traj.grid.steps; ++k) {
    const Matrix& w_start = traj.states[k];
    const Matrix& w_end = traj.states[k + 1];
    mid = 0.5 * (w_start + w_end);
    const Vector k1 = neural_rhs(w_start, z, sigma);
    const Vector k2 = neural_rhs(mid, z + (0.5 * h) * k1, sigma);
    const Vector k3 = neural_rhs(mid, z + (0.5 * h) * k2, sigma);
    const Vector k4 = neural_rhs(w_end, z + h * k3, sigma);
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!z.allFinite()) {
      throw NumericalError("solve_activation: non-finite state at step " + std::to_string(k + 1), traj.seed);
    }
    visit(z);
  }
}

}  // namespace

ActivationPath solve_activation(const WeightTrajectory& traj, const Vector& x, const Activation& sigma) {
  ActivationPath path{traj.grid, {}};
  path.states.reserve(static_cast<std::size_t>(traj.grid.steps) + 1);
  path.states.push_back(x);
  rk4(traj, x, sigma, [&](const Vector& z) { path.states.push_back(z); });
  return path;
}

Vector solve_activation_terminal(const WeightTrajectory& traj, const Vector& x, const Activation& sigma) {
  Vector last = x;
  rk4(traj, x, sigma, [&](const Vector& z) { last = z; });
  return last;
}

WeightTrajectory interpolate_trajectory(const WeightTrajectory& traj, int factor) {
  if (factor < 1) throw std::invalid_argument("interpolate_trajectory: factor must be >= 1");
  WeightTrajectory fine{traj.grid.refined(factor), {}, Matrix(), traj.seed};
  fine.states.reserve(static_cast<std::size_t>(fine.grid.steps) + 1);
  for (int k = 0; k < traj.grid.steps; ++k) {
    for (int j = 0; j < factor; ++j) {
      const double lambda = static_cast<double>(j) / factor;
      fine.states.push_back((1.0 - lambda) * traj.states[k] + lambda * traj.states[k + 1]);
    }
  }
  fine.states.push_back(traj.states.back());
  if (traj.increments.rows() == traj.grid.steps) {
    fine.increments.resize(fine.grid.steps, traj.increments.cols());
    for (int k = 0; k < fine.grid.steps; ++k) fine.increments.row(k) = traj.increments.row(k / factor) / factor;
  }
  return fine;
}

RealizationEstimate realize_cascade_mc(const SdeModel& model, const Vector& v, const Vector& x,
                                       const Activation& sigma, std::size_t samples, const TimeGrid& grid,
                                       std::uint64_t seed, const McOptions& options) {
  const ReadoutSpec readout(CascadeLinear{v, sigma});
  return realize_mc(model, readout, PotentialFn{}, x, samples, grid, seed, options);
}

void write_activation_csv(std::ostream& os, const ActivationPath& path, SeedRecord seed) {
  os << "# seed=" << seed.seed << " stream=" << seed.stream << '\n' << 't';
  for (Eigen::Index i = 0; i < path.states.front().size(); ++i) os << ",z_" << i;
  os << '\n';
  for (std::size_t k = 0; k < path.states.size(); ++k) {
    os << format_double(path.grid.time(static_cast<int>(k)));
    for (Eigen::Index i = 0; i < path.states[k].size(); ++i) os << ',' << format_double(path.states[k](i));
    os << '\n';
  }
}

}  // namespace sdecade
