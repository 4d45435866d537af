#pragma once

#include <iosfwd>
#include <vector>

#include "sdecade/activation.hpp"
#include "sdecade/realization.hpp"
#include "sdecade/sde.hpp"

namespace sdecade {

/// Activation states Z_{t_k} on the weight trajectory's grid; states[0] = x.
struct ActivationPath {
  TimeGrid grid;
  std::vector<Vector> states;

  const Vector& terminal() const { return states.back(); }
};

/// Solves dZ/dt = sigma(W_t Z), Z_0 = x, conditionally on a sampled matrix
/// trajectory. Classical RK4 with one step per grid interval; W at the
/// half-step is the average of the two neighbouring nodes.
ActivationPath solve_activation(const WeightTrajectory& traj, const Vector& x, const Activation& sigma);
Vector solve_activation_terminal(const WeightTrajectory& traj, const Vector& x, const Activation& sigma);

/// The same trajectory on a grid `factor` times finer, states and increments
/// linearly interpolated. The continuous-time weight signal seen by
/// solve_activation is unchanged, which makes this the frozen-path refinement
/// for activation self-convergence studies.
WeightTrajectory interpolate_trajectory(const WeightTrajectory& traj, int factor);

/// Monte Carlo estimate of E[v^T Z_1] for the cascade with a matrix weight SDE.
RealizationEstimate realize_cascade_mc(const SdeModel& model, const Vector& v, const Vector& x,
                                       const Activation& sigma, std::size_t samples, const TimeGrid& grid,
                                       std::uint64_t seed, const McOptions& options = {});

/// Trajectory CSV layout with `z_0..z_{n-1}` columns.
void write_activation_csv(std::ostream& os, const ActivationPath& path, SeedRecord seed);

}  // namespace sdecade
