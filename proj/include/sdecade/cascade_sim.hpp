#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "sdecade/linalg.hpp"
#include "sdecade/random.hpp"
#include "sdecade/sde.hpp"

namespace sdecade {

/// How the weight fields b_j of the cascade are obtained.
///  - abelian: commuting generators, b_j = e_j exactly.
///  - empirical: b_j(w) solves d(phi)/dw (w, z) b_j(w) = G_j phi(w, z) for all
///    z simultaneously (least squares over a probe set), and the
///    z-independence of the result is measured rather than assumed.
enum class FieldMode { abelian, empirical };

/// Monolithic system dX = f(X) dt + sum_i g_i(X) o dV^i with
/// g_i(x) = sum_j beta_ij G_j x, and the data of its cascade simulation.
struct SimulationSetup {
  std::vector<Matrix> generators;            // G_1..G_d, n x n
  Matrix beta;                               // m x d
  std::function<Vector(const Vector&)> drift;  // f; empty means f = 0
  Vector readout;                            // v
  double radius_w = 1.0;                     // |w|_inf <= radius_w
  double radius_z = 1.0;                     // |z - x|_inf <= radius_z
  FieldMode mode = FieldMode::abelian;

  int state_dim() const { return generators.empty() ? 0 : static_cast<int>(generators.front().rows()); }
  int algebra_dim() const { return static_cast<int>(generators.size()); }
  int noise_dim() const { return static_cast<int>(beta.rows()); }

  /// Throws std::invalid_argument on inconsistent shapes, non-positive radii,
  /// dependent generators, or non-commuting generators in abelian mode.
  void validate() const;
};

/// phi(w, z) = exp(w_1 G_1) exp(w_2 G_2) ... exp(w_d G_d) z.
Vector decode_phi(const Vector& w, const Vector& z, const SimulationSetup& setup);

/// d(phi)/dz = exp(w_1 G_1) ... exp(w_d G_d); invertible by construction.
Matrix jacobian_phi_z(const Vector& w, const Vector& z, const SimulationSetup& setup);

/// n x d matrix d(phi)/dw at (w, z).
Matrix jacobian_phi_w(const Vector& w, const Vector& z, const SimulationSetup& setup);

/// h(z, w) = (d phi / dz)^{-1} f(phi(w, z)), by an LU solve. Throws
/// std::runtime_error if the Jacobian is singular.
Vector cascade_drift_h(const Vector& z, const Vector& w, const SimulationSetup& setup);

/// d x d matrix whose column j is b_j(w). In abelian mode this is the
/// identity; in empirical mode it is the least-squares solution over the
/// given probe vectors (default: the standard basis of R^n).
Matrix weight_fields(const Vector& w, const SimulationSetup& setup, const std::vector<Vector>& probes = {});

/// Largest deviation between weight fields computed from `probe_sets` random
/// probe sets and from the standard basis, together with the largest residual
/// |d(phi)/dw b_j - G_j phi| at random single probes. Both vanish when the
/// fields exist on R^d alone.
struct FieldConsistency {
  double max_field_deviation = 0.0;
  double max_residual = 0.0;
};
FieldConsistency check_weight_fields(const Vector& w, const SimulationSetup& setup, int probe_sets, Engine& rng);

/// Cascade path (W_t, Z_t), direct path X_t, and the first exit index.
struct PairedPaths {
  TimeGrid grid;
  Matrix increments;
  std::vector<Vector> weights;      // W_{t_k} in R^d
  std::vector<Vector> activations;  // Z_{t_k} in R^n
  std::vector<Vector> direct;       // X_{t_k} in R^n
  int tau_index = 0;                // first node outside the box, or steps + 1
  double sup_gap = 0.0;             // max over k < tau_index of |v^T phi(W_k, Z_k) - v^T X_k|
  int ill_conditioned_steps = 0;    // nodes where cond(d phi / dz) > 1e12
};

/// First node index k >= 1 whose (W_k, Z_k) leaves the neighbourhood, or
/// steps + 1 when the path never leaves.
int exit_index(const std::vector<Vector>& weights, const std::vector<Vector>& activations, const Vector& x,
               double radius_w, double radius_z);

/// Integrates both systems on the given increments: W by Stratonovich Heun
/// with zero drift, Z by RK4 with drift h (W interpolated linearly at
/// half-steps), X by Stratonovich Heun.
PairedPaths simulate_pair(const SimulationSetup& setup, const Vector& x, const TimeGrid& grid,
                          const Matrix& increments);

struct SimulationReport {
  std::vector<PairedPaths> paths;  // trajectories dropped unless keep_paths
  std::vector<int> tau_index;
  std::vector<double> sup_gap;
  double exit_fraction = 0.0;       // paths with tau before the horizon
  double max_field_deviation = 0.0; // empirical mode only
  double max_field_residual = 0.0;  // empirical mode only
  int ill_conditioned_steps = 0;

  double gap_quantile(double q) const;
};

/// Paired-path verification over n_paths streams of `seed`. Throws
/// std::invalid_argument if a path leaves the neighbourhood at its first step.
SimulationReport verify_simulation(const SimulationSetup& setup, const Vector& x, const TimeGrid& grid,
                                   std::uint64_t seed, std::size_t n_paths, unsigned threads = 0,
                                   bool keep_paths = false);

/// `path_id,tau,sup_gap` rows followed by a `# summary ...` line.
void write_simulation_report_csv(std::ostream& os, const SimulationReport& report);

namespace presets {
/// Rotation in the (0,1) plane and diag(0.2, 0.2, -0.5) on R^3, m = 2, f = 0.
SimulationSetup abelian_rotation_scaling();
/// n = m = d = 1, G = [1], beta = [beta], f(x) = -x.
SimulationSetup scalar_linear(double beta = 0.5);
/// G_1 = E_01, G_2 = E_12, G_3 = E_02 on R^3 (Heisenberg algebra),
/// m = 2 with g_i = scale G_i, f = 0, empirical weight fields.
SimulationSetup heisenberg(double scale = 1.0);
}  // namespace presets

}  // namespace sdecade
