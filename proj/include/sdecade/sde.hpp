#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "sdecade/lie.hpp"
#include "sdecade/linalg.hpp"
#include "sdecade/random.hpp"

namespace sdecade {

/// Uniform grid t0 < t1 with `steps` intervals.
struct TimeGrid {
  double t0 = 0.0;
  double t1 = 1.0;
  int steps = 256;

  static TimeGrid unit(int steps) { return {0.0, 1.0, steps}; }

  double step() const { return (t1 - t0) / static_cast<double>(steps); }
  double time(int k) const { return k == steps ? t1 : t0 + static_cast<double>(k) * step(); }
  TimeGrid refined(int factor = 2) const { return {t0, t1, steps * factor}; }
  void validate() const;

  bool operator==(const TimeGrid&) const = default;
};

/// Raised when a sample turns non-finite; carries the stream that produced it.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, SeedRecord seed)
      : std::runtime_error(what + " [seed=" + std::to_string(seed.seed) + " stream=" +
                           std::to_string(seed.stream) + "]"),
        seed_(seed) {}
  SeedRecord seed() const { return seed_; }

 private:
  SeedRecord seed_;
};

/// State map w -> field(w); states are n x 1 (vector case) or n x n matrices.
using StateFn = std::function<Matrix(const Matrix&)>;
/// Directional derivative (d b / d w)(w)[dir].
using StateJvpFn = std::function<Matrix(const Matrix& w, const Matrix& dir)>;

/// dW = A W dt + sum_i B_i W o dV^i.
struct LinearDynamics {
  Matrix drift;
  std::vector<Matrix> diffusion;
};

/// dW = a(W) dt + sum_i b_i(W) o dV^i with caller-supplied fields. The
/// engine does not check Lipschitz continuity; that is the caller's job.
struct GeneralDynamics {
  StateFn drift;
  std::vector<StateFn> diffusion;
  std::vector<StateJvpFn> diffusion_jvp;  // optional; needed for ito_correction
};

class SdeModel {
 public:
  static SdeModel linear(Matrix drift, std::vector<Matrix> diffusion, Matrix w0);
  static SdeModel linear(const ThetaParams& theta, const MatrixBasis& basis, Matrix w0);
  static SdeModel general(StateFn drift, std::vector<StateFn> diffusion, Matrix w0,
                          std::vector<StateJvpFn> diffusion_jvp = {});

  bool is_linear() const { return std::holds_alternative<LinearDynamics>(dynamics_); }
  const LinearDynamics& linear_dynamics() const { return std::get<LinearDynamics>(dynamics_); }
  const GeneralDynamics& general_dynamics() const { return std::get<GeneralDynamics>(dynamics_); }

  int noise_dim() const { return noise_dim_; }
  const Matrix& w0() const { return w0_; }
  const std::optional<ThetaParams>& theta() const { return theta_; }

  /// Linear model with skew generators started on the unit sphere (n x 1
  /// state) or in O(n) (n x n state).
  bool manifold_preserving() const { return manifold_preserving_; }

  Matrix drift(const Matrix& w) const;
  Matrix diffusion(int i, const Matrix& w) const;

 private:
  SdeModel() = default;
  void finish();

  std::variant<LinearDynamics, GeneralDynamics> dynamics_;
  int noise_dim_ = 0;
  Matrix w0_;
  std::optional<ThetaParams> theta_;
  bool manifold_preserving_ = false;
};

/// A sampled path W_{t_0}, ..., W_{t_K} and the increments that drove it.
struct WeightTrajectory {
  TimeGrid grid;
  std::vector<Matrix> states;
  Matrix increments;  // K x m, row k is the increment over [t_k, t_{k+1}]
  SeedRecord seed;

  const Matrix& terminal() const { return states.back(); }
};

enum class Scheme { automatic, exponential, heun };

/// Ito-corrected drift a + (1/2) sum_i (db_i/dw) b_i. For linear models this
/// is (A + (1/2) sum_i B_i^2) w. General models must supply diffusion_jvp.
Matrix ito_correction(const SdeModel& model, const Matrix& w);

/// K x m increments with i.i.d. N(0, h) entries from stream `seed`.
Matrix brownian_increments(const TimeGrid& grid, int noise_dim, SeedRecord seed);

/// Levy midpoint refinement: each increment over [t, t+h] is split into two
/// halves dV/2 +- sqrt(h)/2 xi drawn from the Brownian bridge. Both halves sum
/// to the original increment exactly up to rounding.
Matrix refine_increments(const Matrix& increments, const TimeGrid& grid, Engine& rng);

/// Exponential Lie-group steps W_{k+1} = exp(hA + sum_i dV_i B_i) W_k.
WeightTrajectory integrate_exponential(const SdeModel& model, const TimeGrid& grid, Matrix increments,
                                       SeedRecord seed = {});
/// Stratonovich Heun predictor-corrector.
WeightTrajectory integrate_heun(const SdeModel& model, const TimeGrid& grid, Matrix increments,
                                SeedRecord seed = {});

/// Terminal state only, without storing the path.
Matrix integrate_terminal(const SdeModel& model, const TimeGrid& grid, const Matrix& increments,
                          Scheme scheme, SeedRecord seed = {});

WeightTrajectory sample_path_linear(const SdeModel& model, const TimeGrid& grid, SeedRecord seed);
WeightTrajectory sample_path_heun(const SdeModel& model, const TimeGrid& grid, SeedRecord seed);
/// Exponential steps for linear models, Heun otherwise (or as forced).
WeightTrajectory sample_path(const SdeModel& model, const TimeGrid& grid, SeedRecord seed,
                             Scheme scheme = Scheme::automatic);

Scheme resolve_scheme(const SdeModel& model, Scheme scheme);

/// h(w, t) along a path.
using PotentialFn = std::function<double(const Matrix& w, double t)>;

/// Trapezoidal approximation of the integral of h(W_t, t) over the grid.
/// Throws std::domain_error on non-finite h values.
double fk_log_weight(const WeightTrajectory& traj, const PotentialFn& h);
/// exp(fk_log_weight); throws std::overflow_error if that overflows.
double fk_weight(const WeightTrajectory& traj, const PotentialFn& h);

/// CSV with a `# seed=<u64> stream=<u64>` line, then a header `t,state_0..`
/// (vector state) or `t,w_00..` (matrix state, row-major), one row per node.
void write_trajectory_csv(std::ostream& os, const WeightTrajectory& traj);
/// Inverse of write_trajectory_csv (increments are not stored and come back empty).
WeightTrajectory read_trajectory_csv(std::istream& is);

}  // namespace sdecade
