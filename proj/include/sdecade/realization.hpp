#pragma once

#include <iosfwd>
#include <span>
#include <type_traits>
#include <variant>
#include <vector>

#include "sdecade/activation.hpp"
#include "sdecade/sde.hpp"

namespace sdecade {

/// Y = Z_1 sigma(W_1^T x); W is an n x 1 state.
struct ScalarNeuron {
  Activation sigma;
};
/// Y = Z_1 v^T sigma(W_1 x); W is p x n, v in R^p.
struct VectorNeuron {
  Vector v;
  Activation sigma;
};
/// Y = Z_1 U_1^T sigma(Wt_1 x); the state is p x (1 + n) with U in column 0
/// and Wt in the remaining columns.
struct TwoBlock {
  Activation sigma;
};
/// Y = Z_1 v^T Zact_1, where Zact solves dZact/dt = sigma(W_t Zact), Zact_0 = x;
/// W is n x n.
struct CascadeLinear {
  Vector v;
  Activation sigma;
};

class ReadoutSpec {
 public:
  using Variant = std::variant<ScalarNeuron, VectorNeuron, TwoBlock, CascadeLinear>;

  ReadoutSpec(Variant variant);  // NOLINT: implicit from any variant alternative
  template <typename T>
    requires std::is_constructible_v<Variant, T> && (!std::is_same_v<std::decay_t<T>, Variant>)
  ReadoutSpec(T&& alternative) : ReadoutSpec(Variant(std::forward<T>(alternative))) {}  // NOLINT

  const Variant& variant() const { return variant_; }
  const Activation& sigma() const;
  bool needs_path() const { return std::holds_alternative<CascadeLinear>(variant_); }

  /// Throws std::invalid_argument when the state shape or input length do not fit.
  void check(const Matrix& state, Eigen::Index input_dim) const;

  /// Readout of a terminal state (not valid for CascadeLinear).
  double terminal_value(const Matrix& state, const Vector& x) const;
  /// Readout using the whole path (required for CascadeLinear).
  double path_value(const WeightTrajectory& traj, const Vector& x) const;

 private:
  Variant variant_;
};

struct RealizationEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  SeedRecord seed;  // master seed; path v used stream v
  TimeGrid grid;
};

struct McOptions {
  unsigned threads = 0;  // 0 = hardware concurrency
  Scheme scheme = Scheme::automatic;
};

/// Monte Carlo estimate of f(x; theta) = E[exp(int_0^1 h(W_t, t) dt) * readout].
/// Path v draws its increments from stream v of `seed`, so the estimate is a
/// deterministic function of (model, readout, h, x, N, grid, seed) and does
/// not depend on the thread count. An empty `potential` means h = 0.
RealizationEstimate realize_mc(const SdeModel& model, const ReadoutSpec& readout, const PotentialFn& potential,
                               const Vector& x, std::size_t samples, const TimeGrid& grid, std::uint64_t seed,
                               const McOptions& options = {});

/// Sampled paths reduced to what a readout needs: the terminal state and the
/// Feynman-Kac weight, plus the full trajectory when the readout needs it.
struct PathCache {
  std::vector<Matrix> terminals;
  std::vector<double> weights;
  std::vector<WeightTrajectory> paths;  // empty unless the readout needs the path
  TimeGrid grid;
  std::uint64_t seed = 0;
};

PathCache sample_path_cache(const SdeModel& model, const ReadoutSpec& readout, const PotentialFn& potential,
                            std::size_t samples, const TimeGrid& grid, std::uint64_t seed,
                            const McOptions& options = {});

/// Same per-path arithmetic as realize_mc, evaluated on cached paths.
RealizationEstimate realize_cached(const PathCache& cache, const ReadoutSpec& readout, const Vector& x,
                                   const McOptions& options = {});

/// One independent copy of (U_1, Wt_1).
struct TerminalSample {
  Vector u;
  Matrix w;
};

/// (1/N) sum_v (U^v)^T sigma(W^v x), exactly as written (no Feynman-Kac weight).
double fhat_N(std::span<const TerminalSample> samples, const Vector& x, const Activation& sigma);

/// h(w, t) = -|w - xi_t|^2 with xi linearly interpolated between grid nodes.
PotentialFn reference_penalty(WeightTrajectory reference);

/// Header `x_0,..,x_{q-1},mean,stderr,N,seed`.
void write_estimates_header(std::ostream& os, Eigen::Index input_dim);
void write_estimate_row(std::ostream& os, const Vector& x, const RealizationEstimate& est);

}  // namespace sdecade
