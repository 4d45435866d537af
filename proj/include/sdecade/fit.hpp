#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdecade/config.hpp"
#include "sdecade/lie.hpp"
#include "sdecade/realization.hpp"

namespace sdecade {

struct Dataset {
  Matrix x;  // one input per row
  Vector y;
  bool sphere = false;  // inputs drawn uniformly from the unit sphere
};

/// `count` points uniform on S^{dim-1} (normalized Gaussian vectors) from
/// stream `stream` of `seed`.
Matrix uniform_sphere(int count, int dim, std::uint64_t seed, std::uint64_t stream);

/// Input length expected by the configured readout.
int readout_input_dim(const ExperimentConfig& config);

/// Frozen Brownian increments for common-random-number loss evaluations.
/// Predictions are deterministic functions of theta, so central differences
/// see a smooth surface.
class PathEnsemble {
 public:
  PathEnsemble(const ExperimentConfig& config, std::size_t samples, std::uint64_t seed);

  /// Monte Carlo f(x_i; theta) for every row of `inputs`, with the same
  /// increments for every theta.
  Vector predict(const ThetaParams& theta, const Matrix& inputs) const;

  std::size_t size() const { return increments_.size(); }

 private:
  ExperimentConfig config_;
  ReadoutSpec readout_;
  PotentialFn potential_;
  TimeGrid grid_;
  std::vector<Matrix> increments_;
  std::uint64_t seed_;
};

double mean_squared_error(const Vector& prediction, const Vector& target);
double variance(const Vector& values);

struct FitData {
  Dataset train;
  Dataset test;
};

/// Training and test pairs for the configured target. Sphere inputs come
/// from the "dataset" substream; self-realizable targets are evaluated on
/// their own "target" paths, independent of the fitting paths.
FitData make_fit_data(const ExperimentConfig& config);

struct TraceRow {
  int iteration = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
};

struct FitResult {
  ThetaParams theta;
  std::vector<TraceRow> trace;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double test_mse = 0.0;       // fitted model on the held-out set (fresh paths)
  double test_variance = 0.0;  // MSE of the best constant predictor
  bool diverged = false;
  std::string message;
};

/// Minimizes the empirical squared loss over theta with the configured
/// optimizer. A non-finite loss stops the run with diverged = true and the
/// trace up to that point.
FitResult fit_model(const ExperimentConfig& config, const FitData& data);

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

}  // namespace sdecade
