#include "sdecade/sde.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "sdecade/csv.hpp"

namespace sdecade {

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

// Exponential stepper for linear models. Picks the cheapest exact route for
// the step generator: scalar exp for n = 1, Rodrigues for 3x3 skew, Pade otherwise.
class ExponentialStepper {
 public:
  explicit ExponentialStepper(const LinearDynamics& dyn) : dyn_(dyn) {
    n_ = dyn.drift.rows();
    bool skew = is_skew(dyn.drift);
    for (const auto& b : dyn.diffusion) skew = skew && is_skew(b);
    rodrigues_ = skew && n_ == 3;
    generator_ = Matrix::Zero(n_, n_);
  }

  void step(Matrix& state, double h, const Eigen::Ref<const Eigen::RowVectorXd>& dv) {
    if (n_ == 1) {
      double g = h * dyn_.drift(0, 0);
      for (Eigen::Index i = 0; i < dv.size(); ++i) g += dv(i) * dyn_.diffusion[i](0, 0);
      state *= std::exp(g);
      return;
    }
    generator_.noalias() = h * dyn_.drift;
    for (Eigen::Index i = 0; i < dv.size(); ++i) generator_.noalias() += dv(i) * dyn_.diffusion[i];
    if (rodrigues_) {
      const Eigen::Matrix3d e = expm_skew3(generator_);
      next_.noalias() = e * state;
    } else {
      next_.noalias() = expm(generator_) * state;
    }
    state.swap(next_);
  }

 private:
  const LinearDynamics& dyn_;
  Eigen::Index n_ = 0;
  bool rodrigues_ = false;
  Matrix generator_;
  Matrix next_;
};

void heun_step(const SdeModel& model, Matrix& state, double h, const Eigen::Ref<const Eigen::RowVectorXd>& dv) {
  const int m = model.noise_dim();
  const Matrix a0 = model.drift(state);
  Matrix predictor = state + h * a0;
  std::vector<Matrix> b0;
  b0.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    b0.push_back(model.diffusion(i, state));
    predictor += dv(i) * b0.back();
  }
  Matrix next = state + (0.5 * h) * (a0 + model.drift(predictor));
  for (int i = 0; i < m; ++i) next += (0.5 * dv(i)) * (b0[i] + model.diffusion(i, predictor));
  state.swap(next);
}

void check_increments(const SdeModel& model, const TimeGrid& grid, const Matrix& increments, SeedRecord seed) {
  grid.validate();
  if (increments.rows() != grid.steps || increments.cols() != model.noise_dim()) {
    throw std::invalid_argument("increments are " + shape(increments) + " but the grid and model need " +
                                std::to_string(grid.steps) + "x" + std::to_string(model.noise_dim()));
  }
  if (!increments.allFinite()) throw NumericalError("non-finite Brownian increment", seed);
}

template <class Step>
WeightTrajectory integrate_with(const SdeModel& model, const TimeGrid& grid, Matrix increments, SeedRecord seed,
                                Step&& step) {
  check_increments(model, grid, increments, seed);
  WeightTrajectory traj{grid, {}, std::move(increments), seed};
  traj.states.reserve(static_cast<std::size_t>(grid.steps) + 1);
  Matrix state = model.w0();
  traj.states.push_back(state);
  const double h = grid.step();
  for (int k = 0; k < grid.steps; ++k) {
    step(state, h, traj.increments.row(k));
    if (!state.allFinite()) throw NumericalError("non-finite state at step " + std::to_string(k + 1), seed);
    traj.states.push_back(state);
  }
  return traj;
}

}  // namespace

void TimeGrid::validate() const {
  if (steps < 1) throw std::invalid_argument("TimeGrid: need at least one step, got " + std::to_string(steps));
  if (!(t1 > t0)) throw std::invalid_argument("TimeGrid: t1 must exceed t0");
}

SdeModel SdeModel::linear(Matrix drift, std::vector<Matrix> diffusion, Matrix w0) {
  const auto n = drift.rows();
  if (drift.cols() != n) throw std::invalid_argument("SdeModel::linear: drift generator is " + shape(drift));
  for (const auto& b : diffusion) {
    if (b.rows() != n || b.cols() != n) {
      throw std::invalid_argument("SdeModel::linear: diffusion generator is " + shape(b) + ", drift is " +
                                  shape(drift));
    }
  }
  if (w0.rows() != n) {
    throw std::invalid_argument("SdeModel::linear: initial state " + shape(w0) + " incompatible with " +
                                shape(drift) + " generators");
  }
  SdeModel model;
  model.noise_dim_ = static_cast<int>(diffusion.size());
  model.dynamics_ = LinearDynamics{std::move(drift), std::move(diffusion)};
  model.w0_ = std::move(w0);
  model.finish();
  return model;
}

SdeModel SdeModel::linear(const ThetaParams& theta, const MatrixBasis& basis, Matrix w0) {
  Generators gens = assemble_generators(theta, basis);
  SdeModel model = linear(std::move(gens.drift), std::move(gens.diffusion), std::move(w0));
  model.theta_ = theta;
  return model;
}

SdeModel SdeModel::general(StateFn drift, std::vector<StateFn> diffusion, Matrix w0,
                           std::vector<StateJvpFn> diffusion_jvp) {
  if (!drift) throw std::invalid_argument("SdeModel::general: drift callable is empty");
  for (const auto& b : diffusion) {
    if (!b) throw std::invalid_argument("SdeModel::general: diffusion callable is empty");
  }
  if (!diffusion_jvp.empty() && diffusion_jvp.size() != diffusion.size()) {
    throw std::invalid_argument("SdeModel::general: need one diffusion Jacobian per noise channel");
  }
  SdeModel model;
  model.noise_dim_ = static_cast<int>(diffusion.size());
  model.dynamics_ = GeneralDynamics{std::move(drift), std::move(diffusion), std::move(diffusion_jvp)};
  model.w0_ = std::move(w0);
  model.finish();
  return model;
}

void SdeModel::finish() {
  if (w0_.size() == 0) throw std::invalid_argument("SdeModel: empty initial state");
  if (!w0_.allFinite()) throw std::invalid_argument("SdeModel: non-finite initial state");
  manifold_preserving_ = false;
  if (!is_linear()) return;
  const auto& dyn = linear_dynamics();
  bool skew = is_skew(dyn.drift);
  for (const auto& b : dyn.diffusion) skew = skew && is_skew(b);
  if (!skew) return;
  constexpr double tol = 1e-12;
  if (w0_.cols() == 1) {
    manifold_preserving_ = std::abs(w0_.norm() - 1.0) <= tol;
  } else if (w0_.rows() == w0_.cols()) {
    const Matrix gram = w0_.transpose() * w0_ - Matrix::Identity(w0_.rows(), w0_.cols());
    manifold_preserving_ = max_abs(gram) <= tol;
  }
}

Matrix SdeModel::drift(const Matrix& w) const {
  if (is_linear()) return linear_dynamics().drift * w;
  return general_dynamics().drift(w);
}

Matrix SdeModel::diffusion(int i, const Matrix& w) const {
  if (i < 0 || i >= noise_dim_) throw std::out_of_range("SdeModel::diffusion: channel out of range");
  if (is_linear()) return linear_dynamics().diffusion[i] * w;
  return general_dynamics().diffusion[i](w);
}

Matrix ito_correction(const SdeModel& model, const Matrix& w) {
  if (model.is_linear()) {
    const auto& dyn = model.linear_dynamics();
    Matrix corrected = dyn.drift;
    for (const auto& b : dyn.diffusion) corrected += 0.5 * (b * b);
    return corrected * w;
  }
  const auto& dyn = model.general_dynamics();
  if (dyn.diffusion_jvp.size() != dyn.diffusion.size()) {
    throw std::invalid_argument("ito_correction: general model has no diffusion Jacobians");
  }
  Matrix out = dyn.drift(w);
  for (std::size_t i = 0; i < dyn.diffusion.size(); ++i) {
    out += 0.5 * dyn.diffusion_jvp[i](w, dyn.diffusion[i](w));
  }
  return out;
}

Matrix brownian_increments(const TimeGrid& grid, int noise_dim, SeedRecord seed) {
  grid.validate();
  Engine rng = make_engine(seed, stream_label::increments);
  std::normal_distribution<double> normal(0.0, std::sqrt(grid.step()));
  Matrix inc(grid.steps, noise_dim);
  for (int k = 0; k < grid.steps; ++k) {
    for (int i = 0; i < noise_dim; ++i) inc(k, i) = normal(rng);
  }
  return inc;
}

Matrix refine_increments(const Matrix& increments, const TimeGrid& grid, Engine& rng) {
  if (increments.rows() != grid.steps) throw std::invalid_argument("refine_increments: grid/increment mismatch");
  std::normal_distribution<double> normal(0.0, 0.5 * std::sqrt(grid.step()));
  Matrix fine(2 * increments.rows(), increments.cols());
  for (Eigen::Index k = 0; k < increments.rows(); ++k) {
    for (Eigen::Index i = 0; i < increments.cols(); ++i) {
      const double first = 0.5 * increments(k, i) + normal(rng);
      fine(2 * k, i) = first;
      fine(2 * k + 1, i) = increments(k, i) - first;
    }
  }
  return fine;
}

Scheme resolve_scheme(const SdeModel& model, Scheme scheme) {
  if (scheme == Scheme::automatic) return model.is_linear() ? Scheme::exponential : Scheme::heun;
  if (scheme == Scheme::exponential && !model.is_linear()) {
    throw std::invalid_argument("exponential integrator requires a linear-generator model");
  }
  return scheme;
}

WeightTrajectory integrate_exponential(const SdeModel& model, const TimeGrid& grid, Matrix increments,
                                       SeedRecord seed) {
  if (!model.is_linear()) throw std::invalid_argument("integrate_exponential: model is not linear");
  ExponentialStepper stepper(model.linear_dynamics());
  return integrate_with(model, grid, std::move(increments), seed,
                        [&](Matrix& s, double h, const auto& dv) { stepper.step(s, h, dv); });
}

WeightTrajectory integrate_heun(const SdeModel& model, const TimeGrid& grid, Matrix increments, SeedRecord seed) {
  return integrate_with(model, grid, std::move(increments), seed,
                        [&](Matrix& s, double h, const auto& dv) { heun_step(model, s, h, dv); });
}

Matrix integrate_terminal(const SdeModel& model, const TimeGrid& grid, const Matrix& increments, Scheme scheme,
                          SeedRecord seed) {
  check_increments(model, grid, increments, seed);
  scheme = resolve_scheme(model, scheme);
  Matrix state = model.w0();
  const double h = grid.step();
  if (scheme == Scheme::exponential) {
    ExponentialStepper stepper(model.linear_dynamics());
    for (int k = 0; k < grid.steps; ++k) stepper.step(state, h, increments.row(k));
  } else {
    for (int k = 0; k < grid.steps; ++k) heun_step(model, state, h, increments.row(k));
  }
  if (!state.allFinite()) throw NumericalError("non-finite terminal state", seed);
  return state;
}

WeightTrajectory sample_path_linear(const SdeModel& model, const TimeGrid& grid, SeedRecord seed) {
  return integrate_exponential(model, grid, brownian_increments(grid, model.noise_dim(), seed), seed);
}

WeightTrajectory sample_path_heun(const SdeModel& model, const TimeGrid& grid, SeedRecord seed) {
  return integrate_heun(model, grid, brownian_increments(grid, model.noise_dim(), seed), seed);
}

WeightTrajectory sample_path(const SdeModel& model, const TimeGrid& grid, SeedRecord seed, Scheme scheme) {
  return resolve_scheme(model, scheme) == Scheme::exponential ? sample_path_linear(model, grid, seed)
                                                              : sample_path_heun(model, grid, seed);
}

double fk_log_weight(const WeightTrajectory& traj, const PotentialFn& h) {
  if (!h) return 0.0;
  const int steps = traj.grid.steps;
  const double dt = traj.grid.step();
  std::vector<double> values(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) {
    values[k] = h(traj.states[k], traj.grid.time(k));
    if (!std::isfinite(values[k])) {
      throw std::domain_error("fk_weight: potential is not finite at t = " + format_double(traj.grid.time(k)));
    }
  }
  double acc = 0.0;
  for (int k = 0; k < steps; ++k) acc += 0.5 * dt * (values[k] + values[k + 1]);
  return acc;
}

double fk_weight(const WeightTrajectory& traj, const PotentialFn& h) {
  const double log_w = fk_log_weight(traj, h);
  if (log_w > std::log(std::numeric_limits<double>::max())) {
    throw std::overflow_error("fk_weight: exp(" + format_double(log_w) + ") overflows");
  }
  return std::exp(log_w);
}

void write_trajectory_csv(std::ostream& os, const WeightTrajectory& traj) {
  os << "# seed=" << traj.seed.seed << " stream=" << traj.seed.stream << '\n';
  const Matrix& w0 = traj.states.front();
  const bool vector_state = w0.cols() == 1;
  os << 't';
  if (vector_state) {
    for (Eigen::Index i = 0; i < w0.rows(); ++i) os << ",state_" << i;
  } else {
    for (Eigen::Index i = 0; i < w0.rows(); ++i) {
      for (Eigen::Index j = 0; j < w0.cols(); ++j) os << ",w_" << i << j;
    }
  }
  os << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    os << format_double(traj.grid.time(static_cast<int>(k)));
    const Matrix& s = traj.states[k];
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.cols(); ++j) os << ',' << format_double(s(i, j));
    }
    os << '\n';
  }
}

WeightTrajectory read_trajectory_csv(std::istream& is) {
  WeightTrajectory traj;
  std::string line;
  std::vector<std::string> header;
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      unsigned long long seed = 0;
      unsigned long long stream = 0;
      if (std::sscanf(t.c_str(), "# seed=%llu stream=%llu", &seed, &stream) == 2) traj.seed = {seed, stream};
      continue;
    }
    if (header.empty()) {
      header = split(t, ',');
      continue;
    }
    const auto cells = split(t, ',');
    if (cells.size() != header.size()) throw std::invalid_argument("trajectory CSV: ragged row");
    times.push_back(parse_double(cells[0]));
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_double(cells[c]));
    rows.push_back(std::move(row));
  }
  if (header.size() < 2 || header[0] != "t" || rows.size() < 2) {
    throw std::invalid_argument("trajectory CSV: need a 't,...' header and at least two rows");
  }
  const auto width = static_cast<Eigen::Index>(header.size() - 1);
  Eigen::Index rows_n = width;
  Eigen::Index cols_n = 1;
  if (trim(header[1]).rfind("w_", 0) == 0) {
    rows_n = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(width))));
    cols_n = rows_n;
    if (rows_n * cols_n != width) throw std::invalid_argument("trajectory CSV: matrix columns are not square");
  }
  traj.grid = {times.front(), times.back(), static_cast<int>(rows.size()) - 1};
  for (const auto& r : rows) {
    Matrix s(rows_n, cols_n);
    for (Eigen::Index i = 0; i < rows_n; ++i) {
      for (Eigen::Index j = 0; j < cols_n; ++j) s(i, j) = r[static_cast<std::size_t>(i * cols_n + j)];
    }
    traj.states.push_back(std::move(s));
  }
  return traj;
}

}  // namespace sdecade
