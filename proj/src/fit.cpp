#include "sdecade/fit.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <random>

#include "sdecade/csv.hpp"
#include "sdecade/parallel.hpp"

namespace sdecade {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 30;

Vector to_vector(const std::vector<double>& values) {
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Dataset read_dataset_file(const std::string& path, int input_dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("fit.file: cannot read '" + path + "'");
  Matrix table;
  try {
    table = read_matrix_csv(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("fit.file: ") + e.what());
  }
  if (table.cols() != input_dim + 1) {
    throw ConfigError("fit.file: expected " + std::to_string(input_dim + 1) + " columns, got " +
                      std::to_string(table.cols()));
  }
  if (!table.allFinite()) throw ConfigError("fit.file: non-finite entries");
  return {table.leftCols(input_dim), table.col(input_dim), false};
}

Dataset head(const Dataset& d, Eigen::Index begin, Eigen::Index count) {
  return {d.x.middleRows(begin, count), d.y.segment(begin, count), d.sphere};
}

}  // namespace

Matrix uniform_sphere(int count, int dim, std::uint64_t seed, std::uint64_t stream) {
  Engine rng = make_engine({seed, stream});
  std::normal_distribution<double> normal;
  Matrix out(count, dim);
  for (int i = 0; i < count; ++i) {
    double norm = 0.0;
    do {
      for (int j = 0; j < dim; ++j) out(i, j) = normal(rng);
      norm = out.row(i).norm();
    } while (norm < 1e-8);
    out.row(i) /= norm;
  }
  return out;
}

int readout_input_dim(const ExperimentConfig& config) {
  const auto& r = config.readout.kind;
  if (r == "scalar" || r == "cascade") return config.model.n;
  if (r == "vector") return config.model.w0_cols;
  return config.model.w0_cols - 1;
}

PathEnsemble::PathEnsemble(const ExperimentConfig& config, std::size_t samples, std::uint64_t seed)
    : config_(config),
      readout_(build_readout(config)),
      potential_(build_potential(config)),
      grid_(TimeGrid::unit(config.grid_steps)),
      seed_(seed) {
  increments_.resize(samples);
  const unsigned threads = static_cast<unsigned>(config.sampling.threads);
  parallel_for(samples, threads, [&](std::size_t v) {
    increments_[v] = brownian_increments(grid_, config_.model.m, {seed_, v});
  });
}

Vector PathEnsemble::predict(const ThetaParams& theta, const Matrix& inputs) const {
  const SdeModel model = build_model(config_, theta);
  readout_.check(model.w0(), inputs.cols());
  const Scheme scheme = resolve_scheme(model, build_scheme(config_.model));
  const unsigned threads = static_cast<unsigned>(config_.sampling.threads);
  const std::size_t n = increments_.size();
  const bool full_path = readout_.needs_path() || static_cast<bool>(potential_);

  std::vector<Matrix> terminals(n);
  std::vector<WeightTrajectory> paths(readout_.needs_path() ? n : 0);
  std::vector<double> weights(n, 1.0);
  parallel_for(n, threads, [&](std::size_t v) {
    const SeedRecord rec{seed_, v};
    if (full_path) {
      WeightTrajectory traj = scheme == Scheme::exponential ? integrate_exponential(model, grid_, increments_[v], rec)
                                                            : integrate_heun(model, grid_, increments_[v], rec);
      if (potential_) weights[v] = fk_weight(traj, potential_);
      terminals[v] = traj.terminal();
      if (readout_.needs_path()) paths[v] = std::move(traj);
    } else {
      terminals[v] = integrate_terminal(model, grid_, increments_[v], scheme, rec);
    }
  });

  Vector out(inputs.rows());
  parallel_for(static_cast<std::size_t>(inputs.rows()), threads, [&](std::size_t i) {
    const Vector x = inputs.row(static_cast<Eigen::Index>(i)).transpose();
    std::vector<double> ys(n);
    for (std::size_t v = 0; v < n; ++v) {
      const double value = readout_.needs_path() ? readout_.path_value(paths[v], x)
                                                 : readout_.terminal_value(terminals[v], x);
      ys[v] = weights[v] * value;
    }
    out(static_cast<Eigen::Index>(i)) = pairwise_sum(ys) / static_cast<double>(n);
  });
  return out;
}

double mean_squared_error(const Vector& prediction, const Vector& target) {
  if (prediction.size() != target.size() || target.size() == 0) {
    throw std::invalid_argument("mean_squared_error: size mismatch or empty");
  }
  std::vector<double> sq(static_cast<std::size_t>(target.size()));
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    const double e = prediction(i) - target(i);
    sq[static_cast<std::size_t>(i)] = e * e;
  }
  return pairwise_sum(sq) / static_cast<double>(sq.size());
}

double variance(const Vector& values) {
  if (values.size() == 0) return 0.0;
  const double mean = values.mean();
  return (values.array() - mean).square().mean();
}

FitData make_fit_data(const ExperimentConfig& config) {
  const auto& f = config.fit;
  const int q = readout_input_dim(config);
  const std::uint64_t master = config.sampling.seed;
  FitData data;
  if (f.target == "file") {
    const Dataset all = read_dataset_file(f.file, q);
    const auto n = all.x.rows();
    if (n < f.train_size) {
      throw ConfigError("fit.file: has " + std::to_string(n) + " rows, fit.train_size is " +
                        std::to_string(f.train_size));
    }
    data.train = head(all, 0, f.train_size);
    data.test = head(all, f.train_size, std::min<Eigen::Index>(f.test_size, n - f.train_size));
    return data;
  }

  const std::uint64_t dataset_seed = derive_seed(master, "dataset");
  data.train.x = uniform_sphere(f.train_size, q, dataset_seed, 0);
  data.test.x = uniform_sphere(f.test_size, q, dataset_seed, 1);
  data.train.sphere = data.test.sphere = true;
  if (f.target == "neuron") {
    if (static_cast<int>(f.w_target.size()) != q) {
      throw ConfigError("fit.w_target: needs " + std::to_string(q) + " values");
    }
    const Vector w = to_vector(f.w_target);
    data.train.y = (data.train.x * w).array().tanh();
    data.test.y = (data.test.x * w).array().tanh();
  } else {
    const PathEnsemble target(config, static_cast<std::size_t>(f.n_samples), derive_seed(master, "target"));
    const ThetaParams star = build_theta(config.model, f.theta_star);
    data.train.y = target.predict(star, data.train.x);
    if (f.test_size > 0) data.test.y = target.predict(star, data.test.x);
  }
  return data;
}

FitResult fit_model(const ExperimentConfig& config, const FitData& data) {
  const auto& f = config.fit;
  const std::uint64_t master = config.sampling.seed;
  const PathEnsemble paths(config, static_cast<std::size_t>(f.n_samples), derive_seed(master, "fit-paths"));
  const int m = config.model.m;
  const int d = build_basis(config.model).dim();
  auto loss = [&](const Vector& p) {
    return mean_squared_error(paths.predict(ThetaParams::from_flat(m, d, to_std(p)), data.train.x), data.train.y);
  };

  const auto& init = f.theta_init.empty() ? config.model.theta : f.theta_init;
  Vector p = to_vector(build_theta(config.model, init).flat());
  const auto k = p.size();

  FitResult result;
  double current = loss(p);
  result.initial_loss = current;
  result.trace.push_back({0, current, 0.0, 0.0});
  auto diverge = [&](int it) {
    result.diverged = true;
    result.message = "non-finite loss at iteration " + std::to_string(it);
  };
  if (!std::isfinite(current)) diverge(0);

  double step = f.step;
  Engine rng = make_engine({derive_seed(master, "optimizer"), 0});
  std::bernoulli_distribution coin(0.5);

  for (int it = 1; it <= f.iterations && !result.diverged; ++it) {
    if (f.optimizer == "gd") {
      Vector grad(k);
      for (Eigen::Index j = 0; j < k; ++j) {
        Vector plus = p, minus = p;
        plus(j) += f.fd_eps;
        minus(j) -= f.fd_eps;
        grad(j) = (loss(plus) - loss(minus)) / (2.0 * f.fd_eps);
      }
      if (!grad.allFinite()) {
        diverge(it);
        break;
      }
      const double g2 = grad.squaredNorm();
      bool accepted = false;
      for (int tries = 0; tries < kMaxHalvings && g2 > 0.0; ++tries) {
        const Vector trial = p - step * grad;
        const double value = loss(trial);
        if (std::isfinite(value) && value <= current - kArmijo * step * g2) {
          p = trial;
          current = value;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      result.trace.push_back({it, current, std::sqrt(g2), accepted ? step : 0.0});
      if (!accepted) {
        result.message = "line search stalled at iteration " + std::to_string(it);
        break;
      }
      step *= 2.0;
    } else {
      const double ak = f.spsa_a / std::pow(it + f.spsa_big_a, f.spsa_alpha);
      const double ck = f.spsa_c / std::pow(it, f.spsa_gamma);
      Vector delta(k);
      for (Eigen::Index j = 0; j < k; ++j) delta(j) = coin(rng) ? 1.0 : -1.0;
      const double diff = loss(p + ck * delta) - loss(p - ck * delta);
      const Vector grad = (diff / (2.0 * ck)) * delta.cwiseInverse();
      p -= ak * grad;
      current = loss(p);
      result.trace.push_back({it, current, grad.norm(), ak});
      if (!std::isfinite(current)) diverge(it);
    }
  }

  result.theta = ThetaParams::from_flat(m, d, to_std(p));
  result.final_loss = current;
  if (data.test.x.rows() > 0 && !result.diverged) {
    const PathEnsemble fresh(config, static_cast<std::size_t>(f.n_samples), derive_seed(master, "test-paths"));
    result.test_mse = mean_squared_error(fresh.predict(result.theta, data.test.x), data.test.y);
    result.test_variance = variance(data.test.y);
  }
  return result;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "iteration,loss,grad_norm,step\n";
  for (const auto& r : trace) {
    os << r.iteration << ',' << format_double(r.loss) << ',' << format_double(r.grad_norm) << ','
       << format_double(r.step) << '\n';
  }
}

}  // namespace sdecade
