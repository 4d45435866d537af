#include "sdecade/realization.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "sdecade/cascade_ode.hpp"
#include "sdecade/csv.hpp"
#include "sdecade/parallel.hpp"

namespace sdecade {

namespace {

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

double dot_sigma(const Vector& weights, const Vector& pre, const Activation& sigma) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pre.size(); ++i) acc += weights(i) * sigma(pre(i));
  return acc;
}

// Terminal state and weight for one path, with or without storing the path.
struct PathSample {
  Matrix terminal;
  double weight = 1.0;
  std::optional<WeightTrajectory> path;
};

PathSample draw_path(const SdeModel& model, const ReadoutSpec& readout, const PotentialFn& potential,
                     const TimeGrid& grid, SeedRecord rec, Scheme scheme) {
  Matrix inc = brownian_increments(grid, model.noise_dim(), rec);
  PathSample out;
  if (readout.needs_path() || potential) {
    WeightTrajectory traj = scheme == Scheme::exponential ? integrate_exponential(model, grid, std::move(inc), rec)
                                                          : integrate_heun(model, grid, std::move(inc), rec);
    if (potential) out.weight = fk_weight(traj, potential);
    out.terminal = traj.terminal();
    if (readout.needs_path()) out.path = std::move(traj);
  } else {
    out.terminal = integrate_terminal(model, grid, inc, scheme, rec);
  }
  return out;
}

double sample_value(const ReadoutSpec& readout, const Matrix& terminal, double weight,
                    const WeightTrajectory* path, const Vector& x, SeedRecord rec) {
  const double value = readout.needs_path() ? readout.path_value(*path, x) : readout.terminal_value(terminal, x);
  const double y = weight * value;
  if (!std::isfinite(y)) throw NumericalError("non-finite Monte Carlo sample", rec);
  return y;
}

void check_samples(std::size_t samples) {
  if (samples < 2) throw std::invalid_argument("Monte Carlo estimate needs N >= 2 samples");
}

}  // namespace

ReadoutSpec::ReadoutSpec(Variant variant) : variant_(std::move(variant)) {
  std::visit(overloaded{[](const ScalarNeuron&) {}, [](const TwoBlock&) {},
                        [](const auto& r) {
                          if (!r.v.allFinite()) throw std::invalid_argument("ReadoutSpec: v must be finite");
                        }},
             variant_);
}

const Activation& ReadoutSpec::sigma() const {
  return std::visit([](const auto& r) -> const Activation& { return r.sigma; }, variant_);
}

void ReadoutSpec::check(const Matrix& state, Eigen::Index input_dim) const {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("readout: " + what + " (state " + shape(state) + ", input length " +
                                std::to_string(input_dim) + ")");
  };
  std::visit(overloaded{
                 [&](const ScalarNeuron&) {
                   if (state.cols() != 1) fail("scalar neuron needs a vector state");
                   if (state.rows() != input_dim) fail("input length must equal the state length");
                 },
                 [&](const VectorNeuron& r) {
                   if (r.v.size() != state.rows()) fail("v must have one entry per state row");
                   if (state.cols() != input_dim) fail("input length must equal the state column count");
                 },
                 [&](const TwoBlock&) {
                   if (state.cols() < 2) fail("two-block state needs a U column and a weight block");
                   if (state.cols() - 1 != input_dim) fail("input length must equal the weight block width");
                 },
                 [&](const CascadeLinear& r) {
                   if (state.rows() != state.cols()) fail("cascade readout needs a square weight state");
                   if (r.v.size() != state.rows() || input_dim != state.rows()) fail("v and x must match n");
                 },
             },
             variant_);
}

double ReadoutSpec::terminal_value(const Matrix& state, const Vector& x) const {
  return std::visit(
      overloaded{
          [&](const ScalarNeuron& r) { return r.sigma(state.col(0).dot(x)); },
          [&](const VectorNeuron& r) { return dot_sigma(r.v, state * x, r.sigma); },
          [&](const TwoBlock& r) {
            const auto p = state.rows();
            const auto n = state.cols() - 1;
            return dot_sigma(state.col(0), state.block(0, 1, p, n) * x, r.sigma);
          },
          [&](const CascadeLinear&) -> double {
            throw std::logic_error("cascade readout needs the whole weight path");
          },
      },
      variant_);
}

double ReadoutSpec::path_value(const WeightTrajectory& traj, const Vector& x) const {
  if (const auto* r = std::get_if<CascadeLinear>(&variant_)) {
    return r->v.dot(solve_activation_terminal(traj, x, r->sigma));
  }
  return terminal_value(traj.terminal(), x);
}

RealizationEstimate realize_mc(const SdeModel& model, const ReadoutSpec& readout, const PotentialFn& potential,
                               const Vector& x, std::size_t samples, const TimeGrid& grid, std::uint64_t seed,
                               const McOptions& options) {
  check_samples(samples);
  grid.validate();
  readout.check(model.w0(), x.size());
  const Scheme scheme = resolve_scheme(model, options.scheme);

  std::vector<double> ys(samples);
  parallel_for(samples, options.threads, [&](std::size_t v) {
    const SeedRecord rec{seed, v};
    const PathSample s = draw_path(model, readout, potential, grid, rec, scheme);
    ys[v] = sample_value(readout, s.terminal, s.weight, s.path ? &*s.path : nullptr, x, rec);
  });
  const auto stats = mean_and_error(ys);
  return {stats.mean, stats.std_error, samples, {seed, 0}, grid};
}

PathCache sample_path_cache(const SdeModel& model, const ReadoutSpec& readout, const PotentialFn& potential,
                            std::size_t samples, const TimeGrid& grid, std::uint64_t seed,
                            const McOptions& options) {
  check_samples(samples);
  grid.validate();
  const Scheme scheme = resolve_scheme(model, options.scheme);
  PathCache cache;
  cache.grid = grid;
  cache.seed = seed;
  cache.terminals.resize(samples);
  cache.weights.resize(samples);
  if (readout.needs_path()) cache.paths.resize(samples);
  parallel_for(samples, options.threads, [&](std::size_t v) {
    PathSample s = draw_path(model, readout, potential, grid, {seed, v}, scheme);
    cache.terminals[v] = std::move(s.terminal);
    cache.weights[v] = s.weight;
    if (s.path) cache.paths[v] = std::move(*s.path);
  });
  return cache;
}

RealizationEstimate realize_cached(const PathCache& cache, const ReadoutSpec& readout, const Vector& x,
                                   const McOptions& options) {
  const std::size_t samples = cache.terminals.size();
  check_samples(samples);
  readout.check(cache.terminals.front(), x.size());
  if (readout.needs_path() && cache.paths.size() != samples) {
    throw std::invalid_argument("realize_cached: cache holds no paths for a path readout");
  }
  std::vector<double> ys(samples);
  parallel_for(samples, options.threads, [&](std::size_t v) {
    const WeightTrajectory* path = readout.needs_path() ? &cache.paths[v] : nullptr;
    ys[v] = sample_value(readout, cache.terminals[v], cache.weights[v], path, x, {cache.seed, v});
  });
  const auto stats = mean_and_error(ys);
  return {stats.mean, stats.std_error, samples, {cache.seed, 0}, cache.grid};
}

double fhat_N(std::span<const TerminalSample> samples, const Vector& x, const Activation& sigma) {
  if (samples.empty()) throw std::invalid_argument("fhat_N: empty sample list");
  std::vector<double> terms(samples.size());
  for (std::size_t v = 0; v < samples.size(); ++v) {
    const auto& s = samples[v];
    if (s.w.cols() != x.size() || s.w.rows() != s.u.size()) {
      throw std::invalid_argument("fhat_N: sample " + std::to_string(v) + " has U of length " +
                                  std::to_string(s.u.size()) + " and W " + shape(s.w) + " for x of length " +
                                  std::to_string(x.size()));
    }
    terms[v] = dot_sigma(s.u, s.w * x, sigma);
  }
  return pairwise_sum(terms) / static_cast<double>(samples.size());
}

PotentialFn reference_penalty(WeightTrajectory reference) {
  if (reference.states.size() != static_cast<std::size_t>(reference.grid.steps) + 1) {
    throw std::invalid_argument("reference_penalty: trajectory does not match its grid");
  }
  return [ref = std::move(reference)](const Matrix& w, double t) {
    const TimeGrid& g = ref.grid;
    const double h = g.step();
    const double pos = (t - g.t0) / h;
    const long nearest = std::lround(pos);
    Matrix xi;
    if (nearest >= 0 && nearest <= g.steps && std::abs(t - g.time(static_cast<int>(nearest))) <= 1e-12 * h) {
      xi = ref.states[static_cast<std::size_t>(nearest)];
    } else {
      const int k = std::clamp(static_cast<int>(std::floor(pos)), 0, g.steps - 1);
      const double lambda = std::clamp((t - g.time(k)) / h, 0.0, 1.0);
      xi = (1.0 - lambda) * ref.states[k] + lambda * ref.states[k + 1];
    }
    if (xi.rows() != w.rows() || xi.cols() != w.cols()) {
      throw std::invalid_argument("reference_penalty: state shape differs from the reference");
    }
    return -(w - xi).squaredNorm();
  };
}

void write_estimates_header(std::ostream& os, Eigen::Index input_dim) {
  for (Eigen::Index i = 0; i < input_dim; ++i) os << "x_" << i << ',';
  os << "mean,stderr,N,seed\n";
}

void write_estimate_row(std::ostream& os, const Vector& x, const RealizationEstimate& est) {
  for (Eigen::Index i = 0; i < x.size(); ++i) os << format_double(x(i)) << ',';
  os << format_double(est.mean) << ',' << format_double(est.std_error) << ',' << est.samples << ','
     << est.seed.seed << '\n';
}

}  // namespace sdecade
