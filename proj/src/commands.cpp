#include "sdecade/commands.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include "sdecade/cascade_sim.hpp"
#include "sdecade/csv.hpp"
#include "sdecade/fit.hpp"
#include "sdecade/fk_pde.hpp"
#include "sdecade/lie.hpp"
#include "sdecade/parallel.hpp"
#include "sdecade/realization.hpp"

namespace sdecade {

namespace {

namespace fs = std::filesystem;

constexpr double kSphereTolerance = 1e-12;
constexpr double kOrthogonalTolerance = 1e-11;

std::ofstream open_output(const ExperimentConfig& config, const std::string& name) {
  const fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("output.dir: cannot write '" + (dir / name).string() + "'");
  return out;
}

McOptions mc_options(const ExperimentConfig& config) {
  return {static_cast<unsigned>(config.sampling.threads), build_scheme(config.model)};
}

int verdict(bool ok, std::ostream& log) {
  log << "result: " << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? exit_code::pass : exit_code::validation_failure;
}

double manifold_error(const Matrix& w) {
  if (w.cols() == 1) return std::abs(w.norm() - 1.0);
  return max_abs(w.transpose() * w - Matrix::Identity(w.cols(), w.cols()));
}

Matrix collect_inputs(const ExperimentConfig& config) {
  const int q = readout_input_dim(config);
  std::vector<Vector> rows;
  for (const auto& r : config.inputs.x) {
    if (static_cast<int>(r.size()) != q) {
      throw ConfigError("inputs.x: rows need " + std::to_string(q) + " entries, got " + std::to_string(r.size()));
    }
    rows.push_back(Eigen::Map<const Vector>(r.data(), q));
  }
  if (!config.inputs.file.empty()) {
    std::ifstream in(config.inputs.file);
    Matrix table;
    try {
      table = read_matrix_csv(in);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("inputs.file: ") + e.what());
    }
    if (table.rows() > 0 && table.cols() != q) {
      throw ConfigError("inputs.file: rows need " + std::to_string(q) + " entries");
    }
    for (Eigen::Index i = 0; i < table.rows(); ++i) rows.push_back(table.row(i).transpose());
  }
  if (config.inputs.sphere > 0) {
    const Matrix s = uniform_sphere(config.inputs.sphere, q, derive_seed(config.sampling.seed, "inputs"), 0);
    for (Eigen::Index i = 0; i < s.rows(); ++i) rows.push_back(s.row(i).transpose());
  }
  if (rows.empty()) throw ConfigError("inputs: no input rows (set inputs.x, inputs.file or inputs.sphere)");
  Matrix out(static_cast<Eigen::Index>(rows.size()), q);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return out;
}

void write_kv(std::ostream& os, const std::string& key, double value) { os << key << ',' << format_double(value) << '\n'; }

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"sample", "realize", "fit", "fk-check", "cascade-check", "brackets"};
  return names;
}

int cmd_sample(const ExperimentConfig& config, std::ostream& log) {
  const SdeModel model = build_model(config);
  const TimeGrid grid = TimeGrid::unit(config.grid_steps);
  const Scheme scheme = build_scheme(config.model);
  const auto n_paths = static_cast<std::size_t>(config.sampling.paths);
  std::vector<WeightTrajectory> paths(n_paths);
  parallel_for(n_paths, static_cast<unsigned>(config.sampling.threads),
               [&](std::size_t p) { paths[p] = sample_path(model, grid, {config.sampling.seed, p}, scheme); });

  const bool check = model.manifold_preserving();
  const double tolerance = model.w0().cols() == 1 ? kSphereTolerance : kOrthogonalTolerance;
  double worst = 0.0;
  auto summary = open_output(config, "sample_summary.csv");
  summary << "path_id,max_manifold_error\n";
  for (std::size_t p = 0; p < n_paths; ++p) {
    auto out = open_output(config, "trajectory_" + std::to_string(p) + ".csv");
    write_trajectory_csv(out, paths[p]);
    double err = 0.0;
    for (const auto& s : paths[p].states) err = std::max(err, manifold_error(s));
    worst = std::max(worst, err);
    summary << p << ',' << format_double(err) << '\n';
  }
  log << "paths: " << n_paths << "\nsteps: " << grid.steps << "\nmanifold_preserving: " << (check ? "yes" : "no")
      << '\n';
  if (check) log << "max_manifold_error: " << format_double(worst) << "\ntolerance: " << format_double(tolerance) << '\n';
  return verdict(!check || worst <= tolerance, log);
}

int cmd_realize(const ExperimentConfig& config, std::ostream& log) {
  const SdeModel model = build_model(config);
  const ReadoutSpec readout = build_readout(config);
  const PotentialFn potential = build_potential(config);
  const Matrix inputs = collect_inputs(config);
  readout.check(model.w0(), inputs.cols());
  const McOptions options = mc_options(config);
  const PathCache cache = sample_path_cache(model, readout, potential, static_cast<std::size_t>(config.sampling.n_samples),
                                            TimeGrid::unit(config.grid_steps), config.sampling.seed, options);
  auto out = open_output(config, "estimates.csv");
  write_estimates_header(out, inputs.cols());
  bool finite = true;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const Vector x = inputs.row(i).transpose();
    const RealizationEstimate est = realize_cached(cache, readout, x, options);
    finite = finite && std::isfinite(est.mean) && std::isfinite(est.std_error);
    write_estimate_row(out, x, est);
  }
  log << "inputs: " << inputs.rows() << "\nN: " << config.sampling.n_samples << '\n';
  return verdict(finite, log);
}

int cmd_fit(const ExperimentConfig& config, std::ostream& log) {
  const FitData data = make_fit_data(config);
  const FitResult result = fit_model(config, data);
  {
    auto out = open_output(config, "fit_trace.csv");
    write_trace_csv(out, result.trace);
  }
  {
    auto out = open_output(config, "fit_theta.csv");
    write_matrix_csv(out, result.theta.coeffs());
  }
  const double ratio = result.final_loss > 0.0 ? result.initial_loss / result.final_loss
                                               : std::numeric_limits<double>::infinity();
  auto out = open_output(config, "fit_summary.csv");
  out << "key,value\n";
  write_kv(out, "initial_loss", result.initial_loss);
  write_kv(out, "final_loss", result.final_loss);
  write_kv(out, "loss_ratio", ratio);
  write_kv(out, "iterations", static_cast<double>(result.trace.size() - 1));
  write_kv(out, "test_mse", result.test_mse);
  write_kv(out, "test_variance", result.test_variance);
  log << "initial_loss: " << format_double(result.initial_loss) << "\nfinal_loss: " << format_double(result.final_loss)
      << "\nloss_ratio: " << format_double(ratio) << "\ntest_mse: " << format_double(result.test_mse)
      << "\ntest_variance: " << format_double(result.test_variance) << '\n';
  if (!result.message.empty()) log << "note: " << result.message << '\n';
  return verdict(!result.diverged && ratio >= config.fit.min_ratio, log);
}

int cmd_fk_check(const ExperimentConfig& config, std::ostream& log) {
  const SdeModel model = build_model(config);
  if (model.w0().size() != 1) throw ConfigError("fk-check: needs a 1-D model (model.n = 1, model.w0_cols = 1)");
  if (config.readout.kind != "scalar") throw ConfigError("fk-check: needs readout.kind = scalar");
  if (config.h.kind == "reference") throw ConfigError("fk-check: reference penalties have no 1-D PDE form here");
  const ReadoutSpec readout = build_readout(config);
  const PotentialFn potential = build_potential(config);
  const McOptions options = mc_options(config);
  const PathCache cache = sample_path_cache(model, readout, potential, static_cast<std::size_t>(config.sampling.n_samples),
                                            TimeGrid::unit(config.grid_steps), config.sampling.seed, options);
  const Vector x = Vector::Constant(1, config.fk.x);
  const RealizationEstimate mc = realize_cached(cache, readout, x, options);

  std::vector<double> terminal(cache.terminals.size());
  for (std::size_t v = 0; v < terminal.size(); ++v) terminal[v] = cache.terminals[v](0, 0);
  const double sd = mean_and_error(terminal).std_error * std::sqrt(static_cast<double>(terminal.size()));
  const double w0 = model.w0()(0, 0);
  const double half_width = std::max(config.fk.width_sd * sd, 1.0);
  Grid1D grid{config.fk.w_min.value_or(w0 - half_width), config.fk.w_max.value_or(w0 + half_width), config.fk.nodes,
              config.fk.time_steps, 1.0};
  try {
    grid.validate(w0);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("fk: ") + e.what());
  }

  const auto coeffs = GeneratorCoefficients1D::from_model(model);
  Potential1D h;
  if (config.h.kind == "constant") {
    const double c = config.h.c;
    h = [c](double, double) { return c; };
  }
  const Activation sigma = readout.sigma();
  const FkSolution pde = solve_fk_profile(coeffs, h, sigma, config.fk.x, w0, grid);

  std::vector<Grid1D> grids;
  for (const int div : {4, 2, 1}) {
    Grid1D g = grid;
    g.nodes = (grid.nodes - 1) / div + 1;
    g.time_steps = std::max(1, grid.time_steps / div);
    if (g.nodes >= 51) grids.push_back(g);
  }

  const double gap = std::abs(mc.mean - pde.value);
  const double bound = 3.0 * mc.std_error + config.fk.tolerance;
  {
    auto out = open_output(config, "fk_check.csv");
    out << "key,value\n";
    write_kv(out, "mc_mean", mc.mean);
    write_kv(out, "mc_stderr", mc.std_error);
    write_kv(out, "pde_value", pde.value);
    write_kv(out, "gap", gap);
    write_kv(out, "bound", bound);
    write_kv(out, "w_min", grid.w_min);
    write_kv(out, "w_max", grid.w_max);
    write_kv(out, "nodes", grid.nodes);
    write_kv(out, "time_steps", grid.time_steps);
  }
  {
    auto out = open_output(config, "fk_slice.csv");
    write_fk_slice_csv(out, pde);
  }
  if (grids.size() >= 3) {
    const ConvergenceTable table = convergence_study(coeffs, h, sigma, config.fk.x, w0, grids);
    auto out = open_output(config, "fk_convergence.csv");
    out << "nodes,time_steps,value,error\n";
    for (const auto& r : table.rows) {
      out << r.nodes << ',' << r.time_steps << ',' << format_double(r.value) << ',' << format_double(r.error) << '\n';
    }
    out << "# reference=" << format_double(table.reference) << '\n';
  }
  log << "mc_mean: " << format_double(mc.mean) << "\nmc_stderr: " << format_double(mc.std_error)
      << "\npde_value: " << format_double(pde.value) << "\ngap: " << format_double(gap)
      << "\nbound: " << format_double(bound) << '\n';
  return verdict(gap <= bound, log);
}

int cmd_cascade_check(const ExperimentConfig& config, std::ostream& log) {
  const SimulationSetup setup = build_cascade_setup(config.cascade);
  Vector x;
  if (!config.cascade.x.empty()) {
    x = Eigen::Map<const Vector>(config.cascade.x.data(), static_cast<Eigen::Index>(config.cascade.x.size()));
  } else if (config.cascade.preset == "scalar") {
    x = Vector::Ones(1);
  } else if (config.cascade.preset == "abelian") {
    x = Vector(3);
    x << 1.0, 0.5, -0.5;
  } else {
    x = Vector(3);
    x << 0.5, -0.3, 0.8;
  }
  if (x.size() != setup.state_dim()) {
    throw ConfigError("cascade.x: needs " + std::to_string(setup.state_dim()) + " entries");
  }
  const SimulationReport report =
      verify_simulation(setup, x, TimeGrid::unit(config.grid_steps), config.sampling.seed,
                        static_cast<std::size_t>(config.cascade.paths), static_cast<unsigned>(config.sampling.threads));
  {
    auto out = open_output(config, "cascade_report.csv");
    write_simulation_report_csv(out, report);
  }
  const double q95 = report.gap_quantile(0.95);
  bool ok = q95 <= config.cascade.tolerance;
  log << "preset: " << config.cascade.preset << "\npaths: " << config.cascade.paths
      << "\ngap_q50: " << format_double(report.gap_quantile(0.5)) << "\ngap_q95: " << format_double(q95)
      << "\ngap_max: " << format_double(report.gap_quantile(1.0))
      << "\nexit_fraction: " << format_double(report.exit_fraction)
      << "\nill_conditioned_steps: " << report.ill_conditioned_steps << '\n';
  if (setup.mode == FieldMode::empirical) {
    log << "field_deviation: " << format_double(report.max_field_deviation)
        << "\nfield_residual: " << format_double(report.max_field_residual) << '\n';
    ok = ok && report.max_field_deviation <= config.cascade.field_tolerance &&
         report.max_field_residual <= config.cascade.field_tolerance;
  }
  return verdict(ok, log);
}

int cmd_brackets(const ExperimentConfig& config, std::ostream& log) {
  const auto& b = config.brackets;
  const Activation sigma = Activation::from_name(b.sigma);
  Matrix w(b.n, b.n), w2(b.n, b.n);
  for (int i = 0; i < b.n; ++i) {
    for (int j = 0; j < b.n; ++j) {
      w(i, j) = b.w[static_cast<std::size_t>(i * b.n + j)];
      w2(i, j) = b.w2[static_cast<std::size_t>(i * b.n + j)];
    }
  }
  const NeuralField g{w, sigma};
  const NeuralField g2{w2, sigma};
  if (!sigma.has_order(std::max(b.k_max, 1))) {
    throw ConfigError("brackets.sigma: '" + b.sigma + "' lacks derivatives of order " + std::to_string(b.k_max));
  }

  std::vector<double> ts(static_cast<std::size_t>(b.points));
  for (int p = 0; p < b.points; ++p) ts[p] = b.z_min + (b.z_max - b.z_min) * p / (b.points - 1);
  if (b.points > 1) ts.back() = b.z_max;

  // values[k][p] is ad^k at point p.
  std::vector<std::vector<Vector>> values(static_cast<std::size_t>(b.k_max) + 1);
  auto out = open_output(config, "brackets.csv");
  out << 'k';
  for (int i = 0; i < b.n; ++i) out << ",z_" << i;
  for (int i = 0; i < b.n; ++i) out << ",ad_" << i;
  out << '\n';
  for (int k = 0; k <= b.k_max; ++k) {
    for (const double t : ts) {
      const Vector z = Vector::Constant(b.n, t);
      const Vector v = iterated_ad(g, g2, k, z);
      values[k].push_back(v);
      out << k;
      for (int i = 0; i < b.n; ++i) out << ',' << format_double(z(i));
      for (int i = 0; i < b.n; ++i) out << ',' << format_double(v(i));
      out << '\n';
    }
  }
  log << "depth: " << b.k_max << "\npoints: " << b.points << '\n';

  const bool polynomial = sigma.name() == "identity" || sigma.name() == "cubic";
  bool ok = true;
  if (b.n == 1 && polynomial) {
    auto deg_out = open_output(config, "bracket_degrees.csv");
    deg_out << "k,degree\n";
    int previous = -1;
    for (int k = 0; k <= b.k_max; ++k) {
      std::vector<double> ys;
      for (const auto& v : values[k]) ys.push_back(v(0));
      const int degree = polynomial_degree(ts, ys);
      deg_out << k << ',' << degree << '\n';
      log << "degree_k" << k << ": " << degree << '\n';
      if (k >= 2 && degree <= previous && sigma.name() == "cubic") ok = false;
      if (k >= 1) previous = degree;
    }
  }
  return verdict(ok, log);
}

int run_command(std::string_view name, const ExperimentConfig& config, std::ostream& log, std::ostream& err) {
  try {
    if (name == "sample") return cmd_sample(config, log);
    if (name == "realize") return cmd_realize(config, log);
    if (name == "fit") return cmd_fit(config, log);
    if (name == "fk-check") return cmd_fk_check(config, log);
    if (name == "cascade-check") return cmd_cascade_check(config, log);
    if (name == "brackets") return cmd_brackets(config, log);
    err << "error: unknown command '" << name << "'\n";
    return exit_code::config_error;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::validation_failure;
  }
}

int run_command_file(std::string_view name, const fs::path& config_path, const std::string* seed_override,
                     const std::string* out_override, std::ostream& log, std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_config(config_path);
    if (seed_override) {
      std::uint64_t seed = 0;
      const auto* end = seed_override->data() + seed_override->size();
      const auto [ptr, ec] = std::from_chars(seed_override->data(), end, seed);
      if (ec != std::errc() || ptr != end) throw ConfigError("--seed: expected an unsigned 64-bit integer");
      config.sampling.seed = seed;
    }
    if (out_override) {
      if (out_override->empty()) throw ConfigError("--out: empty directory");
      config.output_dir = *out_override;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  }
  return run_command(name, config, log, err);
}

}  // namespace sdecade
