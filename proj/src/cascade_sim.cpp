#include "sdecade/cascade_sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

#include "sdecade/csv.hpp"
#include "sdecade/lie.hpp"
#include "sdecade/parallel.hpp"

namespace sdecade {

namespace {

constexpr double kConditionWarning = 1e12;

// exp(w_j G_j) for every j.
std::vector<Matrix> flow_factors(const Vector& w, const SimulationSetup& setup) {
  if (w.size() != setup.algebra_dim()) {
    throw std::invalid_argument("cascade: w has length " + std::to_string(w.size()) + ", algebra dimension is " +
                                std::to_string(setup.algebra_dim()));
  }
  std::vector<Matrix> out;
  out.reserve(setup.generators.size());
  for (int j = 0; j < setup.algebra_dim(); ++j) out.push_back(expm(w(j) * setup.generators[j]));
  return out;
}

Matrix product(const std::vector<Matrix>& factors, int n) {
  Matrix p = Matrix::Identity(n, n);
  for (const auto& f : factors) p = p * f;
  return p;
}

void check_z(const Vector& z, const SimulationSetup& setup) {
  if (z.size() != setup.state_dim()) {
    throw std::invalid_argument("cascade: z has length " + std::to_string(z.size()) + ", state dimension is " +
                                std::to_string(setup.state_dim()));
  }
}

// dP/dw as d matrices: E_1 ... E_{k-1} G_k E_k ... E_d.
std::vector<Matrix> product_derivatives(const std::vector<Matrix>& factors, const SimulationSetup& setup) {
  const int n = setup.state_dim();
  const int d = setup.algebra_dim();
  std::vector<Matrix> suffix(static_cast<std::size_t>(d) + 1, Matrix::Identity(n, n));
  for (int k = d - 1; k >= 0; --k) suffix[k] = factors[k] * suffix[k + 1];
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(d));
  Matrix prefix = Matrix::Identity(n, n);
  for (int k = 0; k < d; ++k) {
    out.push_back(prefix * setup.generators[k] * suffix[k]);
    prefix = prefix * factors[k];
  }
  return out;
}

Matrix fields_from_probes(const std::vector<Matrix>& factors, const SimulationSetup& setup,
                          const std::vector<Vector>& probes) {
  const int n = setup.state_dim();
  const int d = setup.algebra_dim();
  const auto derivs = product_derivatives(factors, setup);
  const Matrix p = product(factors, n);
  const auto rows = static_cast<Eigen::Index>(probes.size()) * n;
  Matrix lhs(rows, d);
  Matrix rhs(rows, d);
  for (std::size_t s = 0; s < probes.size(); ++s) {
    const Vector phi = p * probes[s];
    for (int k = 0; k < d; ++k) lhs.block(static_cast<Eigen::Index>(s) * n, k, n, 1) = derivs[k] * probes[s];
    for (int j = 0; j < d; ++j) rhs.block(static_cast<Eigen::Index>(s) * n, j, n, 1) = setup.generators[j] * phi;
  }
  const Eigen::ColPivHouseholderQR<Matrix> qr(lhs);
  if (qr.rank() < d) {
    throw std::runtime_error("weight_fields: d(phi)/dw has rank " + std::to_string(qr.rank()) + " < d = " +
                             std::to_string(d) + " over the probe set");
  }
  return qr.solve(rhs);
}

std::vector<Vector> standard_probes(int n) {
  std::vector<Vector> probes;
  for (int i = 0; i < n; ++i) probes.push_back(Vector::Unit(n, i));
  return probes;
}

double condition_number(const Matrix& m) {
  const Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  return s(s.size() - 1) == 0.0 ? std::numeric_limits<double>::infinity() : s(0) / s(s.size() - 1);
}

}  // namespace

void SimulationSetup::validate() const {
  if (generators.empty()) throw std::invalid_argument("SimulationSetup: no generators");
  const auto n = generators.front().rows();
  for (const auto& g : generators) {
    if (g.rows() != n || g.cols() != n) throw std::invalid_argument("SimulationSetup: generators must be n x n");
  }
  if (beta.cols() != algebra_dim() || beta.rows() < 1) {
    throw std::invalid_argument("SimulationSetup: beta must be m x d with d = " + std::to_string(algebra_dim()));
  }
  if (readout.size() != n) throw std::invalid_argument("SimulationSetup: readout must have length n");
  if (!(radius_w > 0.0) || !(radius_z > 0.0)) throw std::invalid_argument("SimulationSetup: radii must be positive");

  Matrix stack(n * n, algebra_dim());
  for (int j = 0; j < algebra_dim(); ++j) stack.col(j) = generators[j].reshaped();
  if (Eigen::FullPivLU<Matrix>(stack).rank() < algebra_dim()) {
    throw std::invalid_argument("SimulationSetup: generators are linearly dependent");
  }
  if (mode == FieldMode::abelian) {
    for (int a = 0; a < algebra_dim(); ++a) {
      for (int b = a + 1; b < algebra_dim(); ++b) {
        const double scale = 1.0 + max_abs(generators[a]) * max_abs(generators[b]);
        if (max_abs(commutator(generators[a], generators[b])) > 1e-12 * scale) {
          throw std::invalid_argument("SimulationSetup: abelian mode requires commuting generators (G_" +
                                      std::to_string(a + 1) + ", G_" + std::to_string(b + 1) + " do not commute)");
        }
      }
    }
  }
}

Vector decode_phi(const Vector& w, const Vector& z, const SimulationSetup& setup) {
  check_z(z, setup);
  const auto factors = flow_factors(w, setup);
  Vector out = z;
  for (auto it = factors.rbegin(); it != factors.rend(); ++it) out = *it * out;
  return out;
}

Matrix jacobian_phi_z(const Vector& w, const Vector& z, const SimulationSetup& setup) {
  check_z(z, setup);
  return product(flow_factors(w, setup), setup.state_dim());
}

Matrix jacobian_phi_w(const Vector& w, const Vector& z, const SimulationSetup& setup) {
  check_z(z, setup);
  const auto derivs = product_derivatives(flow_factors(w, setup), setup);
  Matrix out(setup.state_dim(), setup.algebra_dim());
  for (int k = 0; k < setup.algebra_dim(); ++k) out.col(k) = derivs[k] * z;
  return out;
}

Vector cascade_drift_h(const Vector& z, const Vector& w, const SimulationSetup& setup) {
  check_z(z, setup);
  if (!setup.drift) return Vector::Zero(z.size());
  const Matrix p = product(flow_factors(w, setup), setup.state_dim());
  const Vector f = setup.drift(p * z);
  const Eigen::FullPivLU<Matrix> lu(p);
  if (!lu.isInvertible()) {
    throw std::runtime_error("cascade_drift_h: singular d(phi)/dz at w = [" +
                             [&] {
                               std::string s;
                               for (Eigen::Index i = 0; i < w.size(); ++i) s += (i ? " " : "") + format_double(w(i));
                               return s;
                             }() +
                             "]");
  }
  return lu.solve(f);
}

Matrix weight_fields(const Vector& w, const SimulationSetup& setup, const std::vector<Vector>& probes) {
  if (setup.mode == FieldMode::abelian) {
    if (w.size() != setup.algebra_dim()) throw std::invalid_argument("weight_fields: w has the wrong length");
    return Matrix::Identity(setup.algebra_dim(), setup.algebra_dim());
  }
  const auto factors = flow_factors(w, setup);
  return fields_from_probes(factors, setup, probes.empty() ? standard_probes(setup.state_dim()) : probes);
}

FieldConsistency check_weight_fields(const Vector& w, const SimulationSetup& setup, int probe_sets, Engine& rng) {
  const int n = setup.state_dim();
  const auto factors = flow_factors(w, setup);
  const Matrix reference = setup.mode == FieldMode::abelian
                               ? Matrix::Identity(setup.algebra_dim(), setup.algebra_dim())
                               : fields_from_probes(factors, setup, standard_probes(n));
  const auto derivs = product_derivatives(factors, setup);
  const Matrix p = product(factors, n);
  std::normal_distribution<double> normal;
  auto random_vector = [&] {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
  };

  FieldConsistency out;
  for (int s = 0; s < probe_sets; ++s) {
    std::vector<Vector> probes;
    for (int i = 0; i < n; ++i) probes.push_back(random_vector());
    out.max_field_deviation =
        std::max(out.max_field_deviation, max_abs(fields_from_probes(factors, setup, probes) - reference));

    const Vector z = random_vector();
    Matrix dphi_dw(n, setup.algebra_dim());
    for (int k = 0; k < setup.algebra_dim(); ++k) dphi_dw.col(k) = derivs[k] * z;
    const Vector phi = p * z;
    for (int j = 0; j < setup.algebra_dim(); ++j) {
      const Vector residual = dphi_dw * reference.col(j) - setup.generators[j] * phi;
      out.max_residual = std::max(out.max_residual, residual.cwiseAbs().maxCoeff());
    }
  }
  return out;
}

int exit_index(const std::vector<Vector>& weights, const std::vector<Vector>& activations, const Vector& x,
               double radius_w, double radius_z) {
  const int steps = static_cast<int>(weights.size()) - 1;
  for (int k = 1; k <= steps; ++k) {
    const bool outside_w = weights[k].size() > 0 && weights[k].cwiseAbs().maxCoeff() > radius_w;
    const bool outside_z = (activations[k] - x).cwiseAbs().maxCoeff() > radius_z;
    if (outside_w || outside_z) return k;
  }
  return steps + 1;
}

PairedPaths simulate_pair(const SimulationSetup& setup, const Vector& x, const TimeGrid& grid,
                          const Matrix& increments) {
  setup.validate();
  grid.validate();
  check_z(x, setup);
  const int m = setup.noise_dim();
  const int d = setup.algebra_dim();
  if (increments.rows() != grid.steps || increments.cols() != m) {
    throw std::invalid_argument("simulate_pair: increments must be steps x m");
  }

  std::vector<Matrix> noise_fields;  // g_i(x) = M_i x
  for (int i = 0; i < m; ++i) {
    Matrix mi = Matrix::Zero(setup.state_dim(), setup.state_dim());
    for (int j = 0; j < d; ++j) mi += setup.beta(i, j) * setup.generators[j];
    noise_fields.push_back(std::move(mi));
  }
  auto weight_diffusion = [&](const Vector& w, int i) -> Vector {
    if (setup.mode == FieldMode::abelian) return setup.beta.row(i).transpose();
    return weight_fields(w, setup) * setup.beta.row(i).transpose();
  };
  auto drift_f = [&](const Vector& v) -> Vector { return setup.drift ? setup.drift(v) : Vector::Zero(v.size()); };

  PairedPaths out;
  out.grid = grid;
  out.increments = increments;
  out.weights.push_back(Vector::Zero(d));
  out.activations.push_back(x);
  out.direct.push_back(x);
  const double h = grid.step();
  const double v_x = setup.readout.dot(x);
  out.tau_index = grid.steps + 1;

  for (int k = 0; k < grid.steps; ++k) {
    const Vector& w = out.weights.back();
    const Vector& z = out.activations.back();
    const Vector& xd = out.direct.back();
    const auto dv = increments.row(k);

    // Cascade weights: Stratonovich Heun, zero drift.
    std::vector<Vector> c0;
    Vector predictor = w;
    for (int i = 0; i < m; ++i) {
      c0.push_back(weight_diffusion(w, i));
      predictor += dv(i) * c0.back();
    }
    Vector w_next = w;
    for (int i = 0; i < m; ++i) w_next += (0.5 * dv(i)) * (c0[i] + weight_diffusion(predictor, i));

    // Cascade activations: RK4 on dZ = h(Z, W) dt.
    Vector z_next = z;
    if (setup.drift) {
      const Vector w_mid = 0.5 * (w + w_next);
      const Vector k1 = cascade_drift_h(z, w, setup);
      const Vector k2 = cascade_drift_h(z + (0.5 * h) * k1, w_mid, setup);
      const Vector k3 = cascade_drift_h(z + (0.5 * h) * k2, w_mid, setup);
      const Vector k4 = cascade_drift_h(z + h * k3, w_next, setup);
      z_next = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    // Direct system: Stratonovich Heun.
    const Vector a0 = drift_f(xd);
    Vector x_pred = xd + h * a0;
    for (int i = 0; i < m; ++i) x_pred += dv(i) * (noise_fields[i] * xd);
    Vector x_next = xd + (0.5 * h) * (a0 + drift_f(x_pred));
    for (int i = 0; i < m; ++i) x_next += (0.5 * dv(i)) * (noise_fields[i] * (xd + x_pred));

    if (!w_next.allFinite() || !z_next.allFinite() || !x_next.allFinite()) {
      throw std::runtime_error("simulate_pair: non-finite state at step " + std::to_string(k + 1));
    }
    out.weights.push_back(std::move(w_next));
    out.activations.push_back(std::move(z_next));
    out.direct.push_back(std::move(x_next));

    const int node = k + 1;
    const bool outside = out.weights.back().cwiseAbs().maxCoeff() > setup.radius_w ||
                         (out.activations.back() - x).cwiseAbs().maxCoeff() > setup.radius_z;
    if (outside) {
      out.tau_index = node;
      break;
    }
    const Matrix jac = jacobian_phi_z(out.weights.back(), out.activations.back(), setup);
    if (condition_number(jac) > kConditionWarning) ++out.ill_conditioned_steps;
    const double cascade = setup.readout.dot(jac * out.activations.back());
    const double direct = setup.readout.dot(out.direct.back());
    out.sup_gap = std::max(out.sup_gap, std::abs(cascade - direct));
  }
  (void)v_x;
  return out;
}

double SimulationReport::gap_quantile(double q) const {
  if (sup_gap.empty()) return 0.0;
  std::vector<double> sorted = sup_gap;
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

SimulationReport verify_simulation(const SimulationSetup& setup, const Vector& x, const TimeGrid& grid,
                                   std::uint64_t seed, std::size_t n_paths, unsigned threads, bool keep_paths) {
  setup.validate();
  if (n_paths == 0) throw std::invalid_argument("verify_simulation: need at least one path");
  std::vector<PairedPaths> paths(n_paths);
  std::vector<FieldConsistency> checks(n_paths);
  parallel_for(n_paths, threads, [&](std::size_t p) {
    const SeedRecord rec{seed, p};
    paths[p] = simulate_pair(setup, x, grid, brownian_increments(grid, setup.noise_dim(), rec));
    if (setup.mode == FieldMode::empirical) {
      Engine rng = make_engine(rec, stream_label::bridge + 1000);
      const int last = std::min(paths[p].tau_index, grid.steps) - 1;
      for (const int node : {last / 2, last}) {
        const auto c = check_weight_fields(paths[p].weights[node], setup, 10, rng);
        checks[p].max_field_deviation = std::max(checks[p].max_field_deviation, c.max_field_deviation);
        checks[p].max_residual = std::max(checks[p].max_residual, c.max_residual);
      }
    }
  });

  SimulationReport report;
  std::size_t exited = 0;
  for (std::size_t p = 0; p < n_paths; ++p) {
    if (paths[p].tau_index == 1) {
      throw std::invalid_argument("verify_simulation: path " + std::to_string(p) +
                                  " leaves the neighbourhood at its first step; enlarge radius_w/radius_z");
    }
    if (paths[p].tau_index <= grid.steps) ++exited;
    report.tau_index.push_back(paths[p].tau_index);
    report.sup_gap.push_back(paths[p].sup_gap);
    report.ill_conditioned_steps += paths[p].ill_conditioned_steps;
    report.max_field_deviation = std::max(report.max_field_deviation, checks[p].max_field_deviation);
    report.max_field_residual = std::max(report.max_field_residual, checks[p].max_residual);
  }
  report.exit_fraction = static_cast<double>(exited) / static_cast<double>(n_paths);
  if (keep_paths) report.paths = std::move(paths);
  return report;
}

void write_simulation_report_csv(std::ostream& os, const SimulationReport& report) {
  os << "path_id,tau,sup_gap\n";
  for (std::size_t p = 0; p < report.sup_gap.size(); ++p) {
    os << p << ',' << report.tau_index[p] << ',' << format_double(report.sup_gap[p]) << '\n';
  }
  os << "# summary q50=" << format_double(report.gap_quantile(0.5))
     << " q95=" << format_double(report.gap_quantile(0.95)) << " max=" << format_double(report.gap_quantile(1.0))
     << " exit_fraction=" << format_double(report.exit_fraction) << '\n';
}

namespace presets {

SimulationSetup abelian_rotation_scaling() {
  SimulationSetup s;
  Matrix rot = Matrix::Zero(3, 3);
  rot(0, 1) = 1.0;
  rot(1, 0) = -1.0;
  Matrix scale = Matrix::Zero(3, 3);
  scale.diagonal() << 0.2, 0.2, -0.5;
  s.generators = {rot, scale};
  s.beta.resize(2, 2);
  s.beta << 0.6, 0.2,
            -0.3, 0.5;
  s.readout = Vector(3);
  s.readout << 1.0, -0.5, 0.25;
  s.radius_w = 6.0;
  s.radius_z = 1.0;
  s.mode = FieldMode::abelian;
  return s;
}

SimulationSetup scalar_linear(double beta) {
  SimulationSetup s;
  s.generators = {Matrix::Identity(1, 1)};
  s.beta = Matrix::Constant(1, 1, beta);
  s.drift = [](const Vector& v) -> Vector { return -v; };
  s.readout = Vector::Ones(1);
  s.radius_w = 6.0;
  s.radius_z = 1.0;
  s.mode = FieldMode::abelian;
  return s;
}

SimulationSetup heisenberg(double scale) {
  SimulationSetup s;
  Matrix e01 = Matrix::Zero(3, 3);
  e01(0, 1) = 1.0;
  Matrix e12 = Matrix::Zero(3, 3);
  e12(1, 2) = 1.0;
  Matrix e02 = Matrix::Zero(3, 3);
  e02(0, 2) = 1.0;
  s.generators = {e01, e12, e02};
  s.beta = Matrix::Zero(2, 3);
  s.beta(0, 0) = scale;
  s.beta(1, 1) = scale;
  s.readout = Vector::Ones(3);
  s.radius_w = 6.0;
  s.radius_z = 1.0;
  s.mode = FieldMode::empirical;
  return s;
}

}  // namespace presets

}  // namespace sdecade
