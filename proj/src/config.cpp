#include "sdecade/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "sdecade/activation.hpp"
#include "sdecade/csv.hpp"
#include "sdecade/lie.hpp"

namespace sdecade {

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw ConfigError(key.empty() ? what : key + ": " + what);
}

template <class Int>
Int parse_integer(const std::string& key, const std::string& text) {
  Int value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) fail(key, "expected an integer, got '" + text + "'");
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    const double v = parse_double(text);
    if (!std::isfinite(v)) fail(key, "value must be finite");
    return v;
  } catch (const std::invalid_argument&) {
    fail(key, "expected a number, got '" + text + "'");
  }
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ',')) out.push_back(parse_real(key, trim(item)));
  return out;
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : "") + format_double(values[i]);
  return out;
}

// One schema entry: how to read the value into the config and write it back.
struct Field {
  std::string key;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&, const std::filesystem::path&)> read;
  std::function<std::string(const ExperimentConfig&)> write;
};

template <class Get>
Field int_field(std::string key, std::string help, Get get) {
  return {key, std::move(help),
          [get, key](ExperimentConfig& c, const std::string& v, const std::filesystem::path&) {
            auto& ref = get(c);
            ref = parse_integer<std::remove_reference_t<decltype(ref)>>(key, v);
          },
          [get](const ExperimentConfig& c) { return std::to_string(get(const_cast<ExperimentConfig&>(c))); }};
}

template <class Get>
Field real_field(std::string key, std::string help, Get get) {
  return {key, std::move(help),
          [get, key](ExperimentConfig& c, const std::string& v, const std::filesystem::path&) {
            get(c) = parse_real(key, v);
          },
          [get](const ExperimentConfig& c) { return format_double(get(const_cast<ExperimentConfig&>(c))); }};
}

template <class Get>
Field optional_real_field(std::string key, std::string help, Get get) {
  return {key, std::move(help),
          [get, key](ExperimentConfig& c, const std::string& v, const std::filesystem::path&) {
            if (v == "auto") {
              get(c).reset();
            } else {
              get(c) = parse_real(key, v);
            }
          },
          [get](const ExperimentConfig& c) {
            const auto& o = get(const_cast<ExperimentConfig&>(c));
            return o ? format_double(*o) : std::string("auto");
          }};
}

template <class Get>
Field string_field(std::string key, std::string help, Get get, std::set<std::string> allowed = {}) {
  return {key, std::move(help),
          [get, key, allowed](ExperimentConfig& c, const std::string& v, const std::filesystem::path&) {
            if (!allowed.empty() && !allowed.count(v)) {
              std::string options;
              for (const auto& a : allowed) options += (options.empty() ? "" : " | ") + a;
              fail(key, "'" + v + "' is not one of " + options);
            }
            get(c) = v;
          },
          [get](const ExperimentConfig& c) { return get(const_cast<ExperimentConfig&>(c)); }};
}

template <class Get>
Field path_field(std::string key, std::string help, Get get) {
  return {key, std::move(help),
          [get, key](ExperimentConfig& c, const std::string& v, const std::filesystem::path& base) {
            if (v.empty()) {
              get(c).clear();
              return;
            }
            std::filesystem::path p(v);
            if (p.is_relative() && !base.empty()) p = base / p;
            if (!std::filesystem::exists(p)) fail(key, "file '" + p.string() + "' does not exist");
            get(c) = p.lexically_normal().string();
          },
          [get](const ExperimentConfig& c) { return get(const_cast<ExperimentConfig&>(c)); }};
}

template <class Get>
Field list_field(std::string key, std::string help, Get get) {
  return {key, std::move(help),
          [get, key](ExperimentConfig& c, const std::string& v, const std::filesystem::path&) {
            get(c) = parse_list(key, v);
          },
          [get](const ExperimentConfig& c) { return join(get(const_cast<ExperimentConfig&>(c))); }};
}

const std::vector<Field>& schema() {
  using C = ExperimentConfig;
  static const std::vector<Field> fields = {
      string_field("model.kind", "model family; only 'linear' (dW = A W dt + sum_i B_i W o dV^i)",
                   [](C& c) -> auto& { return c.model.kind; }, {"linear"}),
      string_field("model.basis", "Lie algebra basis: skew (so(n)) or gl (all n x n matrices)",
                   [](C& c) -> auto& { return c.model.basis; }, {"skew", "gl"}),
      int_field("model.n", "matrix dimension of the generators", [](C& c) -> auto& { return c.model.n; }),
      int_field("model.m", "noise dimension", [](C& c) -> auto& { return c.model.m; }),
      list_field("model.theta", "(m+1)*d coefficients, row 0 = drift; empty = zeros",
                 [](C& c) -> auto& { return c.model.theta; }),
      list_field("model.w0", "initial state, row-major n x w0_cols; empty = e_0 or the identity",
                 [](C& c) -> auto& { return c.model.w0; }),
      int_field("model.w0_cols", "columns of the state (1 = vector state)",
                [](C& c) -> auto& { return c.model.w0_cols; }),
      string_field("model.scheme", "integrator: auto | exponential | heun",
                   [](C& c) -> auto& { return c.model.scheme; }, {"auto", "exponential", "heun"}),
      int_field("grid.K", "time steps on [0, 1]", [](C& c) -> auto& { return c.grid_steps; }),
      string_field("readout.kind", "scalar | vector | two_block | cascade",
                   [](C& c) -> auto& { return c.readout.kind; }, {"scalar", "vector", "two_block", "cascade"}),
      string_field("readout.sigma", "activation: tanh | identity | cubic",
                   [](C& c) -> auto& { return c.readout.sigma; }),
      list_field("readout.v", "readout vector (vector and cascade readouts)",
                 [](C& c) -> auto& { return c.readout.v; }),
      string_field("h.kind", "potential: none | constant | reference",
                   [](C& c) -> auto& { return c.h.kind; }, {"none", "constant", "reference"}),
      real_field("h.c", "value of the constant potential", [](C& c) -> auto& { return c.h.c; }),
      path_field("h.file", "reference trajectory CSV for h(w,t) = -|w - xi_t|^2",
                 [](C& c) -> auto& { return c.h.file; }),
      int_field("sampling.seed", "master seed", [](C& c) -> auto& { return c.sampling.seed; }),
      int_field("sampling.N", "Monte Carlo paths", [](C& c) -> auto& { return c.sampling.n_samples; }),
      int_field("sampling.paths", "trajectories written by `sample`", [](C& c) -> auto& { return c.sampling.paths; }),
      int_field("sampling.threads", "worker threads (0 = all cores); never changes results",
                [](C& c) -> auto& { return c.sampling.threads; }),
      {"inputs.x", "input rows for `realize`, ';' between rows, ',' between entries",
       [](C& c, const std::string& v, const std::filesystem::path&) {
         c.inputs.x.clear();
         if (trim(v).empty()) return;
         for (const auto& row : split(v, ';')) c.inputs.x.push_back(parse_list("inputs.x", row));
       },
       [](const C& c) {
         std::string out;
         for (std::size_t i = 0; i < c.inputs.x.size(); ++i) out += (i ? "; " : "") + join(c.inputs.x[i]);
         return out;
       }},
      path_field("inputs.file", "CSV of extra input rows", [](C& c) -> auto& { return c.inputs.file; }),
      int_field("inputs.sphere", "extra uniform points on the unit sphere",
                [](C& c) -> auto& { return c.inputs.sphere; }),
      string_field("fit.target", "neuron (tanh(w^T x)) | file | self (model at theta_star)",
                   [](C& c) -> auto& { return c.fit.target; }, {"neuron", "file", "self"}),
      list_field("fit.w_target", "target neuron weights", [](C& c) -> auto& { return c.fit.w_target; }),
      list_field("fit.theta_star", "parameters generating a self-realizable target",
                 [](C& c) -> auto& { return c.fit.theta_star; }),
      list_field("fit.theta_init", "starting parameters; empty = model.theta",
                 [](C& c) -> auto& { return c.fit.theta_init; }),
      path_field("fit.file", "dataset CSV with columns x_0..x_{q-1},y", [](C& c) -> auto& { return c.fit.file; }),
      int_field("fit.train_size", "training pairs", [](C& c) -> auto& { return c.fit.train_size; }),
      int_field("fit.test_size", "held-out pairs", [](C& c) -> auto& { return c.fit.test_size; }),
      int_field("fit.iterations", "optimizer iterations", [](C& c) -> auto& { return c.fit.iterations; }),
      int_field("fit.N", "paths per loss evaluation", [](C& c) -> auto& { return c.fit.n_samples; }),
      string_field("fit.optimizer", "gd (central differences, backtracking) | spsa",
                   [](C& c) -> auto& { return c.fit.optimizer; }, {"gd", "spsa"}),
      real_field("fit.step", "initial gradient-descent step", [](C& c) -> auto& { return c.fit.step; }),
      real_field("fit.fd_eps", "central-difference half width", [](C& c) -> auto& { return c.fit.fd_eps; }),
      real_field("fit.spsa_a", "SPSA gain a", [](C& c) -> auto& { return c.fit.spsa_a; }),
      real_field("fit.spsa_c", "SPSA perturbation c", [](C& c) -> auto& { return c.fit.spsa_c; }),
      real_field("fit.spsa_A", "SPSA stability constant A", [](C& c) -> auto& { return c.fit.spsa_big_a; }),
      real_field("fit.spsa_alpha", "SPSA gain decay", [](C& c) -> auto& { return c.fit.spsa_alpha; }),
      real_field("fit.spsa_gamma", "SPSA perturbation decay", [](C& c) -> auto& { return c.fit.spsa_gamma; }),
      real_field("fit.min_ratio", "pass when initial / final training loss reaches this",
                 [](C& c) -> auto& { return c.fit.min_ratio; }),
      real_field("fk.x", "scalar input of the 1-D benchmark", [](C& c) -> auto& { return c.fk.x; }),
      optional_real_field("fk.w_min", "left end of the PDE domain; auto = w0 - width_sd * sd(W_1)",
                          [](C& c) -> auto& { return c.fk.w_min; }),
      optional_real_field("fk.w_max", "right end of the PDE domain; auto = w0 + width_sd * sd(W_1)",
                          [](C& c) -> auto& { return c.fk.w_max; }),
      int_field("fk.nodes", "spatial nodes", [](C& c) -> auto& { return c.fk.nodes; }),
      int_field("fk.time_steps", "Crank-Nicolson steps", [](C& c) -> auto& { return c.fk.time_steps; }),
      real_field("fk.width_sd", "half width of the automatic domain in standard deviations",
                 [](C& c) -> auto& { return c.fk.width_sd; }),
      real_field("fk.tolerance", "PDE truncation allowance added to 3 stderr",
                 [](C& c) -> auto& { return c.fk.tolerance; }),
      string_field("cascade.preset", "abelian | scalar | heisenberg",
                   [](C& c) -> auto& { return c.cascade.preset; }, {"abelian", "scalar", "heisenberg"}),
      list_field("cascade.x", "initial state; empty = preset default", [](C& c) -> auto& { return c.cascade.x; }),
      int_field("cascade.paths", "shared-noise path pairs", [](C& c) -> auto& { return c.cascade.paths; }),
      real_field("cascade.beta", "scalar preset coefficient / heisenberg scale",
                 [](C& c) -> auto& { return c.cascade.beta; }),
      optional_real_field("cascade.radius_w", "box radius for w; auto = preset",
                          [](C& c) -> auto& { return c.cascade.radius_w; }),
      optional_real_field("cascade.radius_z", "box radius for z - x; auto = preset",
                          [](C& c) -> auto& { return c.cascade.radius_z; }),
      real_field("cascade.tolerance", "bound on the 0.95 quantile of the sup gap",
                 [](C& c) -> auto& { return c.cascade.tolerance; }),
      real_field("cascade.field_tolerance", "bound on the probe dependence of b_j (empirical mode)",
                 [](C& c) -> auto& { return c.cascade.field_tolerance; }),
      int_field("brackets.n", "field dimension", [](C& c) -> auto& { return c.brackets.n; }),
      string_field("brackets.sigma", "activation of both fields", [](C& c) -> auto& { return c.brackets.sigma; }),
      list_field("brackets.w", "weights of g, row-major n x n", [](C& c) -> auto& { return c.brackets.w; }),
      list_field("brackets.w2", "weights of g', row-major n x n", [](C& c) -> auto& { return c.brackets.w2; }),
      int_field("brackets.k_max", "deepest bracket (at most 4)", [](C& c) -> auto& { return c.brackets.k_max; }),
      int_field("brackets.points", "sample points per coordinate line", [](C& c) -> auto& { return c.brackets.points; }),
      real_field("brackets.z_min", "first sample point", [](C& c) -> auto& { return c.brackets.z_min; }),
      real_field("brackets.z_max", "last sample point", [](C& c) -> auto& { return c.brackets.z_max; }),
      string_field("output.dir", "directory for CSV outputs", [](C& c) -> auto& { return c.output_dir; }),
  };
  return fields;
}

int algebra_dim(const ModelConfig& m) { return m.basis == "skew" ? m.n * (m.n - 1) / 2 : m.n * m.n; }

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) fail(key, what);
}

void validate(const ExperimentConfig& c) {
  const auto& m = c.model;
  require(m.n >= 1, "model.n", "must be >= 1");
  require(m.m >= 0, "model.m", "must be >= 0");
  require(m.w0_cols >= 1, "model.w0_cols", "must be >= 1");
  const auto k = static_cast<std::size_t>((m.m + 1) * algebra_dim(m));
  require(m.theta.empty() || m.theta.size() == k, "model.theta",
          "needs (m+1)*d = " + std::to_string(k) + " values, got " + std::to_string(m.theta.size()));
  require(m.w0.empty() || m.w0.size() == static_cast<std::size_t>(m.n * m.w0_cols), "model.w0",
          "needs n*w0_cols = " + std::to_string(m.n * m.w0_cols) + " values");
  require(!m.w0.empty() || m.w0_cols == 1 || m.w0_cols == m.n, "model.w0",
          "no default for a non-square matrix state");
  require(c.grid_steps >= 1, "grid.K", "must be >= 1");
  try {
    (void)Activation::from_name(c.readout.sigma);
    (void)Activation::from_name(c.brackets.sigma);
  } catch (const std::invalid_argument& e) {
    fail("", e.what());
  }
  require(c.h.kind != "reference" || !c.h.file.empty(), "h.file", "required when h.kind = reference");
  require(c.sampling.n_samples >= 2, "sampling.N", "must be >= 2");
  require(c.sampling.paths >= 1, "sampling.paths", "must be >= 1");
  require(c.sampling.threads >= 0, "sampling.threads", "must be >= 0");
  for (const auto& row : c.inputs.x) require(!row.empty(), "inputs.x", "empty row");
  require(c.inputs.sphere >= 0, "inputs.sphere", "must be >= 0");

  const auto& f = c.fit;
  require(f.train_size >= 1, "fit.train_size", "must be >= 1");
  require(f.test_size >= 0, "fit.test_size", "must be >= 0");
  require(f.iterations >= 0, "fit.iterations", "must be >= 0");
  require(f.n_samples >= 2, "fit.N", "must be >= 2");
  require(f.step > 0.0, "fit.step", "must be positive");
  require(f.fd_eps > 0.0, "fit.fd_eps", "must be positive");
  require(f.spsa_a > 0.0 && f.spsa_c > 0.0 && f.spsa_big_a >= 0.0, "fit.spsa_*", "gains must be positive");
  require(f.min_ratio > 0.0, "fit.min_ratio", "must be positive");
  require(f.theta_init.empty() || f.theta_init.size() == k, "fit.theta_init", "needs (m+1)*d values");
  require(f.theta_star.empty() || f.theta_star.size() == k, "fit.theta_star", "needs (m+1)*d values");
  require(f.target != "self" || !f.theta_star.empty(), "fit.theta_star", "required when fit.target = self");
  require(f.target != "file" || !f.file.empty(), "fit.file", "required when fit.target = file");

  require(c.fk.nodes >= 51, "fk.nodes", "must be >= 51");
  require(c.fk.time_steps >= 1, "fk.time_steps", "must be >= 1");
  require(c.fk.width_sd > 0.0, "fk.width_sd", "must be positive");
  require(c.fk.tolerance >= 0.0, "fk.tolerance", "must be non-negative");

  require(c.cascade.paths >= 1, "cascade.paths", "must be >= 1");
  require(c.cascade.tolerance > 0.0, "cascade.tolerance", "must be positive");
  require(c.cascade.field_tolerance > 0.0, "cascade.field_tolerance", "must be positive");
  require(!c.cascade.radius_w || *c.cascade.radius_w > 0.0, "cascade.radius_w", "must be positive");
  require(!c.cascade.radius_z || *c.cascade.radius_z > 0.0, "cascade.radius_z", "must be positive");

  const auto& b = c.brackets;
  require(b.n >= 1, "brackets.n", "must be >= 1");
  require(b.k_max >= 0 && b.k_max <= 4, "brackets.k_max", "must be in [0, 4]");
  require(b.points >= 2, "brackets.points", "must be >= 2");
  require(b.z_max > b.z_min, "brackets.z_max", "must exceed brackets.z_min");
  const auto nn = static_cast<std::size_t>(b.n * b.n);
  require(b.w.size() == nn, "brackets.w", "needs n*n = " + std::to_string(nn) + " values");
  require(b.w2.size() == nn, "brackets.w2", "needs n*n = " + std::to_string(nn) + " values");
  require(!c.output_dir.empty(), "output.dir", "must not be empty");
}

Matrix row_major(const std::vector<double>& values, Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  }
  return out;
}

Vector to_vector(const std::vector<double>& values) {
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) fail("", "line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    const std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) fail("", "line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) fail(key, "duplicate key (line " + std::to_string(line_no) + ")");
  }
  return out;
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  const KeyValues kv = parse_key_values(text);
  ExperimentConfig config;
  // The bracket defaults depend on n, so they are filled after reading.
  config.brackets.w.clear();
  config.brackets.w2.clear();
  std::set<std::string> seen;
  for (const auto& field : schema()) {
    const auto it = kv.find(field.key);
    if (it == kv.end()) continue;
    field.read(config, it->second, base_dir);
    seen.insert(field.key);
  }
  for (const auto& [key, value] : kv) {
    if (!seen.count(key)) fail(key, "unknown key");
  }
  if (!kv.count("brackets.w") && !kv.count("brackets.w2") && config.brackets.n == 1) {
    config.brackets.w = {1.0};
    config.brackets.w2 = {2.0};
  }
  validate(config);
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.parent_path());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& field : schema()) out += field.key + " = " + field.write(config) + "\n";
  return out;
}

std::string config_schema_help() {
  std::string out;
  const ExperimentConfig defaults = parse_config("");
  for (const auto& field : schema()) {
    out += field.key + " (default: " + field.write(defaults) + ")\n    " + field.help + "\n";
  }
  return out;
}

MatrixBasis build_basis(const ModelConfig& model) {
  return model.basis == "skew" ? skew_basis(model.n) : gl_basis(model.n);
}

ThetaParams build_theta(const ModelConfig& model, const std::vector<double>& values) {
  const int d = algebra_dim(model);
  if (values.empty()) return ThetaParams::zeros(model.m, d);
  if (values.size() != static_cast<std::size_t>((model.m + 1) * d)) {
    throw ConfigError("model.theta: expected " + std::to_string((model.m + 1) * d) + " values ((m + 1) x " +
                      std::to_string(d) + "), got " + std::to_string(values.size()));
  }
  return ThetaParams::from_flat(model.m, d, values);
}

SdeModel build_model(const ExperimentConfig& config) {
  return build_model(config, build_theta(config.model, config.model.theta));
}

SdeModel build_model(const ExperimentConfig& config, const ThetaParams& theta) {
  const auto& m = config.model;
  Matrix w0;
  if (!m.w0.empty()) {
    w0 = row_major(m.w0, m.n, m.w0_cols);
  } else if (m.w0_cols == 1) {
    w0 = Matrix::Zero(m.n, 1);
    w0(0, 0) = 1.0;
  } else {
    w0 = Matrix::Identity(m.n, m.n);
  }
  return SdeModel::linear(theta, build_basis(m), std::move(w0));
}

Scheme build_scheme(const ModelConfig& model) {
  if (model.scheme == "exponential") return Scheme::exponential;
  if (model.scheme == "heun") return Scheme::heun;
  return Scheme::automatic;
}

ReadoutSpec build_readout(const ExperimentConfig& config) {
  const auto& r = config.readout;
  const Activation sigma = Activation::from_name(r.sigma);
  if (r.kind == "scalar") return ReadoutSpec(ScalarNeuron{sigma});
  if (r.kind == "two_block") return ReadoutSpec(TwoBlock{sigma});
  if (r.v.empty()) throw ConfigError("readout.v: required for readout.kind = " + r.kind);
  if (r.kind == "vector") return ReadoutSpec(VectorNeuron{to_vector(r.v), sigma});
  return ReadoutSpec(CascadeLinear{to_vector(r.v), sigma});
}

PotentialFn build_potential(const ExperimentConfig& config) {
  if (config.h.kind == "constant") {
    const double c = config.h.c;
    return [c](const Matrix&, double) { return c; };
  }
  if (config.h.kind == "reference") {
    std::ifstream in(config.h.file);
    if (!in) throw ConfigError("h.file: cannot read '" + config.h.file + "'");
    try {
      return reference_penalty(read_trajectory_csv(in));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("h.file: ") + e.what());
    }
  }
  return {};
}

SimulationSetup build_cascade_setup(const CascadeConfig& cascade) {
  SimulationSetup setup = cascade.preset == "abelian"  ? presets::abelian_rotation_scaling()
                          : cascade.preset == "scalar" ? presets::scalar_linear(cascade.beta)
                                                       : presets::heisenberg(cascade.beta);
  if (cascade.radius_w) setup.radius_w = *cascade.radius_w;
  if (cascade.radius_z) setup.radius_z = *cascade.radius_z;
  return setup;
}

}  // namespace sdecade
