#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sdecade/cascade_sim.hpp"
#include "sdecade/realization.hpp"
#include "sdecade/sde.hpp"

namespace sdecade {

/// Malformed, incomplete or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text. Blank lines and text after '#' are ignored; keys
/// are dotted (`section.name`). Duplicate keys are an error.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(std::string_view text);

struct ModelConfig {
  std::string kind = "linear";
  std::string basis = "skew";  // skew | gl
  int n = 3;
  int m = 2;
  std::vector<double> theta;   // (m+1)*d values, row-major; empty = zeros
  std::vector<double> w0;      // n*w0_cols values, row-major
  int w0_cols = 1;
  std::string scheme = "auto";  // auto | exponential | heun

  bool operator==(const ModelConfig&) const = default;
};

struct ReadoutConfig {
  std::string kind = "scalar";  // scalar | vector | two_block | cascade
  std::string sigma = "tanh";
  std::vector<double> v;

  bool operator==(const ReadoutConfig&) const = default;
};

struct PotentialConfig {
  std::string kind = "none";  // none | constant | reference
  double c = 0.0;
  std::string file;           // trajectory CSV for the reference penalty

  bool operator==(const PotentialConfig&) const = default;
};

struct SamplingConfig {
  std::uint64_t seed = 0;
  std::int64_t n_samples = 10000;
  int paths = 4;       // trajectories written by `sample`
  int threads = 0;

  bool operator==(const SamplingConfig&) const = default;
};

struct InputsConfig {
  std::vector<std::vector<double>> x;  // rows
  std::string file;                    // CSV matrix of extra rows
  int sphere = 0;                      // extra uniform points on the unit sphere

  bool operator==(const InputsConfig&) const = default;
};

struct FitConfig {
  std::string target = "neuron";   // neuron | file | self
  std::vector<double> w_target;    // neuron target weights
  std::vector<double> theta_star;  // self-realizable target parameters
  std::vector<double> theta_init;  // empty = model.theta
  std::string file;                // dataset CSV: x_0..x_{q-1},y
  int train_size = 500;
  int test_size = 500;
  int iterations = 100;
  std::int64_t n_samples = 1000;   // paths per loss evaluation
  std::string optimizer = "gd";    // gd | spsa
  double step = 1.0;
  double fd_eps = 1e-3;
  double spsa_a = 0.5;
  double spsa_c = 0.05;
  double spsa_big_a = 10.0;
  double spsa_alpha = 0.602;
  double spsa_gamma = 0.101;
  double min_ratio = 1.0;          // pass when initial/final train loss >= min_ratio

  bool operator==(const FitConfig&) const = default;
};

struct FkConfig {
  double x = 1.0;
  std::optional<double> w_min;     // default: w0 - 6 sd(W_1) from the Monte Carlo run
  std::optional<double> w_max;
  int nodes = 801;
  int time_steps = 800;
  double width_sd = 6.0;
  double tolerance = 1e-3;         // added to 3 stderr

  bool operator==(const FkConfig&) const = default;
};

struct CascadeConfig {
  std::string preset = "abelian";  // abelian | scalar | heisenberg
  std::vector<double> x;
  int paths = 100;
  double beta = 0.5;               // scalar preset coefficient, heisenberg scale
  std::optional<double> radius_w;
  std::optional<double> radius_z;
  double tolerance = 2e-3;
  double field_tolerance = 1e-8;

  bool operator==(const CascadeConfig&) const = default;
};

struct BracketsConfig {
  int n = 1;
  std::string sigma = "cubic";
  std::vector<double> w;
  std::vector<double> w2;
  int k_max = 3;
  int points = 11;
  double z_min = -1.0;
  double z_max = 1.0;

  bool operator==(const BracketsConfig&) const = default;
};

struct ExperimentConfig {
  ModelConfig model;
  int grid_steps = 256;
  ReadoutConfig readout;
  PotentialConfig h;
  SamplingConfig sampling;
  InputsConfig inputs;
  FitConfig fit;
  FkConfig fk;
  CascadeConfig cascade;
  BracketsConfig brackets;
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

/// Schema-validated conversion. Unknown keys, malformed values and
/// out-of-range settings raise ConfigError. Relative file paths are resolved
/// against `base_dir` and must exist.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key with its value; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

/// One line per key: name, default and meaning.
std::string config_schema_help();

// Builders from a validated configuration.
SdeModel build_model(const ExperimentConfig& config);
SdeModel build_model(const ExperimentConfig& config, const ThetaParams& theta);
MatrixBasis build_basis(const ModelConfig& model);
ThetaParams build_theta(const ModelConfig& model, const std::vector<double>& values);
ReadoutSpec build_readout(const ExperimentConfig& config);
PotentialFn build_potential(const ExperimentConfig& config);
Scheme build_scheme(const ModelConfig& model);
SimulationSetup build_cascade_setup(const CascadeConfig& cascade);

}  // namespace sdecade
