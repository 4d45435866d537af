#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sdecade/cascade_sim.hpp"
#include "sdecade/commands.hpp"
#include "sdecade/config.hpp"
#include "sdecade/fk_pde.hpp"
#include "sdecade/lie.hpp"
#include "sdecade/linalg.hpp"
#include "sdecade/realization.hpp"

namespace py = pybind11;
using namespace sdecade;

namespace {

MatrixBasis basis_by_name(const std::string& name, int n) {
  if (name == "skew") return skew_basis(n);
  if (name == "gl") return gl_basis(n);
  throw std::invalid_argument("basis must be 'skew' or 'gl'");
}

SimulationSetup preset_by_name(const std::string& name, double beta) {
  if (name == "abelian") return presets::abelian_rotation_scaling();
  if (name == "scalar") return presets::scalar_linear(beta);
  if (name == "heisenberg") return presets::heisenberg(beta);
  throw std::invalid_argument("unknown preset '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lie-algebraic SDE weight models: sampling, realization and checks";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("expm", [](const Matrix& a) { return expm(a); }, py::arg("a"));

  m.def(
      "run_command",
      [](const std::string& name, const std::string& config_path, std::optional<std::string> seed,
         std::optional<std::string> out) {
        std::ostringstream log, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_command_file(name, config_path, seed ? &*seed : nullptr, out ? &*out : nullptr, log, err);
        }
        return py::make_tuple(code, log.str() + err.str());
      },
      py::arg("name"), py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
      "Runs a subcommand on a config file; returns (exit_code, report).");

  m.def("command_names", &command_names);
  m.def("schema_help", &config_schema_help);
  m.def(
      "normalize_config", [](const std::string& text) { return serialize_config(parse_config(text)); },
      py::arg("text"), "Parses a config and writes every key back out.");

  m.def(
      "realize_linear",
      [](const Matrix& theta, const std::string& basis, const Matrix& w0, const Vector& x, const std::string& sigma,
         std::size_t samples, int steps, std::uint64_t seed) {
        const auto b = basis_by_name(basis, static_cast<int>(w0.rows()));
        const auto model = SdeModel::linear(ThetaParams(theta), b, w0);
        ReadoutSpec readout(ScalarNeuron{Activation::from_name(sigma)});
        RealizationEstimate est;
        {
          py::gil_scoped_release release;
          est = realize_mc(model, readout, {}, x, samples, TimeGrid::unit(steps), seed);
        }
        return py::make_tuple(est.mean, est.std_error);
      },
      py::arg("theta"), py::arg("basis"), py::arg("w0"), py::arg("x"), py::arg("sigma") = "tanh",
      py::arg("samples") = 10000, py::arg("steps") = 256, py::arg("seed") = 0,
      "Monte Carlo E[sigma(W_1^T x)] for a linear model; returns (mean, stderr).");

  m.def(
      "iterated_ad",
      [](const Matrix& w, const Matrix& w2, int k, const Vector& z, const std::string& sigma) {
        const auto act = Activation::from_name(sigma);
        return iterated_ad(NeuralField{w, act}, NeuralField{w2, act}, k, z);
      },
      py::arg("w"), py::arg("w2"), py::arg("k"), py::arg("z"), py::arg("sigma") = "tanh");

  m.def(
      "fk_linear_1d",
      [](double a, double b, double w0, double x, const std::string& sigma, double w_min, double w_max, int nodes,
         int time_steps) {
        const auto model =
            SdeModel::linear(ThetaParams((Matrix(2, 1) << a, b).finished()), gl_basis(1), Matrix::Constant(1, 1, w0));
        return solve_fk(GeneratorCoefficients1D::from_model(model), {}, Activation::from_name(sigma), x, w0,
                        Grid1D{w_min, w_max, nodes, time_steps, 1.0});
      },
      py::arg("a"), py::arg("b"), py::arg("w0"), py::arg("x"), py::arg("sigma") = "tanh", py::arg("w_min") = -3.0,
      py::arg("w_max") = 5.0, py::arg("nodes") = 801, py::arg("time_steps") = 800,
      "PDE value u(w0, 1) for dW = a W dt + b W o dV.");

  m.def(
      "cascade_gaps",
      [](const std::string& preset, const Vector& x, int steps, std::size_t paths, std::uint64_t seed, double beta) {
        const auto setup = preset_by_name(preset, beta);
        SimulationReport rep;
        {
          py::gil_scoped_release release;
          rep = verify_simulation(setup, x, TimeGrid::unit(steps), seed, paths);
        }
        py::dict out;
        out["sup_gap"] = rep.sup_gap;
        out["tau_index"] = rep.tau_index;
        out["q95"] = rep.gap_quantile(0.95);
        out["exit_fraction"] = rep.exit_fraction;
        out["max_field_deviation"] = rep.max_field_deviation;
        return out;
      },
      py::arg("preset"), py::arg("x"), py::arg("steps") = 512, py::arg("paths") = 100, py::arg("seed") = 0,
      py::arg("beta") = 0.5);
}
