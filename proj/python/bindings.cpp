/*
 * Copyright 2026 The MARS Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "mars/error.hpp"
#include "mars/laws.hpp"
#include "mars/search.hpp"
#include "mars/simulator.hpp"
#include "mars/telemetry.hpp"

namespace py = pybind11;
using namespace mars;

namespace {

FitConfig MakeFitConfig(double huber_delta, int max_starts) {
  FitConfig config;
  config.huber_delta = huber_delta;
  config.max_starts = max_starts;
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Scaling-law fitting and rank search for multimodal LoRA";

  auto base = py::register_exception<Error>(m, "MarsError", PyExc_RuntimeError);
  py::register_exception<IdentifiabilityError>(m, "IdentifiabilityError", base);
  py::register_exception<FitFailure>(m, "FitFailure", base);
  py::register_exception<NumericRangeError>(m, "NumericRangeError", base);
  py::register_exception<ArgumentError>(m, "ArgumentError", base);
  py::register_exception<ValidationError>(m, "ValidationError", base);

  py::enum_<Module>(m, "Module")
      .value("VE", Module::kVisionEncoder)
      .value("LLM", Module::kLlm);

  py::class_<LawPCoefficients>(m, "LawP")
      .def(py::init([](double A, double alpha_m, double alpha_l, double beta, double E) {
             return LawPCoefficients{A, alpha_m, alpha_l, beta, E};
           }),
           py::arg("A"), py::arg("alpha_m"), py::arg("alpha_l"), py::arg("beta"), py::arg("E"))
      .def_readwrite("A", &LawPCoefficients::A)
      .def_readwrite("alpha_m", &LawPCoefficients::alpha_m)
      .def_readwrite("alpha_l", &LawPCoefficients::alpha_l)
      .def_readwrite("beta", &LawPCoefficients::beta)
      .def_readwrite("E", &LawPCoefficients::E)
      .def("predict", [](const LawPCoefficients& c, double r_ve, double r_llm,
                         double d_f) { return PredictLoss(c, r_ve, r_llm, d_f); },
           py::arg("r_ve"), py::arg("r_llm"), py::arg("d_f"))
      .def("__repr__", [](const LawPCoefficients& c) {
        std::ostringstream s;
        s.precision(17);
        s << "LawP(A=" << c.A << ", alpha_m=" << c.alpha_m << ", alpha_l=" << c.alpha_l
          << ", beta=" << c.beta << ", E=" << c.E << ")";
        return s.str();
      });

  py::class_<LawCCoefficients>(m, "LawC")
      .def(py::init([](Module module, double k, double gamma, double delta, double E) {
             return LawCCoefficients{module, k, gamma, delta, E};
           }),
           py::arg("module"), py::arg("k"), py::arg("gamma"), py::arg("delta"), py::arg("E"))
      .def_readwrite("module", &LawCCoefficients::module)
      .def_readwrite("k", &LawCCoefficients::k)
      .def_readwrite("gamma", &LawCCoefficients::gamma)
      .def_readwrite("delta", &LawCCoefficients::delta)
      .def_readwrite("E", &LawCCoefficients::E)
      .def("predict", [](const LawCCoefficients& c, double rank,
                         double d_f) { return PredictConvergence(c, rank, d_f); },
           py::arg("rank"), py::arg("d_f"));

  m.def("balanced_ve_rank", &BalancedVeRank, py::arg("law_c_ve"), py::arg("law_c_llm"),
        py::arg("r_llm"), py::arg("d_target"),
        "Continuous VE rank that balances convergence times, or None on fallback.");

  m.def(
      "detect_convergence",
      [](const std::vector<std::pair<std::int64_t, double>>& points, int patience,
         double min_delta) {
        Series series;
        for (const auto& [step, value] : points) series.push_back({step, value});
        const auto v = DetectConvergence(series, patience, min_delta);
        return std::make_tuple(v.converged, v.t_steps, v.best_value);
      },
      py::arg("points"), py::arg("patience") = kDefaultPatience, py::arg("min_delta") = 0.0,
      "(step, value) pairs -> (converged, t_steps, best_value).");

  m.def(
      "fit_law_p",
      [](const std::vector<std::tuple<int, int, std::int64_t, double>>& rows,
         double huber_delta, int max_starts) {
        std::vector<PerfObservation> data;
        for (const auto& [r_ve, r_llm, d_eff, ppl] : rows) {
          data.push_back({{r_ve, r_llm}, d_eff, ppl});
        }
        py::gil_scoped_release release;
        return FitLawP(data, MakeFitConfig(huber_delta, max_starts)).coefficients;
      },
      py::arg("rows"), py::arg("huber_delta") = 1e-3, py::arg("max_starts") = 243,
      "Fit the performance law to (r_ve, r_llm, d_eff, perplexity) rows.");

  m.def(
      "fit_law_c",
      [](const std::vector<std::tuple<int, std::int64_t, double>>& rows, Module module,
         double huber_delta, int max_starts) {
        std::vector<ConvObservation> data;
        for (const auto& [rank, d_eff, t] : rows) data.push_back({rank, d_eff, t});
        py::gil_scoped_release release;
        return FitLawC(data, module, MakeFitConfig(huber_delta, max_starts)).coefficients;
      },
      py::arg("rows"), py::arg("module"), py::arg("huber_delta") = 1e-3,
      py::arg("max_starts") = 81,
      "Fit a convergence law to (rank, d_eff, t_steps) rows.");

  m.def(
      "s1_true_perplexity",
      [](int r_ve, int r_llm, double d_f) {
        return TruePerplexity(ScenarioS1(), r_ve, r_llm, d_f);
      },
      py::arg("r_ve"), py::arg("r_llm"), py::arg("d_f"),
      "Noiseless simulator perplexity under the reference scenario.");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "mars");
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::Run(args, out, err);
        }
        return std::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in process: (exit code, stdout, stderr).");
}
