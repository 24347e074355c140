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

#ifndef MARS_LBFGS_HPP_
#define MARS_LBFGS_HPP_

#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace mars {

// Writes the gradient into `gradient` and returns the objective value.
using DifferentiableFunction =
    std::function<double(std::span<const double> x, std::span<double> gradient)>;

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;  // on the infinity norm
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_search_evaluations = 40;
  bool record_trace = false;
};

enum class LbfgsStatus {
  kGradientTolerance,
  // No step along the search direction lowers the objective any further.
  kStalled,
  kMaxIterations,
  kNonFinite,
};

std::string_view ToString(LbfgsStatus status);

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStatus status = LbfgsStatus::kMaxIterations;
  // Objective after each accepted iteration, starting with the initial value.
  std::vector<double> trace;

  bool converged() const {
    return status == LbfgsStatus::kGradientTolerance ||
           status == LbfgsStatus::kStalled;
  }
};

// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom with
// cubic interpolation).
LbfgsResult MinimizeLbfgs(const DifferentiableFunction& f,
                          std::vector<double> x0,
                          const LbfgsOptions& options = {});

}  // namespace mars

#endif  // MARS_LBFGS_HPP_
