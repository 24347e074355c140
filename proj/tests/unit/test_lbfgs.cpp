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

#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "mars/error.hpp"
#include "mars/lbfgs.hpp"

namespace mars {
namespace {

double Rosenbrock(std::span<const double> x, std::span<double> g) {
  const double a = 1.0 - x[0];
  const double b = x[1] - x[0] * x[0];
  g[0] = -2.0 * a - 400.0 * x[0] * b;
  g[1] = 200.0 * b;
  return a * a + 100.0 * b * b;
}

TEST(Lbfgs, SolvesRosenbrock) {
  LbfgsOptions options;
  options.record_trace = true;
  const auto r = MinimizeLbfgs(Rosenbrock, {-1.2, 1.0}, options);
  EXPECT_EQ(r.status, LbfgsStatus::kGradientTolerance);
  EXPECT_NEAR(r.x[0], 1.0, 1e-7);
  EXPECT_NEAR(r.x[1], 1.0, 1e-7);
  EXPECT_LT(r.iterations, 100);
  ASSERT_EQ(r.trace.size(), static_cast<std::size_t>(r.iterations) + 1);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
}

TEST(Lbfgs, IllConditionedQuadratic) {
  const DifferentiableFunction f = [](std::span<const double> x, std::span<double> g) {
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double w = std::pow(10.0, static_cast<double>(i));
      g[i] = w * (x[i] - 1.0);
      v += 0.5 * w * (x[i] - 1.0) * (x[i] - 1.0);
    }
    return v;
  };
  const auto r = MinimizeLbfgs(f, std::vector<double>(6, -3.0));
  EXPECT_TRUE(r.converged());
  for (const double xi : r.x) EXPECT_NEAR(xi, 1.0, 1e-8);
}

TEST(Lbfgs, StartAtMinimumNeedsNoIteration) {
  const auto r = MinimizeLbfgs(Rosenbrock, {1.0, 1.0});
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.status, LbfgsStatus::kGradientTolerance);
}

TEST(Lbfgs, StopsAtIterationLimit) {
  LbfgsOptions options;
  options.max_iterations = 3;
  const auto r = MinimizeLbfgs(Rosenbrock, {-1.2, 1.0}, options);
  EXPECT_EQ(r.status, LbfgsStatus::kMaxIterations);
  EXPECT_EQ(r.iterations, 3);
  EXPECT_FALSE(r.converged());
}

TEST(Lbfgs, ReportsNonFiniteStart) {
  const DifferentiableFunction f = [](std::span<const double>, std::span<double> g) {
    g[0] = 0.0;
    return std::numeric_limits<double>::quiet_NaN();
  };
  EXPECT_EQ(MinimizeLbfgs(f, {0.0}).status, LbfgsStatus::kNonFinite);
}

TEST(Lbfgs, BacksOffFromInfiniteRegion) {
  // exp(x) - 2x has its minimum at log 2; the objective is +inf past x = 5.
  const DifferentiableFunction f = [](std::span<const double> x, std::span<double> g) {
    if (x[0] > 5.0) {
      g[0] = 0.0;
      return std::numeric_limits<double>::infinity();
    }
    g[0] = std::exp(x[0]) - 2.0;
    return std::exp(x[0]) - 2.0 * x[0];
  };
  const auto r = MinimizeLbfgs(f, {-20.0});
  EXPECT_TRUE(r.converged());
  EXPECT_NEAR(r.x[0], std::log(2.0), 1e-8);
}

TEST(Lbfgs, RejectsBadOptions) {
  LbfgsOptions options;
  options.wolfe_c1 = 0.95;
  EXPECT_THROW(MinimizeLbfgs(Rosenbrock, {0.0, 0.0}, options), ArgumentError);
}

}  // namespace
}  // namespace mars
