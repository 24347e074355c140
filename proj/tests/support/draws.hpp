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

#ifndef MARS_TESTS_SUPPORT_DRAWS_HPP_
#define MARS_TESTS_SUPPORT_DRAWS_HPP_

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mars/laws.hpp"

namespace mars::testing {

// Random coefficients in the regime the fitter works in, and observations
// scattered around them, so both Huber branches and every coordinate carry
// gradient signal.
struct GradientDraw {
  std::vector<double> law_p_params;
  std::vector<PerfObservation> perf;
  std::vector<double> law_c_params;
  std::vector<ConvObservation> conv;
  double huber_delta = 1e-3;
};

inline GradientDraw DrawGradientCase(std::mt19937_64& rng, const FitBounds& b) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::uniform_int_distribution<int> rank(1, 256);
  std::uniform_int_distribution<int> log_size(6, 16);
  std::normal_distribution<double> noise(0.0, 1.0);

  GradientDraw g;
  LawPCoefficients p{in(1.0, 50.0), in(-0.5, 1.0), in(-0.5, 1.0), in(0.05, 1.0), 0.0};
  LawCCoefficients c{Module::kLlm, in(10.0, 5000.0), in(-1.5, -0.05), in(0.1, 1.2), 0.0};
  // Scatter wide enough to cross the Huber threshold in both directions.
  const double sigma = unit(rng) < 0.5 ? 1e-3 : 0.2;
  g.huber_delta = unit(rng) < 0.5 ? 1e-3 : 0.1;
  const int n = 4 + static_cast<int>(unit(rng) * 20);
  std::vector<RankPair> pairs;
  std::vector<int> ranks;
  std::vector<std::int64_t> sizes;
  double log_power_p = 0.0;
  double log_power_c = 0.0;
  for (int i = 0; i < n; ++i) {
    pairs.push_back({rank(rng), rank(rng)});
    ranks.push_back(rank(rng));
    sizes.push_back(std::int64_t{1} << log_size(rng));
    const double dd = static_cast<double>(sizes.back());
    log_power_p += std::log(PredictLoss(p, pairs.back(), dd));
    log_power_c += std::log(PredictConvergence(c, ranks.back(), dd));
  }
  // An offset comparable to the power term keeps its coordinate well
  // conditioned; a negligible E leaves finite differences below round-off.
  p.E = in(0.1, 3.0) * std::exp(log_power_p / n);
  c.E = in(0.1, 3.0) * std::exp(log_power_c / n);
  // Evaluate away from the generating point, where the gradient would be
  // near zero and dominated by cancellation.
  auto jitter = [&](double scale) { return std::exp(scale * noise(rng)); };
  auto q = p;
  q.A *= jitter(0.3);
  q.alpha_m += 0.03 * noise(rng);
  q.alpha_l += 0.03 * noise(rng);
  q.beta += 0.03 * noise(rng);
  q.E *= jitter(0.3);
  auto k = c;
  k.k *= jitter(0.3);
  k.gamma = std::min(-0.01, k.gamma + 0.03 * noise(rng));
  k.delta = std::max(0.01, k.delta + 0.03 * noise(rng));
  k.E *= jitter(0.3);
  g.law_p_params = EncodeLawP(q, b);
  g.law_c_params = EncodeLawC(k, b);
  for (int i = 0; i < n; ++i) {
    const double dd = static_cast<double>(sizes[i]);
    g.perf.push_back({pairs[i], sizes[i],
                      PredictLoss(p, pairs[i], dd) * std::exp(sigma * noise(rng))});
    g.conv.push_back({ranks[i], sizes[i],
                      PredictConvergence(c, ranks[i], dd) * std::exp(sigma * noise(rng))});
  }
  return g;
}

// Largest relative disagreement between the analytic gradient and central
// differences, over all coordinates. The step is h * max(1, |x_i|): the
// offset coordinate e is in the units of the observations, so a fixed step
// would vanish below round-off for large targets.
template <typename Objective>
double WorstGradientError(const std::vector<double>& x, Objective objective,
                          double h = 1e-6) {
  const auto analytic = objective(x).gradient;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x[i]));
    auto hi = x;
    auto lo = x;
    hi[i] += step;
    lo[i] -= step;
    const double fd = (objective(hi).value - objective(lo).value) / (hi[i] - lo[i]);
    const double scale = std::max({std::abs(analytic[i]), std::abs(fd), 1e-300});
    worst = std::max(worst, std::abs(analytic[i] - fd) / scale);
  }
  return worst;
}

}  // namespace mars::testing

#endif  // MARS_TESTS_SUPPORT_DRAWS_HPP_
