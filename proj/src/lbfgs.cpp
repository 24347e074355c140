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

#include "mars/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>

#include "mars/error.hpp"

namespace mars {
namespace {

double Dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double InfNorm(std::span<const double> v) {
  double m = 0.0;
  for (const double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool AllFinite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct Point {
  double alpha = 0.0;
  double value = 0.0;
  double slope = 0.0;  // directional derivative
  std::vector<double> x;
  std::vector<double> gradient;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), kept inside the
// middle 80% of the interval; bisection when the cubic is unusable.
double CubicStep(const Point& a, const Point& b) {
  const double lo = std::min(a.alpha, b.alpha);
  const double hi = std::max(a.alpha, b.alpha);
  const double margin = 0.1 * (hi - lo);
  const double mid = 0.5 * (lo + hi);
  if (!std::isfinite(b.value) || !std::isfinite(a.value)) return mid;
  const double d1 =
      a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.slope * b.slope;
  if (!(disc >= 0.0)) return mid;
  const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
  const double denom = b.slope - a.slope + 2.0 * d2;
  if (denom == 0.0) return mid;
  const double t =
      b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
  if (!std::isfinite(t)) return mid;
  return std::clamp(t, lo + margin, hi - margin);
}

class LineSearch {
 public:
  LineSearch(const DifferentiableFunction& f, const LbfgsOptions& options,
             std::span<const double> x, std::span<const double> direction,
             double value, double slope, int& evaluations)
      : f_(f),
        options_(options),
        x_(x),
        direction_(direction),
        evaluations_(evaluations) {
    origin_.alpha = 0.0;
    origin_.value = value;
    origin_.slope = slope;
  }

  // Returns a point satisfying the strong Wolfe conditions, or failing that
  // the best point with sufficient decrease; nullopt when neither exists.
  std::optional<Point> Run(double alpha) {
    Point prev = origin_;
    for (int i = 0; i < options_.max_line_search_evaluations; ++i) {
      Point cur = Evaluate(alpha);
      if (!std::isfinite(cur.value)) {
        // Overshot into an overflow region: treat as a failed decrease.
        return Zoom(prev, cur);
      }
      if (!SufficientDecrease(cur) || (i > 0 && cur.value >= prev.value)) {
        return Zoom(prev, cur);
      }
      if (std::abs(cur.slope) <= -options_.wolfe_c2 * origin_.slope) return cur;
      if (cur.slope >= 0.0) return Zoom(cur, prev);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return Fallback(prev);
  }

 private:
  bool SufficientDecrease(const Point& p) const {
    return p.value <= origin_.value + options_.wolfe_c1 * p.alpha * origin_.slope;
  }

  Point Evaluate(double alpha) {
    Point p;
    p.alpha = alpha;
    p.x.resize(x_.size());
    p.gradient.resize(x_.size());
    for (std::size_t i = 0; i < x_.size(); ++i) {
      p.x[i] = x_[i] + alpha * direction_[i];
    }
    ++evaluations_;
    p.value = f_(p.x, p.gradient);
    if (!AllFinite(p.gradient)) p.value = std::numeric_limits<double>::infinity();
    p.slope = std::isfinite(p.value) ? Dot(p.gradient, direction_)
                                     : std::numeric_limits<double>::quiet_NaN();
    return p;
  }

  std::optional<Point> Zoom(Point lo, Point hi) {
    for (int i = 0; i < options_.max_line_search_evaluations; ++i) {
      if (std::abs(hi.alpha - lo.alpha) <=
          std::numeric_limits<double>::epsilon() * std::max(1.0, lo.alpha)) {
        break;
      }
      Point cur = Evaluate(CubicStep(lo, hi));
      if (!std::isfinite(cur.value) || !SufficientDecrease(cur) ||
          cur.value >= lo.value) {
        hi = std::move(cur);
        continue;
      }
      if (std::abs(cur.slope) <= -options_.wolfe_c2 * origin_.slope) return cur;
      if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = std::move(cur);
    }
    return Fallback(lo);
  }

  std::optional<Point> Fallback(Point p) const {
    if (p.alpha > 0.0 && std::isfinite(p.value) && p.value < origin_.value &&
        SufficientDecrease(p)) {
      return p;
    }
    return std::nullopt;
  }

  const DifferentiableFunction& f_;
  const LbfgsOptions& options_;
  std::span<const double> x_;
  std::span<const double> direction_;
  int& evaluations_;
  Point origin_;
};

}  // namespace

std::string_view ToString(LbfgsStatus status) {
  switch (status) {
    case LbfgsStatus::kGradientTolerance:
      return "gradient_tolerance";
    case LbfgsStatus::kStalled:
      return "stalled";
    case LbfgsStatus::kMaxIterations:
      return "max_iterations";
    case LbfgsStatus::kNonFinite:
      return "non_finite";
  }
  return "unknown";
}

LbfgsResult MinimizeLbfgs(const DifferentiableFunction& f,
                          std::vector<double> x0,
                          const LbfgsOptions& options) {
  if (options.memory < 1 || options.max_iterations < 0 ||
      !(options.wolfe_c1 > 0.0 && options.wolfe_c1 < options.wolfe_c2 &&
        options.wolfe_c2 < 1.0)) {
    throw ArgumentError("invalid L-BFGS options");
  }

  const std::size_t n = x0.size();
  LbfgsResult result;
  result.x = std::move(x0);
  std::vector<double> gradient(n);
  result.value = f(result.x, gradient);
  result.evaluations = 1;
  if (!std::isfinite(result.value) || !AllFinite(gradient)) {
    result.status = LbfgsStatus::kNonFinite;
    result.gradient_norm = std::numeric_limits<double>::quiet_NaN();
    return result;
  }
  if (options.record_trace) result.trace.push_back(result.value);

  std::deque<std::vector<double>> s_hist;
  std::deque<std::vector<double>> y_hist;
  std::deque<double> rho_hist;
  std::vector<double> direction(n);
  std::vector<double> alpha_buf;

  result.status = LbfgsStatus::kMaxIterations;
  for (;;) {
    result.gradient_norm = InfNorm(gradient);
    if (result.gradient_norm < options.gradient_tolerance) {
      result.status = LbfgsStatus::kGradientTolerance;
      break;
    }
    if (result.iterations >= options.max_iterations) break;

    // Two-loop recursion: direction = -H * gradient.
    std::copy(gradient.begin(), gradient.end(), direction.begin());
    alpha_buf.assign(s_hist.size(), 0.0);
    for (std::size_t j = s_hist.size(); j-- > 0;) {
      alpha_buf[j] = rho_hist[j] * Dot(s_hist[j], direction);
      for (std::size_t i = 0; i < n; ++i) direction[i] -= alpha_buf[j] * y_hist[j][i];
    }
    if (!s_hist.empty()) {
      const double scale = Dot(s_hist.back(), y_hist.back()) /
                           Dot(y_hist.back(), y_hist.back());
      for (auto& v : direction) v *= scale;
    }
    for (std::size_t j = 0; j < s_hist.size(); ++j) {
      const double beta = rho_hist[j] * Dot(y_hist[j], direction);
      for (std::size_t i = 0; i < n; ++i) {
        direction[i] += (alpha_buf[j] - beta) * s_hist[j][i];
      }
    }
    for (auto& v : direction) v = -v;

    double slope = Dot(gradient, direction);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) direction[i] = -gradient[i];
      slope = Dot(gradient, direction);
    }
    const double initial =
        s_hist.empty() ? std::min(1.0, 1.0 / InfNorm(direction)) : 1.0;

    LineSearch search(f, options, result.x, direction, result.value, slope,
                      result.evaluations);
    auto step = search.Run(initial);
    if (!step && !s_hist.empty()) {
      // Stale curvature pairs can produce a poor direction; retry once along
      // the steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) direction[i] = -gradient[i];
      slope = Dot(gradient, direction);
      LineSearch retry(f, options, result.x, direction, result.value, slope,
                       result.evaluations);
      step = retry.Run(std::min(1.0, 1.0 / InfNorm(direction)));
    }
    if (!step) {
      result.status = LbfgsStatus::kStalled;
      break;
    }

    std::vector<double> s(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = step->x[i] - result.x[i];
      y[i] = step->gradient[i] - gradient[i];
    }
    const double sy = Dot(s, y);
    if (sy > std::numeric_limits<double>::epsilon() * Dot(y, y)) {
      if (static_cast<int>(s_hist.size()) == options.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    result.x = std::move(step->x);
    gradient = std::move(step->gradient);
    result.value = step->value;
    ++result.iterations;
    if (options.record_trace) result.trace.push_back(result.value);
  }
  return result;
}

}  // namespace mars
