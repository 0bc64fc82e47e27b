/*
 * Copyright 2026 The DynST Authors.
 *
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

#include "dynst/survival/survival_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dynst/error.hpp"

namespace dynst::survival {

namespace {

// Tolerates rounding in products computed elsewhere.
constexpr double kMonotoneSlack = 1e-12;

}  // namespace

HazardCurve::HazardCurve(std::vector<double> h) : h_(std::move(h)) {
  for (double v : h_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("hazard value " + std::to_string(v) + " outside [0,1]");
    }
  }
}

SurvivalCurve::SurvivalCurve(std::vector<double> s) : s_(std::move(s)) {
  for (std::size_t i = 0; i < s_.size(); ++i) {
    if (!(s_[i] >= 0.0 && s_[i] <= 1.0)) {
      throw DomainError("survival value " + std::to_string(s_[i]) +
                        " outside [0,1]");
    }
    if (i > 0 && s_[i] > s_[i - 1] + kMonotoneSlack) {
      throw DomainError("survival curve increases at t=" + std::to_string(i + 1));
    }
  }
}

double SurvivalCurve::at(int t) const {
  if (t < 1 || static_cast<std::size_t>(t) > s_.size()) {
    throw DomainError("survival curve has no t=" + std::to_string(t));
  }
  return s_[static_cast<std::size_t>(t - 1)];
}

SurvivalCurve survival_from_hazard(const HazardCurve& h) {
  std::vector<double> s(h.horizon());
  double acc = 1.0;
  for (std::size_t t = 0; t < s.size(); ++t) {
    acc *= 1.0 - h.values()[t];
    s[t] = acc;
  }
  return SurvivalCurve(std::move(s));
}

double expected_survival_time(std::span<const double> s) {
  double total = 0.0;
  for (double v : s) total += v;
  return total;
}

double expected_survival_time(const SurvivalCurve& s) {
  return expected_survival_time(s.values());
}

double restricted_mean(std::span<const double> s, int tau) {
  if (tau < 1 || static_cast<std::size_t>(tau) > s.size()) {
    throw DomainError("rmst: tau=" + std::to_string(tau) +
                      " outside 1.." + std::to_string(s.size()));
  }
  return expected_survival_time(s.first(static_cast<std::size_t>(tau)));
}

double rmst(std::span<const SurvivalCurve> curves, int tau) {
  if (curves.empty()) throw DomainError("rmst: empty cohort");
  double total = 0.0;
  for (const auto& c : curves) total += restricted_mean(c.values(), tau);
  return total / static_cast<double>(curves.size());
}

double censored_abs_error(double predicted, double observed, int event) {
  const double diff = observed - predicted;
  return event ? std::abs(diff) : std::max(0.0, diff);
}

double censored_mae(std::span<const double> predicted,
                    std::span<const double> observed,
                    std::span<const int> event) {
  if (predicted.size() != observed.size() || predicted.size() != event.size()) {
    throw ShapeError("censored_mae: length mismatch");
  }
  if (predicted.empty()) throw DomainError("censored_mae: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    total += censored_abs_error(predicted[i], observed[i], event[i]);
  }
  return total / static_cast<double>(predicted.size());
}

}  // namespace dynst::survival
