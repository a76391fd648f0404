// Copyright 2026 The ACNN Triage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "acnn/autodiff.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

// Builds a scalar loss on the given tape from leaf handles, one per
// parameter tensor, in the order the tensors were passed to GradCheck.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose perturbation moves a relu gate, max-pool argmax, or
  // probability clamp; the derivative there is not unique.
  std::vector<std::size_t> excluded;
  std::size_t worst_coordinate = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

namespace detail {

struct Probe {
  double value;
  std::uint64_t signature;
};

inline Probe Evaluate(const TapeFunction& f,
                      const std::vector<Tensor*>& params) {
  Tape tape(/*track_branches=*/true);
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (Tensor* p : params) leaves.push_back(tape.Constant(*p));
  Var loss = f(tape, leaves);
  return {loss.value().item(), tape.branch_signature()};
}

}  // namespace detail

// Compares reverse-mode gradients against central differences with step
// eps. Relative error per coordinate is
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
// A coordinate is excluded when moving it by +-10*eps changes any branch
// decision recorded on the tape.
inline GradCheckReport GradCheck(const TapeFunction& f,
                                 const std::vector<Tensor*>& params,
                                 double eps = 1e-5) {
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) analytic.emplace_back(p->size(), 0.0);

  std::uint64_t base_signature = 0;
  {
    Tape tape(/*track_branches=*/true);
    std::vector<Var> leaves;
    for (std::size_t i = 0; i < params.size(); ++i)
      leaves.push_back(tape.Parameter(*params[i], analytic[i]));
    Var loss = f(tape, leaves);
    base_signature = tape.branch_signature();
    tape.Backward(loss);
  }

  GradCheckReport report;
  std::size_t flat = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    for (std::size_t j = 0; j < p.size(); ++j, ++flat) {
      const double saved = p[j];
      p[j] = saved + 10.0 * eps;
      const std::uint64_t far_plus = detail::Evaluate(f, params).signature;
      p[j] = saved - 10.0 * eps;
      const std::uint64_t far_minus = detail::Evaluate(f, params).signature;
      p[j] = saved + eps;
      const detail::Probe plus = detail::Evaluate(f, params);
      p[j] = saved - eps;
      const detail::Probe minus = detail::Evaluate(f, params);
      p[j] = saved;

      if (far_plus != base_signature || far_minus != base_signature ||
          plus.signature != base_signature ||
          minus.signature != base_signature) {
        report.excluded.push_back(flat);
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * eps);
      const double a = analytic[i][j];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error || report.checked == 1) {
        if (rel >= report.max_relative_error) {
          report.max_relative_error = rel;
          report.worst_coordinate = flat;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace acnn
