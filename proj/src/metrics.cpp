// SPDX-License-Identifier: Apache-2.0
#include "evfl/metrics.hpp"

#include <cmath>

#include "evfl/error.hpp"

namespace evfl {
namespace {

void check(std::span<const double> p, std::span<const double> t) {
  if (p.size() != t.size()) throw ValidationError("metrics: length mismatch");
  if (p.empty()) throw ValidationError("metrics: empty input");
}

}  // namespace

double mae(std::span<const double> predictions, std::span<const double> targets) {
  check(predictions, targets);
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    acc += std::abs(predictions[i] - targets[i]);
  }
  return acc / static_cast<double>(predictions.size());
}

double rmse(std::span<const double> predictions, std::span<const double> targets) {
  check(predictions, targets);
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(predictions.size()));
}

}  // namespace evfl
