// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

namespace evfl {

/// Mean absolute error. Throws ValidationError on empty or unequal inputs.
double mae(std::span<const double> predictions, std::span<const double> targets);
/// Root mean squared error; always >= mae for the same inputs.
double rmse(std::span<const double> predictions, std::span<const double> targets);

}  // namespace evfl
