#pragma once

#include <span>

namespace pathflow {

/// Mean with a fixed blocked summation order.
double mean_of(std::span<const double> v);
/// Standard error of the mean (sample sd / sqrt(n)); 0 for fewer than 2 values.
double std_error_of(std::span<const double> v);

}  // namespace pathflow
