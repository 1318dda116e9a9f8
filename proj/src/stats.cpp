#include "pathflow/stats.hpp"

#include <algorithm>
#include <cmath>

#include "pathflow/parallel.hpp"

namespace pathflow {

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < v.size(); b += kReductionBlock) {
    double s = 0.0;
    const std::size_t e = std::min(v.size(), b + kReductionBlock);
    for (std::size_t i = b; i < e; ++i) s += v[i];
    total += s;
  }
  return total / static_cast<double>(v.size());
}

double std_error_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace pathflow
