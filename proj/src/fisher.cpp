#include <cmath>
#include <cstddef>
#include <vector>

#include "serprank/metrics/metrics.hpp"

namespace serprank::metrics {

double fisher_randomization_test(const std::vector<double>& per_query_a,
                                 const std::vector<double>& per_query_b, int permutations,
                                 Rng& rng) {
  if (per_query_a.size() != per_query_b.size()) {
    throw ArgumentError("fisher test requires paired lists of equal length");
  }
  if (per_query_a.empty()) {
    throw ArgumentError("fisher test requires at least one pair");
  }
  if (permutations < 1) {
    throw ArgumentError("fisher test requires at least one permutation");
  }
  const std::size_t n = per_query_a.size();
  std::vector<double> diff(n);
  double observed_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = per_query_a[i] - per_query_b[i];
    observed_sum += diff[i];
  }
  const double observed = std::abs(observed_sum);

  // Sign-flip each paired difference; ties count as at-least-as-extreme so that
  // identical lists give p = 1 exactly.
  constexpr double kTieEps = 1e-12;
  int count = 0;
  for (int p = 0; p < permutations; ++p) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += rng.uniform01() < 0.5 ? diff[i] : -diff[i];
    }
    if (std::abs(sum) >= observed - kTieEps) ++count;
  }
  return (1.0 + count) / (1.0 + permutations);
}

}  // namespace serprank::metrics
