#pragma once

#include <cstdint>
#include <vector>

#include "taperkrig/geometry.hpp"
#include "taperkrig/kernels.hpp"

namespace taperkrig {

// Binned Matheron (method-of-moments) semivariogram. Bins partition
// [0, max_dist) into equal widths; semivariance holds NaN where a bin is
// empty.
struct EmpiricalVariogram {
  std::vector<double> bin_edges;     // length B + 1, strictly increasing
  std::vector<double> semivariance;  // length B
  std::vector<std::int64_t> counts;  // length B

  std::size_t n_bins() const { return counts.size(); }
  double bin_mid(std::size_t b) const { return 0.5 * (bin_edges[b] + bin_edges[b + 1]); }
  std::int64_t total_pairs() const;
};

struct VariogramOptions {
  double max_dist = 0.0;                // <= 0 means half the bounding diameter
  int n_bins = 30;
  std::int64_t max_pairs = 1'000'000;   // above this, pairs are subsampled
  std::uint64_t seed = 0;
  int n_threads = 0;
};

// gamma_hat(bin) = sum (z_i - z_j)^2 / (2 N_bin) over pairs whose distance
// falls in the bin. When the total pair count exceeds max_pairs, pairs are
// drawn uniformly with the seeded generator. Throws EstimationError when
// every bin comes out empty.
EmpiricalVariogram empirical_variogram(const Dataset& dataset, const VariogramOptions& options);

// Moment-based starting values read off the variogram. The range field is
// the effective-range-style guess (first bin midpoint where the
// semivariance reaches 95% of its plateau); divide by
// matern_effective_range_factor to initialize a Matern range parameter.
// The smoothness rule (0.5 for near-linear growth at the origin, 1.0
// otherwise, log-log slope threshold 1.3) stands in for a judgment call
// and is deliberately coarse.
struct ParamGuess {
  CovarianceParams params;
  bool defaulted = false;  // degenerate variogram: defaults were returned
};

// Requires at least 3 nonempty bins (std::invalid_argument otherwise). A
// degenerate or non-monotone variogram yields defaults with the flag set.
ParamGuess guess_initial_params(const EmpiricalVariogram& vg);

}  // namespace taperkrig
