#include "taperkrig/variogram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "taperkrig/errors.hpp"
#include "taperkrig/parallel.hpp"
#include "taperkrig/rng.hpp"

namespace taperkrig {

namespace {

struct BinAccumulator {
  std::vector<double> sum;
  std::vector<std::int64_t> count;

  explicit BinAccumulator(std::size_t bins) : sum(bins, 0.0), count(bins, 0) {}

  void merge(const BinAccumulator& other) {
    for (std::size_t b = 0; b < sum.size(); ++b) {
      sum[b] += other.sum[b];
      count[b] += other.count[b];
    }
  }
};

}  // namespace

std::int64_t EmpiricalVariogram::total_pairs() const {
  std::int64_t total = 0;
  for (const std::int64_t c : counts) total += c;
  return total;
}

EmpiricalVariogram empirical_variogram(const Dataset& dataset, const VariogramOptions& options) {
  const std::int64_t n = static_cast<std::int64_t>(dataset.size());
  if (n < 2) throw std::invalid_argument("empirical_variogram: need at least two observations");
  if (options.n_bins < 2) throw std::invalid_argument("empirical_variogram: need at least two bins");

  const double max_dist = options.max_dist > 0.0
                              ? options.max_dist
                              : half_bounding_diameter(dataset.locations);
  if (!(max_dist > 0.0)) {
    throw std::invalid_argument("empirical_variogram: max_dist must be positive");
  }

  const int bins = options.n_bins;
  const double inv_width = bins / max_dist;

  const std::int64_t total_pairs = n * (n - 1) / 2;
  const bool exhaustive = total_pairs <= options.max_pairs;

  // Fixed-size chunks merged in chunk order keep the result independent of
  // the thread count.
  std::vector<BinAccumulator> partial;
  const auto& locs = dataset.locations;
  const auto& vals = dataset.values;

  auto accumulate_pair = [&](BinAccumulator& acc, std::int64_t i, std::int64_t j) {
    const double h = distance(locs[i], locs[j]);
    if (h >= max_dist) return;
    const int b = static_cast<int>(h * inv_width);
    if (b >= bins) return;  // roundoff at the upper edge
    const double diff = vals[i] - vals[j];
    acc.sum[b] += diff * diff;
    acc.count[b] += 1;
  };

  if (exhaustive) {
    const std::int64_t chunk_rows = 256;
    const std::size_t n_chunks = static_cast<std::size_t>((n + chunk_rows - 1) / chunk_rows);
    partial.assign(n_chunks, BinAccumulator(bins));
    parallel_for(n_chunks, options.n_threads, [&](std::size_t c) {
      BinAccumulator& acc = partial[c];
      const std::int64_t begin = static_cast<std::int64_t>(c) * chunk_rows;
      const std::int64_t end = std::min<std::int64_t>(begin + chunk_rows, n);
      for (std::int64_t i = begin; i < end; ++i) {
        for (std::int64_t j = i + 1; j < n; ++j) accumulate_pair(acc, i, j);
      }
    });
  } else {
    // Uniform pair sample, generated once so the draw sequence is fixed.
    const std::int64_t draws = options.max_pairs;
    std::vector<std::int32_t> pi(draws), pj(draws);
    Rng rng(options.seed);
    for (std::int64_t t = 0; t < draws; ++t) {
      const std::int64_t i = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(n)));
      std::int64_t j = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(n - 1)));
      if (j >= i) ++j;
      pi[t] = static_cast<std::int32_t>(i);
      pj[t] = static_cast<std::int32_t>(j);
    }
    const std::int64_t chunk = 65536;
    const std::size_t n_chunks = static_cast<std::size_t>((draws + chunk - 1) / chunk);
    partial.assign(n_chunks, BinAccumulator(bins));
    parallel_for(n_chunks, options.n_threads, [&](std::size_t c) {
      BinAccumulator& acc = partial[c];
      const std::int64_t begin = static_cast<std::int64_t>(c) * chunk;
      const std::int64_t end = std::min<std::int64_t>(begin + chunk, draws);
      for (std::int64_t t = begin; t < end; ++t) accumulate_pair(acc, pi[t], pj[t]);
    });
  }

  BinAccumulator total(bins);
  for (const BinAccumulator& acc : partial) total.merge(acc);

  EmpiricalVariogram vg;
  vg.bin_edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) vg.bin_edges[b] = max_dist * b / bins;
  vg.counts = std::move(total.count);
  vg.semivariance.assign(bins, std::numeric_limits<double>::quiet_NaN());
  bool any = false;
  for (int b = 0; b < bins; ++b) {
    if (vg.counts[b] > 0) {
      vg.semivariance[b] = total.sum[b] / (2.0 * static_cast<double>(vg.counts[b]));
      any = true;
    }
  }
  if (!any) throw EstimationError("empirical_variogram: all bins are empty");
  return vg;
}

ParamGuess guess_initial_params(const EmpiricalVariogram& vg) {
  std::vector<std::size_t> filled;
  for (std::size_t b = 0; b < vg.n_bins(); ++b) {
    if (vg.counts[b] > 0) filled.push_back(b);
  }
  if (filled.size() < 3) {
    throw std::invalid_argument("guess_initial_params: need at least 3 nonempty bins");
  }

  const double max_dist = vg.bin_edges.back();
  auto gamma = [&](std::size_t b) { return vg.semivariance[b]; };

  // Plateau: mean over the last quartile of nonempty bins.
  const std::size_t q_begin = filled.size() - std::max<std::size_t>(1, filled.size() / 4);
  double plateau = 0.0;
  for (std::size_t t = q_begin; t < filled.size(); ++t) plateau += gamma(filled[t]);
  plateau /= static_cast<double>(filled.size() - q_begin);

  ParamGuess out;
  auto degenerate = [&]() {
    out.defaulted = true;
    out.params.smoothness = 1.0;
    out.params.range = max_dist / 3.0;
    out.params.sill = std::max(plateau, 1e-12);
    out.params.nugget = 0.0;
    return out;
  };

  if (!(plateau > 0.0) || !std::isfinite(plateau)) return degenerate();
  // Variogram starting above its own plateau is non-monotone.
  if (gamma(filled.front()) > plateau * 1.05 + 1e-300) return degenerate();

  // Nugget: linear extrapolation through the first two nonempty bins.
  const std::size_t b0 = filled[0];
  const std::size_t b1 = filled[1];
  const double h0 = vg.bin_mid(b0);
  const double h1 = vg.bin_mid(b1);
  const double slope = (gamma(b1) - gamma(b0)) / (h1 - h0);
  double nugget = gamma(b0) - slope * h0;
  nugget = std::max(nugget, 0.0);
  if (nugget > plateau) nugget = plateau;

  double sill = plateau - nugget;
  if (!(sill > 0.0)) sill = std::max(0.05 * plateau, 1e-12);

  // Effective-range-style guess: first bin midpoint reaching 95% of the
  // plateau.
  double range = vg.bin_mid(filled.back());
  for (const std::size_t b : filled) {
    if (gamma(b) >= 0.95 * plateau) {
      range = vg.bin_mid(b);
      break;
    }
  }

  // Smoothness branch from the near-origin log-log slope of the variogram
  // over the first few nonempty bins; flat or defective windows keep the
  // smooth default.
  double smoothness = 1.0;
  {
    std::vector<double> lx, ly;
    for (std::size_t t = 0; t < filled.size() && lx.size() < 5; ++t) {
      const std::size_t b = filled[t];
      if (gamma(b) > 0.0) {
        lx.push_back(std::log(vg.bin_mid(b)));
        ly.push_back(std::log(gamma(b)));
      }
    }
    if (lx.size() >= 2) {
      double mx = 0.0, my = 0.0;
      for (std::size_t t = 0; t < lx.size(); ++t) {
        mx += lx[t];
        my += ly[t];
      }
      mx /= lx.size();
      my /= ly.size();
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t t = 0; t < lx.size(); ++t) {
        sxy += (lx[t] - mx) * (ly[t] - my);
        sxx += (lx[t] - mx) * (lx[t] - mx);
      }
      if (sxx > 0.0) {
        const double loglog_slope = sxy / sxx;
        smoothness = loglog_slope < 1.3 ? 0.5 : 1.0;
      }
    }
  }

  out.params.sill = sill;
  out.params.range = range;
  out.params.smoothness = smoothness;
  out.params.nugget = nugget;
  return out;
}

}  // namespace taperkrig
