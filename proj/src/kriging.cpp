#include "taperkrig/kriging.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "taperkrig/errors.hpp"
#include "taperkrig/parallel.hpp"
#include "taperkrig/sparse.hpp"

namespace taperkrig {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

PredictionResult krige_batch(const PredictionRequest& request, std::size_t chunk_size,
                             int n_threads) {
  if (chunk_size < 1) throw std::invalid_argument("krige_batch: chunk size must be positive");
  request.model.validate();
  validate_dataset(request.train);
  for (const Location& t : request.targets) {
    if (!std::isfinite(t.x) || !std::isfinite(t.y)) {
      throw IngestError("krige: non-finite prediction location");
    }
  }

  const std::size_t n = request.train.size();
  const CovarianceModel& model = request.model;
  const double support = model.support_radius();
  const double mean =
      request.mean == MeanPolicy::CenterOnMean ? request.train.mean_value() : 0.0;

  PredictionResult out;
  out.predictions.assign(request.targets.size(), mean);

  const SpatialIndex index(request.train.locations);

  auto t0 = std::chrono::steady_clock::now();
  PatternDistances pd;
  if (std::isfinite(support)) {
    pd = pattern_with_distances(index, request.train.locations, support, n_threads);
  } else {
    if (n > static_cast<std::size_t>(kDenseFallbackLimit)) {
      throw SizeError("krige: a plain Matern model is limited to n <= " +
                      std::to_string(kDenseFallbackLimit));
    }
    pd = dense_pattern_with_distances(request.train.locations);
  }
  SparseSPD k;
  k.pattern = std::move(pd.pattern);
  fill_values(k.pattern, pd.dist, model, k.values, n_threads);
  out.diag.pattern_nnz = k.nnz_lower();
  out.diag.assemble_seconds = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const CholFactor factor = factorize(k);
  out.diag.factor_nnz = factor.nnz();
  out.diag.factor_seconds = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = request.train.values[i] - mean;
  const std::vector<double> w = factor.solve(z);

  const double sill = model.params.sill;
  const double nugget = model.params.nugget;
  const std::size_t n_targets = request.targets.size();

  for (std::size_t begin = 0; begin < n_targets; begin += chunk_size) {
    const std::size_t end = std::min(n_targets, begin + chunk_size);
    parallel_for(end - begin, n_threads, [&](std::size_t t) {
      const Location& s0 = request.targets[begin + t];
      double acc = 0.0;
      if (std::isfinite(support)) {
        thread_local std::vector<Neighbor> nbrs;
        index.neighbors_within(s0, support, nbrs);
        for (const Neighbor& nb : nbrs) {
          const double c0 = nb.distance == 0.0 ? sill + nugget
                                               : sill * model.correlation(nb.distance);
          acc += c0 * w[nb.index];
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          const double d = distance(request.train.locations[i], s0);
          const double c0 = d == 0.0 ? sill + nugget : sill * model.correlation(d);
          acc += c0 * w[i];
        }
      }
      out.predictions[begin + t] = mean + acc;
    });
  }
  out.diag.predict_seconds = seconds_since(t0);
  return out;
}

PredictionResult krige_predict(const PredictionRequest& request, int n_threads) {
  return krige_batch(request, std::max<std::size_t>(request.targets.size(), 1), n_threads);
}

}  // namespace taperkrig
