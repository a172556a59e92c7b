#pragma once

#include <cstdint>
#include <vector>

#include "taperkrig/estimation.hpp"
#include "taperkrig/geometry.hpp"
#include "taperkrig/kernels.hpp"

namespace taperkrig {

// Simple kriging job: parameter estimation and prediction must use the
// same model, so the fitted model travels here unchanged.
struct PredictionRequest {
  Dataset train;
  CovarianceModel model;
  std::vector<Location> targets;
  MeanPolicy mean = MeanPolicy::CenterOnMean;
};

struct PredictionDiagnostics {
  std::int64_t pattern_nnz = 0;
  std::int64_t factor_nnz = 0;
  double assemble_seconds = 0.0;
  double factor_seconds = 0.0;
  double predict_seconds = 0.0;
};

struct PredictionResult {
  std::vector<double> predictions;  // one per target, training mean re-added
  PredictionDiagnostics diag;
};

// Simple kriging with one sparse factorization: w = K^-1 (z - mean) is
// solved once, then each target costs one neighbor gather and dot product.
// Cross-covariances exclude the nugget except at exact coincidence with an
// observed location, where the zero-distance covariance sill + nugget
// keeps c0 consistent with K (and makes zero-nugget kriging exact).
PredictionResult krige_predict(const PredictionRequest& request, int n_threads = 0);

// Streams targets through the single factorization in chunks; the output
// is identical to krige_predict for every chunk size.
PredictionResult krige_batch(const PredictionRequest& request, std::size_t chunk_size,
                             int n_threads = 0);

}  // namespace taperkrig
