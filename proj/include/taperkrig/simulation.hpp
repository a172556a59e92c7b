#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "taperkrig/estimation.hpp"
#include "taperkrig/geometry.hpp"
#include "taperkrig/kernels.hpp"

namespace taperkrig {

inline constexpr std::size_t kDenseSimulationLimit = 20'000;

// Gaussian random field job. Locations are either given explicitly or
// drawn uniformly on the unit square (n + location_seed). Values come from
// L eps with L the Cholesky factor of the true covariance (nugget
// included): the dense factor up to kDenseSimulationLimit, the sparse one
// beyond that for compact-support models (same construction, exact either
// way).
struct SimulationSpec {
  std::vector<Location> locations;  // used when nonempty
  std::size_t n = 0;
  std::uint64_t location_seed = 0;
  CovarianceModel model;
  std::uint64_t seed = 0;
  std::string name;
};

Dataset simulate_grf(const SimulationSpec& spec);

std::vector<Location> uniform_locations(std::size_t n, std::uint64_t seed);

// Disjoint uniform random split whose union restores the input.
struct HoldoutSplit {
  Dataset train;
  Dataset test;
};

HoldoutSplit holdout_split(const Dataset& dataset, std::size_t n_holdout, std::uint64_t seed);

double rmse(std::span<const double> predicted, std::span<const double> actual);

// One simulate -> estimate -> predict -> score sweep over a taper-range
// and subsample-size grid. Each seed owns one field shared across the grid
// so the taper-range trend is a paired comparison.
struct ExperimentSpec {
  CovarianceModel truth;
  std::size_t n = 4000;
  std::size_t n_holdout = 500;
  std::vector<double> theta_grid;
  std::vector<std::size_t> size_grid;
  std::vector<std::uint64_t> seeds;
  double smoothness = 1.0;  // fixed estimation smoothness (taper bracket)
  bool fit_nugget = false;
  std::uint64_t master_seed = 0;
};

struct ScoreReport {
  double theta = 0.0;
  std::size_t subsample = 0;
  std::uint64_t seed = 0;
  bool nugget_flag = false;
  double rmse = 0.0;  // NaN flags a failed cell
  double fit_seconds = 0.0;
  double predict_seconds = 0.0;
  std::int64_t nnz = 0;
  std::size_t n_holdout = 0;
  bool ok = false;
  std::string error;
};

std::vector<ScoreReport> run_experiment(const ExperimentSpec& spec, int n_threads = 0);

}  // namespace taperkrig
