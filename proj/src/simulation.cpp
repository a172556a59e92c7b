#include "taperkrig/simulation.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "taperkrig/dense.hpp"
#include "taperkrig/errors.hpp"
#include "taperkrig/kriging.hpp"
#include "taperkrig/parallel.hpp"
#include "taperkrig/rng.hpp"
#include "taperkrig/sparse.hpp"

namespace taperkrig {

std::vector<Location> uniform_locations(std::size_t n, std::uint64_t seed) {
  std::vector<Location> out(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].x = rng.uniform();
    out[i].y = rng.uniform();
  }
  return out;
}

Dataset simulate_grf(const SimulationSpec& spec) {
  spec.model.validate();
  std::vector<Location> locations =
      spec.locations.empty() ? uniform_locations(spec.n, spec.location_seed) : spec.locations;
  const std::size_t n = locations.size();
  if (n == 0) throw ConfigError("simulate_grf: no locations requested");

  std::vector<double> eps(n);
  Rng rng(spec.seed);
  for (std::size_t i = 0; i < n; ++i) eps[i] = rng.normal();

  std::vector<double> values(n);
  if (n <= kDenseSimulationLimit) {
    const Eigen::MatrixXd k = dense_covariance(locations, spec.model);
    const DenseChol chol(k);
    Eigen::Map<const Eigen::VectorXd> e(eps.data(), n);
    Eigen::VectorXd z = chol.matrix_l() * e;
    for (std::size_t i = 0; i < n; ++i) values[i] = z[static_cast<Eigen::Index>(i)];
  } else {
    if (!std::isfinite(spec.model.support_radius())) {
      throw SizeError("simulate_grf: dense simulation is limited to n <= " +
                      std::to_string(kDenseSimulationLimit) +
                      "; larger fields need a compact-support model");
    }
    Dataset shell{locations, std::vector<double>(n, 0.0), spec.name};
    const SparseSPD k = assemble(shell, spec.model);
    const CholFactor factor = factorize(k);
    // z = P^T L eps has covariance A when P A P^T = L L^T.
    std::vector<double> y(n, 0.0);
    factor.apply_l(eps, y);
    const auto& perm = factor.perm();
    for (std::size_t k2 = 0; k2 < n; ++k2) values[perm[k2]] = y[k2];
  }

  return make_dataset(std::move(locations), std::move(values), spec.name);
}

HoldoutSplit holdout_split(const Dataset& dataset, std::size_t n_holdout, std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (n_holdout == 0 || n_holdout >= n) {
    throw ConfigError("holdout_split: n_holdout must lie strictly between 0 and n");
  }
  const std::vector<std::int32_t> test_idx = draw_subsample(n, n_holdout, seed);
  std::vector<char> is_test(n, 0);
  for (const std::int32_t i : test_idx) is_test[i] = 1;
  std::vector<std::int32_t> train_idx;
  train_idx.reserve(n - n_holdout);
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_test[i]) train_idx.push_back(static_cast<std::int32_t>(i));
  }
  HoldoutSplit split;
  split.train = dataset.subset(train_idx);
  split.test = dataset.subset(test_idx);
  return split;
}

double rmse(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    throw std::invalid_argument("rmse: inputs must have equal positive length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - actual[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(predicted.size()));
}

std::vector<ScoreReport> run_experiment(const ExperimentSpec& spec, int n_threads) {
  if (spec.theta_grid.empty() || spec.size_grid.empty() || spec.seeds.empty()) {
    throw ConfigError("run_experiment: theta grid, size grid and seeds must be nonempty");
  }
  spec.truth.validate();
  if (spec.n_holdout == 0 || spec.n_holdout >= spec.n) {
    throw ConfigError("run_experiment: n_holdout must lie strictly between 0 and n");
  }

  const std::size_t n_seeds = spec.seeds.size();
  const std::size_t cells_per_seed = spec.theta_grid.size() * spec.size_grid.size();
  std::vector<std::vector<ScoreReport>> per_seed(n_seeds);

  parallel_for(n_seeds, n_threads, [&](std::size_t s) {
    const std::uint64_t field_seed = derive_seed(spec.master_seed, spec.seeds[s]);
    auto& rows = per_seed[s];
    rows.assign(cells_per_seed, ScoreReport{});

    Dataset train;
    Dataset test;
    try {
      SimulationSpec sim;
      sim.n = spec.n;
      sim.location_seed = derive_seed(field_seed, 1);
      sim.model = spec.truth;
      sim.seed = derive_seed(field_seed, 2);
      const Dataset field = simulate_grf(sim);
      HoldoutSplit split = holdout_split(field, spec.n_holdout, derive_seed(field_seed, 3));
      train = std::move(split.train);
      test = std::move(split.test);
    } catch (const std::exception& e) {
      std::size_t cell = 0;
      for (const double theta : spec.theta_grid) {
        for (const std::size_t size : spec.size_grid) {
          ScoreReport& r = rows[cell++];
          r.theta = theta;
          r.subsample = size;
          r.seed = spec.seeds[s];
          r.nugget_flag = spec.truth.params.nugget > 0.0;
          r.rmse = std::numeric_limits<double>::quiet_NaN();
          r.error = e.what();
        }
      }
      return;
    }

    std::size_t cell = 0;
    for (const double theta : spec.theta_grid) {
      for (const std::size_t size : spec.size_grid) {
        ScoreReport& r = rows[cell];
        r.theta = theta;
        r.subsample = size;
        r.seed = spec.seeds[s];
        r.nugget_flag = spec.truth.params.nugget > 0.0;
        r.n_holdout = test.size();
        try {
          const auto t_fit = std::chrono::steady_clock::now();
          LikelihoodConfig cfg;
          cfg.kind = ModelKind::TaperedMatern;
          cfg.support_range = theta;
          cfg.init.smoothness = spec.smoothness;
          cfg.fit_nugget = spec.fit_nugget;
          cfg.seed = derive_seed(field_seed, 100 + cell);

          const std::vector<std::int32_t> idx =
              draw_subsample(train.size(), size, derive_seed(field_seed, 200 + cell));
          const Dataset sub = size >= train.size() ? train : train.subset(idx);
          const EstimationResult est = estimate_single(sub, cfg, 1);
          r.fit_seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t_fit).count();

          PredictionRequest req;
          req.train = train;
          req.model = cfg.make_model(est.params);
          req.targets = test.locations;
          const PredictionResult pred = krige_predict(req, 1);
          r.predict_seconds = pred.diag.predict_seconds + pred.diag.factor_seconds +
                              pred.diag.assemble_seconds;
          r.nnz = pred.diag.pattern_nnz;
          r.rmse = rmse(pred.predictions, test.values);
          r.ok = true;
        } catch (const std::exception& e) {
          r.rmse = std::numeric_limits<double>::quiet_NaN();
          r.error = e.what();
        }
        ++cell;
      }
    }
  });

  // Rows in fixed (theta, size, seed) order regardless of scheduling.
  std::vector<ScoreReport> out;
  out.reserve(n_seeds * cells_per_seed);
  std::size_t cell = 0;
  for (std::size_t t = 0; t < spec.theta_grid.size(); ++t) {
    for (std::size_t g = 0; g < spec.size_grid.size(); ++g) {
      for (std::size_t s = 0; s < n_seeds; ++s) {
        out.push_back(per_seed[s][cell]);
      }
      ++cell;
    }
  }
  return out;
}

}  // namespace taperkrig
