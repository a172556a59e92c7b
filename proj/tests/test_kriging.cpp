#include <doctest.h>

#include <cmath>
#include <vector>

#include "taperkrig/dense.hpp"
#include "taperkrig/errors.hpp"
#include "taperkrig/kriging.hpp"
#include "taperkrig/rng.hpp"
#include "taperkrig/simulation.hpp"

using namespace taperkrig;

namespace {

Dataset simulated_field(std::size_t n, const CovarianceModel& truth, std::uint64_t seed) {
  SimulationSpec spec;
  spec.n = n;
  spec.location_seed = derive_seed(seed, 1);
  spec.seed = derive_seed(seed, 2);
  spec.model = truth;
  return simulate_grf(spec);
}

CovarianceModel tapered_model(double sill, double range, double nu, double nugget, double theta) {
  CovarianceModel m;
  m.kind = ModelKind::TaperedMatern;
  m.params = CovarianceParams{sill, range, nu, nugget};
  m.taper = TaperSpec{select_taper(nu), theta};
  return m;
}

// Dense simple kriging with the same cross-covariance convention.
std::vector<double> dense_kriging(const Dataset& train, const CovarianceModel& model,
                                  std::span<const Location> targets, MeanPolicy policy) {
  const std::size_t n = train.size();
  const double mean = policy == MeanPolicy::CenterOnMean ? train.mean_value() : 0.0;
  const Eigen::MatrixXd k = dense_covariance(train.locations, model);
  Eigen::VectorXd z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = train.values[i] - mean;
  const Eigen::VectorXd w = Eigen::LLT<Eigen::MatrixXd>(k).solve(z);

  std::vector<double> out;
  for (const Location& s0 : targets) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = distance(train.locations[i], s0);
      const double c0 = d == 0.0 ? model.params.sill + model.params.nugget
                                 : model.params.sill * model.correlation(d);
      acc += c0 * w[i];
    }
    out.push_back(mean + acc);
  }
  return out;
}

}  // namespace

TEST_CASE("kriging exactness at observed sites with zero nugget") {
  const auto truth = tapered_model(1.0, 0.05, 0.5, 0.0, 0.25);
  const Dataset field = simulated_field(200, truth, 11);

  PredictionRequest req;
  req.train = field;
  req.model = truth;
  for (int i = 0; i < 40; ++i) req.targets.push_back(field.locations[5 * i]);
  const PredictionResult result = krige_predict(req, 2);
  for (int i = 0; i < 40; ++i) {
    CHECK(std::fabs(result.predictions[i] - field.values[5 * i]) < 1e-6);
  }
}

TEST_CASE("targets outside every support radius predict the training mean") {
  const Dataset train = make_dataset({{0.1, 0.1}, {0.2, 0.1}, {0.15, 0.22}}, {4.0, 6.0, 5.0});
  PredictionRequest req;
  req.train = train;
  req.model = tapered_model(1.0, 0.02, 0.5, 0.1, 0.05);
  req.targets = {Location{0.9, 0.9}, Location{-3.0, 4.0}};
  const PredictionResult result = krige_predict(req, 1);
  CHECK(result.predictions[0] == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(result.predictions[1] == doctest::Approx(5.0).epsilon(1e-15));

  SUBCASE("fixed-zero mean policy predicts zero instead") {
    req.mean = MeanPolicy::FixedZero;
    const PredictionResult zero = krige_predict(req, 1);
    CHECK(zero.predictions[0] == 0.0);
  }
}

TEST_CASE("kriging matches the dense oracle") {
  const auto truth = tapered_model(1.4, 0.06, 1.0, 0.2, 0.22);
  const Dataset field = simulated_field(300, truth, 13);

  Rng rng(99);
  PredictionRequest req;
  req.train = field;
  req.model = truth;
  for (int i = 0; i < 50; ++i) req.targets.push_back(Location{rng.uniform(), rng.uniform()});
  const PredictionResult sparse = krige_predict(req, 2);
  const std::vector<double> dense =
      dense_kriging(field, truth, req.targets, MeanPolicy::CenterOnMean);

  double scale = 0.0;
  for (const double v : dense) scale = std::max(scale, std::fabs(v));
  for (int i = 0; i < 50; ++i) {
    CHECK(std::fabs(sparse.predictions[i] - dense[i]) <= 1e-8 * scale);
  }
}

TEST_CASE("chunked prediction is bitwise identical") {
  const auto truth = tapered_model(1.0, 0.05, 0.5, 0.05, 0.2);
  const Dataset field = simulated_field(250, truth, 17);

  Rng rng(7);
  PredictionRequest req;
  req.train = field;
  req.model = truth;
  for (int i = 0; i < 33; ++i) req.targets.push_back(Location{rng.uniform(), rng.uniform()});

  const PredictionResult whole = krige_predict(req, 2);
  const PredictionResult one = krige_batch(req, 1, 1);
  const PredictionResult seven = krige_batch(req, 7, 2);
  const PredictionResult thousand = krige_batch(req, 1000, 1);
  for (int i = 0; i < 33; ++i) {
    CHECK(one.predictions[i] == whole.predictions[i]);
    CHECK(seven.predictions[i] == whole.predictions[i]);
    CHECK(thousand.predictions[i] == whole.predictions[i]);
  }
  CHECK_THROWS_AS(krige_batch(req, 0, 1), std::invalid_argument);
}

TEST_CASE("a far taper reproduces exact Matern kriging") {
  CovarianceModel matern;
  matern.kind = ModelKind::Matern;
  matern.params = CovarianceParams{1.0, 0.08, 0.5, 0.1};
  const Dataset field = simulated_field(400, matern, 23);

  Rng rng(5);
  std::vector<Location> targets;
  for (int i = 0; i < 60; ++i) targets.push_back(Location{rng.uniform(), rng.uniform()});

  auto far_tapered = tapered_model(1.0, 0.08, 0.5, 0.1, 1e3 * std::sqrt(2.0));
  PredictionRequest req;
  req.train = field;
  req.model = far_tapered;
  req.targets = targets;
  const PredictionResult tapered = krige_predict(req, 2);
  const std::vector<double> exact =
      dense_kriging(field, matern, targets, MeanPolicy::CenterOnMean);

  double num = 0.0, den = 0.0;
  const double mean = field.mean_value();
  for (int i = 0; i < 60; ++i) {
    num += (tapered.predictions[i] - exact[i]) * (tapered.predictions[i] - exact[i]);
    den += (exact[i] - mean) * (exact[i] - mean);
  }
  CHECK(std::sqrt(num / den) < 1e-2);
}

TEST_CASE("holdout RMSE decreases with the taper range") {
  // Fixed true parameters, prediction-only comparison over 6 fields.
  const double eff_range = 0.15;
  const double beta = eff_range / std::log(20.0);
  CovarianceModel truth;
  truth.kind = ModelKind::Matern;
  truth.params = CovarianceParams{1.0, beta, 0.5, 0.0};

  std::vector<double> mean_rmse(3, 0.0);
  const int n_fields = 6;
  for (int s = 0; s < n_fields; ++s) {
    const Dataset field = simulated_field(1200, truth, 3000 + s);
    const HoldoutSplit split = holdout_split(field, 200, 17 + s);
    const double thetas[] = {0.5 * eff_range, eff_range, 2.0 * eff_range};
    for (int t = 0; t < 3; ++t) {
      PredictionRequest req;
      req.train = split.train;
      req.model = tapered_model(1.0, beta, 0.5, 0.0, thetas[t]);
      req.targets = split.test.locations;
      const PredictionResult pred = krige_predict(req, 2);
      mean_rmse[t] += rmse(pred.predictions, split.test.values) / n_fields;
    }
  }
  CHECK(mean_rmse[0] >= mean_rmse[1]);
  CHECK(mean_rmse[1] >= mean_rmse[2]);
}

TEST_CASE("noise-normalized error is lower for fields with a nugget") {
  // Matched signal models scored against the latent noise-free surface.
  const double sill = 1.0;
  const double beta = 0.05;
  const double tau2 = 1.0;
  const std::size_t n = 500;
  const std::size_t n_holdout = 100;

  double norm_with_nugget = 0.0, norm_without = 0.0;
  const int n_seeds = 20;
  for (int s = 0; s < n_seeds; ++s) {
    // Latent field plus separate noise so the noise-free truth is known.
    CovarianceModel latent;
    latent.kind = ModelKind::Matern;
    latent.params = CovarianceParams{sill, beta, 0.5, 0.0};
    SimulationSpec spec;
    spec.n = n;
    spec.location_seed = derive_seed(6000 + s, 1);
    spec.seed = derive_seed(6000 + s, 2);
    spec.model = latent;
    const Dataset smooth = simulate_grf(spec);

    Rng noise(derive_seed(6000 + s, 3));
    Dataset noisy = smooth;
    for (double& v : noisy.values) v += std::sqrt(tau2) * noise.normal();

    const auto holdout_idx = draw_subsample(n, n_holdout, derive_seed(6000 + s, 4));
    std::vector<char> mask(n, 0);
    for (const auto i : holdout_idx) mask[i] = 1;
    std::vector<std::int32_t> train_idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) train_idx.push_back(static_cast<std::int32_t>(i));
    }

    const auto run = [&](const Dataset& data, double nugget, double denom) {
      PredictionRequest req;
      req.train = data.subset(train_idx);
      req.model = tapered_model(sill, beta, 0.5, nugget, 0.3);
      for (const auto i : holdout_idx) req.targets.push_back(data.locations[i]);
      const PredictionResult pred = krige_predict(req, 2);
      std::vector<double> latent_truth;
      for (const auto i : holdout_idx) latent_truth.push_back(smooth.values[i]);
      return rmse(pred.predictions, latent_truth) / denom;
    };
    norm_with_nugget += run(noisy, tau2, std::sqrt(sill + tau2)) / n_seeds;
    norm_without += run(smooth, 0.0, std::sqrt(sill)) / n_seeds;
  }
  CHECK(norm_with_nugget < norm_without);
}

TEST_CASE("prediction request validation") {
  const Dataset train = make_dataset({{0, 0}, {1, 1}}, {1.0, 2.0});
  PredictionRequest req;
  req.train = train;
  req.model = tapered_model(1.0, 0.1, 0.5, 0.0, 0.3);
  req.targets = {Location{std::nan(""), 0.0}};
  CHECK_THROWS_AS(krige_predict(req, 1), IngestError);
}
