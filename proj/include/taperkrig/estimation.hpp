#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taperkrig/geometry.hpp"
#include "taperkrig/kernels.hpp"
#include "taperkrig/sparse.hpp"

namespace taperkrig {

// Simple kriging needs a known mean. The default centers on the training
// sample mean and adds it back at prediction; FixedZero treats the field
// as zero-mean.
enum class MeanPolicy { CenterOnMean, FixedZero };

std::string to_string(MeanPolicy policy);
MeanPolicy mean_policy_from_string(const std::string& name);

struct NelderMeadOptions {
  double tol_rel = 1e-6;   // relative simplex spread for convergence
  int max_iter = 500;
  double init_step = 0.3;  // initial simplex edge (log-parameter units)
};

struct NelderMeadResult {
  std::vector<double> x;
  double fx = 0.0;
  int n_evals = 0;
  int n_iter = 0;
  bool converged = false;
  std::vector<double> best_trace;  // best objective after each iteration
};

// Derivative-free simplex minimization with standard coefficients.
// Infinite objective values are tolerated during the search; a non-finite
// value at the starting point raises EstimationError.
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                             std::span<const double> x0, const NelderMeadOptions& options = {});

// Misspecified Gaussian likelihood setup: the model family evaluated in
// place of the truth, its fixed support range, and which of
// (sill, range, nugget) are optimized. Smoothness is never optimized; it
// only fixes the taper bracket.
struct LikelihoodConfig {
  ModelKind kind = ModelKind::TaperedMatern;
  int wendland_order = 1;
  double support_range = 0.0;              // theta; ignored for plain Matern
  std::optional<TaperFamily> taper_family;  // default: select_taper(init.smoothness)
  CovarianceParams init;  // starting values for free parameters, values for fixed ones
  bool fit_sill = true;
  bool fit_range = true;   // forced off for Wendland (range is the support)
  bool fit_nugget = false;
  bool auto_init = true;   // replace starting values with variogram-based guesses
  MeanPolicy mean = MeanPolicy::CenterOnMean;
  NelderMeadOptions optimizer;
  std::uint64_t seed = 0;

  void validate() const;
  bool range_is_free() const { return fit_range && kind != ModelKind::Wendland; }
  CovarianceModel make_model(const CovarianceParams& params) const;
};

// One likelihood surface: the sparsity pattern, symbolic factorization and
// centered data are computed once, so each evaluation costs one value fill
// plus one numeric factorization. Plain Matern models use the dense route
// (n <= kDenseFallbackLimit). Evaluations are re-entrant.
class LikelihoodEvaluator {
 public:
  LikelihoodEvaluator(const Dataset& dataset, const LikelihoodConfig& config, int n_threads = 1);

  // (logdet K + z' K^-1 z + n log 2 pi) / 2; +infinity when the numeric
  // factorization hits a nonpositive pivot.
  double operator()(const CovarianceParams& params) const;

  double mean() const { return mean_; }
  int n_failures() const { return failures_.load(); }
  std::int64_t pattern_nnz() const { return pd_.pattern.nnz(); }

 private:
  LikelihoodConfig config_;
  int n_threads_;
  double mean_ = 0.0;
  std::vector<double> z_;
  bool sparse_route_ = true;
  PatternDistances pd_;
  SymbolicChol symbolic_;
  std::vector<Location> locations_;  // dense route only
  mutable std::atomic<int> failures_{0};
};

double neg_loglik(const Dataset& dataset, const LikelihoodConfig& config,
                  const CovarianceParams& params);

// Empirical quantile with sorted-order linear interpolation.
double empirical_quantile(std::span<const double> sorted_values, double p);

// Keeps observations whose value lies inside the closed empirical
// [gamma, 1-gamma] quantile interval; original order preserved.
Dataset quantile_trim(const Dataset& dataset, double gamma);

// Uniform sample without replacement, returned sorted; the full index set
// when size >= n.
std::vector<std::int32_t> draw_subsample(std::size_t n, std::size_t size, std::uint64_t seed);

struct SubsampleSpec {
  double trim_gamma = 0.0;  // in [0, 0.5)
  std::size_t size = 5000;  // >= 30
  int repeats = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RepeatEstimate {
  CovarianceParams params;
  double neg_loglik = 0.0;
  int n_evals = 0;
  bool converged = false;
  std::uint64_t seed = 0;
  std::vector<std::int32_t> subsample_indices;
};

struct EstimationResult {
  CovarianceParams params;
  double neg_loglik = 0.0;
  long n_evals = 0;
  bool converged = false;
  int n_failed_repeats = 0;
  std::vector<RepeatEstimate> repeats;
  std::uint64_t seed = 0;
};

// Variogram-based starting values honoring the config's fixed parameters.
CovarianceParams variogram_initial_params(const Dataset& dataset, const LikelihoodConfig& config);

// One optimization run on the full dataset handed in.
EstimationResult estimate_single(const Dataset& dataset, const LikelihoodConfig& config,
                                 int n_threads = 1);

// Trim by gamma, then repeatedly draw a subsample, optimize and average:
// free parameters are combined by their geometric mean (consistent with
// log-space optimization). Failed repeats are dropped and counted; all
// repeats failing raises EstimationError. Repeat r uses seed
// spec.seed ^ r.
EstimationResult estimate_repeat_average(const Dataset& dataset, const LikelihoodConfig& config,
                                         const SubsampleSpec& spec, int n_threads = 0);

struct OrderResult {
  int order = 0;
  bool ok = false;
  EstimationResult result;
  std::string error;
};

struct WendlandSelection {
  int order = 0;
  std::vector<OrderResult> per_order;
};

// Runs estimate_repeat_average for each candidate Wendland order on
// identical subsamples (same spec.seed) and keeps the order with the
// largest averaged log-likelihood; ties break toward the smaller order.
WendlandSelection select_wendland_order(const Dataset& dataset, std::span<const int> orders,
                                        const LikelihoodConfig& base, const SubsampleSpec& spec,
                                        int n_threads = 0);

struct StabilizeCaps {
  double max_theta = 0.3;
  int max_rounds = 12;
};

struct StabilizeRound {
  int round = 0;
  std::size_t size = 0;
  double theta = 0.0;
  CovarianceParams params;
  double neg_loglik = 0.0;
  bool converged = false;
};

struct StabilizeResult {
  EstimationResult result;  // last round's estimate
  std::vector<StabilizeRound> rounds;
  bool stable = false;
};

// Start from a subsample of initial_size; re-estimate on doubled
// subsamples (capped at n), then on taper ranges grown by 1.5x (capped at
// caps.max_theta), until every free parameter moves by less than 5%
// between consecutive rounds. Hitting the caps without stability returns
// the last estimate flagged not converged.
StabilizeResult stabilize_estimate(const Dataset& dataset, const LikelihoodConfig& config,
                                   std::size_t initial_size, const StabilizeCaps& caps = {},
                                   int n_threads = 0);

}  // namespace taperkrig
