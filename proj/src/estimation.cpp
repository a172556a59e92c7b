#include "taperkrig/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "taperkrig/dense.hpp"
#include "taperkrig/errors.hpp"
#include "taperkrig/parallel.hpp"
#include "taperkrig/rng.hpp"
#include "taperkrig/variogram.hpp"

namespace taperkrig {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

std::string to_string(MeanPolicy policy) {
  return policy == MeanPolicy::CenterOnMean ? "center" : "zero";
}

MeanPolicy mean_policy_from_string(const std::string& name) {
  if (name == "center") return MeanPolicy::CenterOnMean;
  if (name == "zero") return MeanPolicy::FixedZero;
  throw ConfigError("unknown mean policy: " + name);
}

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                             std::span<const double> x0, const NelderMeadOptions& options) {
  const std::size_t dim = x0.size();
  if (dim == 0) throw std::invalid_argument("nelder_mead: empty starting point");

  NelderMeadResult res;
  auto eval = [&](std::span<const double> x) {
    ++res.n_evals;
    const double f = objective(x);
    return std::isnan(f) ? kInf : f;
  };

  std::vector<std::vector<double>> simplex(dim + 1, std::vector<double>(x0.begin(), x0.end()));
  std::vector<double> fval(dim + 1);
  fval[0] = eval(simplex[0]);
  if (!std::isfinite(fval[0])) {
    throw EstimationError("nelder_mead: objective is not finite at the starting point");
  }
  for (std::size_t i = 0; i < dim; ++i) {
    simplex[i + 1][i] += options.init_step;
    fval[i + 1] = eval(simplex[i + 1]);
  }

  constexpr double alpha = 1.0;  // reflection
  constexpr double gamma = 2.0;  // expansion
  constexpr double rho = 0.5;    // contraction
  constexpr double sigma = 0.5;  // shrink

  std::vector<double> centroid(dim), xr(dim), xe(dim), xc(dim);

  for (res.n_iter = 0; res.n_iter < options.max_iter; ++res.n_iter) {
    // best l, worst h, second-worst s
    std::size_t l = 0, h = 0;
    for (std::size_t i = 1; i <= dim; ++i) {
      if (fval[i] < fval[l]) l = i;
      if (fval[i] > fval[h]) h = i;
    }
    std::size_t s = l;
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i != h && fval[i] > fval[s]) s = i;
    }

    // Relative geometric spread of the simplex around its best vertex.
    double xspread = 0.0;
    double xscale = 1.0;
    for (std::size_t d = 0; d < dim; ++d) xscale = std::max(xscale, std::fabs(simplex[l][d]));
    for (std::size_t i = 0; i <= dim; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        xspread = std::max(xspread, std::fabs(simplex[i][d] - simplex[l][d]));
      }
    }
    if (xspread < options.tol_rel * xscale) {
      res.converged = true;
      res.best_trace.push_back(fval[l]);
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == h) continue;
      for (std::size_t d = 0; d < dim; ++d) centroid[d] += simplex[i][d];
    }
    for (std::size_t d = 0; d < dim; ++d) centroid[d] /= static_cast<double>(dim);

    for (std::size_t d = 0; d < dim; ++d) xr[d] = centroid[d] + alpha * (centroid[d] - simplex[h][d]);
    const double fr = eval(xr);

    if (fr < fval[l]) {
      for (std::size_t d = 0; d < dim; ++d) xe[d] = centroid[d] + gamma * (xr[d] - centroid[d]);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[h] = xe;
        fval[h] = fe;
      } else {
        simplex[h] = xr;
        fval[h] = fr;
      }
    } else if (fr < fval[s]) {
      simplex[h] = xr;
      fval[h] = fr;
    } else {
      bool shrink = false;
      if (fr < fval[h]) {
        // outside contraction
        for (std::size_t d = 0; d < dim; ++d) xc[d] = centroid[d] + rho * (xr[d] - centroid[d]);
        const double fc = eval(xc);
        if (fc <= fr) {
          simplex[h] = xc;
          fval[h] = fc;
        } else {
          shrink = true;
        }
      } else {
        // inside contraction
        for (std::size_t d = 0; d < dim; ++d) xc[d] = centroid[d] + rho * (simplex[h][d] - centroid[d]);
        const double fc = eval(xc);
        if (fc < fval[h]) {
          simplex[h] = xc;
          fval[h] = fc;
        } else {
          shrink = true;
        }
      }
      if (shrink) {
        for (std::size_t i = 0; i <= dim; ++i) {
          if (i == l) continue;
          for (std::size_t d = 0; d < dim; ++d) {
            simplex[i][d] = simplex[l][d] + sigma * (simplex[i][d] - simplex[l][d]);
          }
          fval[i] = eval(simplex[i]);
        }
      }
    }

    double best = fval[0];
    for (std::size_t i = 1; i <= dim; ++i) best = std::min(best, fval[i]);
    res.best_trace.push_back(best);
  }

  std::size_t l = 0;
  for (std::size_t i = 1; i <= dim; ++i) {
    if (fval[i] < fval[l]) l = i;
  }
  res.x = simplex[l];
  res.fx = fval[l];
  return res;
}

// ---------------------------------------------------------------------------
// Likelihood
// ---------------------------------------------------------------------------

void LikelihoodConfig::validate() const {
  init.validate();
  if (kind != ModelKind::Matern && !(support_range > 0.0 && std::isfinite(support_range))) {
    throw ConfigError("LikelihoodConfig: support range must be positive");
  }
  if (kind == ModelKind::Wendland && (wendland_order < 1 || wendland_order > 3)) {
    throw ConfigError("LikelihoodConfig: Wendland order must be 1, 2 or 3");
  }
  if (!fit_sill && !range_is_free() && !fit_nugget) {
    throw ConfigError("LikelihoodConfig: at least one parameter must be free");
  }
  if (optimizer.max_iter < 1) throw ConfigError("LikelihoodConfig: max_iter must be positive");
}

CovarianceModel LikelihoodConfig::make_model(const CovarianceParams& params) const {
  CovarianceModel model;
  model.kind = kind;
  model.params = params;
  switch (kind) {
    case ModelKind::Matern:
      break;
    case ModelKind::TaperedMatern:
      model.taper = TaperSpec{taper_family ? *taper_family : select_taper(params.smoothness),
                              support_range};
      break;
    case ModelKind::Wendland:
      model.wendland_order = wendland_order;
      model.params.range = support_range;
      break;
  }
  return model;
}

LikelihoodEvaluator::LikelihoodEvaluator(const Dataset& dataset, const LikelihoodConfig& config,
                                         int n_threads)
    : config_(config), n_threads_(n_threads) {
  config_.validate();
  const std::size_t n = dataset.size();
  if (n == 0) throw IngestError("likelihood: empty dataset");
  if (dataset.values.size() != n) throw IngestError("likelihood: length mismatch");

  mean_ = config_.mean == MeanPolicy::CenterOnMean ? dataset.mean_value() : 0.0;
  z_.resize(n);
  for (std::size_t i = 0; i < n; ++i) z_[i] = dataset.values[i] - mean_;

  if (config_.kind == ModelKind::Matern) {
    if (n > static_cast<std::size_t>(kDenseFallbackLimit)) {
      throw SizeError("likelihood: plain Matern uses the dense route, limited to n <= " +
                      std::to_string(kDenseFallbackLimit));
    }
    sparse_route_ = false;
    locations_ = dataset.locations;
    return;
  }

  SpatialIndex index(dataset.locations);
  pd_ = pattern_with_distances(index, dataset.locations, config_.support_range, n_threads_);
  symbolic_ = analyze(pd_.pattern, true);
}

double LikelihoodEvaluator::operator()(const CovarianceParams& params) const {
  if (!std::isfinite(params.sill) || !std::isfinite(params.range) ||
      !std::isfinite(params.nugget) || params.sill <= 0.0 || params.range <= 0.0 ||
      params.nugget < 0.0) {
    return kInf;
  }
  const CovarianceModel model = config_.make_model(params);
  const std::size_t n = z_.size();

  try {
    if (!sparse_route_) {
      const Eigen::MatrixXd k = dense_covariance(locations_, model);
      return dense_neg_loglik(k, Eigen::Map<const Eigen::VectorXd>(z_.data(), n));
    }
    std::vector<double> values;
    fill_values(pd_.pattern, pd_.dist, model, values, n_threads_);
    const CholFactor factor =
        factorize_with(symbolic_, values, model.params.sill + model.params.nugget);
    std::vector<double> x(n);
    factor.solve(z_, x);
    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) quad += z_[i] * x[i];
    return 0.5 * (factor.logdet() + quad + static_cast<double>(n) * kLog2Pi);
  } catch (const NotPositiveDefiniteError&) {
    failures_.fetch_add(1);
    return kInf;
  }
}

double neg_loglik(const Dataset& dataset, const LikelihoodConfig& config,
                  const CovarianceParams& params) {
  return LikelihoodEvaluator(dataset, config, 1)(params);
}

// ---------------------------------------------------------------------------
// Trimming and subsampling
// ---------------------------------------------------------------------------

double empirical_quantile(std::span<const double> sorted_values, double p) {
  const std::size_t n = sorted_values.size();
  if (n == 0) throw std::invalid_argument("empirical_quantile: empty input");
  if (p <= 0.0) return sorted_values.front();
  if (p >= 1.0) return sorted_values.back();
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted_values.back();
  return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo]);
}

Dataset quantile_trim(const Dataset& dataset, double gamma) {
  if (!(gamma >= 0.0) || gamma >= 0.5) {
    throw std::invalid_argument("quantile_trim: gamma must lie in [0, 0.5)");
  }
  if (gamma == 0.0) return dataset;

  std::vector<double> sorted(dataset.values);
  std::sort(sorted.begin(), sorted.end());
  const double lo = empirical_quantile(sorted, gamma);
  const double hi = empirical_quantile(sorted, 1.0 - gamma);

  std::vector<std::int32_t> keep;
  keep.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const double v = dataset.values[i];
    if (v >= lo && v <= hi) keep.push_back(static_cast<std::int32_t>(i));
  }
  if (keep.empty()) throw EstimationError("quantile_trim: trimming removed every observation");
  return dataset.subset(keep);
}

std::vector<std::int32_t> draw_subsample(std::size_t n, std::size_t size, std::uint64_t seed) {
  std::vector<std::int32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (size >= n) return idx;

  Rng rng(seed);
  for (std::size_t t = 0; t < size; ++t) {
    const std::size_t j = t + static_cast<std::size_t>(rng.index(n - t));
    std::swap(idx[t], idx[j]);
  }
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void SubsampleSpec::validate() const {
  if (!(trim_gamma >= 0.0) || trim_gamma >= 0.5) {
    throw ConfigError("SubsampleSpec: trim_gamma must lie in [0, 0.5)");
  }
  if (size < 30) throw ConfigError("SubsampleSpec: subsample size must be at least 30");
  if (repeats < 1) throw ConfigError("SubsampleSpec: repeats must be at least 1");
}

// ---------------------------------------------------------------------------
// Estimation drivers
// ---------------------------------------------------------------------------

CovarianceParams variogram_initial_params(const Dataset& dataset,
                                          const LikelihoodConfig& config) {
  VariogramOptions vopt;
  vopt.seed = derive_seed(config.seed, 0x7a11);
  const ParamGuess guess = guess_initial_params(empirical_variogram(dataset, vopt));

  CovarianceParams init = config.init;
  if (config.fit_nugget) {
    init.sill = guess.params.sill;
    init.nugget = std::max(guess.params.nugget, 1e-3 * guess.params.sill);
  } else {
    // All variance mass goes to the sill when the nugget is frozen at its
    // configured value.
    init.sill = std::max(guess.params.sill + guess.params.nugget - init.nugget,
                         0.05 * guess.params.sill);
  }
  if (config.range_is_free()) {
    // The guess is on the effective-range scale; convert to the Matern
    // range parameter for the configured smoothness.
    const double factor = matern_effective_range_factor(init.smoothness);
    init.range = std::max(guess.params.range / factor, 1e-8);
  }
  if (config.kind == ModelKind::Wendland) init.range = config.support_range;
  return init;
}

namespace {

struct FreeMask {
  bool sill, range, nugget;
  int count() const { return int(sill) + int(range) + int(nugget); }
};

FreeMask free_mask(const LikelihoodConfig& config) {
  return FreeMask{config.fit_sill, config.range_is_free(), config.fit_nugget};
}

std::vector<double> pack_log(const CovarianceParams& params, const FreeMask& mask) {
  std::vector<double> x;
  if (mask.sill) x.push_back(std::log(params.sill));
  if (mask.range) x.push_back(std::log(params.range));
  if (mask.nugget) x.push_back(std::log(std::max(params.nugget, 1e-300)));
  return x;
}

CovarianceParams unpack_log(std::span<const double> x, const CovarianceParams& base,
                            const FreeMask& mask) {
  CovarianceParams params = base;
  std::size_t at = 0;
  if (mask.sill) params.sill = std::exp(x[at++]);
  if (mask.range) params.range = std::exp(x[at++]);
  if (mask.nugget) params.nugget = std::exp(x[at++]);
  return params;
}

}  // namespace

EstimationResult estimate_single(const Dataset& dataset, const LikelihoodConfig& config,
                                 int n_threads) {
  config.validate();
  CovarianceParams init = config.auto_init && dataset.size() >= 8
                              ? variogram_initial_params(dataset, config)
                              : config.init;
  if (config.fit_nugget && init.nugget <= 0.0) init.nugget = 1e-3 * init.sill;

  const FreeMask mask = free_mask(config);
  LikelihoodEvaluator evaluator(dataset, config, n_threads);

  const std::vector<double> x0 = pack_log(init, mask);
  const auto objective = [&](std::span<const double> x) {
    return evaluator(unpack_log(x, init, mask));
  };
  const NelderMeadResult opt = nelder_mead(objective, x0, config.optimizer);

  EstimationResult out;
  out.params = unpack_log(opt.x, init, mask);
  if (config.kind == ModelKind::Wendland) out.params.range = config.support_range;
  out.neg_loglik = opt.fx;
  out.n_evals = opt.n_evals;
  out.converged = opt.converged;
  out.seed = config.seed;
  return out;
}

namespace {

CovarianceParams geometric_mean_params(std::span<const RepeatEstimate> repeats,
                                       const LikelihoodConfig& config) {
  const FreeMask mask = free_mask(config);
  CovarianceParams avg = repeats.front().params;
  const double inv = 1.0 / static_cast<double>(repeats.size());
  auto geo = [&](auto get) {
    double acc = 0.0;
    for (const RepeatEstimate& r : repeats) acc += std::log(get(r.params));
    return std::exp(acc * inv);
  };
  if (mask.sill) avg.sill = geo([](const CovarianceParams& p) { return p.sill; });
  if (mask.range) avg.range = geo([](const CovarianceParams& p) { return p.range; });
  if (mask.nugget) avg.nugget = geo([](const CovarianceParams& p) { return p.nugget; });
  return avg;
}

}  // namespace

EstimationResult estimate_repeat_average(const Dataset& dataset, const LikelihoodConfig& config,
                                         const SubsampleSpec& spec, int n_threads) {
  config.validate();
  spec.validate();

  const Dataset trimmed = quantile_trim(dataset, spec.trim_gamma);
  const std::size_t n = trimmed.size();

  std::vector<std::optional<RepeatEstimate>> slots(spec.repeats);
  std::vector<std::string> errors(spec.repeats);

  parallel_for(static_cast<std::size_t>(spec.repeats), n_threads, [&](std::size_t r) {
    const std::uint64_t seed_r = spec.seed ^ static_cast<std::uint64_t>(r + 1);
    try {
      std::vector<std::int32_t> indices = draw_subsample(n, spec.size, seed_r);
      const Dataset sub = trimmed.subset(indices);
      LikelihoodConfig cfg = config;
      cfg.seed = seed_r;
      const EstimationResult est = estimate_single(sub, cfg, 1);
      if (!std::isfinite(est.neg_loglik)) {
        errors[r] = "non-finite objective";
        return;
      }
      RepeatEstimate rep;
      rep.params = est.params;
      rep.neg_loglik = est.neg_loglik;
      rep.n_evals = static_cast<int>(est.n_evals);
      rep.converged = est.converged;
      rep.seed = seed_r;
      rep.subsample_indices = std::move(indices);
      slots[r] = std::move(rep);
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });

  EstimationResult out;
  out.seed = spec.seed;
  for (int r = 0; r < spec.repeats; ++r) {
    if (slots[r]) {
      out.repeats.push_back(std::move(*slots[r]));
    } else {
      ++out.n_failed_repeats;
    }
  }
  if (out.repeats.empty()) {
    throw EstimationError("estimate_repeat_average: every repeat failed (last error: " +
                          errors.back() + ")");
  }

  out.params = geometric_mean_params(out.repeats, config);
  double nll = 0.0;
  out.converged = true;
  for (const RepeatEstimate& r : out.repeats) {
    nll += r.neg_loglik;
    out.n_evals += r.n_evals;
    out.converged = out.converged && r.converged;
  }
  out.neg_loglik = nll / static_cast<double>(out.repeats.size());
  return out;
}

WendlandSelection select_wendland_order(const Dataset& dataset, std::span<const int> orders,
                                        const LikelihoodConfig& base, const SubsampleSpec& spec,
                                        int n_threads) {
  if (orders.empty()) throw ConfigError("select_wendland_order: no candidate orders");

  WendlandSelection sel;
  bool have_best = false;
  double best_nll = kInf;
  for (const int k : orders) {
    OrderResult entry;
    entry.order = k;
    LikelihoodConfig cfg = base;
    cfg.kind = ModelKind::Wendland;
    cfg.wendland_order = k;
    cfg.fit_range = false;
    try {
      entry.result = estimate_repeat_average(dataset, cfg, spec, n_threads);
      entry.ok = true;
      // Maximal averaged log-likelihood = minimal averaged negative
      // log-likelihood; strict comparison keeps the smaller order on ties.
      if (entry.result.neg_loglik < best_nll) {
        best_nll = entry.result.neg_loglik;
        sel.order = k;
        have_best = true;
      }
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    sel.per_order.push_back(std::move(entry));
  }
  if (!have_best) throw EstimationError("select_wendland_order: every candidate order failed");
  return sel;
}

StabilizeResult stabilize_estimate(const Dataset& dataset, const LikelihoodConfig& config,
                                   std::size_t initial_size, const StabilizeCaps& caps,
                                   int n_threads) {
  config.validate();
  if (initial_size < 1) throw ConfigError("stabilize_estimate: initial size must be positive");
  const std::size_t n = dataset.size();
  if (initial_size > n) throw ConfigError("stabilize_estimate: initial size exceeds the dataset");

  StabilizeResult out;
  std::size_t size = initial_size;
  double theta = config.support_range;
  std::optional<CovarianceParams> prev;
  const FreeMask mask = free_mask(config);

  auto close = [](double a, double b) {
    return std::fabs(a - b) < 0.05 * std::max(std::fabs(b), 1e-300);
  };

  EstimationResult last;
  for (int round = 0; round < caps.max_rounds; ++round) {
    LikelihoodConfig cfg = config;
    cfg.support_range = theta;
    cfg.seed = derive_seed(config.seed, static_cast<std::uint64_t>(round));

    const std::vector<std::int32_t> indices =
        draw_subsample(n, size, derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(round)));
    const Dataset sub = size >= n ? dataset : dataset.subset(indices);
    last = estimate_single(sub, cfg, n_threads);
    last.seed = config.seed;

    out.rounds.push_back(StabilizeRound{round, std::min(size, n), theta, last.params,
                                        last.neg_loglik, last.converged});

    if (prev) {
      bool stable = true;
      if (mask.sill) stable = stable && close(last.params.sill, prev->sill);
      if (mask.range) stable = stable && close(last.params.range, prev->range);
      if (mask.nugget) stable = stable && close(last.params.nugget, prev->nugget);
      if (stable) {
        out.stable = true;
        break;
      }
    } else if (size >= n) {
      // First round already used the whole dataset: trivially stable.
      out.stable = true;
      break;
    }
    prev = last.params;

    if (size < n) {
      size = std::min(2 * size, n);
    } else if (theta < caps.max_theta * (1.0 - 1e-12)) {
      theta = std::min(1.5 * theta, caps.max_theta);
    } else {
      break;  // caps exhausted without stability
    }
  }

  out.result = last;
  out.result.converged = out.result.converged && out.stable;
  return out;
}

}  // namespace taperkrig
