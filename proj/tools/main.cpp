// taperkrig: batch driver for simulation, variogram estimation, covariance
// parameter fitting and simple kriging on tapered / Wendland models.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "taperkrig/errors.hpp"
#include "taperkrig/estimation.hpp"
#include "taperkrig/io.hpp"
#include "taperkrig/kriging.hpp"
#include "taperkrig/rng.hpp"
#include "taperkrig/simulation.hpp"
#include "taperkrig/variogram.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace taperkrig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out_dir = ".";
};

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

json load_config(const CommonOptions& common) {
  if (common.config_path.empty()) throw ConfigError("--config is required");
  if (!fs::exists(common.config_path)) {
    throw ConfigError("config file does not exist: " + common.config_path);
  }
  json j = read_json_file(common.config_path);
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  return j;
}

std::uint64_t resolve_seed(const CommonOptions& common, const json& cfg) {
  if (common.seed) return *common.seed;
  if (cfg.contains("seed")) return cfg.at("seed").get<std::uint64_t>();
  return 0;
}

fs::path out_path(const CommonOptions& common, const std::string& name) {
  fs::create_directories(common.out_dir);
  return fs::path(common.out_dir) / name;
}

fs::path existing_input(const json& cfg, const std::string& key) {
  const std::string p = cfg.at(key).get<std::string>();
  if (!fs::exists(p)) throw ConfigError("input file does not exist: " + p);
  return p;
}

CovarianceModel model_from_config(const json& m) {
  reject_unknown_keys(m, {"kind", "order", "sill", "range", "smoothness", "nugget", "taper"},
                      "model");
  json doc = m;
  if (!doc.contains("smoothness")) doc["smoothness"] = 0.5;
  if (!doc.contains("nugget")) doc["nugget"] = 0.0;
  if (doc.contains("taper")) {
    reject_unknown_keys(doc.at("taper"), {"family", "range"}, "model.taper");
  }
  return model_from_json(doc);
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const CommonOptions& common) {
  const json cfg = load_config(common);
  reject_unknown_keys(cfg, {"n", "model", "seed", "name"}, "simulate");

  SimulationSpec spec;
  spec.n = cfg.at("n").get<std::size_t>();
  spec.model = model_from_config(cfg.at("model"));
  spec.name = cfg.value("name", "simulated");
  const std::uint64_t master = resolve_seed(common, cfg);
  spec.location_seed = derive_seed(master, 1);
  spec.seed = derive_seed(master, 2);

  if (spec.n > kDenseSimulationLimit && !std::isfinite(spec.model.support_radius())) {
    throw SizeError("simulate: n = " + std::to_string(spec.n) +
                    " exceeds the dense limit of " + std::to_string(kDenseSimulationLimit) +
                    "; use a compact-support model or reduce n");
  }

  const Dataset field = simulate_grf(spec);
  write_dataset_csv(out_path(common, "dataset.csv"), field);

  json truth;
  truth["model"] = model_to_json(spec.model);
  truth["n"] = spec.n;
  truth["seed"] = master;
  write_json_file(out_path(common, "truth.json"), truth);
  std::cout << "simulate: wrote " << field.size() << " observations\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// variogram
// ---------------------------------------------------------------------------

int cmd_variogram(const CommonOptions& common) {
  const json cfg = load_config(common);
  reject_unknown_keys(cfg, {"input", "max_dist", "n_bins", "max_pairs", "seed"}, "variogram");

  const Dataset data = read_dataset_csv(existing_input(cfg, "input"));
  VariogramOptions opt;
  opt.max_dist = cfg.value("max_dist", 0.0);
  opt.n_bins = cfg.value("n_bins", 30);
  opt.max_pairs = cfg.value("max_pairs", std::int64_t{1'000'000});
  opt.seed = resolve_seed(common, cfg);
  opt.n_threads = common.threads;

  const EmpiricalVariogram vg = empirical_variogram(data, opt);
  write_variogram_csv(out_path(common, "variogram.csv"), vg);
  std::cout << "variogram: " << vg.total_pairs() << " pairs over " << vg.n_bins() << " bins\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

int cmd_estimate(const CommonOptions& common) {
  const json cfg = load_config(common);
  reject_unknown_keys(cfg,
                      {"input", "mode", "smoothness", "theta", "taper_family", "order",
                       "trim_gamma", "size", "repeats", "fit_nugget", "mean_policy", "seed",
                       "stabilize", "initial_size", "max_theta"},
                      "estimate");

  const Dataset data = read_dataset_csv(existing_input(cfg, "input"));
  const std::uint64_t master = resolve_seed(common, cfg);
  const std::string mode = cfg.at("mode").get<std::string>();

  LikelihoodConfig lcfg;
  lcfg.seed = master;
  lcfg.fit_nugget = cfg.value("fit_nugget", false);
  lcfg.mean = mean_policy_from_string(cfg.value("mean_policy", "center"));

  // Smoothness comes from the config when given (the analyst's educated
  // guess); otherwise from the variogram heuristic.
  std::optional<ParamGuess> guess;
  auto variogram_guess = [&]() -> const ParamGuess& {
    if (!guess) {
      VariogramOptions vopt;
      vopt.seed = derive_seed(master, 0xec0);
      vopt.n_threads = common.threads;
      guess = guess_initial_params(empirical_variogram(data, vopt));
    }
    return *guess;
  };

  if (cfg.contains("smoothness")) {
    lcfg.init.smoothness = cfg.at("smoothness").get<double>();
  } else {
    lcfg.init.smoothness = variogram_guess().params.smoothness;
  }

  double theta = 0.0;
  if (cfg.contains("theta")) {
    theta = cfg.at("theta").get<double>();
  } else {
    // Effective-range guess capped at 0.3 for sparsity.
    theta = std::min(variogram_guess().params.range, 0.3);
  }
  lcfg.support_range = theta;

  if (mode == "tapered") {
    lcfg.kind = ModelKind::TaperedMatern;
    if (cfg.contains("taper_family")) {
      lcfg.taper_family = taper_family_from_string(cfg.at("taper_family").get<std::string>());
    }
  } else if (mode == "wendland") {
    lcfg.kind = ModelKind::Wendland;
    lcfg.fit_range = false;
  } else if (mode == "matern") {
    lcfg.kind = ModelKind::Matern;
  } else {
    throw ConfigError("estimate: mode must be 'tapered', 'wendland' or 'matern'");
  }

  SubsampleSpec sub;
  sub.trim_gamma = cfg.value("trim_gamma", 0.0);
  sub.size = cfg.value("size", data.size());
  sub.repeats = cfg.value("repeats", 1);
  sub.seed = master;

  json report;
  EstimationResult result;
  if (cfg.value("stabilize", false)) {
    if (mode == "wendland" && cfg.contains("order") && cfg.at("order").is_string()) {
      throw ConfigError("estimate: stabilize does not combine with order=auto");
    }
    if (mode == "wendland") lcfg.wendland_order = cfg.value("order", 1);
    StabilizeCaps caps;
    caps.max_theta = cfg.value("max_theta", 0.3);
    const std::size_t initial =
        std::min<std::size_t>(cfg.value("initial_size", std::size_t{10'000}), data.size());
    const StabilizeResult stab = stabilize_estimate(data, lcfg, initial, caps, common.threads);
    result = stab.result;
    json rounds = json::array();
    for (const StabilizeRound& r : stab.rounds) {
      rounds.push_back({{"round", r.round},
                        {"size", r.size},
                        {"theta", r.theta},
                        {"sill", r.params.sill},
                        {"range", r.params.range},
                        {"nugget", r.params.nugget},
                        {"neg_loglik", r.neg_loglik}});
    }
    report["stabilize"] = {{"stable", stab.stable}, {"rounds", std::move(rounds)}};
    lcfg.support_range = stab.rounds.back().theta;
  } else if (mode == "wendland" && cfg.contains("order") && cfg.at("order").is_string()) {
    if (cfg.at("order").get<std::string>() != "auto") {
      throw ConfigError("estimate: order must be 1, 2, 3 or \"auto\"");
    }
    const int orders[] = {1, 2, 3};
    const WendlandSelection sel = select_wendland_order(data, orders, lcfg, sub, common.threads);
    json per_order = json::array();
    for (const OrderResult& o : sel.per_order) {
      json entry = {{"order", o.order}, {"ok", o.ok}};
      if (o.ok) {
        entry["neg_loglik"] = o.result.neg_loglik;
        entry["sill"] = o.result.params.sill;
        entry["nugget"] = o.result.params.nugget;
      } else {
        entry["error"] = o.error;
      }
      per_order.push_back(std::move(entry));
    }
    report["orders"] = std::move(per_order);
    lcfg.wendland_order = sel.order;
    for (const OrderResult& o : sel.per_order) {
      if (o.order == sel.order) result = o.result;
    }
  } else {
    if (mode == "wendland") lcfg.wendland_order = cfg.value("order", 1);
    if (sub.repeats == 1 && sub.size >= data.size() && sub.trim_gamma == 0.0) {
      result = estimate_single(data, lcfg, common.threads);
    } else {
      result = estimate_repeat_average(data, lcfg, sub, common.threads);
    }
  }

  const CovarianceModel fitted = lcfg.make_model(result.params);
  json out = estimation_report_json(fitted, result, lcfg.mean);
  for (auto& [key, value] : report.items()) out[key] = value;
  write_json_file(out_path(common, "estimate.json"), out);
  std::cout << "estimate: " << to_string(fitted.kind) << " neg_loglik=" << result.neg_loglik
            << " converged=" << (result.converged ? "yes" : "no") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const CommonOptions& common) {
  const json cfg = load_config(common);
  reject_unknown_keys(cfg, {"input", "targets", "model", "chunk_size", "seed"}, "predict");

  const Dataset train = read_dataset_csv(existing_input(cfg, "input"));
  const std::vector<Location> targets = read_locations_csv(existing_input(cfg, "targets"));
  const ParsedReport report = parse_estimation_report(read_json_file(existing_input(cfg, "model")));

  PredictionRequest req;
  req.train = train;
  req.model = report.model;
  req.targets = targets;
  req.mean = report.mean;

  const std::size_t chunk = cfg.value("chunk_size", std::size_t{4096});
  const PredictionResult result = krige_batch(req, chunk, common.threads);
  write_predictions_csv(out_path(common, "predictions.csv"), targets, result.predictions);
  std::cout << "predict: " << targets.size() << " targets, factor nnz " << result.diag.factor_nnz
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const CommonOptions& common) {
  const json cfg = load_config(common);
  reject_unknown_keys(cfg,
                      {"truth", "n", "n_holdout", "theta_grid", "size_grid", "n_seeds", "seeds",
                       "smoothness", "fit_nugget", "seed", "timings"},
                      "evaluate");

  ExperimentSpec spec;
  spec.truth = model_from_config(cfg.at("truth"));
  spec.n = cfg.at("n").get<std::size_t>();
  spec.n_holdout = cfg.at("n_holdout").get<std::size_t>();
  spec.theta_grid = cfg.at("theta_grid").get<std::vector<double>>();
  spec.size_grid = cfg.at("size_grid").get<std::vector<std::size_t>>();
  spec.smoothness = cfg.value("smoothness", spec.truth.params.smoothness);
  spec.fit_nugget = cfg.value("fit_nugget", false);
  spec.master_seed = resolve_seed(common, cfg);
  if (cfg.contains("seeds")) {
    spec.seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
  } else {
    const std::size_t n_seeds = cfg.value("n_seeds", std::size_t{1});
    for (std::size_t s = 0; s < n_seeds; ++s) spec.seeds.push_back(s);
  }

  const std::vector<ScoreReport> rows = run_experiment(spec, common.threads);
  write_experiment_csv(out_path(common, "experiment.csv"), rows, cfg.value("timings", false));

  std::size_t failures = 0;
  for (const ScoreReport& r : rows) failures += r.ok ? 0 : 1;
  std::cout << "evaluate: " << rows.size() << " cells, " << failures << " failed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process estimation and simple kriging with covariance tapering"};
  app.require_subcommand(1);

  CommonOptions common;
  std::uint64_t seed_flag = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON configuration file")->required();
    sub->add_option("--seed", seed_flag, "master seed (overrides the config)");
    sub->add_option("--threads", common.threads, "thread budget (0 = all cores)");
    sub->add_option("--out", common.out_dir, "output directory");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "draw a Gaussian random field");
  CLI::App* variogram = app.add_subcommand("variogram", "empirical semivariogram as CSV");
  CLI::App* estimate = app.add_subcommand("estimate", "fit covariance parameters");
  CLI::App* predict = app.add_subcommand("predict", "simple kriging at target locations");
  CLI::App* evaluate = app.add_subcommand("evaluate", "taper-range / subsample-size sweep");
  for (CLI::App* sub : {simulate, variogram, estimate, predict, evaluate}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }

  try {
    for (CLI::App* sub : {simulate, variogram, estimate, predict, evaluate}) {
      if (sub->parsed() && sub->count("--seed") > 0) common.seed = seed_flag;
    }
    if (simulate->parsed()) return cmd_simulate(common);
    if (variogram->parsed()) return cmd_variogram(common);
    if (estimate->parsed()) return cmd_estimate(common);
    if (predict->parsed()) return cmd_predict(common);
    if (evaluate->parsed()) return cmd_evaluate(common);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad configuration: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}
