#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "taperkrig/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace taperkrig;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

// Runs the CLI with stdout+stderr captured.
RunResult run_cli(const std::string& args) {
  const std::string out_file = (fs::temp_directory_path() / "taperkrig_cli_out.txt").string();
  const std::string cmd = std::string(TAPERKRIG_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WEXITSTATUS(raw);
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "taperkrig_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_config(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json simulate_config(std::size_t n, double range = 0.1, double nugget = 0.0) {
  return json{{"n", n},
              {"model",
               {{"kind", "matern"},
                {"sill", 1.0},
                {"range", range},
                {"smoothness", 0.5},
                {"nugget", nugget}}},
              {"seed", 7}};
}

// One small simulated dataset shared by the dependent-command tests.
const fs::path& shared_dataset() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("shared");
    write_config(d / "sim.json", simulate_config(220, 0.08));
    const RunResult r = run_cli("simulate --config " + (d / "sim.json").string() + " --out " +
                                d.string());
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("simulate writes the dataset and truth document") {
  const fs::path dir = fresh_dir("simulate");
  write_config(dir / "cfg.json", simulate_config(100));
  const RunResult r =
      run_cli("simulate --config " + (dir / "cfg.json").string() + " --out " + dir.string());
  CHECK(r.code == 0);

  const Dataset d = read_dataset_csv(dir / "dataset.csv");
  CHECK(d.size() == 100);
  const json truth = read_json_file(dir / "truth.json");
  CHECK(truth.at("model").at("kind") == "matern");

  SUBCASE("rerun is byte-identical") {
    const std::string first = slurp(dir / "dataset.csv");
    const RunResult again =
        run_cli("simulate --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(again.code == 0);
    CHECK(slurp(dir / "dataset.csv") == first);
  }
  SUBCASE("seed flag overrides the config") {
    const std::string first = slurp(dir / "dataset.csv");
    const RunResult other = run_cli("simulate --config " + (dir / "cfg.json").string() +
                                    " --seed 8 --out " + dir.string());
    CHECK(other.code == 0);
    CHECK(slurp(dir / "dataset.csv") != first);
  }
}

TEST_CASE("simulate guards") {
  const fs::path dir = fresh_dir("simulate_guard");
  SUBCASE("dense limit exceeded") {
    write_config(dir / "cfg.json", simulate_config(30'000));
    const RunResult r =
        run_cli("simulate --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 2);
    CHECK(r.output.find("dense limit") != std::string::npos);
  }
  SUBCASE("unknown keys are rejected") {
    json cfg = simulate_config(50);
    cfg["typo_key"] = 1;
    write_config(dir / "cfg.json", cfg);
    const RunResult r =
        run_cli("simulate --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 2);
    CHECK(r.output.find("typo_key") != std::string::npos);
  }
  SUBCASE("missing config file") {
    const RunResult r = run_cli("simulate --config " + (dir / "nope.json").string());
    CHECK(r.code == 2);
  }
}

TEST_CASE("variogram command") {
  const fs::path dir = fresh_dir("variogram");

  SUBCASE("constant field gives all-zero semivariance") {
    std::ofstream csv(dir / "flat.csv");
    csv << "x,y,value\n";
    for (int i = 0; i < 12; ++i) {
      for (int j = 0; j < 12; ++j) {
        csv << (i / 12.0) << "," << (j / 12.0) << ",2.5\n";
      }
    }
    csv.close();
    write_config(dir / "cfg.json", json{{"input", (dir / "flat.csv").string()}, {"n_bins", 8}});
    const RunResult r =
        run_cli("variogram --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 0);
    std::ifstream in(dir / "variogram.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "bin_lo,bin_hi,count,semivariance");
    while (std::getline(in, line)) {
      const auto last = line.rfind(',');
      const std::string gamma = line.substr(last + 1);
      CHECK((gamma == "0" || gamma == "nan"));
    }
  }
  SUBCASE("simulated field plateaus near the total variance") {
    write_config(dir / "sim.json", simulate_config(1200, 0.03, 0.2));
    REQUIRE(run_cli("simulate --config " + (dir / "sim.json").string() + " --out " +
                    dir.string()).code == 0);
    write_config(dir / "cfg.json",
                 json{{"input", (dir / "dataset.csv").string()}, {"n_bins", 12}});
    const RunResult r =
        run_cli("variogram --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 0);
    // Mean semivariance over the outer bins should sit near sill + nugget.
    std::ifstream in(dir / "variogram.csv");
    std::string line;
    std::getline(in, line);
    std::vector<double> gamma;
    while (std::getline(in, line)) {
      const auto last = line.rfind(',');
      gamma.push_back(std::stod(line.substr(last + 1)));
    }
    REQUIRE(gamma.size() == 12);
    double plateau = 0.0;
    for (int b = 6; b < 12; ++b) plateau += gamma[b] / 6.0;
    CHECK(plateau == doctest::Approx(1.2).epsilon(0.25));
  }
  SUBCASE("empty input file is a config error") {
    std::ofstream(dir / "empty.csv").close();
    write_config(dir / "cfg.json", json{{"input", (dir / "empty.csv").string()}});
    const RunResult r =
        run_cli("variogram --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 2);
  }
}

TEST_CASE("estimate command") {
  const fs::path data_dir = shared_dataset();

  SUBCASE("tapered mode auto-selects the taper family from smoothness") {
    const fs::path dir = fresh_dir("estimate_tapered");
    write_config(dir / "cfg.json", json{{"input", (data_dir / "dataset.csv").string()},
                                        {"mode", "tapered"},
                                        {"smoothness", 0.6},
                                        {"theta", 0.25},
                                        {"seed", 3}});
    const RunResult r =
        run_cli("estimate --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 0);
    const json report = read_json_file(dir / "estimate.json");
    CHECK(report.at("model") == "tapered_matern");
    CHECK(report.at("taper").at("family") == "wendland1");  // 0.5 < 0.6 <= 1.5
    CHECK(report.at("taper").at("range") == 0.25);
    CHECK(report.at("params").at("smoothness") == 0.6);
    CHECK(report.contains("checksum"));
  }
  SUBCASE("wendland mode with automatic order reports every candidate") {
    const fs::path dir = fresh_dir("estimate_auto");
    write_config(dir / "cfg.json", json{{"input", (data_dir / "dataset.csv").string()},
                                        {"mode", "wendland"},
                                        {"order", "auto"},
                                        {"theta", 0.25},
                                        {"size", 220},
                                        {"repeats", 1},
                                        {"fit_nugget", true},
                                        {"seed", 3}});
    const RunResult r =
        run_cli("estimate --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 0);
    const json report = read_json_file(dir / "estimate.json");
    REQUIRE(report.contains("orders"));
    CHECK(report.at("orders").size() == 3);
    CHECK(report.at("model") == "wendland");
  }
  SUBCASE("repeats=1 with full size is a plain single estimate") {
    const fs::path dir = fresh_dir("estimate_single");
    write_config(dir / "cfg.json", json{{"input", (data_dir / "dataset.csv").string()},
                                        {"mode", "tapered"},
                                        {"smoothness", 0.5},
                                        {"theta", 0.3},
                                        {"size", 10'000},
                                        {"repeats", 1},
                                        {"seed", 5}});
    const RunResult r =
        run_cli("estimate --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 0);
    const json report = read_json_file(dir / "estimate.json");
    CHECK(report.at("repeats").empty());
    CHECK(report.at("converged") == true);
  }
}

TEST_CASE("predict command") {
  const fs::path data_dir = shared_dataset();
  const fs::path dir = fresh_dir("predict");

  // Estimate first (zero-nugget fit so kriging is exact at data sites).
  write_config(dir / "est.json", json{{"input", (data_dir / "dataset.csv").string()},
                                      {"mode", "tapered"},
                                      {"smoothness", 0.5},
                                      {"theta", 0.3},
                                      {"seed", 5}});
  REQUIRE(run_cli("estimate --config " + (dir / "est.json").string() + " --out " +
                  dir.string()).code == 0);

  SUBCASE("round-trip: predicting the training locations reproduces the values") {
    write_config(dir / "cfg.json", json{{"input", (data_dir / "dataset.csv").string()},
                                        {"targets", (data_dir / "dataset.csv").string()},
                                        {"model", (dir / "estimate.json").string()}});
    const RunResult r =
        run_cli("predict --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 0);

    const Dataset train = read_dataset_csv(data_dir / "dataset.csv");
    std::ifstream in(dir / "predictions.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "x,y,prediction");
    std::size_t i = 0;
    double worst = 0.0;
    while (std::getline(in, line)) {
      const auto last = line.rfind(',');
      worst = std::max(worst, std::fabs(std::stod(line.substr(last + 1)) - train.values[i]));
      ++i;
    }
    CHECK(i == train.size());
    CHECK(worst < 1e-5);
  }
  SUBCASE("tampered model document is rejected by checksum") {
    json report = read_json_file(dir / "estimate.json");
    report["params"]["sill"] = report["params"]["sill"].get<double>() * 2.0;
    write_json_file(dir / "tampered.json", report);
    write_config(dir / "cfg.json", json{{"input", (data_dir / "dataset.csv").string()},
                                        {"targets", (data_dir / "dataset.csv").string()},
                                        {"model", (dir / "tampered.json").string()}});
    const RunResult r =
        run_cli("predict --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 2);
    CHECK(r.output.find("checksum") != std::string::npos);
  }
  SUBCASE("missing model file") {
    write_config(dir / "cfg.json", json{{"input", (data_dir / "dataset.csv").string()},
                                        {"targets", (data_dir / "dataset.csv").string()},
                                        {"model", (dir / "missing.json").string()}});
    const RunResult r =
        run_cli("predict --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    CHECK(r.code == 2);
  }
}

TEST_CASE("evaluate command") {
  const fs::path dir = fresh_dir("evaluate");
  write_config(dir / "cfg.json",
               json{{"truth",
                     {{"kind", "matern"}, {"sill", 1.0}, {"range", 0.05}, {"smoothness", 0.5}}},
                    {"n", 300},
                    {"n_holdout", 60},
                    {"theta_grid", {0.2}},
                    {"size_grid", {240}},
                    {"n_seeds", 1},
                    {"seed", 11}});
  const RunResult r =
      run_cli("evaluate --config " + (dir / "cfg.json").string() + " --out " + dir.string());
  CHECK(r.code == 0);

  std::ifstream in(dir / "experiment.csv");
  std::string header, row, extra;
  std::getline(in, header);
  CHECK(header == "theta,subsample,seed,nugget_flag,rmse,fit_seconds,predict_seconds,nnz");
  REQUIRE(std::getline(in, row));
  CHECK(!std::getline(in, extra));  // single cell, single row

  SUBCASE("rerun is byte-identical (timings suppressed by default)") {
    const std::string first = slurp(dir / "experiment.csv");
    REQUIRE(run_cli("evaluate --config " + (dir / "cfg.json").string() + " --out " +
                    dir.string()).code == 0);
    CHECK(slurp(dir / "experiment.csv") == first);
  }
}

TEST_CASE("cli usage errors") {
  const RunResult none = run_cli("");
  CHECK(none.code == 2);
  const RunResult bad_sub = run_cli("frobnicate --config x.json");
  CHECK(bad_sub.code == 2);
  const RunResult no_config = run_cli("simulate");
  CHECK(no_config.code == 2);
}
