#include "taperkrig/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "taperkrig/errors.hpp"

namespace taperkrig {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary: no newline translation
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string() + " for reading");
  return in;
}

double parse_double(std::string_view field, const std::filesystem::path& path, std::size_t line) {
  double value = 0.0;
  const auto* begin = field.data();
  const auto* end = field.data() + field.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc{} || result.ptr != end) {
    throw IngestError(path.string() + ":" + std::to_string(line) + ": bad number '" +
                      std::string(field) + "'");
  }
  return value;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IngestError(path.string() + ": empty file");
  if (strip_cr(line) != "x,y,value") {
    throw IngestError(path.string() + ": expected header 'x,y,value'");
  }

  std::vector<Location> locations;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 3) {
      throw IngestError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    }
    locations.push_back(Location{parse_double(fields[0], path, lineno),
                                 parse_double(fields[1], path, lineno)});
    values.push_back(parse_double(fields[2], path, lineno));
  }
  return make_dataset(std::move(locations), std::move(values), path.stem().string());
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out = open_out(path);
  out << "x,y,value\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << format_double(dataset.locations[i].x) << ',' << format_double(dataset.locations[i].y)
        << ',' << format_double(dataset.values[i]) << '\n';
  }
}

std::vector<Location> read_locations_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IngestError(path.string() + ": empty file");
  line = strip_cr(line);
  if (line != "x,y" && line != "x,y,value" && line != "x,y,prediction") {
    throw IngestError(path.string() + ": expected header starting with 'x,y'");
  }

  std::vector<Location> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() < 2) {
      throw IngestError(path.string() + ":" + std::to_string(lineno) + ": expected >= 2 fields");
    }
    out.push_back(Location{parse_double(fields[0], path, lineno),
                           parse_double(fields[1], path, lineno)});
  }
  if (out.empty()) throw IngestError(path.string() + ": no locations");
  return out;
}

void write_variogram_csv(const std::filesystem::path& path, const EmpiricalVariogram& vg) {
  std::ofstream out = open_out(path);
  out << "bin_lo,bin_hi,count,semivariance\n";
  for (std::size_t b = 0; b < vg.n_bins(); ++b) {
    out << format_double(vg.bin_edges[b]) << ',' << format_double(vg.bin_edges[b + 1]) << ','
        << vg.counts[b] << ',' << format_double(vg.semivariance[b]) << '\n';
  }
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const Location> targets,
                           std::span<const double> predictions) {
  std::ofstream out = open_out(path);
  out << "x,y,prediction\n";
  for (std::size_t i = 0; i < targets.size(); ++i) {
    out << format_double(targets[i].x) << ',' << format_double(targets[i].y) << ','
        << format_double(predictions[i]) << '\n';
  }
}

void write_experiment_csv(const std::filesystem::path& path, std::span<const ScoreReport> rows,
                          bool include_timings) {
  std::ofstream out = open_out(path);
  out << "theta,subsample,seed,nugget_flag,rmse,fit_seconds,predict_seconds,nnz\n";
  for (const ScoreReport& r : rows) {
    out << format_double(r.theta) << ',' << r.subsample << ',' << r.seed << ','
        << (r.nugget_flag ? 1 : 0) << ',' << format_double(r.rmse) << ','
        << format_double(include_timings ? r.fit_seconds : 0.0) << ','
        << format_double(include_timings ? r.predict_seconds : 0.0) << ',' << r.nnz << '\n';
  }
}

nlohmann::json model_to_json(const CovarianceModel& model) {
  nlohmann::json j;
  j["kind"] = to_string(model.kind);
  if (model.kind == ModelKind::Wendland) j["order"] = model.wendland_order;
  j["sill"] = model.params.sill;
  j["range"] = model.params.range;
  j["smoothness"] = model.params.smoothness;
  j["nugget"] = model.params.nugget;
  if (model.taper) {
    j["taper"] = {{"family", to_string(model.taper->family)}, {"range", model.taper->range}};
  }
  return j;
}

CovarianceModel model_from_json(const nlohmann::json& j) {
  CovarianceModel model;
  try {
    model.kind = model_kind_from_string(j.at("kind").get<std::string>());
    model.params.sill = j.at("sill").get<double>();
    model.params.range = j.at("range").get<double>();
    model.params.smoothness = j.at("smoothness").get<double>();
    model.params.nugget = j.at("nugget").get<double>();
    if (model.kind == ModelKind::Wendland) model.wendland_order = j.at("order").get<int>();
    if (j.contains("taper")) {
      TaperSpec taper;
      taper.family = taper_family_from_string(j.at("taper").at("family").get<std::string>());
      taper.range = j.at("taper").at("range").get<double>();
      model.taper = taper;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model document: ") + e.what());
  }
  try {
    model.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid model document: ") + e.what());
  }
  return model;
}

std::string model_checksum(const CovarianceModel& model, MeanPolicy mean) {
  std::string canon = to_string(model.kind);
  canon += '|';
  canon += model.kind == ModelKind::Wendland ? std::to_string(model.wendland_order) : "-";
  canon += '|' + format_double(model.params.sill);
  canon += '|' + format_double(model.params.range);
  canon += '|' + format_double(model.params.smoothness);
  canon += '|' + format_double(model.params.nugget);
  if (model.taper) {
    canon += '|' + to_string(model.taper->family) + '|' + format_double(model.taper->range);
  } else {
    canon += "|-|-";
  }
  canon += '|' + to_string(mean);

  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const unsigned char c : canon) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(buf);
}

nlohmann::json estimation_report_json(const CovarianceModel& model,
                                      const EstimationResult& result, MeanPolicy mean) {
  nlohmann::json j;
  j["model"] = to_string(model.kind);
  if (model.kind == ModelKind::Wendland) j["order"] = model.wendland_order;
  j["params"] = {{"sill", model.params.sill},
                 {"range", model.params.range},
                 {"smoothness", model.params.smoothness},
                 {"nugget", model.params.nugget}};
  if (model.taper) {
    j["taper"] = {{"family", to_string(model.taper->family)}, {"range", model.taper->range}};
  } else {
    j["taper"] = nullptr;
  }
  j["neg_loglik"] = result.neg_loglik;
  j["n_evals"] = result.n_evals;
  j["converged"] = result.converged;
  j["n_failed_repeats"] = result.n_failed_repeats;
  j["seed"] = result.seed;
  j["mean_policy"] = to_string(mean);
  j["checksum"] = model_checksum(model, mean);

  nlohmann::json reps = nlohmann::json::array();
  for (const RepeatEstimate& r : result.repeats) {
    reps.push_back({{"sill", r.params.sill},
                    {"range", r.params.range},
                    {"nugget", r.params.nugget},
                    {"neg_loglik", r.neg_loglik},
                    {"n_evals", r.n_evals},
                    {"converged", r.converged},
                    {"seed", r.seed},
                    {"subsample_size", r.subsample_indices.size()}});
  }
  j["repeats"] = std::move(reps);
  return j;
}

ParsedReport parse_estimation_report(const nlohmann::json& j) {
  ParsedReport out;
  try {
    nlohmann::json m;
    m["kind"] = j.at("model");
    if (j.contains("order")) m["order"] = j.at("order");
    m["sill"] = j.at("params").at("sill");
    m["range"] = j.at("params").at("range");
    m["smoothness"] = j.at("params").at("smoothness");
    m["nugget"] = j.at("params").at("nugget");
    if (j.contains("taper") && !j.at("taper").is_null()) m["taper"] = j.at("taper");
    out.model = model_from_json(m);
    out.mean = mean_policy_from_string(j.value("mean_policy", "center"));

    const std::string stored = j.at("checksum").get<std::string>();
    const std::string computed = model_checksum(out.model, out.mean);
    if (stored != computed) {
      throw ConfigError("model checksum mismatch: report was modified after estimation (stored " +
                        stored + ", computed " + computed + ")");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad estimation report: ") + e.what());
  }
  return out;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace taperkrig
