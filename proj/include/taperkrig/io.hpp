#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "taperkrig/estimation.hpp"
#include "taperkrig/geometry.hpp"
#include "taperkrig/kernels.hpp"
#include "taperkrig/simulation.hpp"
#include "taperkrig/variogram.hpp"

namespace taperkrig {

// Shortest round-trip decimal representation; locale-independent, so CSV
// files are byte-stable across runs and machines.
std::string format_double(double value);

// Datasets travel as CSV with header "x,y,value".
Dataset read_dataset_csv(const std::filesystem::path& path);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset);

// Prediction targets: header "x,y" (a trailing value column is accepted
// and ignored).
std::vector<Location> read_locations_csv(const std::filesystem::path& path);

// header "bin_lo,bin_hi,count,semivariance"; empty bins print nan.
void write_variogram_csv(const std::filesystem::path& path, const EmpiricalVariogram& vg);

// header "x,y,prediction".
void write_predictions_csv(const std::filesystem::path& path, std::span<const Location> targets,
                           std::span<const double> predictions);

// header "theta,subsample,seed,nugget_flag,rmse,fit_seconds,predict_seconds,nnz".
// Wall-clock columns default to zero so reruns stay byte-identical; flip
// include_timings for real measurements.
void write_experiment_csv(const std::filesystem::path& path, std::span<const ScoreReport> rows,
                          bool include_timings);

nlohmann::json model_to_json(const CovarianceModel& model);
CovarianceModel model_from_json(const nlohmann::json& j);

// FNV-1a over the canonical model + mean-policy string; cmd_predict
// rejects reports whose recomputed checksum does not match, enforcing the
// same-model guarantee between estimation and prediction.
std::string model_checksum(const CovarianceModel& model, MeanPolicy mean);

nlohmann::json estimation_report_json(const CovarianceModel& model, const EstimationResult& result,
                                      MeanPolicy mean);

struct ParsedReport {
  CovarianceModel model;
  MeanPolicy mean = MeanPolicy::CenterOnMean;
};

// Parses an estimation report and verifies its checksum.
ParsedReport parse_estimation_report(const nlohmann::json& j);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace taperkrig
