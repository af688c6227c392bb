#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sysid/dataset.hpp"
#include "sysid/model.hpp"
#include "sysid/state_estimation.hpp"
#include "sysid/trainer.hpp"

namespace sysid {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.3.0";

struct DataPaths
{
    std::string train;
    std::string test;
    std::vector<Eigen::Index> boundaries; // used when the CSV has no sidecar
};

/// Everything a run needs. Every field is optional in the file.
struct RunConfig
{
    ModelSpec model;
    TrainConfig train;
    EkfConfig ekf;
    PredictorConfig predictor;
    DataPaths data;
};

/// A trained model with the statistics needed to score new raw data.
struct FittedModel
{
    ModelSpec spec;
    ModelParams params;
    SaturationConfig sat;
    bool scaled = false;
    ChannelScaling u_scaling;
    ChannelScaling y_scaling;
};

/// Throws ConfigError naming the offending key path, e.g. "train.adam.iterz".
RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& j);

Json to_json(const FittedModel& m);
FittedModel fitted_model_from_json(const Json& j);
void save_model(const FittedModel& m, const std::filesystem::path& path);
FittedModel load_model(const std::filesystem::path& path);
FittedModel fitted_model(const FitReport& r, const SaturationConfig& sat);

Json to_json(const R2Report& r);
Json to_json(const StartSummary& s, bool timings);
/// Fit report with the resolved configuration echoed. Wall-clock fields appear only
/// with `timings`, so two runs produce identical bytes without it.
Json fit_report_json(const FitReport& r, const RunConfig& cfg, bool timings);
Json failure_report_json(const std::string& message, const std::vector<StartSummary>& starts,
                         const RunConfig& cfg, bool timings);

Json matrix_to_json(const Mat& m);
Mat matrix_from_json(const Json& j, const std::string& where);
Json vector_to_json(const Vec& v);
Vec vector_from_json(const Json& j, const std::string& where);

/// Pretty-printed text with a trailing newline.
std::string dump(const Json& j);

} // namespace sysid
