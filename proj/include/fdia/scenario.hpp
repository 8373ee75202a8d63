#pragma once

#include "fdia/attack.hpp"
#include "fdia/autoencoder.hpp"
#include "fdia/clustering.hpp"
#include "fdia/dataset.hpp"
#include "fdia/gat.hpp"
#include "fdia/gdn.hpp"
#include "fdia/metrics.hpp"
#include "fdia/scores.hpp"
#include "fdia/simulator.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fdia {

inline constexpr const char* kScenarioSchema = "fdia.scenario/1";
inline constexpr const char* kSuiteSchema = "fdia.suite/1";

struct NormalScenario {
    std::string id;
    std::vector<GridEvent> events;
    std::uint64_t noise_seed = 0;
};

struct DetectorSettings {
    double kmeans_threshold = 0.8;
    std::vector<Eigen::Index> autoencoder_hidden{32, 8, 32};
    ad::TrainConfig autoencoder{1e-3, 30, 32, 0.1, 10, 1};
    GatConfig gat;
    GdnConfig gdn;
};

struct ScenarioConfig {
    std::string id;
    std::string placement;  ///< "near" / "far" / "none"
    std::string magnitude;  ///< "small" / "large" / "none"
    std::filesystem::path network;
    int reference_bus = 1;
    SimConfig sim;
    std::vector<GridEvent> events;
    std::optional<AttackSpec> attack;
    std::vector<std::string> detectors;
    DetectorSettings settings;
    std::vector<NormalScenario> training;
    std::uint64_t seed = 0;
    std::string evaluation_unit = "window";  ///< "window" or "sample"
    double window_seconds = 1.0;
    std::filesystem::path output;
    nlohmann::json source;  ///< merged config as read, before seed overrides

    /// Reseeds everything derived from the master seed.
    void apply_seed(std::uint64_t seed);
    void validate() const;
};

/// Reads a scenario file, merging an optional "include" base (paths relative to the including file).
ScenarioConfig load_scenario(const std::filesystem::path& path);
ScenarioConfig scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json to_json(const ScenarioConfig& cfg);

struct SuiteConfig {
    std::string id;
    std::vector<ScenarioConfig> cells;
    std::optional<ScenarioConfig> holdout;
    int workers = 1;
    std::filesystem::path output;
};

SuiteConfig load_suite(const std::filesystem::path& path);

/// Models trained on the normal scenarios, plus the shared normalization frame.
struct TrainedModels {
    NormalizationStats stats;
    std::optional<GatModel> gat;
    std::optional<GdnModel> gdn;
    double gat_seconds = 0.0;
    double gdn_seconds = 0.0;
};

/// Simulated, referenced and normalized training traces.
std::vector<MeasurementTrace> normal_traces(const ScenarioConfig& cfg, const BusNetwork& net);
TrainedModels train_models(const ScenarioConfig& cfg, int workers = 1);
void save_models(const TrainedModels& models, const std::filesystem::path& dir);
TrainedModels load_models(const std::filesystem::path& dir);

struct DetectorResult {
    std::string detector;
    std::vector<bool> predicted;            ///< per evaluation unit
    std::vector<DetectionVerdict> verdicts; ///< window detectors
    std::optional<AnomalyScoreSeries> scores;
    PointMetrics metrics;
    std::optional<Localization> ranking;
    std::optional<LocalizationMetrics> localization;
    double threshold = 0.0;
    bool threshold_degenerate = false;
    std::string error;  ///< non-empty when the detector failed
};

struct ScenarioResult {
    ScenarioConfig config;
    MeasurementTrace true_trace;   ///< bus angles, rad
    MeasurementTrace measured;     ///< what the sensors reported
    MeasurementTrace normalized;   ///< angle differences in the training frame
    LabelMask labels;
    std::vector<bool> truth;       ///< per evaluation unit
    std::vector<DetectorResult> detectors;
};

/// simulate -> attack -> normalize -> detect -> metrics. Throws StageError.
ScenarioResult run_scenario(const ScenarioConfig& cfg, TrainedModels& models);

/// Writes traces, labels, scores, verdicts and metrics under `dir`.
void write_scenario_outputs(const ScenarioResult& result, const std::filesystem::path& dir);

nlohmann::json metrics_json(const ScenarioResult& result);

struct SuiteResult {
    std::vector<ScenarioResult> cells;
    std::vector<std::string> failures;  ///< "cell id: stage-tagged message", one per failed cell
    std::optional<ScenarioResult> holdout;
};

/// Runs every cell on `workers` threads with shared (read-only) models.
SuiteResult run_suite(const SuiteConfig& suite, TrainedModels& models, int workers);

}  // namespace fdia
