#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "clusterdr/data_model.hpp"
#include "clusterdr/estimators.hpp"
#include "clusterdr/inference.hpp"
#include "clusterdr/prob_models.hpp"
#include "clusterdr/simulation.hpp"

namespace clusterdr {

/// Reads the clusters file (cluster_id, s, arm, x1..xq) and the individuals
/// file (cluster_id, y, w1..wp), joins them on cluster_id and validates.
/// Arms in `required_arms` must have randomized clusters (EmptyArm).
StudyDataset load_csv(const std::filesystem::path& clusters_path,
                      const std::filesystem::path& individuals_path,
                      std::span<const std::string> required_arms = {});

enum class OutputFormat { Table, Json, Csv };

OutputFormat output_format_from_key(std::string_view key);

/// Interval method requested in a config. Auto pairs the trial-only
/// baseline with CR1 and every other estimator with the influence curve.
enum class InferenceChoice { Auto, InfluenceCurve, ClusterBootstrap, ClusterRobustOls };

struct SimulationSettings {
    std::vector<Scenario> scenarios{Scenario::BothCorrect, Scenario::OutcomeMisspecified,
                                    Scenario::ParticipationMisspecified,
                                    Scenario::BothMisspecified};
    int replications = 500;
    std::int64_t oracle_draws = 1000000;
};

struct RunConfig {
    std::optional<std::filesystem::path> clusters_path;
    std::optional<std::filesystem::path> individuals_path;
    std::optional<DgpConfig> dgp;

    NuisanceConfig nuisance;
    /// Empty: AIPW for `estimate`, the scenario defaults for `simulate`.
    std::vector<EstimatorKind> estimators;
    /// Empty means every arm in the data.
    std::vector<std::string> arms;
    std::vector<std::pair<std::string, std::string>> contrasts;

    InferenceChoice inference = InferenceChoice::Auto;
    double level = 0.95;
    int bootstrap_replicates = 200;
    bool bootstrap_stratified = false;
    int crossfit_folds = 0;  // 0 or 1: no cross-fitting

    std::uint64_t seed = 1;
    int threads = 1;

    std::optional<std::filesystem::path> output_path;
    OutputFormat format = OutputFormat::Table;
    bool percent = false;

    SimulationSettings simulation;
};

/// Parses the JSON config document. Relative data paths resolve against
/// `base_dir`. Unknown keys are a ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// The "nuisance" object of a run config. A "w_mean" flag is recorded as a
/// single Mean entry; resolve_nuisance_config expands it to every W column.
NuisanceConfig parse_nuisance_config(const nlohmann::json& doc);
NuisanceConfig resolve_nuisance_config(NuisanceConfig cfg, Eigen::Index p);

DgpConfig parse_dgp_config(const nlohmann::json& doc);
nlohmann::ordered_json dgp_to_json(const DgpConfig& cfg);

/// One estimator x working-model x arm (or contrast) cell.
struct EstimateRow {
    EstimatorKind estimator = EstimatorKind::Aipw;
    std::string model_tag;
    std::string arm;
    std::optional<std::string> reference_arm;
    IntervalEstimate interval;
    std::optional<WeightDiagnostics> weights;
};

struct ModelDiagnostics {
    std::string name;
    std::string method;
    std::vector<std::string> feature_names;
    std::vector<double> coefficients;
    FitDiagnostics fit;
};

struct EstimateReport {
    DatasetSummary summary;
    std::vector<std::string> arms;
    std::vector<EstimateRow> rows;
    std::vector<ModelDiagnostics> models;
    std::size_t clipped_participation = 0;
    std::size_t clipped_treatment = 0;
    int crossfit_folds = 0;
    double level = 0.95;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

/// Loads (or simulates) the data, fits nuisances once (or cross-fits) and
/// computes every requested estimator, arm and contrast.
EstimateReport run_estimation(const RunConfig& config);

struct SimulationReport {
    DgpConfig dgp;
    OracleTruth truth;
    std::vector<ScenarioResult> scenarios;
    int replications = 0;
    bool exploratory = false;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

/// Oracle truth followed by run_scenario for every configured scenario.
SimulationReport run_simulation(const RunConfig& config);

nlohmann::ordered_json report_to_json(const EstimateReport& report);
nlohmann::ordered_json report_to_json(const SimulationReport& report);
nlohmann::ordered_json summary_to_json(const DatasetSummary& summary,
                                       const std::vector<std::string>& warnings);

/// Fixed-width table: rows estimator x working model, columns arms then
/// contrasts, cells "pt (lo, hi)".
std::string render_table(const EstimateReport& report, bool percent);
std::string render_table(const SimulationReport& report, bool percent);
std::string render_csv(const EstimateReport& report);
std::string render_csv(const SimulationReport& report);

/// Command-line entry point (`estimate`, `simulate`, `validate`,
/// `summary`). Returns the process exit status; errors are reported on one
/// line of `err` as "error: <Code>: <detail>".
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clusterdr
