#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "clusterdr/data_model.hpp"
#include "clusterdr/prob_models.hpp"

namespace clusterdr {

/// Per-cluster nuisance values aligned to a dataset: participation
/// probability p_hat, treatment probabilities e_hat (m x K), cluster-level
/// outcome regressions g_hat (m x K) and observed Ybar for randomized
/// clusters.
struct NuisanceEstimates {
    std::vector<std::string> arms;
    std::shared_ptr<const std::vector<std::string>> cluster_ids;
    std::vector<int> arm_of;  // -1 when not randomized
    Eigen::VectorXd p_hat;
    Eigen::MatrixXd e_hat;
    Eigen::MatrixXd g_hat;
    std::vector<std::optional<double>> ybar;
    std::vector<std::size_t> order;  // ascending cluster_id
    std::size_t clipped_participation = 0;
    std::size_t clipped_treatment = 0;
    /// Copied into every estimate computed from these values.
    std::map<std::string, std::string> metadata;

    std::size_t size() const { return arm_of.size(); }
    bool participates(std::size_t j) const { return arm_of[j] >= 0; }
    std::size_t arm_index(std::string_view label) const;
};

/// Assembles nuisance values supplied directly (for instance by another
/// fitting tool). `arm_of[j]` is -1 for non-randomized clusters. Checks
/// shapes, p_hat and e_hat ranges, and that each e_hat row sums to 1.
NuisanceEstimates make_nuisance_estimates(std::vector<std::string> cluster_ids,
                                          std::vector<std::string> arms, std::vector<int> arm_of,
                                          Eigen::VectorXd p_hat, Eigen::MatrixXd e_hat,
                                          Eigen::MatrixXd g_hat,
                                          std::vector<std::optional<double>> ybar);

/// Predictions of the fitted models on every cluster. g_hat is the
/// within-cluster mean of individual-level outcome predictions; p_hat and
/// e_hat are clipped to [1e-6, 1 - 1e-6].
NuisanceEstimates compute_nuisance_estimates(const StudyDataset& ds, const FittedNuisance& fitted);

enum class EstimatorKind {
    Aipw,
    Ipw,
    Hajek,
    IpwAggregated,
    GFormula,
    TrialOnly,
    TrialOnlyClusterWeighted,
    Transport,
};

std::string_view estimator_name(EstimatorKind kind);
std::string_view estimator_key(EstimatorKind kind);
std::optional<EstimatorKind> estimator_from_key(std::string_view key);

/// Summary of inverse weights 1/(p_hat e_hat) over the weighted clusters.
struct WeightDiagnostics {
    std::size_t count = 0;
    double min = 0.0;
    double max = 0.0;
    double effective_sample_size = 0.0;
};

struct PointEstimate {
    EstimatorKind estimator = EstimatorKind::Aipw;
    std::string arm;
    std::optional<std::string> reference_arm;  // set for contrasts
    double value = 0.0;
    /// Influence values, one per cluster in dataset order; centered.
    std::optional<Eigen::VectorXd> influence;
    std::shared_ptr<const std::vector<std::string>> cluster_ids;
    std::optional<WeightDiagnostics> weights;
    std::map<std::string, std::string> metadata;
    std::vector<std::string> warnings;
};

/// Augmented inverse probability of participation weighting estimator of
/// the target-population mean E[Ybar^a].
PointEstimate aipw_psi(const NuisanceEstimates& ne, std::string_view arm);

/// Non-augmented weighting estimator; `normalized` selects the Hajek form
/// that divides by the sum of weights instead of m.
PointEstimate ipw_psi(const NuisanceEstimates& ne, std::string_view arm, bool normalized);

/// Unnormalized weighting estimator computed from cluster-level data only:
/// p_hat comes from a participation model over cluster-level features.
PointEstimate ipw_psi_aggregated(const StudyDataset& ds,
                                 const ProbabilityModel& cluster_level_participation,
                                 const TreatmentModel& treatment, std::string_view arm);

PointEstimate gformula_psi(const NuisanceEstimates& ne, std::string_view arm);

enum class TrialPooling { Individual, Cluster };

/// Arm mean among randomized clusters, ignoring the target population.
/// Individual pooling is the saturated linear probability model coefficient.
PointEstimate trial_only_estimate(const StudyDataset& ds, std::string_view arm,
                                  TrialPooling pooling = TrialPooling::Individual);

/// Augmented inverse odds weighting estimator of E[Ybar^a | S = 0].
PointEstimate transport_phi(const NuisanceEstimates& ne, std::string_view arm);

/// e1 - e2 with elementwise-differenced influence values.
PointEstimate contrast(const PointEstimate& e1, const PointEstimate& e2);

/// Cluster-level cross-fitting: folds stratified by (S, arm), nuisances for
/// each fold fit on the other folds.
NuisanceEstimates crossfit_nuisance_estimates(const StudyDataset& ds, const NuisanceConfig& config,
                                              int folds, std::uint64_t seed);

/// Fold label per cluster, deterministic in (dataset, folds, seed).
std::vector<int> crossfit_partition(const StudyDataset& ds, int folds, std::uint64_t seed);

PointEstimate crossfit_aipw_psi(const StudyDataset& ds, const NuisanceConfig& config, int folds,
                                std::uint64_t seed, std::string_view arm);

}  // namespace clusterdr
