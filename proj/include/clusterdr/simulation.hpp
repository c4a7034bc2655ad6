#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "clusterdr/data_model.hpp"
#include "clusterdr/estimators.hpp"
#include "clusterdr/prob_models.hpp"

namespace clusterdr {

/// Synthetic nested-trial design. Per cluster:
///   N ~ U{n_min..n_max}; X ~ N(0, I_q); W_ic ~ N(rho * X_{c mod q}, 1);
///   U ~ N(0, tau^2); S ~ Bern(expit(alpha' [1, X, mean W]));
///   A ~ Cat(arm_probabilities) when S = 1;
///   Y_i ~ Bern(expit(beta_A' [1, X, W_i, mean W] + U)) when S = 1.
struct DgpConfig {
    int m = 500;
    int n_min = 5;
    int n_max = 15;
    std::vector<std::string> arms{"0", "1"};
    std::vector<double> arm_probabilities{0.5, 0.5};
    int q = 1;
    int p = 1;
    double rho = 0.5;
    Eigen::VectorXd alpha;              // 1 + q + p
    std::vector<Eigen::VectorXd> beta;  // per arm, 1 + q + 2p
    double tau = 0.0;
    std::uint64_t seed = 1;
};

/// Throws ConfigError on an inconsistent configuration.
void validate_dgp(const DgpConfig& cfg);

/// Records of one simulated dataset. Cluster j of replication r draws from
/// the stream (Dataset, r, j) with key cfg.seed.
std::vector<ClusterRecord> generate_clusters(const DgpConfig& cfg, std::uint64_t replication = 0);

/// generate_clusters followed by validation (EmptyArm when no cluster is
/// randomized).
StudyDataset generate_dataset(const DgpConfig& cfg, std::uint64_t replication = 0);

struct OracleTruth {
    std::vector<std::string> arms;
    std::vector<double> psi;  // E[Ybar^a]
    std::vector<double> psi_se;
    std::vector<double> phi;  // E[Ybar^a | S = 0]
    std::vector<double> phi_se;
    std::int64_t draws = 0;
    std::int64_t nonrandomized_draws = 0;
};

/// Monte Carlo potential-outcome means under the intervention A = a for all
/// clusters. Each draw uses the conditional cluster mean given (X, W, U), so
/// only cluster-level variation enters the MC error.
OracleTruth oracle_truth(const DgpConfig& cfg, std::int64_t draws, int threads = 1);

enum class Scenario { BothCorrect, OutcomeMisspecified, ParticipationMisspecified, BothMisspecified };

std::string_view scenario_key(Scenario s);
Scenario scenario_from_key(std::string_view key);

/// Working-model settings for a scenario: the outcome model drops the mean-W
/// features and/or the participation model drops X. Treatment probabilities
/// are the known design values.
NuisanceConfig scenario_nuisance_config(const DgpConfig& cfg, Scenario s,
                                        FitMethod method = FitMethod::Mle, double lambda = 0.0,
                                        double alpha = 1.0);

struct EstimatorSummary {
    EstimatorKind estimator = EstimatorKind::Aipw;
    std::string arm;
    double truth = 0.0;
    double mean_estimate = 0.0;
    double mean_bias = 0.0;
    double empirical_se = 0.0;
    double mean_estimated_se = 0.0;
    double coverage = 0.0;
    /// empirical_se / sqrt(replications)
    double mc_se = 0.0;
    /// Variance of AIPW for the same arm over this estimator's variance;
    /// 0 when AIPW is not part of the run.
    double relative_efficiency = 0.0;
    int replications = 0;
};

struct ScenarioOptions {
    Scenario scenario = Scenario::BothCorrect;
    int replications = 500;
    std::vector<EstimatorKind> estimators{EstimatorKind::Aipw, EstimatorKind::Ipw,
                                          EstimatorKind::Hajek, EstimatorKind::GFormula,
                                          EstimatorKind::Transport};
    std::uint64_t seed = 1;
    double level = 0.95;
    int threads = 1;
    FitMethod method = FitMethod::Mle;
    double lambda = 0.0;
    double alpha = 1.0;
};

struct ScenarioResult {
    Scenario scenario = Scenario::BothCorrect;
    std::vector<EstimatorSummary> estimators;
    int replications_requested = 0;
    int replications_used = 0;
    int replications_failed = 0;
    bool exploratory = false;  // fewer than 200 replications
    std::vector<std::string> failure_messages;
};

/// Replication r simulates generate_dataset(cfg with seed = options.seed, r),
/// fits the scenario's nuisances and computes each estimator with an
/// influence-curve interval (CR1 for the trial-only baselines). Replications
/// that fail to fit are dropped; more than 2% dropped is an error.
ScenarioResult run_scenario(const DgpConfig& cfg, const OracleTruth& truth,
                            const ScenarioOptions& options);

/// Estimates for every (estimator, arm) on one dataset, in the order used by
/// run_scenario. Exposed for tests.
struct ReplicationEstimate {
    EstimatorKind estimator;
    std::string arm;
    double value;
    double se;
    double lower;
    double upper;
};

std::vector<ReplicationEstimate> estimate_replication(const StudyDataset& ds,
                                                      const NuisanceConfig& config,
                                                      const std::vector<EstimatorKind>& estimators,
                                                      double level);

}  // namespace clusterdr
