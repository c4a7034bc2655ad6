#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clusterdr/data_model.hpp"
#include "clusterdr/features.hpp"

namespace clusterdr {

enum class FitMethod { Mle, ElasticNet };

struct FitDiagnostics {
    int iterations = 0;
    double max_change = 0.0;
    double gradient_norm = 0.0;
    bool converged = false;
};

/// Fitted logistic working model: Pr = expit(x' beta), intercept first.
/// Carries the feature layout it was trained on so predictions on new rows
/// are standardized with the training statistics.
struct ProbabilityModel {
    Eigen::VectorXd coefficients;
    FitMethod method = FitMethod::Mle;
    double lambda = 0.0;
    double alpha = 1.0;
    FitDiagnostics diagnostics;
    std::vector<std::string> feature_names;
    FeatureSpec feature_spec;
    std::optional<Standardization> standardization;
};

/// Coefficient-norm cap (on the standardized-feature scale) used to flag
/// separation.
inline constexpr double kSeparationCap = 30.0;

/// Weighted Bernoulli maximum likelihood by iteratively reweighted least
/// squares with step halving. Labels may be fractional in [0, 1].
ProbabilityModel fit_logistic_mle(const FeatureMatrix& features, std::span<const double> labels,
                                  std::span<const double> weights = {});

/// Minimizes (1/n) NLL + lambda * [alpha |b|_1 + (1 - alpha)/2 |b|_2^2] over
/// the non-intercept coefficients by coordinate descent on the IRLS
/// quadratic. Requires standardized features.
ProbabilityModel fit_logistic_elastic_net(const FeatureMatrix& features,
                                          std::span<const double> labels, double lambda,
                                          double alpha);

double soft_threshold(double z, double gamma);

/// Smallest lambda at which every penalized coefficient is exactly zero:
/// max_j |(1/n) sum_i x_ij (y_i - ybar)| / alpha.
double elastic_net_null_lambda(const FeatureMatrix& features, std::span<const double> labels,
                               double alpha);

/// expit(x' beta) per row. Raw feature rows are standardized with the
/// model's training statistics first.
Eigen::VectorXd predict(const ProbabilityModel& model, const FeatureMatrix& features);

/// Clamps into [1e-6, 1 - 1e-6]; returns how many entries moved.
std::size_t clip_probabilities(Eigen::Ref<Eigen::VectorXd> probs);

enum class TreatmentMode { Known, Empirical, MultinomialLogit };

/// Pr[A = a | X, W, S = 1] for every arm.
struct TreatmentModel {
    TreatmentMode mode = TreatmentMode::Empirical;
    std::vector<std::string> arms;
    /// Known constants or empirical shares, aligned to `arms`.
    Eigen::VectorXd constant;
    /// Known per-cluster probabilities keyed by cluster_id, aligned to `arms`.
    std::map<std::string, Eigen::VectorXd> per_cluster;
    /// Multinomial logit: one column per arm, column 0 (reference) fixed at 0.
    Eigen::MatrixXd coefficients;
    /// Covariates of the multinomial model; nullopt means intercept only.
    std::optional<FeatureSpec> feature_spec;
    std::optional<Standardization> standardization;
    FitDiagnostics diagnostics;

    /// m x K matrix of probabilities, columns in `arms` order.
    Eigen::MatrixXd probabilities(const StudyDataset& ds) const;
};

TreatmentModel known_treatment_model(const std::vector<std::string>& arms,
                                     const std::map<std::string, double>& probs);

/// `features`, when given, must hold one row per cluster of `ds`; only the
/// randomized rows are used for fitting.
TreatmentModel fit_treatment_model(const StudyDataset& ds, TreatmentMode mode,
                                   const FeatureMatrix* features = nullptr,
                                   const std::map<std::string, double>* known = nullptr);

struct WorkingModelConfig {
    FitMethod method = FitMethod::Mle;
    double lambda = 0.0;
    double alpha = 1.0;
    FeatureSpec features;
};

struct TreatmentConfig {
    TreatmentMode mode = TreatmentMode::Empirical;
    std::map<std::string, double> known;
    std::optional<FeatureSpec> features;
};

struct NuisanceConfig {
    WorkingModelConfig participation;
    TreatmentConfig treatment;
    WorkingModelConfig outcome;
};

struct FittedNuisance {
    ProbabilityModel participation;
    TreatmentModel treatment;
    std::map<std::string, ProbabilityModel> outcome_by_arm;
    NuisanceConfig config;
};

/// Participation model on all clusters (label S), treatment model on the
/// randomized clusters, and one individual-level outcome model per arm.
FittedNuisance fit_nuisance(const StudyDataset& ds, const NuisanceConfig& config);

/// Fits one working model according to `config` (used for every model kind).
ProbabilityModel fit_working_model(const FeatureMatrix& features, std::span<const double> labels,
                                   const WorkingModelConfig& config);

}  // namespace clusterdr
