#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "clusterdr/data_model.hpp"
#include "clusterdr/estimators.hpp"

namespace clusterdr {

enum class IntervalMethod { InfluenceCurve, ClusterBootstrap, ClusterRobustOls };

std::string_view interval_method_key(IntervalMethod method);

struct IntervalEstimate {
    double point = 0.0;
    double se = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;
    IntervalMethod method = IntervalMethod::InfluenceCurve;
    // Bootstrap only.
    int replicates = 0;
    int failed_replicates = 0;
};

/// Standard normal quantile (Wichura's AS 241, relative error near 1e-16).
double normal_quantile(double p);

/// Wald interval with se^2 = (1/m) * sample variance (divisor m - 1) of the
/// influence values.
IntervalEstimate influence_curve_interval(const PointEstimate& est, double level);

using DatasetEstimator = std::function<double(const StudyDataset&)>;

struct BootstrapOptions {
    /// Resample within the strata {non-randomized, arm 1, ..., arm K}.
    bool stratified = false;
    /// Worker threads; 0 uses the hardware concurrency.
    int threads = 1;
};

/// Nonparametric cluster bootstrap with percentile limits (type-7
/// quantiles). Resampled clusters are renamed "<id>#<draw>". Replicates
/// whose estimator throws are dropped; more than 2% dropped is an error.
IntervalEstimate cluster_bootstrap_interval(const StudyDataset& ds, const DatasetEstimator& estimator,
                                            double level, int replicates, std::uint64_t seed,
                                            const BootstrapOptions& options = {});

/// Resampled dataset for replicate `index`, as used by the bootstrap.
StudyDataset bootstrap_resample(const StudyDataset& ds, std::uint64_t seed, std::uint64_t index,
                                bool stratified);

/// Type-7 sample quantile of already sorted values.
double sorted_quantile(const std::vector<double>& sorted, double prob);

/// CR1 cluster-robust Wald interval for the individual-pooled trial-only
/// arm mean.
IntervalEstimate cluster_robust_trial_interval(const StudyDataset& ds, std::string_view arm,
                                               double level);

}  // namespace clusterdr
