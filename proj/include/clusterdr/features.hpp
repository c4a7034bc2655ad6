#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clusterdr/data_model.hpp"

namespace clusterdr {

enum class Aggregate { None, Mean };

/// Which covariates enter a working model. Column layout of a row is
/// [1, X (use_x), W_i (include_individual), aggregates of W columns].
struct FeatureSpec {
    bool use_x = true;
    /// One entry per W column, or empty for no aggregates.
    std::vector<Aggregate> w_aggregates;
    bool include_individual = false;
    bool standardize = false;

    static FeatureSpec cluster_level(Eigen::Index p, bool use_x = true, bool standardize = false);
    static FeatureSpec individual_level(bool use_x = true, bool standardize = false);

    bool has_aggregates() const;
    friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// Centering and scaling of the non-intercept columns. Scales use the
/// sample SD (divisor n-1); constant columns get scale 1.
struct Standardization {
    Eigen::VectorXd center;
    Eigen::VectorXd scale;

    friend bool operator==(const Standardization& a, const Standardization& b) {
        return a.center.size() == b.center.size() && (a.center.array() == b.center.array()).all() &&
               (a.scale.array() == b.scale.array()).all();
    }
};

struct RowRef {
    std::size_t cluster = 0;
    Eigen::Index individual = -1;  // -1 for cluster-level rows
};

struct FeatureMatrix {
    Eigen::MatrixXd values;  // column 0 is the intercept
    std::vector<std::string> names;
    FeatureSpec spec;
    std::optional<Standardization> standardization;  // set iff values are standardized
    std::vector<RowRef> rows;

    Eigen::Index num_rows() const { return values.rows(); }
    Eigen::Index num_cols() const { return values.cols(); }
};

/// One row per cluster. Standardizes with statistics of these rows when
/// spec.standardize is set.
FeatureMatrix cluster_features(const StudyDataset& ds, const FeatureSpec& spec);
FeatureMatrix cluster_features(const StudyDataset& ds, const FeatureSpec& spec,
                               const Standardization& stats);

/// One row per individual across all clusters, cluster-major.
FeatureMatrix individual_features(const StudyDataset& ds, const FeatureSpec& spec);
FeatureMatrix individual_features(const StudyDataset& ds, const FeatureSpec& spec,
                                  const Standardization& stats);

/// Unstandardized rows even when spec.standardize is set; the caller picks
/// the rows the statistics come from (see apply_standardization).
FeatureMatrix raw_cluster_features(const StudyDataset& ds, const FeatureSpec& spec);
FeatureMatrix raw_individual_features(const StudyDataset& ds, const FeatureSpec& spec);

/// A matrix with only the intercept column, for intercept-only models.
FeatureMatrix intercept_only_features(Eigen::Index rows);

Standardization compute_standardization(const Eigen::MatrixXd& raw);
Standardization compute_standardization(const Eigen::MatrixXd& raw,
                                        std::span<const std::size_t> rows);
/// Applies `stats` to an unstandardized matrix.
FeatureMatrix apply_standardization(FeatureMatrix raw, const Standardization& stats);
/// Raw feature values recovered from a standardized matrix.
Eigen::MatrixXd destandardize(const FeatureMatrix& fm);

FeatureMatrix select_rows(const FeatureMatrix& fm, std::span<const std::size_t> rows);

}  // namespace clusterdr
