#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace clusterdr {

/// One cluster of the nested trial design: cluster covariates X, the
/// N x p matrix of individual covariates W, participation S, and (for
/// randomized clusters) the assigned arm and the individual outcomes.
struct ClusterRecord {
    std::string cluster_id;
    bool participates = false;
    std::optional<std::string> arm;
    Eigen::VectorXd x;
    Eigen::MatrixXd w;
    std::optional<Eigen::VectorXd> y;

    Eigen::Index size() const { return w.rows(); }
};

bool operator==(const ClusterRecord& lhs, const ClusterRecord& rhs);

/// Mean of the individual outcomes. Throws MissingOutcome when y is absent.
double cluster_average_outcome(const ClusterRecord& record);

class StudyDataset;

/// Checks every record and builds the arm catalog (first-appearance order
/// among participating clusters). Arms listed in `required_arms` must each
/// have at least one randomized cluster, otherwise EmptyArm.
StudyDataset validate_dataset(std::vector<ClusterRecord> clusters,
                              std::span<const std::string> required_arms = {});

/// Immutable, validated collection of clusters. Cluster order is the input
/// order; `summation_order()` is the ascending-cluster_id permutation used
/// by every estimator so results do not depend on input order.
class StudyDataset {
public:
    const std::vector<ClusterRecord>& clusters() const { return clusters_; }
    const ClusterRecord& cluster(std::size_t j) const { return clusters_[j]; }
    const std::vector<std::string>& arms() const { return arms_; }
    std::size_t size() const { return clusters_.size(); }
    Eigen::Index q() const { return q_; }
    Eigen::Index p() const { return p_; }

    /// Catalog index of the cluster's arm, or -1 for non-randomized clusters.
    int arm_index_of(std::size_t j) const { return arm_of_[j]; }
    std::optional<std::size_t> find_arm(std::string_view label) const;
    /// Throws EmptyArm when the label is not in the catalog.
    std::size_t require_arm(std::string_view label) const;

    const std::vector<std::size_t>& summation_order() const { return order_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    /// Clusters at the given positions, revalidated, in the given order.
    StudyDataset subset(std::span<const std::size_t> rows) const;

    friend bool operator==(const StudyDataset& lhs, const StudyDataset& rhs) {
        return lhs.clusters_ == rhs.clusters_ && lhs.arms_ == rhs.arms_;
    }

private:
    friend StudyDataset validate_dataset(std::vector<ClusterRecord>,
                                         std::span<const std::string>);
    StudyDataset() = default;

    std::vector<ClusterRecord> clusters_;
    std::vector<std::string> arms_;
    std::vector<int> arm_of_;
    std::vector<std::size_t> order_;
    std::vector<std::string> warnings_;
    Eigen::Index q_ = 0;
    Eigen::Index p_ = 0;
};

struct DatasetSummary {
    std::size_t clusters = 0;
    std::size_t trial_clusters = 0;
    std::size_t individuals = 0;
    std::size_t trial_individuals = 0;
    std::vector<std::pair<std::string, std::size_t>> clusters_per_arm;
    double trial_fraction = 0.0;
};

DatasetSummary dataset_summary(const StudyDataset& ds);

}  // namespace clusterdr
