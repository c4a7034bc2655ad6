#include "clusterdr/data_model.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "clusterdr/error.hpp"
#include "clusterdr/numeric.hpp"

namespace clusterdr {

namespace {

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

std::string quoted(const std::string& id) { return "'" + id + "'"; }

}  // namespace

bool operator==(const ClusterRecord& lhs, const ClusterRecord& rhs) {
    if (lhs.cluster_id != rhs.cluster_id || lhs.participates != rhs.participates ||
        lhs.arm != rhs.arm || lhs.y.has_value() != rhs.y.has_value()) {
        return false;
    }
    if (!same_matrix(lhs.x, rhs.x) || !same_matrix(lhs.w, rhs.w)) return false;
    return !lhs.y || same_matrix(*lhs.y, *rhs.y);
}

double cluster_average_outcome(const ClusterRecord& record) {
    if (!record.y) {
        throw Error(ErrorCode::MissingOutcome,
                    "cluster " + quoted(record.cluster_id) + " has no outcomes");
    }
    const Eigen::VectorXd& y = *record.y;
    if (y.size() == 0) {
        throw Error(ErrorCode::EmptyCluster,
                    "cluster " + quoted(record.cluster_id) + " has no individuals");
    }
    return kahan_sum(std::span<const double>(y.data(), static_cast<std::size_t>(y.size()))) /
           static_cast<double>(y.size());
}

StudyDataset validate_dataset(std::vector<ClusterRecord> clusters,
                              std::span<const std::string> required_arms) {
    if (clusters.size() < 2) {
        throw Error(ErrorCode::TooFewClusters,
                    "a dataset needs at least 2 clusters, got " + std::to_string(clusters.size()));
    }

    StudyDataset ds;
    ds.q_ = clusters.front().x.size();
    ds.p_ = clusters.front().w.cols();

    std::unordered_set<std::string> seen;
    for (const auto& c : clusters) {
        const std::string id = quoted(c.cluster_id);
        if (c.cluster_id.empty()) {
            throw Error(ErrorCode::InvalidArgument, "empty cluster_id");
        }
        if (!seen.insert(c.cluster_id).second) {
            throw Error(ErrorCode::DuplicateId, "duplicate cluster_id " + id);
        }
        if (c.x.size() != ds.q_ || c.w.cols() != ds.p_) {
            throw Error(ErrorCode::DimensionMismatch,
                        "cluster " + id + " has q=" + std::to_string(c.x.size()) +
                            ", p=" + std::to_string(c.w.cols()) + "; expected q=" +
                            std::to_string(ds.q_) + ", p=" + std::to_string(ds.p_));
        }
        if (c.w.rows() < 1) {
            throw Error(ErrorCode::EmptyCluster, "cluster " + id + " has no individuals");
        }
        if (!c.x.allFinite() || !c.w.allFinite()) {
            throw Error(ErrorCode::NonFiniteValue, "cluster " + id + " has non-finite covariates");
        }
        if (c.participates && (!c.arm || c.arm->empty() || !c.y)) {
            throw Error(ErrorCode::IncompleteTrialCluster,
                        "randomized cluster " + id + " needs both an arm and outcomes");
        }
        if (c.y) {
            if (c.y->size() != c.w.rows()) {
                throw Error(ErrorCode::DimensionMismatch,
                            "cluster " + id + " has " + std::to_string(c.y->size()) +
                                " outcomes for " + std::to_string(c.w.rows()) + " individuals");
            }
            if (!c.y->allFinite()) {
                throw Error(ErrorCode::NonFiniteValue, "cluster " + id + " has non-finite outcomes");
            }
            if ((c.y->array() < 0.0).any() || (c.y->array() > 1.0).any()) {
                throw Error(ErrorCode::OutcomeOutOfRange,
                            "cluster " + id + " has outcomes outside [0, 1]");
            }
        }
        if (!c.participates && c.arm && !c.arm->empty()) {
            ds.warnings_.push_back("non-randomized cluster " + id +
                                   " carries an arm label; it is ignored");
        }
    }

    ds.arm_of_.assign(clusters.size(), -1);
    for (std::size_t j = 0; j < clusters.size(); ++j) {
        if (!clusters[j].participates) continue;
        const std::string& label = *clusters[j].arm;
        auto it = std::find(ds.arms_.begin(), ds.arms_.end(), label);
        if (it == ds.arms_.end()) {
            ds.arms_.push_back(label);
            it = ds.arms_.end() - 1;
        }
        ds.arm_of_[j] = static_cast<int>(it - ds.arms_.begin());
    }
    if (ds.arms_.empty()) {
        throw Error(ErrorCode::EmptyArm, "no randomized clusters: the arm catalog is empty");
    }
    for (const auto& label : required_arms) {
        if (std::find(ds.arms_.begin(), ds.arms_.end(), label) == ds.arms_.end()) {
            throw Error(ErrorCode::EmptyArm,
                        "arm " + quoted(label) + " has no randomized clusters in the data");
        }
    }

    ds.order_.resize(clusters.size());
    std::iota(ds.order_.begin(), ds.order_.end(), std::size_t{0});
    std::sort(ds.order_.begin(), ds.order_.end(), [&](std::size_t a, std::size_t b) {
        return clusters[a].cluster_id < clusters[b].cluster_id;
    });
    ds.clusters_ = std::move(clusters);
    return ds;
}

std::optional<std::size_t> StudyDataset::find_arm(std::string_view label) const {
    auto it = std::find(arms_.begin(), arms_.end(), label);
    if (it == arms_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - arms_.begin());
}

std::size_t StudyDataset::require_arm(std::string_view label) const {
    if (auto k = find_arm(label)) return *k;
    throw Error(ErrorCode::EmptyArm,
                "arm '" + std::string(label) + "' has no randomized clusters in the data");
}

StudyDataset StudyDataset::subset(std::span<const std::size_t> rows) const {
    std::vector<ClusterRecord> picked;
    picked.reserve(rows.size());
    for (std::size_t j : rows) picked.push_back(clusters_.at(j));
    return validate_dataset(std::move(picked));
}

DatasetSummary dataset_summary(const StudyDataset& ds) {
    DatasetSummary s;
    s.clusters = ds.size();
    std::vector<std::size_t> per_arm(ds.arms().size(), 0);
    for (std::size_t j = 0; j < ds.size(); ++j) {
        const auto n = static_cast<std::size_t>(ds.cluster(j).size());
        s.individuals += n;
        if (ds.arm_index_of(j) >= 0) {
            ++s.trial_clusters;
            s.trial_individuals += n;
            ++per_arm[static_cast<std::size_t>(ds.arm_index_of(j))];
        }
    }
    for (std::size_t k = 0; k < per_arm.size(); ++k) {
        s.clusters_per_arm.emplace_back(ds.arms()[k], per_arm[k]);
    }
    s.trial_fraction = static_cast<double>(s.trial_clusters) / static_cast<double>(s.clusters);
    return s;
}

}  // namespace clusterdr
