#include "clusterdr/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "clusterdr/error.hpp"
#include "clusterdr/features.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/rng.hpp"

namespace clusterdr {

namespace {

std::vector<std::size_t> sorted_order(const std::vector<std::string>& ids) {
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    return order;
}

double ordered_sum(const Eigen::VectorXd& v, const std::vector<std::size_t>& order) {
    KahanSum acc;
    for (std::size_t j : order) acc.add(v(static_cast<Eigen::Index>(j)));
    return acc.value();
}

std::string method_tag(const ProbabilityModel& model) {
    return model.method == FitMethod::ElasticNet ? "elastic_net" : "mle";
}

std::string treatment_tag(TreatmentMode mode) {
    switch (mode) {
        case TreatmentMode::Known: return "known";
        case TreatmentMode::Empirical: return "empirical";
        case TreatmentMode::MultinomialLogit: return "multinomial_logit";
    }
    return "unknown";
}

std::optional<WeightDiagnostics> weight_diagnostics(const std::vector<double>& weights) {
    if (weights.empty()) return std::nullopt;
    WeightDiagnostics d;
    d.count = weights.size();
    d.min = *std::min_element(weights.begin(), weights.end());
    d.max = *std::max_element(weights.begin(), weights.end());
    KahanSum sum;
    KahanSum sq;
    for (double w : weights) {
        sum.add(w);
        sq.add(w * w);
    }
    d.effective_sample_size = sq.value() > 0.0 ? sum.value() * sum.value() / sq.value() : 0.0;
    return d;
}

PointEstimate start_estimate(const NuisanceEstimates& ne, EstimatorKind kind, std::size_t k) {
    PointEstimate est;
    est.estimator = kind;
    est.arm = ne.arms[k];
    est.cluster_ids = ne.cluster_ids;
    est.metadata = ne.metadata;
    return est;
}

double ybar_of(const NuisanceEstimates& ne, std::size_t j) {
    if (!ne.ybar[j]) {
        throw Error(ErrorCode::MissingOutcome,
                    "randomized cluster '" + (*ne.cluster_ids)[j] + "' has no outcome");
    }
    return *ne.ybar[j];
}

// Maps the treatment model's columns onto the dataset's arm catalog.
Eigen::MatrixXd treatment_matrix(const StudyDataset& ds, const TreatmentModel& model) {
    const Eigen::MatrixXd raw = model.probabilities(ds);
    Eigen::MatrixXd out(raw.rows(), static_cast<Eigen::Index>(ds.arms().size()));
    for (std::size_t k = 0; k < ds.arms().size(); ++k) {
        auto it = std::find(model.arms.begin(), model.arms.end(), ds.arms()[k]);
        if (it == model.arms.end()) {
            throw Error(ErrorCode::DimensionMismatch,
                        "treatment model does not cover arm '" + ds.arms()[k] + "'");
        }
        out.col(static_cast<Eigen::Index>(k)) = raw.col(it - model.arms.begin());
    }
    return out;
}

std::size_t clip_treatment_rows(Eigen::MatrixXd& e) {
    if (e.cols() < 2) return 0;
    std::size_t moved = 0;
    for (Eigen::Index j = 0; j < e.rows(); ++j) {
        Eigen::VectorXd row = e.row(j).transpose();
        const std::size_t n = clip_probabilities(row);
        if (n > 0) {
            moved += n;
            e.row(j) = (row / row.sum()).transpose();
        }
    }
    return moved;
}

std::shared_ptr<const std::vector<std::string>> ids_of(const StudyDataset& ds) {
    auto ids = std::make_shared<std::vector<std::string>>();
    ids->reserve(ds.size());
    for (const auto& c : ds.clusters()) ids->push_back(c.cluster_id);
    return ids;
}

NuisanceEstimates empty_estimates(const StudyDataset& ds) {
    NuisanceEstimates ne;
    const auto m = static_cast<Eigen::Index>(ds.size());
    const auto K = static_cast<Eigen::Index>(ds.arms().size());
    ne.arms = ds.arms();
    ne.cluster_ids = ids_of(ds);
    ne.order = ds.summation_order();
    ne.arm_of.resize(ds.size());
    ne.ybar.resize(ds.size());
    for (std::size_t j = 0; j < ds.size(); ++j) {
        ne.arm_of[j] = ds.arm_index_of(j);
        if (ne.arm_of[j] >= 0) ne.ybar[j] = cluster_average_outcome(ds.cluster(j));
    }
    ne.p_hat = Eigen::VectorXd::Zero(m);
    ne.e_hat = Eigen::MatrixXd::Zero(m, K);
    ne.g_hat = Eigen::MatrixXd::Zero(m, K);
    return ne;
}

// Predictions of `fitted` on every cluster of `ds`, unclipped.
struct RawNuisance {
    Eigen::VectorXd p;
    Eigen::MatrixXd e;
    Eigen::MatrixXd g;
};

RawNuisance predict_nuisance(const StudyDataset& ds, const FittedNuisance& fitted) {
    RawNuisance out;
    const auto m = static_cast<Eigen::Index>(ds.size());
    out.p = predict(fitted.participation,
                    raw_cluster_features(ds, fitted.participation.feature_spec));
    out.e = treatment_matrix(ds, fitted.treatment);
    out.g = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(ds.arms().size()));
    for (std::size_t k = 0; k < ds.arms().size(); ++k) {
        auto it = fitted.outcome_by_arm.find(ds.arms()[k]);
        if (it == fitted.outcome_by_arm.end()) {
            throw Error(ErrorCode::DimensionMismatch,
                        "no outcome model for arm '" + ds.arms()[k] + "'");
        }
        const FeatureMatrix fm = raw_individual_features(ds, it->second.feature_spec);
        const Eigen::VectorXd h = predict(it->second, fm);
        std::vector<KahanSum> acc(ds.size());
        for (std::size_t r = 0; r < fm.rows.size(); ++r) {
            acc[fm.rows[r].cluster].add(h(static_cast<Eigen::Index>(r)));
        }
        for (std::size_t j = 0; j < ds.size(); ++j) {
            out.g(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
                acc[j].value() / static_cast<double>(ds.cluster(j).size());
        }
    }
    return out;
}

void describe_config(NuisanceEstimates& ne, const FittedNuisance& fitted) {
    ne.metadata["participation_method"] = method_tag(fitted.participation);
    ne.metadata["treatment_mode"] = treatment_tag(fitted.treatment.mode);
    ne.metadata["outcome_method"] =
        fitted.outcome_by_arm.empty() ? "none" : method_tag(fitted.outcome_by_arm.begin()->second);
}

void finish_clipping(NuisanceEstimates& ne) {
    ne.clipped_participation = clip_probabilities(ne.p_hat);
    ne.clipped_treatment = clip_treatment_rows(ne.e_hat);
    ne.metadata["clipped_participation"] = std::to_string(ne.clipped_participation);
    ne.metadata["clipped_treatment"] = std::to_string(ne.clipped_treatment);
}

}  // namespace

std::size_t NuisanceEstimates::arm_index(std::string_view label) const {
    auto it = std::find(arms.begin(), arms.end(), label);
    if (it == arms.end()) {
        throw Error(ErrorCode::EmptyArm, "arm '" + std::string(label) + "' is not in the catalog");
    }
    return static_cast<std::size_t>(it - arms.begin());
}

NuisanceEstimates make_nuisance_estimates(std::vector<std::string> cluster_ids,
                                          std::vector<std::string> arms, std::vector<int> arm_of,
                                          Eigen::VectorXd p_hat, Eigen::MatrixXd e_hat,
                                          Eigen::MatrixXd g_hat,
                                          std::vector<std::optional<double>> ybar) {
    const std::size_t m = cluster_ids.size();
    const auto K = static_cast<Eigen::Index>(arms.size());
    if (m == 0 || K == 0) {
        throw Error(ErrorCode::DimensionMismatch, "nuisance values need clusters and arms");
    }
    const auto mi = static_cast<Eigen::Index>(m);
    if (arm_of.size() != m || ybar.size() != m || p_hat.size() != mi || e_hat.rows() != mi ||
        g_hat.rows() != mi || e_hat.cols() != K || g_hat.cols() != K) {
        throw Error(ErrorCode::DimensionMismatch, "nuisance arrays disagree in shape");
    }
    {
        std::vector<std::string> sorted = cluster_ids;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw Error(ErrorCode::DuplicateId, "cluster ids must be unique");
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        if (arm_of[j] < -1 || arm_of[j] >= K) {
            throw Error(ErrorCode::InvalidArgument, "arm index out of range");
        }
        if (!std::isfinite(p_hat(jj)) || !(p_hat(jj) > 0.0) || p_hat(jj) > 1.0) {
            throw Error(ErrorCode::InvalidArgument, "p_hat must lie in (0, 1]");
        }
        if (!e_hat.row(jj).allFinite() || !g_hat.row(jj).allFinite()) {
            throw Error(ErrorCode::NonFiniteValue, "non-finite nuisance value");
        }
        if ((e_hat.row(jj).array() <= 0.0).any() || (e_hat.row(jj).array() > 1.0).any()) {
            throw Error(ErrorCode::InvalidArgument, "e_hat must lie in (0, 1]");
        }
        if (std::abs(e_hat.row(jj).sum() - 1.0) > 1e-12) {
            throw Error(ErrorCode::ProbabilitiesDontSumToOne,
                        "e_hat for cluster '" + cluster_ids[j] + "' does not sum to 1");
        }
        if (arm_of[j] >= 0 && !ybar[j]) {
            throw Error(ErrorCode::MissingOutcome,
                        "randomized cluster '" + cluster_ids[j] + "' has no outcome");
        }
        if (ybar[j] && !std::isfinite(*ybar[j])) {
            throw Error(ErrorCode::NonFiniteValue, "non-finite cluster outcome");
        }
    }
    NuisanceEstimates ne;
    ne.order = sorted_order(cluster_ids);
    ne.cluster_ids = std::make_shared<const std::vector<std::string>>(std::move(cluster_ids));
    ne.arms = std::move(arms);
    ne.arm_of = std::move(arm_of);
    ne.p_hat = std::move(p_hat);
    ne.e_hat = std::move(e_hat);
    ne.g_hat = std::move(g_hat);
    ne.ybar = std::move(ybar);
    return ne;
}

NuisanceEstimates compute_nuisance_estimates(const StudyDataset& ds, const FittedNuisance& fitted) {
    NuisanceEstimates ne = empty_estimates(ds);
    RawNuisance raw = predict_nuisance(ds, fitted);
    ne.p_hat = std::move(raw.p);
    ne.e_hat = std::move(raw.e);
    ne.g_hat = std::move(raw.g);
    describe_config(ne, fitted);
    finish_clipping(ne);
    return ne;
}

std::string_view estimator_name(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::Aipw: return "AIPW";
        case EstimatorKind::Ipw: return "IPW";
        case EstimatorKind::Hajek: return "IPW (normalized)";
        case EstimatorKind::IpwAggregated: return "IPW (aggregated)";
        case EstimatorKind::GFormula: return "g-formula";
        case EstimatorKind::TrialOnly: return "Trial-only";
        case EstimatorKind::TrialOnlyClusterWeighted: return "Trial-only (cluster-weighted)";
        case EstimatorKind::Transport: return "Transport AIOW";
    }
    return "unknown";
}

std::string_view estimator_key(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::Aipw: return "aipw";
        case EstimatorKind::Ipw: return "ipw";
        case EstimatorKind::Hajek: return "hajek";
        case EstimatorKind::IpwAggregated: return "ipw_aggregated";
        case EstimatorKind::GFormula: return "gformula";
        case EstimatorKind::TrialOnly: return "trial_only";
        case EstimatorKind::TrialOnlyClusterWeighted: return "trial_only_cluster";
        case EstimatorKind::Transport: return "transport";
    }
    return "unknown";
}

std::optional<EstimatorKind> estimator_from_key(std::string_view key) {
    for (auto kind : {EstimatorKind::Aipw, EstimatorKind::Ipw, EstimatorKind::Hajek,
                      EstimatorKind::IpwAggregated, EstimatorKind::GFormula,
                      EstimatorKind::TrialOnly, EstimatorKind::TrialOnlyClusterWeighted,
                      EstimatorKind::Transport}) {
        if (estimator_key(kind) == key) return kind;
    }
    return std::nullopt;
}

PointEstimate aipw_psi(const NuisanceEstimates& ne, std::string_view arm) {
    const std::size_t k = ne.arm_index(arm);
    const auto kk = static_cast<Eigen::Index>(k);
    const auto m = static_cast<Eigen::Index>(ne.size());
    PointEstimate est = start_estimate(ne, EstimatorKind::Aipw, k);

    Eigen::VectorXd summand(m);
    std::vector<double> weights;
    for (std::size_t j : ne.order) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double g = ne.g_hat(jj, kk);
        double term = g;
        if (ne.arm_of[j] == static_cast<int>(k)) {
            const double w = 1.0 / (ne.p_hat(jj) * ne.e_hat(jj, kk));
            weights.push_back(w);
            term += w * (ybar_of(ne, j) - g);
        }
        summand(jj) = term;
    }
    est.value = ordered_sum(summand, ne.order) / static_cast<double>(m);
    est.influence = summand.array() - est.value;
    est.weights = weight_diagnostics(weights);
    if (weights.empty()) {
        est.warnings.push_back("arm '" + est.arm +
                               "' has no randomized clusters; estimate is the outcome-model mean");
    }
    return est;
}

PointEstimate ipw_psi(const NuisanceEstimates& ne, std::string_view arm, bool normalized) {
    const std::size_t k = ne.arm_index(arm);
    const auto kk = static_cast<Eigen::Index>(k);
    const auto m = static_cast<Eigen::Index>(ne.size());
    PointEstimate est =
        start_estimate(ne, normalized ? EstimatorKind::Hajek : EstimatorKind::Ipw, k);

    Eigen::VectorXd weighted = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
    std::vector<double> weights;
    for (std::size_t j : ne.order) {
        if (ne.arm_of[j] != static_cast<int>(k)) continue;
        const auto jj = static_cast<Eigen::Index>(j);
        w(jj) = 1.0 / (ne.p_hat(jj) * ne.e_hat(jj, kk));
        weighted(jj) = w(jj) * ybar_of(ne, j);
        weights.push_back(w(jj));
    }
    if (weights.empty()) {
        throw Error(ErrorCode::NoTreatedClusters,
                    "no randomized clusters in arm '" + est.arm + "'");
    }
    const double numerator = ordered_sum(weighted, ne.order);
    if (normalized) {
        const double total = ordered_sum(w, ne.order);
        est.value = numerator / total;
        // Linearization of the ratio with the weights held fixed.
        Eigen::VectorXd infl(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            infl(j) = static_cast<double>(m) * (weighted(j) - w(j) * est.value) / total;
        }
        est.influence = std::move(infl);
    } else {
        est.value = numerator / static_cast<double>(m);
        est.influence = weighted.array() - est.value;
    }
    est.weights = weight_diagnostics(weights);
    return est;
}

PointEstimate ipw_psi_aggregated(const StudyDataset& ds,
                                 const ProbabilityModel& cluster_level_participation,
                                 const TreatmentModel& treatment, std::string_view arm) {
    if (cluster_level_participation.feature_spec.include_individual) {
        throw Error(ErrorCode::InvalidArgument,
                    "aggregated weighting needs a participation model on cluster-level features");
    }
    NuisanceEstimates ne = empty_estimates(ds);
    ne.p_hat = predict(cluster_level_participation,
                       raw_cluster_features(ds, cluster_level_participation.feature_spec));
    ne.e_hat = treatment_matrix(ds, treatment);
    ne.metadata["participation_method"] = method_tag(cluster_level_participation);
    ne.metadata["treatment_mode"] = treatment_tag(treatment.mode);
    finish_clipping(ne);
    PointEstimate est = ipw_psi(ne, arm, false);
    est.estimator = EstimatorKind::IpwAggregated;
    return est;
}

PointEstimate gformula_psi(const NuisanceEstimates& ne, std::string_view arm) {
    const std::size_t k = ne.arm_index(arm);
    PointEstimate est = start_estimate(ne, EstimatorKind::GFormula, k);
    const Eigen::VectorXd g = ne.g_hat.col(static_cast<Eigen::Index>(k));
    est.value = ordered_sum(g, ne.order) / static_cast<double>(ne.size());
    est.influence = g.array() - est.value;
    return est;
}

PointEstimate trial_only_estimate(const StudyDataset& ds, std::string_view arm,
                                  TrialPooling pooling) {
    const std::size_t k = ds.require_arm(arm);
    const auto m = static_cast<Eigen::Index>(ds.size());
    PointEstimate est;
    est.estimator = pooling == TrialPooling::Individual ? EstimatorKind::TrialOnly
                                                        : EstimatorKind::TrialOnlyClusterWeighted;
    est.arm = ds.arms()[k];
    est.cluster_ids = ids_of(ds);

    KahanSum total;
    KahanSum count;
    std::size_t clusters = 0;
    for (std::size_t j : ds.summation_order()) {
        if (ds.arm_index_of(j) != static_cast<int>(k)) continue;
        const ClusterRecord& c = ds.cluster(j);
        ++clusters;
        if (pooling == TrialPooling::Individual) {
            for (Eigen::Index i = 0; i < c.size(); ++i) total.add((*c.y)(i));
            count.add(static_cast<double>(c.size()));
        } else {
            total.add(cluster_average_outcome(c));
            count.add(1.0);
        }
    }
    if (clusters == 0) {
        throw Error(ErrorCode::NoTreatedClusters, "no randomized clusters in arm '" + est.arm + "'");
    }
    est.value = total.value() / count.value();

    // Per-cluster scores; their sum over arm clusters is zero.
    Eigen::VectorXd infl = Eigen::VectorXd::Zero(m);
    for (std::size_t j = 0; j < ds.size(); ++j) {
        if (ds.arm_index_of(j) != static_cast<int>(k)) continue;
        const ClusterRecord& c = ds.cluster(j);
        double r = 0.0;
        if (pooling == TrialPooling::Individual) {
            KahanSum acc;
            for (Eigen::Index i = 0; i < c.size(); ++i) acc.add((*c.y)(i) - est.value);
            r = acc.value();
        } else {
            r = cluster_average_outcome(c) - est.value;
        }
        infl(static_cast<Eigen::Index>(j)) = static_cast<double>(m) * r / count.value();
    }
    est.influence = std::move(infl);
    est.metadata["pooling"] = pooling == TrialPooling::Individual ? "individual" : "cluster";
    return est;
}

PointEstimate transport_phi(const NuisanceEstimates& ne, std::string_view arm) {
    const std::size_t k = ne.arm_index(arm);
    const auto kk = static_cast<Eigen::Index>(k);
    const auto m = static_cast<Eigen::Index>(ne.size());
    PointEstimate est = start_estimate(ne, EstimatorKind::Transport, k);

    std::size_t n0 = 0;
    for (int a : ne.arm_of) n0 += a < 0 ? 1 : 0;
    if (n0 == 0) {
        throw Error(ErrorCode::NoNonRandomizedClusters,
                    "transport needs at least one non-randomized cluster");
    }

    Eigen::VectorXd augmentation = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd target_g = Eigen::VectorXd::Zero(m);
    std::vector<double> weights;
    for (std::size_t j : ne.order) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double g = ne.g_hat(jj, kk);
        if (ne.arm_of[j] < 0) {
            target_g(jj) = g;
        } else if (ne.arm_of[j] == static_cast<int>(k)) {
            const double p = ne.p_hat(jj);
            const double w = (1.0 - p) / (p * ne.e_hat(jj, kk));
            weights.push_back(w);
            augmentation(jj) = w * (ybar_of(ne, j) - g);
        }
    }
    const double n0d = static_cast<double>(n0);
    const Eigen::VectorXd summand = augmentation + target_g;
    est.value = ordered_sum(summand, ne.order) / n0d;

    Eigen::VectorXd infl(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const double centered = ne.arm_of[static_cast<std::size_t>(j)] < 0 ? target_g(j) - est.value : 0.0;
        infl(j) = static_cast<double>(m) / n0d * (augmentation(j) + centered);
    }
    est.influence = std::move(infl);
    est.weights = weight_diagnostics(weights);
    if (weights.empty()) {
        est.warnings.push_back("arm '" + est.arm +
                               "' has no randomized clusters; transported estimate is the "
                               "outcome-model mean over non-randomized clusters");
    }
    return est;
}

PointEstimate contrast(const PointEstimate& e1, const PointEstimate& e2) {
    if (e1.estimator != e2.estimator) {
        throw Error(ErrorCode::MismatchedEstimates, "contrast of different estimators");
    }
    const bool same_alignment =
        e1.cluster_ids == e2.cluster_ids ||
        (e1.cluster_ids && e2.cluster_ids && *e1.cluster_ids == *e2.cluster_ids);
    if (!same_alignment) {
        throw Error(ErrorCode::MismatchedEstimates, "estimates come from different datasets");
    }
    if (e1.influence.has_value() != e2.influence.has_value()) {
        throw Error(ErrorCode::MismatchedEstimates, "only one estimate carries influence values");
    }
    if (e1.influence && e1.influence->size() != e2.influence->size()) {
        throw Error(ErrorCode::MismatchedEstimates, "influence vectors differ in length");
    }
    PointEstimate out;
    out.estimator = e1.estimator;
    out.arm = e1.arm;
    out.reference_arm = e2.arm;
    out.value = e1.value - e2.value;
    if (e1.influence) out.influence = *e1.influence - *e2.influence;
    out.cluster_ids = e1.cluster_ids;
    out.metadata = e1.metadata;
    out.warnings = e1.warnings;
    out.warnings.insert(out.warnings.end(), e2.warnings.begin(), e2.warnings.end());
    return out;
}

std::vector<int> crossfit_partition(const StudyDataset& ds, int folds, std::uint64_t seed) {
    if (folds < 2) {
        throw Error(ErrorCode::InvalidArgument, "cross-fitting needs at least 2 folds");
    }
    std::vector<std::size_t> per_arm(ds.arms().size(), 0);
    for (std::size_t j = 0; j < ds.size(); ++j) {
        if (ds.arm_index_of(j) >= 0) ++per_arm[static_cast<std::size_t>(ds.arm_index_of(j))];
    }
    for (std::size_t k = 0; k < per_arm.size(); ++k) {
        if (per_arm[k] < static_cast<std::size_t>(folds)) {
            throw Error(ErrorCode::TooManyFolds,
                        std::to_string(folds) + " folds but arm '" + ds.arms()[k] + "' has " +
                            std::to_string(per_arm[k]) + " randomized clusters");
        }
    }

    // Strata: non-randomized clusters, then one stratum per arm. Each stratum
    // is listed in cluster_id order, shuffled, and dealt round-robin.
    std::vector<int> fold_of(ds.size(), 0);
    RandomStream stream(seed, stream_id(StreamDomain::Folds, 0));
    for (int stratum = -1; stratum < static_cast<int>(ds.arms().size()); ++stratum) {
        std::vector<std::size_t> members;
        for (std::size_t j : ds.summation_order()) {
            if (ds.arm_index_of(j) == stratum) members.push_back(j);
        }
        for (std::size_t i = members.size(); i > 1; --i) {
            const auto r = static_cast<std::size_t>(stream.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(members[i - 1], members[r]);
        }
        for (std::size_t i = 0; i < members.size(); ++i) {
            fold_of[members[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
        }
    }
    return fold_of;
}

NuisanceEstimates crossfit_nuisance_estimates(const StudyDataset& ds, const NuisanceConfig& config,
                                              int folds, std::uint64_t seed) {
    const std::vector<int> fold_of = crossfit_partition(ds, folds, seed);
    NuisanceEstimates ne = empty_estimates(ds);
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> train;
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (fold_of[j] != f) train.push_back(j);
        }
        const FittedNuisance fitted = fit_nuisance(ds.subset(train), config);
        const RawNuisance raw = predict_nuisance(ds, fitted);
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (fold_of[j] != f) continue;
            const auto jj = static_cast<Eigen::Index>(j);
            ne.p_hat(jj) = raw.p(jj);
            ne.e_hat.row(jj) = raw.e.row(jj);
            ne.g_hat.row(jj) = raw.g.row(jj);
        }
        if (f == 0) describe_config(ne, fitted);
    }
    finish_clipping(ne);
    ne.metadata["crossfit_folds"] = std::to_string(folds);
    ne.metadata["crossfit_seed"] = std::to_string(seed);
    return ne;
}

PointEstimate crossfit_aipw_psi(const StudyDataset& ds, const NuisanceConfig& config, int folds,
                                std::uint64_t seed, std::string_view arm) {
    ds.require_arm(arm);
    return aipw_psi(crossfit_nuisance_estimates(ds, config, folds, seed), arm);
}

}  // namespace clusterdr
