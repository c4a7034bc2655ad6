#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "checks.hpp"
#include "clusterdr/cli.hpp"
#include "clusterdr/error.hpp"
#include "clusterdr/estimators.hpp"
#include "clusterdr/simulation.hpp"
#include "support.hpp"

using namespace clusterdr;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::InvalidArgument;
}

struct Row {
    int arm;  // -1: not randomized
    double p;
    std::vector<double> e;
    std::vector<double> g;
    std::optional<double> ybar;
};

NuisanceEstimates hand(const std::vector<std::string>& arms, const std::vector<Row>& rows) {
    std::vector<std::string> ids;
    std::vector<int> arm_of;
    std::vector<std::optional<double>> ybar;
    const auto m = static_cast<Eigen::Index>(rows.size());
    const auto K = static_cast<Eigen::Index>(arms.size());
    Eigen::VectorXd p(m);
    Eigen::MatrixXd e(m, K), g(m, K);
    for (Eigen::Index j = 0; j < m; ++j) {
        const Row& r = rows[static_cast<std::size_t>(j)];
        ids.push_back("c" + std::to_string(j));
        arm_of.push_back(r.arm);
        ybar.push_back(r.ybar);
        p(j) = r.p;
        for (Eigen::Index k = 0; k < K; ++k) {
            e(j, k) = r.e[static_cast<std::size_t>(k)];
            g(j, k) = r.g[static_cast<std::size_t>(k)];
        }
    }
    return make_nuisance_estimates(ids, arms, arm_of, p, e, g, ybar);
}

DgpConfig acceptance_dgp() {
    std::ifstream in(support::source_dir() / "configs" / "acceptance_dgp.json");
    return parse_dgp_config(nlohmann::json::parse(in).at("dgp"));
}

}  // namespace

TEST(Aipw, SingleCluster) {
    const auto ne = hand({"a"}, {{0, 1.0, {1.0}, {0.4}, 0.5}});
    EXPECT_NEAR(aipw_psi(ne, "a").value, 0.5, 1e-15);
}

TEST(Aipw, FourClusterHandValue) {
    // (0.8 - 0.6) / 0.25 = 0.8; (0.8 + 0.6 + 0.3 + 0.2 + 0.1) / 4 = 0.5.
    const auto ne = hand({"a", "b"}, {{0, 0.5, {0.5, 0.5}, {0.6, 0.6}, 0.8},
                                      {1, 0.5, {0.5, 0.5}, {0.3, 0.3}, 0.1},
                                      {-1, 0.25, {0.5, 0.5}, {0.2, 0.2}, std::nullopt},
                                      {-1, 0.25, {0.5, 0.5}, {0.1, 0.1}, std::nullopt}});
    const PointEstimate est = aipw_psi(ne, "a");
    EXPECT_NEAR(est.value, 0.5, 1e-15);
    EXPECT_NEAR((*est.influence)(0), 1.4 - 0.5, 1e-15);
    EXPECT_NEAR((*est.influence)(3), 0.1 - 0.5, 1e-15);
    ASSERT_TRUE(est.weights.has_value());
    EXPECT_EQ(est.weights->count, 1u);
    EXPECT_DOUBLE_EQ(est.weights->max, 4.0);
}

TEST(Aipw, ZeroOutcomeModelMatchesIpwBitwise) {
    std::mt19937_64 rng(5);
    for (int c = 0; c < 50; ++c) {
        const StudyDataset ds = validate_dataset(support::random_records(rng, 12, 4, {"a", "b"}));
        const NuisanceEstimates ne = support::random_nuisance(ds, rng);
        const NuisanceEstimates zero =
            checks::rebuild(ne, Eigen::MatrixXd::Zero(ne.g_hat.rows(), ne.g_hat.cols()));
        const double a = aipw_psi(zero, "a").value, b = ipw_psi(ne, "a", false).value;
        EXPECT_LE(std::abs(a - b), 1e-15 * std::max(1.0, std::abs(b)));
    }
}

TEST(Aipw, NoRandomizedClustersWarns) {
    const auto ne = hand({"a", "b"}, {{1, 0.5, {0.5, 0.5}, {0.3, 0.7}, 0.5}, {-1, 0.5, {0.5, 0.5}, {0.2, 0.4}, std::nullopt}});
    const PointEstimate est = aipw_psi(ne, "a");
    EXPECT_NEAR(est.value, 0.25, 1e-15);
    EXPECT_EQ(est.warnings.size(), 1u);
    EXPECT_TRUE(aipw_psi(ne, "b").warnings.empty());
}

TEST(Ipw, WeightsTwoAndFour) {
    // Weights 1/(p e) = 2 and 4 on the two arm-a clusters.
    const auto ne = hand({"a", "b"}, {{0, 1.0, {0.5, 0.5}, {0, 0}, 0.5},
                                      {0, 0.5, {0.5, 0.5}, {0, 0}, 0.25},
                                      {1, 0.5, {0.5, 0.5}, {0, 0}, 1.0},
                                      {-1, 0.5, {0.5, 0.5}, {0, 0}, std::nullopt}});
    EXPECT_NEAR(ipw_psi(ne, "a", false).value, 0.5, 1e-15);
    EXPECT_NEAR(ipw_psi(ne, "a", true).value, 1.0 / 3.0, 1e-15);
}

TEST(Ipw, EqualWeightsGiveArithmeticMean) {
    const auto ne = hand({"a", "b"}, {{0, 0.4, {0.5, 0.5}, {0, 0}, 0.2},
                                      {0, 0.4, {0.5, 0.5}, {0, 0}, 0.6},
                                      {0, 0.4, {0.5, 0.5}, {0, 0}, 0.7},
                                      {1, 0.4, {0.5, 0.5}, {0, 0}, 0.0}});
    EXPECT_NEAR(ipw_psi(ne, "a", true).value, 0.5, 1e-15);
}

TEST(Ipw, NoTreatedClusters) {
    const auto ne = hand({"a", "b"}, {{1, 0.5, {0.5, 0.5}, {0, 0}, 0.5}, {-1, 0.5, {0.5, 0.5}, {0, 0}, std::nullopt}});
    EXPECT_EQ(code_of([&] { ipw_psi(ne, "a", false); }), ErrorCode::NoTreatedClusters);
    EXPECT_EQ(code_of([&] { ipw_psi(ne, "a", true); }), ErrorCode::NoTreatedClusters);
}

TEST(Ipw, AggregatedMatchesUnaggregatedOnSameModel) {
    std::mt19937_64 rng(41);
    const StudyDataset ds = validate_dataset(support::random_records(rng, 40, 6, {"a", "b"}, 3));
    NuisanceConfig cfg;
    cfg.participation.features = FeatureSpec::cluster_level(ds.p());
    cfg.treatment.mode = TreatmentMode::Known;
    cfg.treatment.known = {{"a", 0.5}, {"b", 0.5}};
    cfg.outcome.features = FeatureSpec::individual_level();
    const FittedNuisance fitted = fit_nuisance(ds, cfg);
    const NuisanceEstimates ne = compute_nuisance_estimates(ds, fitted);
    for (const std::string a : {"a", "b"}) {
        const PointEstimate agg = ipw_psi_aggregated(ds, fitted.participation, fitted.treatment, a);
        EXPECT_NEAR(agg.value, ipw_psi(ne, a, false).value, 1e-12);
    }
}

TEST(Ipw, AggregatedConstantsFactorOut) {
    std::mt19937_64 rng(43);
    const StudyDataset ds = validate_dataset(support::random_records(rng, 30, 6, {"a", "b"}, 2, 1, 1, true));
    // Zero slopes make p_hat constant.
    ProbabilityModel intercept;
    intercept.feature_spec = FeatureSpec::cluster_level(ds.p());
    const double s_frac = static_cast<double>(dataset_summary(ds).trial_clusters) / static_cast<double>(ds.size());
    intercept.coefficients = Eigen::VectorXd::Zero(1 + ds.q() + ds.p());
    intercept.coefficients(0) = std::log(s_frac / (1.0 - s_frac));
    const TreatmentModel known = known_treatment_model(ds.arms(), {{"a", 0.5}, {"b", 0.5}});
    double ysum = 0.0, count = 0.0;
    for (std::size_t j = 0; j < ds.size(); ++j) {
        if (ds.cluster(j).participates && ds.cluster(j).arm == "a") {
            ysum += ds.cluster(j).y->mean();
            count += 1.0;
        }
    }
    const double m = static_cast<double>(ds.size());
    EXPECT_NEAR(ipw_psi_aggregated(ds, intercept, known, "a").value,
                (ysum / count) * count / (m * s_frac * 0.5), 1e-12);
}

TEST(GFormula, Means) {
    EXPECT_NEAR(gformula_psi(hand({"a"}, {{0, 0.5, {1}, {0.3}, 0.1}, {-1, 0.5, {1}, {0.3}, std::nullopt}}), "a").value, 0.3,
                1e-15);
    EXPECT_NEAR(gformula_psi(hand({"a"}, {{0, 0.5, {1}, {0.2}, 0.1}, {-1, 0.5, {1}, {0.4}, std::nullopt}}), "a").value, 0.3,
                1e-15);
}

TEST(TrialOnly, PooledAndClusterWeighted) {
    StudyDataset one = validate_dataset({support::trial("c1", "a", {1, 0}), support::target("t")});
    EXPECT_NEAR(trial_only_estimate(one, "a").value, 0.5, 1e-15);

    StudyDataset two = validate_dataset(
        {support::trial("c1", "a", {1}), support::trial("c2", "a", {0, 0, 0}), support::target("t")});
    EXPECT_NEAR(trial_only_estimate(two, "a").value, 0.25, 1e-15);
    EXPECT_NEAR(trial_only_estimate(two, "a", TrialPooling::Cluster).value, 0.5, 1e-15);
    EXPECT_EQ(code_of([&] { trial_only_estimate(two, "b"); }), ErrorCode::EmptyArm);
}

TEST(Transport, ThreeClusterHandValue) {
    const auto ne = hand({"a"}, {{0, 0.5, {1.0}, {0.7}, 0.9},
                                 {-1, 0.5, {1.0}, {0.4}, std::nullopt},
                                 {-1, 0.5, {1.0}, {0.2}, std::nullopt}});
    const PointEstimate est = transport_phi(ne, "a");
    EXPECT_NEAR(est.value, 0.4, 1e-15);
    EXPECT_NEAR(est.influence->mean(), 0.0, 1e-15);
}

TEST(Transport, OddsWeightVanishesAtCertainParticipation) {
    const auto ne = hand({"a"}, {{0, 1.0, {1.0}, {0.7}, 0.9},
                                 {0, 1.0, {1.0}, {0.1}, 0.3},
                                 {-1, 0.5, {1.0}, {0.2}, std::nullopt}});
    EXPECT_NEAR(transport_phi(ne, "a").value, 0.2, 1e-15);
}

TEST(Transport, AllNonRandomizedIsOutcomeModelMean) {
    const auto ne = hand({"a"}, {{-1, 0.5, {1.0}, {0.2}, std::nullopt}, {-1, 0.5, {1.0}, {0.6}, std::nullopt}});
    const PointEstimate est = transport_phi(ne, "a");
    EXPECT_NEAR(est.value, 0.4, 1e-15);
    EXPECT_EQ(est.warnings.size(), 1u);
}

TEST(Transport, NeedsNonRandomizedClusters) {
    const auto ne = hand({"a"}, {{0, 0.5, {1.0}, {0.7}, 0.9}, {0, 0.5, {1.0}, {0.4}, 0.1}});
    EXPECT_EQ(code_of([&] { transport_phi(ne, "a"); }), ErrorCode::NoNonRandomizedClusters);
}

TEST(Contrast, Examples) {
    const auto ne = hand({"a", "b"}, {{0, 0.5, {0.5, 0.5}, {0.6, 0.3}, 0.8},
                                      {1, 0.5, {0.5, 0.5}, {0.3, 0.2}, 0.1},
                                      {-1, 0.25, {0.5, 0.5}, {0.2, 0.4}, std::nullopt}});
    const PointEstimate a = aipw_psi(ne, "a");
    const PointEstimate same = contrast(a, a);
    EXPECT_EQ(same.value, 0.0);
    EXPECT_TRUE((same.influence->array() == 0.0).all());
    EXPECT_EQ(same.reference_arm, "a");

    PointEstimate e1 = a, e2 = a;
    e1.value = 0.5;
    e2.value = 0.3;
    e1.influence = Eigen::Vector3d(0.1, -0.1, 0.0);
    e2.influence = Eigen::Vector3d(0.05, -0.05, 0.0);
    const PointEstimate d = contrast(e1, e2);
    EXPECT_NEAR(d.value, 0.2, 1e-15);
    EXPECT_NEAR((*d.influence)(0), 0.05, 1e-15);
    EXPECT_NEAR((*d.influence)(1), -0.05, 1e-15);
}

TEST(Contrast, Mismatches) {
    const auto ne = hand({"a", "b"}, {{0, 0.5, {0.5, 0.5}, {0.6, 0.3}, 0.8},
                                      {1, 0.5, {0.5, 0.5}, {0.3, 0.2}, 0.1},
                                      {-1, 0.25, {0.5, 0.5}, {0.2, 0.4}, std::nullopt}});
    const auto other = hand({"a", "b"}, {{0, 0.5, {0.5, 0.5}, {0.6, 0.3}, 0.8},
                                         {1, 0.5, {0.5, 0.5}, {0.3, 0.2}, 0.1}});
    EXPECT_EQ(code_of([&] { contrast(aipw_psi(ne, "a"), gformula_psi(ne, "b")); }), ErrorCode::MismatchedEstimates);
    EXPECT_EQ(code_of([&] { contrast(aipw_psi(ne, "a"), aipw_psi(other, "b")); }), ErrorCode::MismatchedEstimates);
    PointEstimate bare = aipw_psi(ne, "b");
    bare.influence.reset();
    EXPECT_EQ(code_of([&] { contrast(aipw_psi(ne, "a"), bare); }), ErrorCode::MismatchedEstimates);
}

TEST(NuisanceValues, Validation) {
    EXPECT_EQ(code_of([] { hand({"a", "b"}, {{0, 0.5, {0.5, 0.6}, {0, 0}, 0.1}}); }),
              ErrorCode::ProbabilitiesDontSumToOne);
    EXPECT_EQ(code_of([] { hand({"a"}, {{0, 0.0, {1.0}, {0}, 0.1}}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { hand({"a"}, {{0, 0.5, {1.0}, {0}, std::nullopt}}); }), ErrorCode::MissingOutcome);
}

TEST(NuisanceValues, ConstantAndAveragedPredictions) {
    // Intercept-only outcome model at logit(0.4), and a slope on W giving
    // predictions (0.2, 0.6) within a two-person cluster.
    ClusterRecord c = support::trial("c1", "a", {1, 0});
    c.w << -1.0, 1.0;
    const StudyDataset ds = validate_dataset({c, support::target("t")});
    FittedNuisance fitted;
    fitted.participation.feature_spec = FeatureSpec::cluster_level(ds.p());
    fitted.participation.coefficients = Eigen::VectorXd::Zero(1 + ds.q() + ds.p());
    fitted.treatment = known_treatment_model(ds.arms(), {{"a", 1.0}});
    ProbabilityModel constant;
    constant.feature_spec = FeatureSpec::individual_level(false);
    constant.coefficients = Eigen::Vector2d(std::log(0.4 / 0.6), 0.0);
    fitted.outcome_by_arm["a"] = constant;
    NuisanceEstimates ne = compute_nuisance_estimates(ds, fitted);
    EXPECT_NEAR(ne.g_hat(0, 0), 0.4, 1e-15);
    EXPECT_NEAR(ne.g_hat(1, 0), 0.4, 1e-15);

    // logit(0.2) and logit(0.6) are not symmetric; solve for intercept and slope.
    const double l2 = std::log(0.2 / 0.8), l6 = std::log(0.6 / 0.4);
    ProbabilityModel sloped;
    sloped.feature_spec = FeatureSpec::individual_level(false);
    sloped.coefficients = Eigen::Vector2d((l2 + l6) / 2.0, (l6 - l2) / 2.0);
    fitted.outcome_by_arm["a"] = sloped;
    ne = compute_nuisance_estimates(ds, fitted);
    EXPECT_NEAR(ne.g_hat(0, 0), 0.4, 1e-15);
}

TEST(Properties, IdentitySuite) {
    const checks::CheckResult r = checks::identity_suite(101, 150);
    EXPECT_TRUE(r.ok()) << r.failures << " failures, first: " << r.first_failure;
}

TEST(Properties, TrialOnlySuite) {
    const checks::CheckResult r = checks::trial_only_suite(103, 40);
    EXPECT_TRUE(r.ok()) << r.failures << " failures, first: " << r.first_failure;
}

TEST(Properties, OracleSuite) {
    const checks::CheckResult r = checks::oracle_suite(107, 20);
    EXPECT_TRUE(r.ok()) << r.failures << " failures, first: " << r.first_failure;
}

TEST(CrossFit, Preconditions) {
    std::mt19937_64 rng(61);
    const StudyDataset ds = validate_dataset(support::random_records(rng, 20, 5, {"a", "b"}, 3));
    EXPECT_EQ(code_of([&] { crossfit_partition(ds, 1, 1); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { crossfit_partition(ds, 50, 1); }), ErrorCode::TooManyFolds);
}

TEST(CrossFit, PartitionIsStratifiedAndDeterministic) {
    std::mt19937_64 rng(67);
    const StudyDataset ds = validate_dataset(support::random_records(rng, 60, 5, {"a", "b"}, 6));
    const auto folds = crossfit_partition(ds, 3, 9);
    EXPECT_EQ(folds, crossfit_partition(ds, 3, 9));
    EXPECT_NE(folds, crossfit_partition(ds, 3, 10));
    for (int stratum = -1; stratum < 2; ++stratum) {
        std::array<int, 3> count{};
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (ds.arm_index_of(j) == stratum) ++count[static_cast<std::size_t>(folds[j])];
        }
        EXPECT_LE(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()), 1);
    }
}

TEST(CrossFit, MatchesManualFoldFits) {
    DgpConfig cfg = acceptance_dgp();
    cfg.m = 150;
    const StudyDataset ds = generate_dataset(cfg, 3);
    const NuisanceConfig nc = scenario_nuisance_config(cfg, Scenario::BothCorrect);
    const int folds = 3;
    const auto fold_of = crossfit_partition(ds, folds, 11);

    const auto m = static_cast<Eigen::Index>(ds.size());
    Eigen::VectorXd p(m);
    Eigen::MatrixXd e(m, 2), g(m, 2);
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> train;
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (fold_of[j] != f) train.push_back(j);
        }
        const NuisanceEstimates full = compute_nuisance_estimates(ds, fit_nuisance(ds.subset(train), nc));
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (fold_of[j] != f) continue;
            const auto jj = static_cast<Eigen::Index>(j);
            p(jj) = full.p_hat(jj);
            e.row(jj) = full.e_hat.row(jj);
            g.row(jj) = full.g_hat.row(jj);
        }
    }
    std::vector<std::string> ids;
    std::vector<int> arm_of;
    std::vector<std::optional<double>> ybar;
    for (std::size_t j = 0; j < ds.size(); ++j) {
        ids.push_back(ds.cluster(j).cluster_id);
        arm_of.push_back(ds.arm_index_of(j));
        ybar.push_back(ds.cluster(j).y ? std::optional<double>(ds.cluster(j).y->mean()) : std::nullopt);
    }
    const NuisanceEstimates manual = make_nuisance_estimates(ids, ds.arms(), arm_of, p, e, g, ybar);
    for (const std::string a : {"0", "1"}) {
        const PointEstimate cf = crossfit_aipw_psi(ds, nc, folds, 11, a);
        const PointEstimate ref = aipw_psi(manual, a);
        EXPECT_NEAR(cf.value, ref.value, 1e-12);
        EXPECT_LE((*cf.influence - *ref.influence).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_EQ(cf.value, crossfit_aipw_psi(ds, nc, folds, 11, a).value);
    }
}

TEST(CrossFit, CloseToInSampleOnLargeDataset) {
    const DgpConfig cfg = acceptance_dgp();
    const StudyDataset ds = generate_dataset(cfg, 0);
    const NuisanceConfig nc = scenario_nuisance_config(cfg, Scenario::BothCorrect);
    const NuisanceEstimates in_sample = compute_nuisance_estimates(ds, fit_nuisance(ds, nc));
    for (const std::string a : {"0", "1"}) {
        const PointEstimate ref = aipw_psi(in_sample, a);
        const double se = influence_curve_interval(ref, 0.95).se;
        EXPECT_LT(std::abs(crossfit_aipw_psi(ds, nc, 5, 2, a).value - ref.value), 3.0 * se) << "arm " << a;
    }
}
