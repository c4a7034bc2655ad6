#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "clusterdr/error.hpp"
#include "clusterdr/prob_models.hpp"
#include "clusterdr/simulation.hpp"
#include "checks.hpp"
#include "support.hpp"

using namespace clusterdr;
using checks::logistic_problem;
using checks::loglik;
using checks::matrix_of;
using checks::score;

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

DgpConfig small_dgp() {
    DgpConfig cfg;
    cfg.m = 120;
    cfg.alpha = Eigen::Vector3d(0.0, 0.8, 0.5);
    cfg.beta = {Eigen::Vector4d(-0.5, 1.0, 0.5, 1.0), Eigen::Vector4d(0.0, 1.0, 0.5, 1.0)};
    cfg.seed = 17;
    return cfg;
}

}  // namespace

TEST(LogisticMle, InterceptOnly) {
    const FeatureMatrix fm = intercept_only_features(4);
    const std::vector<double> y{1, 1, 1, 0};
    const ProbabilityModel model = fit_logistic_mle(fm, y);
    EXPECT_NEAR(model.coefficients(0), std::log(3.0), 1e-10);
    const Eigen::VectorXd p = predict(model, fm);
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(p(i), 0.75, 1e-12);

    const std::vector<double> half{1, 0, 1, 0, 0, 1};
    EXPECT_NEAR(fit_logistic_mle(intercept_only_features(6), half).coefficients(0), 0.0, 1e-14);
}

TEST(LogisticMle, MatchesQuasiNewtonMaximizer) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const checks::LogisticProblem pb = logistic_problem(seed);
        const ProbabilityModel model = fit_logistic_mle(pb.fm, pb.y);
        const Eigen::VectorXd ref = support::bfgs_maximize(
            [&](const Eigen::VectorXd& b) { return loglik(pb.fm, pb.y, b); },
            [&](const Eigen::VectorXd& b) { return score(pb.fm, pb.y, b); },
            Eigen::VectorXd::Zero(pb.fm.num_cols()));
        for (Eigen::Index k = 0; k < ref.size(); ++k) {
            EXPECT_NEAR(model.coefficients(k), ref(k), 1e-6) << "seed " << seed;
        }
        EXPECT_TRUE(model.diagnostics.converged);
    }
}

TEST(LogisticMle, ScoreIdentityWeighted) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unit(0.2, 3.0);
    for (std::uint64_t seed = 30; seed < 40; ++seed) {
        const checks::LogisticProblem pb = logistic_problem(seed, 80, 3);
        std::vector<double> w(pb.y.size());
        for (double& v : w) v = unit(rng);
        const ProbabilityModel model = fit_logistic_mle(pb.fm, pb.y, w);
        const Eigen::VectorXd p = predict(model, pb.fm);
        double resid = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) resid += w[i] * (pb.y[i] - p(static_cast<Eigen::Index>(i)));
        EXPECT_NEAR(resid, 0.0, 1e-8);
    }
}

TEST(LogisticMle, InvariantToRowOrder) {
    const checks::LogisticProblem pb = logistic_problem(77, 60, 2);
    std::vector<std::size_t> perm(pb.y.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(1);
    std::shuffle(perm.begin(), perm.end(), rng);
    FeatureMatrix shuffled = select_rows(pb.fm, perm);
    std::vector<double> y;
    for (std::size_t i : perm) y.push_back(pb.y[i]);
    const Eigen::VectorXd a = predict(fit_logistic_mle(pb.fm, pb.y), pb.fm);
    const Eigen::VectorXd b = predict(fit_logistic_mle(shuffled, y), pb.fm);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LogisticMle, Errors) {
    const FeatureMatrix fm = intercept_only_features(3);
    const std::vector<double> ones{1, 1, 1};
    EXPECT_EQ(code_of([&] { fit_logistic_mle(fm, ones); }), ErrorCode::Separation);

    Eigen::MatrixXd sep(6, 1);
    sep << -3, -2, -1, 1, 2, 3;
    const std::vector<double> y{0, 0, 0, 1, 1, 1};
    EXPECT_EQ(code_of([&] { fit_logistic_mle(matrix_of(sep), y); }), ErrorCode::Separation);

    Eigen::MatrixXd collinear(6, 2);
    collinear << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
    const std::vector<double> y2{0, 1, 0, 1, 1, 0};
    EXPECT_EQ(code_of([&] { fit_logistic_mle(matrix_of(collinear), y2); }), ErrorCode::SingularSystem);
}

TEST(ElasticNet, SoftThreshold) {
    EXPECT_NEAR(soft_threshold(0.8, 0.5), 0.3, 1e-15);
    EXPECT_NEAR(soft_threshold(-0.8, 0.5), -0.3, 1e-15);
    EXPECT_EQ(soft_threshold(0.3, 0.5), 0.0);
}

TEST(ElasticNet, ZeroPenaltyMatchesMle) {
    for (std::uint64_t seed = 50; seed < 60; ++seed) {
        const checks::LogisticProblem pb = logistic_problem(seed, 70, 3);
        const FeatureMatrix fm = apply_standardization(pb.fm, compute_standardization(pb.fm.values));
        const ProbabilityModel mle = fit_logistic_mle(fm, pb.y);
        const ProbabilityModel en = fit_logistic_elastic_net(fm, pb.y, 0.0, 0.5);
        for (Eigen::Index k = 0; k < mle.coefficients.size(); ++k) {
            EXPECT_NEAR(en.coefficients(k), mle.coefficients(k), 1e-5);
        }
    }
}

TEST(ElasticNet, NullThresholdZeroesPenalized) {
    for (double alpha : {1.0, 0.5, 0.2}) {
        const checks::LogisticProblem pb = logistic_problem(91, 60, 4);
        const FeatureMatrix fm = apply_standardization(pb.fm, compute_standardization(pb.fm.values));
        // Independent threshold: max_j |(1/n) sum x_ij (y_i - ybar)| / alpha.
        const double ybar = std::accumulate(pb.y.begin(), pb.y.end(), 0.0) / static_cast<double>(pb.y.size());
        double lam = 0.0;
        for (Eigen::Index c = 1; c < fm.num_cols(); ++c) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < fm.num_rows(); ++i) s += fm.values(i, c) * (pb.y[static_cast<std::size_t>(i)] - ybar);
            lam = std::max(lam, std::abs(s) / static_cast<double>(fm.num_rows()) / alpha);
        }
        EXPECT_NEAR(elastic_net_null_lambda(fm, pb.y, alpha), lam, 1e-14);
        const ProbabilityModel at = fit_logistic_elastic_net(fm, pb.y, lam * (1.0 + 1e-9), alpha);
        for (Eigen::Index k = 1; k < at.coefficients.size(); ++k) EXPECT_EQ(at.coefficients(k), 0.0);
        EXPECT_NEAR(at.coefficients(0), std::log(ybar / (1.0 - ybar)), 1e-7);
        const ProbabilityModel below = fit_logistic_elastic_net(fm, pb.y, lam * 0.9, alpha);
        EXPECT_GT(below.coefficients.tail(below.coefficients.size() - 1).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(ElasticNet, RequiresStandardizedFeatures) {
    const checks::LogisticProblem pb = logistic_problem(3);
    EXPECT_EQ(code_of([&] { fit_logistic_elastic_net(pb.fm, pb.y, 0.1, 1.0); }), ErrorCode::NotStandardized);
}

TEST(Predict, ClosedForms) {
    ProbabilityModel model;
    model.coefficients = Eigen::Vector2d(0.0, 0.0);
    Eigen::MatrixXd body(1, 1);
    body << 2.0;
    const FeatureMatrix fm = matrix_of(body);
    EXPECT_EQ(predict(model, fm)(0), 0.5);
    model.coefficients = Eigen::Vector2d(std::log(3.0), 0.0);
    EXPECT_NEAR(predict(model, fm)(0), 0.75, 1e-15);
    model.coefficients = Eigen::Vector2d(0.0, 1.0);
    EXPECT_NEAR(predict(model, fm)(0), 0.8807970779778823, 1e-15);
    model.coefficients = Eigen::Vector3d(0.0, 1.0, 1.0);
    EXPECT_EQ(code_of([&] { predict(model, fm); }), ErrorCode::DimensionMismatch);
}

TEST(Treatment, KnownEmpiricalMultinomial) {
    std::vector<ClusterRecord> recs;
    for (int j = 0; j < 40; ++j) recs.push_back(support::trial("c" + std::to_string(j), j < 10 ? "a1" : "a2", {1}));
    recs.push_back(support::target("t"));
    const StudyDataset ds = validate_dataset(recs);

    const std::map<std::string, double> quarter{{"a1", 0.25}, {"a2", 0.75}};
    const Eigen::MatrixXd known = fit_treatment_model(ds, TreatmentMode::Known, nullptr, &quarter).probabilities(ds);
    EXPECT_EQ(known(0, 0), 0.25);

    const Eigen::MatrixXd emp = fit_treatment_model(ds, TreatmentMode::Empirical).probabilities(ds);
    EXPECT_NEAR(emp(40, 0), 0.25, 1e-15);
    EXPECT_NEAR(emp(40, 1), 0.75, 1e-15);

    const Eigen::MatrixXd mn = fit_treatment_model(ds, TreatmentMode::MultinomialLogit).probabilities(ds);
    EXPECT_NEAR(mn(3, 0), 0.25, 1e-6);
    EXPECT_NEAR(mn(3, 1), 0.75, 1e-6);

    const std::map<std::string, double> bad{{"a1", 0.3}, {"a2", 0.3}};
    EXPECT_EQ(code_of([&] { fit_treatment_model(ds, TreatmentMode::Known, nullptr, &bad); }),
              ErrorCode::ProbabilitiesDontSumToOne);
    const std::map<std::string, double> missing{{"a1", 1.0}};
    EXPECT_EQ(code_of([&] { fit_treatment_model(ds, TreatmentMode::Known, nullptr, &missing); }),
              ErrorCode::ProbabilitiesDontSumToOne);
    const std::map<std::string, double> extra{{"a1", 0.5}, {"a2", 0.25}, {"a9", 0.25}};
    EXPECT_EQ(code_of([&] { fit_treatment_model(ds, TreatmentMode::Known, nullptr, &extra); }),
              ErrorCode::EmptyArm);
}

TEST(Treatment, FactorialKnownAndRowsSumToOne) {
    std::vector<ClusterRecord> recs;
    const std::vector<std::string> arms{"a1", "a2", "a3", "a4"};
    for (int j = 0; j < 16; ++j) recs.push_back(support::trial("c" + std::to_string(j), arms[j % 4], {0, 1}, {0.1 * j}));
    recs.push_back(support::target("t", 2, {0.3}));
    const StudyDataset ds = validate_dataset(recs);
    const std::map<std::string, double> equal{{"a1", 0.25}, {"a2", 0.25}, {"a3", 0.25}, {"a4", 0.25}};
    const Eigen::MatrixXd e = fit_treatment_model(ds, TreatmentMode::Known, nullptr, &equal).probabilities(ds);
    EXPECT_TRUE((e.array() == 0.25).all());

    FeatureSpec spec = FeatureSpec::cluster_level(1);
    spec.w_aggregates.clear();
    const FeatureMatrix fm = cluster_features(ds, spec);
    const Eigen::MatrixXd mn = fit_treatment_model(ds, TreatmentMode::MultinomialLogit, &fm).probabilities(ds);
    for (Eigen::Index j = 0; j < mn.rows(); ++j) {
        EXPECT_NEAR(mn.row(j).sum(), 1.0, 1e-12);
        EXPECT_TRUE((mn.row(j).array() > 0.0).all());
    }
}

TEST(FitNuisance, ParticipationMeanMatchesTrialFraction) {
    const StudyDataset ds = generate_dataset(small_dgp());
    NuisanceConfig cfg;
    cfg.participation.features = FeatureSpec::cluster_level(1);
    cfg.outcome.features = FeatureSpec::individual_level();
    const FittedNuisance f = fit_nuisance(ds, cfg);
    const Eigen::VectorXd p = predict(f.participation, raw_cluster_features(ds, f.participation.feature_spec));
    double frac = 0.0;
    for (const auto& c : ds.clusters()) frac += c.participates ? 1.0 : 0.0;
    EXPECT_NEAR(p.mean(), frac / static_cast<double>(ds.size()), 1e-10);
    EXPECT_EQ(f.outcome_by_arm.size(), ds.arms().size());
}

TEST(FitNuisance, SeparationPaths) {
    DgpConfig all_in = small_dgp();
    all_in.alpha = Eigen::Vector3d(40.0, 0.0, 0.0);
    const StudyDataset ds = generate_dataset(all_in);
    NuisanceConfig cfg;
    cfg.participation.features = FeatureSpec::cluster_level(1);
    EXPECT_EQ(code_of([&] { fit_nuisance(ds, cfg); }), ErrorCode::Separation);

    std::vector<ClusterRecord> recs;
    for (int j = 0; j < 6; ++j) {
        recs.push_back(support::trial("c" + std::to_string(j), j % 2 ? "zero" : "mixed",
                                      j % 2 ? std::vector<double>{0, 0} : std::vector<double>{0, 1}, {std::sin(j)}));
        recs.push_back(support::target("t" + std::to_string(j), 2, {std::cos(j)}));
    }
    for (std::size_t r = 0; r < recs.size(); ++r) recs[r].w << std::cos(3.0 * r), std::sin(5.0 * r);
    const StudyDataset ds2 = validate_dataset(recs);
    NuisanceConfig cfg2;
    cfg2.outcome.features = FeatureSpec::individual_level();
    try {
        fit_nuisance(ds2, cfg2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Separation) << e.what();
        EXPECT_NE(std::string(e.what()).find("'zero'"), std::string::npos);
    }
}
