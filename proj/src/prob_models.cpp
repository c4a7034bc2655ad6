#include "clusterdr/prob_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clusterdr/error.hpp"
#include "clusterdr/numeric.hpp"

namespace clusterdr {

namespace {

constexpr int kMleMaxIterations = 100;
constexpr double kMleTolerance = 1e-8;
constexpr int kMaxHalvings = 10;
constexpr int kEnetMaxOuter = 250;
constexpr double kEnetOuterTolerance = 1e-7;
constexpr int kEnetMaxSweeps = 100000;
constexpr double kEnetInnerTolerance = 1e-12;
constexpr int kMultinomialMaxIterations = 200;
constexpr double kMultinomialTolerance = 1e-8;

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> s) {
    return {s.data(), static_cast<Eigen::Index>(s.size())};
}

void check_labels(const FeatureMatrix& fm, std::span<const double> labels,
                  std::span<const double> weights) {
    if (static_cast<Eigen::Index>(labels.size()) != fm.num_rows()) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::to_string(labels.size()) + " labels for " +
                        std::to_string(fm.num_rows()) + " feature rows");
    }
    if (!weights.empty() && weights.size() != labels.size()) {
        throw Error(ErrorCode::DimensionMismatch, "weights and labels differ in length");
    }
    for (double y : labels) {
        if (!(y >= 0.0 && y <= 1.0)) {
            throw Error(ErrorCode::OutcomeOutOfRange, "labels must lie in [0, 1]");
        }
    }
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw Error(ErrorCode::InvalidArgument, "weights must be finite and nonnegative");
        }
    }
    if (!fm.values.allFinite()) {
        throw Error(ErrorCode::NonFiniteValue, "feature matrix has non-finite entries");
    }
}

double weighted_mean(const Eigen::VectorXd& y, const Eigen::VectorXd& wt) {
    return wt.dot(y) / wt.sum();
}

void require_both_classes(double ybar) {
    if (!(ybar > 0.0 && ybar < 1.0)) {
        throw Error(ErrorCode::Separation,
                    ybar <= 0.0 ? "every label is 0; the logistic likelihood is unbounded"
                                : "every label is 1; the logistic likelihood is unbounded");
    }
}

void require_full_rank(const Eigen::MatrixXd& X, const Eigen::VectorXd& wt) {
    Eigen::MatrixXd Xw = X.array().colwise() * wt.array().sqrt();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) {
        throw Error(ErrorCode::SingularSystem,
                    "feature columns are collinear (rank " + std::to_string(qr.rank()) + " < " +
                        std::to_string(X.cols()) +
                        "); remove redundant covariates or use elastic_net");
    }
}

// Norm of the coefficients re-expressed on standardized features.
double standardized_norm(const Eigen::VectorXd& beta, const FeatureMatrix& fm) {
    if (fm.standardization || beta.size() == 1) return beta.norm();
    const Eigen::MatrixXd& X = fm.values;
    const Eigen::Index k = X.cols() - 1;
    double intercept = beta(0);
    double ss = 0.0;
    for (Eigen::Index c = 1; c <= k; ++c) {
        const double mean = X.col(c).mean();
        const double sd = X.rows() > 1
                              ? std::sqrt((X.col(c).array() - mean).square().sum() /
                                          static_cast<double>(X.rows() - 1))
                              : 0.0;
        intercept += beta(c) * mean;
        const double b = beta(c) * (sd > 0.0 ? sd : 1.0);
        ss += b * b;
    }
    return std::sqrt(intercept * intercept + ss);
}

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& wt) {
    // y*eta - log(1 + e^eta), evaluated stably.
    KahanSum acc;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double e = eta(i);
        const double softplus = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        acc.add(wt(i) * (y(i) * e - softplus));
    }
    return acc.value();
}

void check_separation(const Eigen::VectorXd& beta, const FeatureMatrix& fm) {
    const double norm = standardized_norm(beta, fm);
    if (norm > kSeparationCap) {
        throw Error(ErrorCode::Separation,
                    "coefficient norm " + std::to_string(norm) +
                        " exceeds the separation cap of 30 on standardized features");
    }
}

ProbabilityModel make_model(const FeatureMatrix& fm, FitMethod method) {
    ProbabilityModel model;
    model.method = method;
    model.feature_names = fm.names;
    model.feature_spec = fm.spec;
    model.standardization = fm.standardization;
    return model;
}

}  // namespace

double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

ProbabilityModel fit_logistic_mle(const FeatureMatrix& features, std::span<const double> labels,
                                  std::span<const double> weights) {
    check_labels(features, labels, weights);
    const Eigen::MatrixXd& X = features.values;
    const Eigen::VectorXd y = as_vector(labels);
    const Eigen::VectorXd wt =
        weights.empty() ? Eigen::VectorXd::Ones(y.size()) : Eigen::VectorXd(as_vector(weights));
    if (wt.sum() <= 0.0) throw Error(ErrorCode::InvalidArgument, "all weights are zero");
    require_both_classes(weighted_mean(y, wt));
    require_full_rank(X, wt);

    ProbabilityModel model = make_model(features, FitMethod::Mle);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    beta(0) = logit(weighted_mean(y, wt));
    Eigen::VectorXd eta = X * beta;
    double ll = log_likelihood(eta, y, wt);

    FitDiagnostics& diag = model.diagnostics;
    for (int iter = 1; iter <= kMleMaxIterations; ++iter) {
        const Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
        const Eigen::VectorXd v = wt.array() * mu.array() * (1.0 - mu.array());
        const Eigen::VectorXd grad = X.transpose() * (wt.array() * (y - mu).array()).matrix();
        const Eigen::MatrixXd H = X.transpose() * v.asDiagonal() * X;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw Error(ErrorCode::SingularSystem,
                        "information matrix is singular; remove collinear covariates or use "
                        "elastic_net");
        }
        const Eigen::VectorXd step = ldlt.solve(grad);
        diag.iterations = iter;
        diag.gradient_norm = grad.norm();

        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd candidate;
        Eigen::VectorXd candidate_eta;
        double candidate_ll = ll;
        for (int h = 0; h <= kMaxHalvings; ++h, t *= 0.5) {
            candidate = beta + t * step;
            candidate_eta = X * candidate;
            candidate_ll = log_likelihood(candidate_eta, y, wt);
            if (candidate_ll >= ll - 1e-12 * (1.0 + std::abs(ll))) {
                accepted = true;
                break;
            }
        }
        const double change = (t * step).cwiseAbs().maxCoeff();
        if (!accepted) {
            if (step.cwiseAbs().maxCoeff() < kMleTolerance) {
                diag.converged = true;
                break;
            }
            throw Error(ErrorCode::NonConvergence,
                        "IRLS step halving failed to increase the likelihood at iteration " +
                            std::to_string(iter));
        }
        beta = candidate;
        eta = candidate_eta;
        ll = candidate_ll;
        diag.max_change = change;
        check_separation(beta, features);
        if (change < kMleTolerance) {
            diag.converged = true;
            break;
        }
    }
    const Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
    diag.gradient_norm = (X.transpose() * (wt.array() * (y - mu).array()).matrix()).norm();
    model.coefficients = beta;
    return model;
}

double elastic_net_null_lambda(const FeatureMatrix& features, std::span<const double> labels,
                               double alpha) {
    const Eigen::VectorXd y = as_vector(labels);
    const double ybar = y.mean();
    const auto n = static_cast<double>(y.size());
    double best = 0.0;
    for (Eigen::Index c = 1; c < features.num_cols(); ++c) {
        best = std::max(best, std::abs(features.values.col(c).dot((y.array() - ybar).matrix()) / n));
    }
    return best / alpha;
}

ProbabilityModel fit_logistic_elastic_net(const FeatureMatrix& features,
                                          std::span<const double> labels, double lambda,
                                          double alpha) {
    check_labels(features, labels, {});
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw Error(ErrorCode::InvalidArgument, "lambda must be finite and >= 0");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
    }
    if (!features.standardization && features.num_cols() > 1) {
        throw Error(ErrorCode::NotStandardized,
                    "elastic net needs standardized features (set standardize=true)");
    }
    const Eigen::MatrixXd& X = features.values;
    const Eigen::VectorXd y = as_vector(labels);
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    const double ybar = y.mean();
    require_both_classes(ybar);
    if (lambda == 0.0) require_full_rank(X, Eigen::VectorXd::Ones(n));

    const double l1 = lambda * alpha;
    const double l2 = lambda * (1.0 - alpha);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    auto objective = [&](const Eigen::VectorXd& b) {
        const double nll = -log_likelihood(X * b, y, ones) / static_cast<double>(n);
        const auto pen = b.tail(d - 1);
        return nll + l1 * pen.cwiseAbs().sum() + 0.5 * l2 * pen.squaredNorm();
    };

    ProbabilityModel model = make_model(features, FitMethod::ElasticNet);
    model.lambda = lambda;
    model.alpha = alpha;
    FitDiagnostics& diag = model.diagnostics;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
    beta(0) = logit(ybar);
    double obj = objective(beta);

    for (int outer = 1; outer <= kEnetMaxOuter; ++outer) {
        const Eigen::VectorXd eta = X * beta;
        const Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
        const Eigen::VectorXd v = (mu.array() * (1.0 - mu.array())).max(1e-10);
        const Eigen::VectorXd wq = v / static_cast<double>(n);
        const Eigen::VectorXd z = eta.array() + (y - mu).array() / v.array();

        // Coordinate descent on 1/2 sum wq (z - Xb)^2 + penalty.
        Eigen::VectorXd b = beta;
        Eigen::VectorXd r = z - X * b;
        Eigen::VectorXd xwx(d);
        for (Eigen::Index c = 0; c < d; ++c) xwx(c) = wq.dot(X.col(c).cwiseAbs2());
        for (int sweep = 0; sweep < kEnetMaxSweeps; ++sweep) {
            double sweep_change = 0.0;
            const double d0 = wq.dot(r) / xwx(0);
            b(0) += d0;
            r.array() -= d0;
            sweep_change = std::abs(d0);
            for (Eigen::Index c = 1; c < d; ++c) {
                const double g = wq.dot(X.col(c).cwiseProduct(r)) + xwx(c) * b(c);
                const double updated = soft_threshold(g, l1) / (xwx(c) + l2);
                const double delta = updated - b(c);
                if (delta != 0.0) {
                    r -= delta * X.col(c);
                    b(c) = updated;
                    sweep_change = std::max(sweep_change, std::abs(delta));
                }
            }
            if (sweep_change < kEnetInnerTolerance) break;
        }

        const Eigen::VectorXd direction = b - beta;
        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd candidate;
        double candidate_obj = obj;
        for (int h = 0; h <= kMaxHalvings; ++h, t *= 0.5) {
            candidate = beta + t * direction;
            candidate_obj = objective(candidate);
            if (candidate_obj <= obj + 1e-13 * (1.0 + std::abs(obj))) {
                accepted = true;
                break;
            }
        }
        diag.iterations = outer;
        const double change = (t * direction).cwiseAbs().maxCoeff();
        if (!accepted) {
            if (direction.cwiseAbs().maxCoeff() < kEnetOuterTolerance) {
                diag.converged = true;
                break;
            }
            throw Error(ErrorCode::NonConvergence,
                        "elastic net step halving failed at outer iteration " +
                            std::to_string(outer));
        }
        beta = candidate;
        obj = candidate_obj;
        diag.max_change = change;
        check_separation(beta, features);
        if (change < kEnetOuterTolerance) {
            diag.converged = true;
            break;
        }
    }
    if (!diag.converged) {
        throw Error(ErrorCode::NonConvergence,
                    "elastic net did not converge in 250 outer iterations (last change " +
                        std::to_string(diag.max_change) + ")");
    }
    const Eigen::VectorXd mu = (X * beta).unaryExpr([](double e) { return expit(e); });
    diag.gradient_norm = (X.transpose() * (y - mu)).norm() / static_cast<double>(n);
    model.coefficients = beta;
    return model;
}

Eigen::VectorXd predict(const ProbabilityModel& model, const FeatureMatrix& features) {
    if (features.num_cols() != model.coefficients.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "model has " + std::to_string(model.coefficients.size()) +
                        " coefficients but features have " +
                        std::to_string(features.num_cols()) + " columns");
    }
    Eigen::VectorXd eta;
    if (model.standardization && !features.standardization) {
        eta = apply_standardization(features, *model.standardization).values * model.coefficients;
    } else {
        if (features.standardization &&
            (!model.standardization || !(*features.standardization == *model.standardization))) {
            throw Error(ErrorCode::DimensionMismatch,
                        "features were standardized with statistics other than the model's");
        }
        eta = features.values * model.coefficients;
    }
    return eta.unaryExpr([](double e) { return expit(e); });
}

std::size_t clip_probabilities(Eigen::Ref<Eigen::VectorXd> probs) {
    std::size_t moved = 0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        if (probs(i) < kProbabilityFloor) {
            probs(i) = kProbabilityFloor;
            ++moved;
        } else if (probs(i) > kProbabilityCeiling) {
            probs(i) = kProbabilityCeiling;
            ++moved;
        }
    }
    return moved;
}

// ---------------------------------------------------------------------------
// Treatment model

namespace {

std::vector<std::size_t> trial_rows(const StudyDataset& ds) {
    std::vector<std::size_t> rows;
    for (std::size_t j = 0; j < ds.size(); ++j) {
        if (ds.arm_index_of(j) >= 0) rows.push_back(j);
    }
    return rows;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores) {
    Eigen::MatrixXd out(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const double top = scores.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (scores.row(i).array() - top).exp();
        out.row(i) = e / e.sum();
    }
    return out;
}

// Newton ascent on the multinomial log-likelihood with the reference arm's
// scores fixed at zero.
void fit_multinomial(TreatmentModel& model, const Eigen::MatrixXd& X,
                     const std::vector<int>& arm_of_row) {
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    const auto K = static_cast<Eigen::Index>(model.arms.size());
    const Eigen::Index free = K - 1;
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, K);
    for (Eigen::Index i = 0; i < n; ++i) Y(i, arm_of_row[static_cast<std::size_t>(i)]) = 1.0;

    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(d, K);
    const Eigen::RowVectorXd shares = Y.colwise().mean();
    for (Eigen::Index k = 1; k < K; ++k) B(0, k) = std::log(shares(k) / shares(0));

    auto loglik = [&](const Eigen::MatrixXd& coef) {
        const Eigen::MatrixXd S = X * coef;
        KahanSum acc;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double top = S.row(i).maxCoeff();
            const double lse = top + std::log((S.row(i).array() - top).exp().sum());
            acc.add(S.row(i).dot(Y.row(i)) - lse);
        }
        return acc.value() / static_cast<double>(n);
    };

    double ll = loglik(B);
    FitDiagnostics& diag = model.diagnostics;
    for (int iter = 1; iter <= kMultinomialMaxIterations; ++iter) {
        const Eigen::MatrixXd P = softmax_rows(X * B);
        Eigen::VectorXd grad(d * free);
        for (Eigen::Index k = 0; k < free; ++k) {
            grad.segment(k * d, d) =
                X.transpose() * (Y.col(k + 1) - P.col(k + 1)) / static_cast<double>(n);
        }
        diag.iterations = iter;
        diag.gradient_norm = grad.norm();
        if (diag.gradient_norm < kMultinomialTolerance) {
            diag.converged = true;
            break;
        }
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d * free, d * free);
        for (Eigen::Index k = 0; k < free; ++k) {
            for (Eigen::Index l = 0; l < free; ++l) {
                const Eigen::VectorXd wkl =
                    P.col(k + 1).array() * ((k == l ? 1.0 : 0.0) - P.col(l + 1).array());
                H.block(k * d, l * d, d, d) =
                    X.transpose() * wkl.asDiagonal() * X / static_cast<double>(n);
            }
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw Error(ErrorCode::SingularSystem, "multinomial treatment model is singular");
        }
        const Eigen::VectorXd step = ldlt.solve(grad);
        double t = 1.0;
        bool accepted = false;
        Eigen::MatrixXd candidate;
        double candidate_ll = ll;
        for (int h = 0; h <= kMaxHalvings; ++h, t *= 0.5) {
            candidate = B;
            for (Eigen::Index k = 0; k < free; ++k) {
                candidate.col(k + 1) += t * step.segment(k * d, d);
            }
            candidate_ll = loglik(candidate);
            if (candidate_ll >= ll - 1e-14) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            throw Error(ErrorCode::NonConvergence,
                        "multinomial treatment model failed to improve at iteration " +
                            std::to_string(iter));
        }
        diag.max_change = (t * step).cwiseAbs().maxCoeff();
        B = candidate;
        ll = candidate_ll;
        if (B.cwiseAbs().maxCoeff() > kSeparationCap) {
            throw Error(ErrorCode::Separation,
                        "treatment model coefficients exceed the separation cap");
        }
    }
    if (!diag.converged) {
        throw Error(ErrorCode::NonConvergence, "multinomial treatment model did not converge");
    }
    model.coefficients = B;
}

}  // namespace

TreatmentModel known_treatment_model(const std::vector<std::string>& arms,
                                     const std::map<std::string, double>& probs) {
    for (const auto& [label, _] : probs) {
        if (std::find(arms.begin(), arms.end(), label) == arms.end()) {
            throw Error(ErrorCode::EmptyArm,
                        "known probability given for arm '" + label + "' absent from the data");
        }
    }
    TreatmentModel model;
    model.mode = TreatmentMode::Known;
    model.arms = arms;
    model.constant.resize(static_cast<Eigen::Index>(arms.size()));
    for (const std::string& arm : arms) {
        if (!probs.count(arm)) {
            throw Error(ErrorCode::ProbabilitiesDontSumToOne,
                        "no known probability given for arm '" + arm + "'");
        }
    }
    for (std::size_t k = 0; k < arms.size(); ++k) {
        auto it = probs.find(arms[k]);
        if (!(it->second > 0.0 && it->second < 1.0) && arms.size() > 1) {
            throw Error(ErrorCode::InvalidArgument,
                        "known probability for arm '" + arms[k] + "' must lie in (0, 1)");
        }
        model.constant(static_cast<Eigen::Index>(k)) = it->second;
    }
    if (std::abs(model.constant.sum() - 1.0) > 1e-9) {
        throw Error(ErrorCode::ProbabilitiesDontSumToOne,
                    "known treatment probabilities sum to " + std::to_string(model.constant.sum()));
    }
    model.diagnostics.converged = true;
    return model;
}

TreatmentModel fit_treatment_model(const StudyDataset& ds, TreatmentMode mode,
                                   const FeatureMatrix* features,
                                   const std::map<std::string, double>* known) {
    if (mode == TreatmentMode::Known) {
        if (!known) throw Error(ErrorCode::InvalidArgument, "known mode needs probabilities");
        return known_treatment_model(ds.arms(), *known);
    }
    const std::vector<std::size_t> rows = trial_rows(ds);
    TreatmentModel model;
    model.mode = mode;
    model.arms = ds.arms();
    const auto K = static_cast<Eigen::Index>(ds.arms().size());

    if (mode == TreatmentMode::Empirical) {
        model.constant = Eigen::VectorXd::Zero(K);
        for (std::size_t j : rows) model.constant(ds.arm_index_of(j)) += 1.0;
        model.constant /= static_cast<double>(rows.size());
        model.diagnostics.converged = true;
        return model;
    }

    std::vector<int> arm_of_row;
    for (std::size_t j : rows) arm_of_row.push_back(ds.arm_index_of(j));
    Eigen::MatrixXd X;
    if (features) {
        if (features->num_rows() != static_cast<Eigen::Index>(ds.size())) {
            throw Error(ErrorCode::DimensionMismatch,
                        "treatment features need one row per cluster");
        }
        X = select_rows(*features, rows).values;
        model.feature_spec = features->spec;
        model.standardization = features->standardization;
        require_full_rank(X, Eigen::VectorXd::Ones(X.rows()));
    } else {
        X = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(rows.size()), 1);
    }
    if (K == 1) {
        model.coefficients = Eigen::MatrixXd::Zero(X.cols(), 1);
        model.diagnostics.converged = true;
        return model;
    }
    fit_multinomial(model, X, arm_of_row);
    return model;
}

Eigen::MatrixXd TreatmentModel::probabilities(const StudyDataset& ds) const {
    const auto m = static_cast<Eigen::Index>(ds.size());
    const auto K = static_cast<Eigen::Index>(arms.size());
    Eigen::MatrixXd out(m, K);
    switch (mode) {
        case TreatmentMode::Known:
            if (!per_cluster.empty()) {
                for (Eigen::Index j = 0; j < m; ++j) {
                    const std::string& id = ds.cluster(static_cast<std::size_t>(j)).cluster_id;
                    auto it = per_cluster.find(id);
                    if (it == per_cluster.end()) {
                        // Bootstrap copies are named "<id>#<draw>".
                        it = per_cluster.find(id.substr(0, id.rfind('#')));
                    }
                    if (it == per_cluster.end() || it->second.size() != K) {
                        throw Error(ErrorCode::InvalidArgument,
                                    "no known treatment probabilities for cluster '" + id + "'");
                    }
                    out.row(j) = it->second.transpose();
                }
                return out;
            }
            [[fallthrough]];
        case TreatmentMode::Empirical:
            out.rowwise() = constant.transpose();
            return out;
        case TreatmentMode::MultinomialLogit: {
            Eigen::MatrixXd X;
            if (feature_spec) {
                X = standardization ? cluster_features(ds, *feature_spec, *standardization).values
                                    : cluster_features(ds, *feature_spec).values;
            } else {
                X = Eigen::MatrixXd::Ones(m, 1);
            }
            if (X.cols() != coefficients.rows()) {
                throw Error(ErrorCode::DimensionMismatch, "treatment model feature mismatch");
            }
            return softmax_rows(X * coefficients);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Nuisance fitting

ProbabilityModel fit_working_model(const FeatureMatrix& features, std::span<const double> labels,
                                   const WorkingModelConfig& config) {
    if (config.method == FitMethod::ElasticNet) {
        return fit_logistic_elastic_net(features, labels, config.lambda, config.alpha);
    }
    return fit_logistic_mle(features, labels);
}

namespace {

// Standardizes with statistics of `rows` when requested and returns the
// training subset.
FeatureMatrix training_matrix(FeatureMatrix raw, std::span<const std::size_t> rows) {
    if (raw.spec.standardize) {
        const Standardization stats = compute_standardization(raw.values, rows);
        raw = apply_standardization(std::move(raw), stats);
    }
    return select_rows(raw, rows);
}

}  // namespace

FittedNuisance fit_nuisance(const StudyDataset& ds, const NuisanceConfig& config) {
    FittedNuisance fitted;
    fitted.config = config;
    const auto m = ds.size();

    std::vector<std::size_t> per_arm(ds.arms().size(), 0);
    for (std::size_t j = 0; j < m; ++j) {
        if (ds.arm_index_of(j) >= 0) ++per_arm[static_cast<std::size_t>(ds.arm_index_of(j))];
    }
    for (std::size_t k = 0; k < per_arm.size(); ++k) {
        if (per_arm[k] < 2) {
            throw Error(ErrorCode::TooFewTrialClusters,
                        "arm '" + ds.arms()[k] + "' has " + std::to_string(per_arm[k]) +
                            " randomized clusters; at least 2 are needed");
        }
    }

    {
        std::vector<std::size_t> all(m);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::vector<double> s(m);
        for (std::size_t j = 0; j < m; ++j) s[j] = ds.cluster(j).participates ? 1.0 : 0.0;
        FeatureMatrix train = training_matrix(raw_cluster_features(ds, config.participation.features), all);
        try {
            fitted.participation = fit_working_model(train, s, config.participation);
        } catch (const Error& e) {
            throw Error(e.code(), std::string("participation model: ") + e.what());
        }
    }

    if (config.treatment.mode == TreatmentMode::MultinomialLogit && config.treatment.features) {
        const FeatureMatrix fm = cluster_features(ds, *config.treatment.features);
        fitted.treatment = fit_treatment_model(ds, config.treatment.mode, &fm, &config.treatment.known);
    } else {
        fitted.treatment = fit_treatment_model(ds, config.treatment.mode, nullptr, &config.treatment.known);
    }

    const FeatureMatrix raw = raw_individual_features(ds, config.outcome.features);
    for (std::size_t k = 0; k < ds.arms().size(); ++k) {
        std::vector<std::size_t> rows;
        std::vector<double> labels;
        for (std::size_t r = 0; r < raw.rows.size(); ++r) {
            const std::size_t j = raw.rows[r].cluster;
            if (ds.arm_index_of(j) == static_cast<int>(k)) {
                rows.push_back(r);
                labels.push_back((*ds.cluster(j).y)(raw.rows[r].individual));
            }
        }
        const FeatureMatrix train = training_matrix(raw, rows);
        try {
            fitted.outcome_by_arm.emplace(ds.arms()[k], fit_working_model(train, labels, config.outcome));
        } catch (const Error& e) {
            throw Error(e.code(), "outcome model for arm '" + ds.arms()[k] + "': " + e.what());
        }
    }
    return fitted;
}

}  // namespace clusterdr
