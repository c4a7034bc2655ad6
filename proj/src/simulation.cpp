#include "clusterdr/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "clusterdr/error.hpp"
#include "clusterdr/inference.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/rng.hpp"
#include "internal/parallel.hpp"

namespace clusterdr {

namespace {

// Covariates, random effect and participation draw of one cluster. The
// draw order is fixed so the same stream yields the same cluster in the
// dataset generator and in the oracle.
struct LatentCluster {
    Eigen::VectorXd x;
    Eigen::MatrixXd w;
    Eigen::VectorXd w_mean;
    double u = 0.0;
    bool participates = false;
};

LatentCluster draw_latent(const DgpConfig& cfg, RandomStream& rs) {
    LatentCluster c;
    const auto n = static_cast<Eigen::Index>(rs.uniform_int(cfg.n_min, cfg.n_max));
    c.x.resize(cfg.q);
    for (int k = 0; k < cfg.q; ++k) c.x(k) = rs.normal();
    c.w.resize(n, cfg.p);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int col = 0; col < cfg.p; ++col) {
            c.w(i, col) = cfg.rho * c.x(col % cfg.q) + rs.normal();
        }
    }
    c.w_mean = c.w.colwise().mean().transpose();
    c.u = cfg.tau * rs.normal();
    const double eta = cfg.alpha(0) + cfg.alpha.segment(1, cfg.q).dot(c.x) +
                       cfg.alpha.segment(1 + cfg.q, cfg.p).dot(c.w_mean);
    c.participates = rs.uniform() < expit(eta);
    return c;
}

double outcome_eta(const DgpConfig& cfg, std::size_t arm, const LatentCluster& c, Eigen::Index i) {
    const Eigen::VectorXd& b = cfg.beta[arm];
    return b(0) + b.segment(1, cfg.q).dot(c.x) + b.segment(1 + cfg.q, cfg.p).dot(c.w.row(i)) +
           b.segment(1 + cfg.q + cfg.p, cfg.p).dot(c.w_mean) + c.u;
}

std::string cluster_name(std::size_t j, std::size_t m) {
    std::string digits = std::to_string(j);
    const std::size_t width = std::max<std::size_t>(4, std::to_string(m - 1).size());
    return "c" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

struct Moments {
    double mean = 0.0;
    double sd = 0.0;  // divisor n - 1
};

Moments moments(const std::vector<double>& v) {
    Moments out;
    if (v.empty()) return out;
    KahanSum s;
    for (double x : v) s.add(x);
    out.mean = s.value() / static_cast<double>(v.size());
    if (v.size() < 2) return out;
    KahanSum ss;
    for (double x : v) ss.add((x - out.mean) * (x - out.mean));
    out.sd = std::sqrt(ss.value() / static_cast<double>(v.size() - 1));
    return out;
}

}  // namespace

void validate_dgp(const DgpConfig& cfg) {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
    if (cfg.m < 2) fail("m must be at least 2");
    if (cfg.n_min < 1 || cfg.n_max < cfg.n_min) fail("cluster sizes need 1 <= n_min <= n_max");
    if (cfg.q < 1 || cfg.p < 1) fail("q and p must be at least 1");
    if (cfg.arms.empty() || cfg.arms.size() != cfg.arm_probabilities.size()) {
        fail("arms and arm_probabilities must be non-empty and of equal length");
    }
    double total = 0.0;
    for (double pi : cfg.arm_probabilities) {
        if (!(pi > 0.0 && pi <= 1.0)) fail("arm probabilities must lie in (0, 1]");
        total += pi;
    }
    if (std::abs(total - 1.0) > 1e-9) fail("arm probabilities must sum to 1");
    if (!(cfg.tau >= 0.0) || !std::isfinite(cfg.tau)) fail("tau must be finite and >= 0");
    if (!std::isfinite(cfg.rho)) fail("rho must be finite");
    if (cfg.alpha.size() != 1 + cfg.q + cfg.p) {
        fail("alpha needs 1 + q + p = " + std::to_string(1 + cfg.q + cfg.p) + " entries");
    }
    if (cfg.beta.size() != cfg.arms.size()) fail("beta needs one vector per arm");
    for (const auto& b : cfg.beta) {
        if (b.size() != 1 + cfg.q + 2 * cfg.p) {
            fail("each beta needs 1 + q + 2p = " + std::to_string(1 + cfg.q + 2 * cfg.p) +
                 " entries");
        }
    }
}

std::vector<ClusterRecord> generate_clusters(const DgpConfig& cfg, std::uint64_t replication) {
    validate_dgp(cfg);
    const auto m = static_cast<std::size_t>(cfg.m);
    std::vector<ClusterRecord> out(m);
    for (std::size_t j = 0; j < m; ++j) {
        RandomStream rs(cfg.seed, stream_id(StreamDomain::Dataset, replication, j));
        LatentCluster c = draw_latent(cfg, rs);

        const double ua = rs.uniform();
        std::size_t arm = cfg.arms.size() - 1;
        double cum = 0.0;
        for (std::size_t k = 0; k < cfg.arms.size(); ++k) {
            cum += cfg.arm_probabilities[k];
            if (ua < cum) {
                arm = k;
                break;
            }
        }

        ClusterRecord& rec = out[j];
        rec.cluster_id = cluster_name(j, m);
        rec.participates = c.participates;
        rec.x = c.x;
        if (c.participates) {
            rec.arm = cfg.arms[arm];
            Eigen::VectorXd y(c.w.rows());
            for (Eigen::Index i = 0; i < c.w.rows(); ++i) {
                y(i) = rs.uniform() < expit(outcome_eta(cfg, arm, c, i)) ? 1.0 : 0.0;
            }
            rec.y = std::move(y);
        }
        rec.w = std::move(c.w);
    }
    return out;
}

StudyDataset generate_dataset(const DgpConfig& cfg, std::uint64_t replication) {
    return validate_dataset(generate_clusters(cfg, replication));
}

OracleTruth oracle_truth(const DgpConfig& cfg, std::int64_t draws, int threads) {
    validate_dgp(cfg);
    if (draws < 100000) {
        throw Error(ErrorCode::InvalidArgument, "the oracle needs at least 1e5 draws");
    }
    const std::size_t K = cfg.arms.size();
    const auto n = static_cast<std::size_t>(draws);
    std::vector<double> mu(n * K);
    std::vector<unsigned char> s0(n);

    constexpr std::size_t kChunk = 4096;
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    detail::parallel_for(chunks, threads, [&](std::size_t chunk) {
        const std::size_t end = std::min(n, (chunk + 1) * kChunk);
        for (std::size_t d = chunk * kChunk; d < end; ++d) {
            RandomStream rs(cfg.seed, stream_id(StreamDomain::Oracle, d));
            const LatentCluster c = draw_latent(cfg, rs);
            s0[d] = c.participates ? 0 : 1;
            for (std::size_t k = 0; k < K; ++k) {
                KahanSum acc;
                for (Eigen::Index i = 0; i < c.w.rows(); ++i) acc.add(expit(outcome_eta(cfg, k, c, i)));
                mu[d * K + k] = acc.value() / static_cast<double>(c.w.rows());
            }
        }
    });

    OracleTruth truth;
    truth.arms = cfg.arms;
    truth.draws = draws;
    for (unsigned char flag : s0) truth.nonrandomized_draws += flag;
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> all;
        std::vector<double> target;
        all.reserve(n);
        for (std::size_t d = 0; d < n; ++d) {
            all.push_back(mu[d * K + k]);
            if (s0[d]) target.push_back(mu[d * K + k]);
        }
        const Moments a = moments(all);
        truth.psi.push_back(a.mean);
        truth.psi_se.push_back(a.sd / std::sqrt(static_cast<double>(all.size())));
        const Moments t = moments(target);
        truth.phi.push_back(target.empty() ? std::nan("") : t.mean);
        truth.phi_se.push_back(target.size() < 2 ? std::nan("")
                                                 : t.sd / std::sqrt(static_cast<double>(target.size())));
    }
    return truth;
}

std::string_view scenario_key(Scenario s) {
    switch (s) {
        case Scenario::BothCorrect: return "both_correct";
        case Scenario::OutcomeMisspecified: return "outcome_misspecified";
        case Scenario::ParticipationMisspecified: return "participation_misspecified";
        case Scenario::BothMisspecified: return "both_misspecified";
    }
    return "unknown";
}

Scenario scenario_from_key(std::string_view key) {
    for (auto s : {Scenario::BothCorrect, Scenario::OutcomeMisspecified,
                   Scenario::ParticipationMisspecified, Scenario::BothMisspecified}) {
        if (scenario_key(s) == key) return s;
    }
    throw Error(ErrorCode::ConfigError, "unknown scenario '" + std::string(key) + "'");
}

NuisanceConfig scenario_nuisance_config(const DgpConfig& cfg, Scenario s, FitMethod method,
                                        double lambda, double alpha) {
    const bool outcome_ok = s == Scenario::BothCorrect || s == Scenario::ParticipationMisspecified;
    const bool participation_ok = s == Scenario::BothCorrect || s == Scenario::OutcomeMisspecified;
    const bool standardize = method == FitMethod::ElasticNet;

    NuisanceConfig config;
    config.participation.method = method;
    config.participation.lambda = lambda;
    config.participation.alpha = alpha;
    config.participation.features = FeatureSpec::cluster_level(cfg.p, participation_ok, standardize);

    config.outcome = config.participation;
    config.outcome.features = FeatureSpec::individual_level(true, standardize);
    if (outcome_ok) {
        config.outcome.features.w_aggregates.assign(static_cast<std::size_t>(cfg.p), Aggregate::Mean);
    }

    config.treatment.mode = TreatmentMode::Known;
    for (std::size_t k = 0; k < cfg.arms.size(); ++k) {
        config.treatment.known[cfg.arms[k]] = cfg.arm_probabilities[k];
    }
    return config;
}

std::vector<ReplicationEstimate> estimate_replication(const StudyDataset& ds,
                                                      const NuisanceConfig& config,
                                                      const std::vector<EstimatorKind>& estimators,
                                                      double level) {
    const FittedNuisance fitted = fit_nuisance(ds, config);
    const NuisanceEstimates ne = compute_nuisance_estimates(ds, fitted);
    std::vector<ReplicationEstimate> out;
    for (EstimatorKind kind : estimators) {
        for (const std::string& arm : ds.arms()) {
            PointEstimate est;
            std::optional<IntervalEstimate> ci;
            switch (kind) {
                case EstimatorKind::Aipw: est = aipw_psi(ne, arm); break;
                case EstimatorKind::Ipw: est = ipw_psi(ne, arm, false); break;
                case EstimatorKind::Hajek: est = ipw_psi(ne, arm, true); break;
                case EstimatorKind::IpwAggregated:
                    est = ipw_psi_aggregated(ds, fitted.participation, fitted.treatment, arm);
                    break;
                case EstimatorKind::GFormula: est = gformula_psi(ne, arm); break;
                case EstimatorKind::TrialOnly:
                    est = trial_only_estimate(ds, arm);
                    ci = cluster_robust_trial_interval(ds, arm, level);
                    break;
                case EstimatorKind::TrialOnlyClusterWeighted:
                    est = trial_only_estimate(ds, arm, TrialPooling::Cluster);
                    break;
                case EstimatorKind::Transport: est = transport_phi(ne, arm); break;
            }
            if (!ci) ci = influence_curve_interval(est, level);
            out.push_back({kind, arm, est.value, ci->se, ci->lower, ci->upper});
        }
    }
    return out;
}

ScenarioResult run_scenario(const DgpConfig& cfg, const OracleTruth& truth,
                            const ScenarioOptions& options) {
    validate_dgp(cfg);
    if (options.replications < 1) {
        throw Error(ErrorCode::InvalidArgument, "at least one replication is needed");
    }
    if (truth.arms != cfg.arms) {
        throw Error(ErrorCode::InvalidArgument, "oracle truth was computed for other arms");
    }
    DgpConfig run_cfg = cfg;
    run_cfg.seed = options.seed;
    const NuisanceConfig config = scenario_nuisance_config(cfg, options.scenario, options.method,
                                                           options.lambda, options.alpha);

    const auto R = static_cast<std::size_t>(options.replications);
    std::vector<std::optional<std::vector<ReplicationEstimate>>> results(R);
    std::vector<std::string> errors(R);
    detail::parallel_for(R, options.threads, [&](std::size_t r) {
        try {
            const StudyDataset ds = generate_dataset(run_cfg, r);
            // A replication that loses an arm cannot be compared arm by arm.
            if (ds.arms().size() != cfg.arms.size()) {
                throw Error(ErrorCode::EmptyArm, "an arm has no randomized clusters");
            }
            results[r] = estimate_replication(ds, config, options.estimators, options.level);
        } catch (const Error& e) {
            errors[r] = "replication " + std::to_string(r) + ": " +
                        std::string(code_name(e.code())) + ": " + e.what();
        }
    });

    ScenarioResult out;
    out.scenario = options.scenario;
    out.replications_requested = options.replications;
    out.exploratory = options.replications < 200;
    for (std::size_t r = 0; r < R; ++r) {
        if (!results[r]) out.failure_messages.push_back(errors[r]);
    }
    out.replications_failed = static_cast<int>(out.failure_messages.size());
    out.replications_used = options.replications - out.replications_failed;
    if (static_cast<double>(out.replications_failed) > 0.02 * static_cast<double>(R) ||
        out.replications_used == 0) {
        throw Error(ErrorCode::TooManyFailedReplicates,
                    std::to_string(out.replications_failed) + " of " + std::to_string(R) +
                        " replications failed; first: " + out.failure_messages.front());
    }

    // Rows follow the per-replication layout; arms are in catalog order,
    // which may differ between replications, so rows are matched by label.
    const std::size_t rows = options.estimators.size() * cfg.arms.size();
    for (std::size_t row = 0; row < rows; ++row) {
        EstimatorSummary summary;
        summary.estimator = options.estimators[row / cfg.arms.size()];
        summary.arm = cfg.arms[row % cfg.arms.size()];
        const std::size_t k = row % cfg.arms.size();
        summary.truth = summary.estimator == EstimatorKind::Transport ? truth.phi[k] : truth.psi[k];

        std::vector<double> values;
        std::vector<double> ses;
        std::size_t covered = 0;
        for (std::size_t r = 0; r < R; ++r) {
            if (!results[r]) continue;
            for (const ReplicationEstimate& e : *results[r]) {
                if (e.estimator != summary.estimator || e.arm != summary.arm) continue;
                values.push_back(e.value);
                ses.push_back(e.se);
                if (e.lower <= summary.truth && summary.truth <= e.upper) ++covered;
            }
        }
        const Moments v = moments(values);
        summary.replications = static_cast<int>(values.size());
        summary.mean_estimate = v.mean;
        summary.mean_bias = v.mean - summary.truth;
        summary.empirical_se = v.sd;
        summary.mean_estimated_se = moments(ses).mean;
        summary.coverage = static_cast<double>(covered) / static_cast<double>(values.size());
        summary.mc_se = v.sd / std::sqrt(static_cast<double>(values.size()));
        out.estimators.push_back(std::move(summary));
    }
    for (EstimatorSummary& s : out.estimators) {
        for (const EstimatorSummary& ref : out.estimators) {
            if (ref.estimator == EstimatorKind::Aipw && ref.arm == s.arm && s.empirical_se > 0.0) {
                s.relative_efficiency =
                    (ref.empirical_se * ref.empirical_se) / (s.empirical_se * s.empirical_se);
            }
        }
    }
    return out;
}

}  // namespace clusterdr
