#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "clusterdr/cli.hpp"
#include "clusterdr/error.hpp"

namespace clusterdr {

namespace {

std::string model_tag(const WorkingModelConfig& cfg) {
    return cfg.method == FitMethod::Mle ? "LR (MLE)" : "LR (elastic net)";
}

bool uses_nuisance(EstimatorKind kind) {
    return kind != EstimatorKind::TrialOnly && kind != EstimatorKind::TrialOnlyClusterWeighted;
}

std::string row_tag(EstimatorKind kind, const NuisanceConfig& cfg, int folds) {
    std::string tag;
    switch (kind) {
        case EstimatorKind::TrialOnly: return "LPM (OLS)";
        case EstimatorKind::TrialOnlyClusterWeighted: return "cluster means";
        case EstimatorKind::IpwAggregated: return model_tag(cfg.participation);
        case EstimatorKind::Ipw:
        case EstimatorKind::Hajek: tag = model_tag(cfg.participation); break;
        case EstimatorKind::GFormula: tag = model_tag(cfg.outcome); break;
        case EstimatorKind::Aipw:
        case EstimatorKind::Transport: {
            const std::string p = model_tag(cfg.participation);
            const std::string g = model_tag(cfg.outcome);
            tag = p == g ? p : "p " + p + ", g " + g;
            break;
        }
    }
    if (folds >= 2) tag += ", cross-fit";
    return tag;
}

struct Fits {
    FittedNuisance fitted;
    NuisanceEstimates ne;
};

Fits fit_all(const StudyDataset& ds, const NuisanceConfig& cfg, int folds, std::uint64_t seed) {
    Fits f{fit_nuisance(ds, cfg), {}};
    f.ne = folds >= 2 ? crossfit_nuisance_estimates(ds, cfg, folds, seed)
                      : compute_nuisance_estimates(ds, f.fitted);
    return f;
}

PointEstimate point_estimate(EstimatorKind kind, const StudyDataset& ds, const Fits* fits,
                             const std::string& arm) {
    switch (kind) {
        case EstimatorKind::Aipw: return aipw_psi(fits->ne, arm);
        case EstimatorKind::Ipw: return ipw_psi(fits->ne, arm, false);
        case EstimatorKind::Hajek: return ipw_psi(fits->ne, arm, true);
        case EstimatorKind::IpwAggregated:
            return ipw_psi_aggregated(ds, fits->fitted.participation, fits->fitted.treatment, arm);
        case EstimatorKind::GFormula: return gformula_psi(fits->ne, arm);
        case EstimatorKind::TrialOnly: return trial_only_estimate(ds, arm);
        case EstimatorKind::TrialOnlyClusterWeighted:
            return trial_only_estimate(ds, arm, TrialPooling::Cluster);
        case EstimatorKind::Transport: return transport_phi(fits->ne, arm);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown estimator");
}

IntervalMethod interval_method(const RunConfig& cfg, EstimatorKind kind) {
    switch (cfg.inference) {
        case InferenceChoice::Auto:
            return kind == EstimatorKind::TrialOnly ? IntervalMethod::ClusterRobustOls
                                                    : IntervalMethod::InfluenceCurve;
        case InferenceChoice::InfluenceCurve: return IntervalMethod::InfluenceCurve;
        case InferenceChoice::ClusterBootstrap: return IntervalMethod::ClusterBootstrap;
        case InferenceChoice::ClusterRobustOls: return IntervalMethod::ClusterRobustOls;
    }
    return IntervalMethod::InfluenceCurve;
}

ModelDiagnostics describe(const std::string& name, const ProbabilityModel& model) {
    ModelDiagnostics d;
    d.name = name;
    d.method = model.method == FitMethod::Mle ? "mle" : "elastic_net";
    d.feature_names = model.feature_names;
    d.coefficients.assign(model.coefficients.data(),
                          model.coefficients.data() + model.coefficients.size());
    d.fit = model.diagnostics;
    return d;
}

void append_unique(std::vector<std::string>& into, const std::vector<std::string>& from) {
    for (const auto& s : from) {
        if (std::find(into.begin(), into.end(), s) == into.end()) into.push_back(s);
    }
}

StudyDataset load_data(const RunConfig& cfg, const std::vector<std::string>& required) {
    if (cfg.dgp) {
        DgpConfig dgp = *cfg.dgp;
        dgp.seed = cfg.seed;
        StudyDataset ds = generate_dataset(dgp);
        for (const auto& arm : required) ds.require_arm(arm);
        return ds;
    }
    return load_csv(*cfg.clusters_path, *cfg.individuals_path, required);
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

namespace {

void resolve_aggregates(FeatureSpec& spec, Eigen::Index p) {
    if (!spec.w_aggregates.empty()) {
        spec.w_aggregates.assign(static_cast<std::size_t>(p), Aggregate::Mean);
    }
}

}  // namespace

NuisanceConfig resolve_nuisance_config(NuisanceConfig cfg, Eigen::Index p) {
    resolve_aggregates(cfg.participation.features, p);
    resolve_aggregates(cfg.outcome.features, p);
    if (cfg.treatment.features) resolve_aggregates(*cfg.treatment.features, p);
    return cfg;
}

EstimateReport run_estimation(const RunConfig& config) {
    const std::vector<EstimatorKind> estimators =
        config.estimators.empty() ? std::vector<EstimatorKind>{EstimatorKind::Aipw} : config.estimators;
    for (EstimatorKind kind : estimators) {
        if (interval_method(config, kind) == IntervalMethod::ClusterRobustOls &&
            kind != EstimatorKind::TrialOnly) {
            throw Error(ErrorCode::ConfigError, "cluster_robust_ols inference applies only to trial_only");
        }
    }

    std::vector<std::string> required = config.arms;
    for (const auto& [a, b] : config.contrasts) append_unique(required, {a, b});
    const StudyDataset ds = load_data(config, required);
    const NuisanceConfig nuisance = resolve_nuisance_config(config.nuisance, ds.p());
    const std::vector<std::string> arms = config.arms.empty() ? ds.arms() : config.arms;

    EstimateReport report;
    report.summary = dataset_summary(ds);
    report.arms = arms;
    report.level = config.level;
    report.seed = config.seed;
    report.crossfit_folds = config.crossfit_folds >= 2 ? config.crossfit_folds : 0;
    report.warnings = ds.warnings();
    const int folds = report.crossfit_folds;

    const bool need_fits = std::any_of(estimators.begin(), estimators.end(), uses_nuisance);
    std::optional<Fits> fits;
    if (need_fits) {
        fits = fit_all(ds, nuisance, folds, config.seed);
        report.clipped_participation = fits->ne.clipped_participation;
        report.clipped_treatment = fits->ne.clipped_treatment;
        report.models.push_back(describe("participation", fits->fitted.participation));
        for (const std::string& arm : ds.arms()) {
            report.models.push_back(describe("outcome[" + arm + "]", fits->fitted.outcome_by_arm.at(arm)));
        }
        const TreatmentModel& t = fits->fitted.treatment;
        ModelDiagnostics td;
        td.name = "treatment";
        td.method = t.mode == TreatmentMode::Known       ? "known"
                    : t.mode == TreatmentMode::Empirical ? "empirical"
                                                         : "multinomial_logit";
        if (t.mode == TreatmentMode::MultinomialLogit) {
            td.coefficients.assign(t.coefficients.data(), t.coefficients.data() + t.coefficients.size());
        } else {
            td.coefficients.assign(t.constant.data(), t.constant.data() + t.constant.size());
        }
        td.feature_names = t.arms;
        td.fit = t.diagnostics;
        report.models.push_back(std::move(td));
        if (fits->ne.clipped_participation + fits->ne.clipped_treatment > 0) {
            report.warnings.push_back(std::to_string(fits->ne.clipped_participation) +
                                      " participation and " +
                                      std::to_string(fits->ne.clipped_treatment) +
                                      " treatment probabilities were clipped to [1e-6, 1 - 1e-6]");
        }
    }

    // Estimate on an arbitrary dataset, refitting nuisances (bootstrap).
    auto refit_value = [&](EstimatorKind kind, const std::string& arm,
                           const std::optional<std::string>& ref) {
        return [=, &nuisance](const StudyDataset& d) {
            std::optional<Fits> f;
            if (uses_nuisance(kind)) f = fit_all(d, nuisance, folds, config.seed);
            const Fits* fp = f ? &*f : nullptr;
            double v = point_estimate(kind, d, fp, arm).value;
            if (ref) v -= point_estimate(kind, d, fp, *ref).value;
            return v;
        };
    };

    const Fits* fp = fits ? &*fits : nullptr;
    for (EstimatorKind kind : estimators) {
        const std::string tag = row_tag(kind, nuisance, folds);
        const IntervalMethod method = interval_method(config, kind);
        std::map<std::string, PointEstimate> by_arm;
        auto estimate_arm = [&](const std::string& arm) -> const PointEstimate& {
            auto it = by_arm.find(arm);
            if (it == by_arm.end()) it = by_arm.emplace(arm, point_estimate(kind, ds, fp, arm)).first;
            return it->second;
        };
        auto add_row = [&](const std::string& arm, const std::optional<std::string>& ref) {
            EstimateRow row;
            row.estimator = kind;
            row.model_tag = tag;
            row.arm = arm;
            row.reference_arm = ref;
            const PointEstimate est = ref ? contrast(estimate_arm(arm), estimate_arm(*ref)) : estimate_arm(arm);
            if (!ref) row.weights = est.weights;
            append_unique(report.warnings, est.warnings);
            switch (method) {
                case IntervalMethod::InfluenceCurve:
                    row.interval = influence_curve_interval(est, config.level);
                    break;
                case IntervalMethod::ClusterRobustOls: {
                    row.interval = cluster_robust_trial_interval(ds, arm, config.level);
                    if (ref) {
                        // Arms occupy disjoint clusters, so the variances add.
                        const IntervalEstimate other = cluster_robust_trial_interval(ds, *ref, config.level);
                        const double z = normal_quantile(0.5 + config.level / 2.0);
                        row.interval.point = est.value;
                        row.interval.se = std::hypot(row.interval.se, other.se);
                        row.interval.lower = est.value - z * row.interval.se;
                        row.interval.upper = est.value + z * row.interval.se;
                    }
                    break;
                }
                case IntervalMethod::ClusterBootstrap: {
                    BootstrapOptions opts;
                    opts.stratified = config.bootstrap_stratified;
                    opts.threads = config.threads;
                    row.interval = cluster_bootstrap_interval(ds, refit_value(kind, arm, ref), config.level,
                                                              config.bootstrap_replicates, config.seed, opts);
                    break;
                }
            }
            report.rows.push_back(std::move(row));
        };
        for (const std::string& arm : arms) add_row(arm, std::nullopt);
        for (const auto& [a, b] : config.contrasts) add_row(a, b);
    }
    return report;
}

SimulationReport run_simulation(const RunConfig& config) {
    if (!config.dgp) throw Error(ErrorCode::ConfigError, "simulate needs a 'dgp' section");
    SimulationReport report;
    report.dgp = *config.dgp;
    report.seed = config.seed;
    report.replications = config.simulation.replications;
    report.exploratory = config.simulation.replications < 200;
    report.truth = oracle_truth(report.dgp, config.simulation.oracle_draws, config.threads);

    ScenarioOptions base;
    if (!config.estimators.empty()) base.estimators = config.estimators;
    base.replications = config.simulation.replications;
    base.seed = config.seed;
    base.level = config.level;
    base.threads = config.threads;
    base.method = config.nuisance.participation.method;
    base.lambda = config.nuisance.participation.lambda;
    base.alpha = config.nuisance.participation.alpha;
    for (Scenario s : config.simulation.scenarios) {
        ScenarioOptions opts = base;
        opts.scenario = s;
        report.scenarios.push_back(run_scenario(report.dgp, report.truth, opts));
        for (const std::string& msg : report.scenarios.back().failure_messages) {
            report.warnings.push_back(std::string(scenario_key(s)) + ": dropped " + msg);
        }
    }
    if (report.exploratory) {
        report.warnings.push_back("exploratory run: fewer than 200 replications");
    }
    return report;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Doubly robust estimators for extending cluster randomized trials to a target population"};
    app.name("clusterdr");
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::string format;
    std::uint64_t seed = 0;
    int threads = 0;
    bool percent = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_path, "Write the report here instead of stdout");
        sub->add_option("--format", format, "table, json or csv")
            ->check(CLI::IsMember({"table", "json", "csv"}));
        sub->add_option("--seed", seed, "Override the config seed");
        sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
        sub->add_flag("--percent", percent, "Show estimates on the percentage scale");
    };
    CLI::App* estimate = app.add_subcommand("estimate", "Fit nuisances and report estimates");
    CLI::App* simulate = app.add_subcommand("simulate", "Oracle truth and simulation scenarios");
    CLI::App* validate = app.add_subcommand("validate", "Load and check the data only");
    CLI::App* summary = app.add_subcommand("summary", "Dataset summary");
    for (CLI::App* sub : {estimate, simulate, validate, summary}) add_common(sub);

    std::vector<std::string> reversed(args.rbegin(), args.rend());  // CLI11 pops from the back
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: UsageError: " << one_line(e.what()) << '\n';
        return 2;
    }

    try {
        CLI::App* used = app.get_subcommands().front();
        RunConfig cfg = load_run_config(config_path);
        if (used->count("--seed") > 0) cfg.seed = seed;
        if (used->count("--threads") > 0) cfg.threads = threads;
        if (!format.empty()) cfg.format = output_format_from_key(format);
        if (percent) cfg.percent = true;
        if (!out_path.empty()) cfg.output_path = out_path;

        std::string text;
        std::vector<std::string> warnings;
        if (estimate->parsed()) {
            const EstimateReport report = run_estimation(cfg);
            warnings = report.warnings;
            switch (cfg.format) {
                case OutputFormat::Table: text = render_table(report, cfg.percent); break;
                case OutputFormat::Json: text = report_to_json(report).dump(2) + "\n"; break;
                case OutputFormat::Csv: text = render_csv(report); break;
            }
        } else if (simulate->parsed()) {
            const SimulationReport report = run_simulation(cfg);
            warnings = report.warnings;
            switch (cfg.format) {
                case OutputFormat::Table: text = render_table(report, cfg.percent); break;
                case OutputFormat::Json: text = report_to_json(report).dump(2) + "\n"; break;
                case OutputFormat::Csv: text = render_csv(report); break;
            }
        } else {
            const StudyDataset ds = load_data(cfg, cfg.arms);
            warnings = ds.warnings();
            const DatasetSummary s = dataset_summary(ds);
            if (validate->parsed()) {
                std::ostringstream os;
                os << "ok: " << s.clusters << " clusters, " << s.trial_clusters << " randomized, "
                   << s.individuals << " individuals, arms";
                for (const auto& a : ds.arms()) os << ' ' << a;
                os << '\n';
                text = cfg.format == OutputFormat::Json ? summary_to_json(s, warnings).dump(2) + "\n" : os.str();
            } else if (cfg.format == OutputFormat::Json) {
                text = summary_to_json(s, warnings).dump(2) + "\n";
            } else {
                std::ostringstream os;
                auto line = [&os](const std::string& label, const auto& value) {
                    os << std::left << std::setw(22) << label << value << '\n';
                };
                line("clusters", s.clusters);
                line("randomized", s.trial_clusters);
                line("individuals", s.individuals);
                line("trial individuals", s.trial_individuals);
                line("trial fraction", s.trial_fraction);
                for (const auto& [arm, n] : s.clusters_per_arm) line("clusters in " + arm, n);
                text = os.str();
            }
        }

        for (const std::string& w : warnings) err << "warning: " << one_line(w) << '\n';
        if (cfg.output_path) {
            std::ofstream file(*cfg.output_path, std::ios::binary);
            if (!file) throw Error(ErrorCode::IoError, "cannot write " + cfg.output_path->string());
            file << text;
            if (!file) throw Error(ErrorCode::IoError, "failed writing " + cfg.output_path->string());
        } else {
            out << text;
        }
        return 0;
    } catch (const Error& e) {
        err << "error: " << code_name(e.code()) << ": " << one_line(e.what()) << '\n';
    } catch (const nlohmann::json::exception& e) {
        err << "error: ConfigError: " << one_line(e.what()) << '\n';
    } catch (const std::exception& e) {
        err << "error: InternalError: " << one_line(e.what()) << '\n';
    }
    return 1;
}

}  // namespace clusterdr
