#include <fstream>
#include <set>

#include "clusterdr/cli.hpp"
#include "clusterdr/error.hpp"

namespace clusterdr {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& where, const std::string& why) {
    throw Error(ErrorCode::ConfigError, where + ": " + why);
}

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) config_error(where, "expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) config_error(where, "unknown key '" + key + "'");
    }
}

template <typename T>
T get_or(const json& obj, const char* key, const std::string& where, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        config_error(where + "." + key, "wrong type");
    }
}

Eigen::VectorXd vector_of(const json& value, const std::string& where) {
    if (!value.is_array()) config_error(where, "expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(value.size()));
    for (std::size_t i = 0; i < value.size(); ++i) {
        if (!value[i].is_number()) config_error(where, "expected an array of numbers");
        v(static_cast<Eigen::Index>(i)) = value[i].get<double>();
    }
    return v;
}

FitMethod method_from(const std::string& key, const std::string& where) {
    if (key == "mle") return FitMethod::Mle;
    if (key == "elastic_net") return FitMethod::ElasticNet;
    config_error(where, "method must be 'mle' or 'elastic_net'");
}

// {"x": bool, "w": bool, "w_mean": bool, "standardize": bool}
FeatureSpec features_from(const json& obj, const std::string& where, bool individual) {
    allow_keys(obj, where, {"x", "w", "w_mean", "standardize"});
    FeatureSpec spec;
    spec.use_x = get_or(obj, "x", where, true);
    spec.include_individual = get_or(obj, "w", where, individual);
    if (spec.include_individual != individual) {
        config_error(where, individual ? "the outcome model always uses individual W"
                                       : "cluster-level models cannot use individual W");
    }
    // One entry stands for "every W column"; expanded once p is known.
    if (get_or(obj, "w_mean", where, !individual)) spec.w_aggregates = {Aggregate::Mean};
    spec.standardize = get_or(obj, "standardize", where, false);
    return spec;
}

WorkingModelConfig working_model_from(const json& obj, const std::string& where, bool individual) {
    allow_keys(obj, where, {"method", "lambda", "alpha", "features"});
    WorkingModelConfig cfg;
    cfg.method = method_from(get_or<std::string>(obj, "method", where, "mle"), where + ".method");
    cfg.lambda = get_or(obj, "lambda", where, 0.0);
    cfg.alpha = get_or(obj, "alpha", where, 1.0);
    if (!(cfg.lambda >= 0.0)) config_error(where + ".lambda", "must be >= 0");
    if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) config_error(where + ".alpha", "must lie in (0, 1]");
    const json features = obj.value("features", json::object());
    cfg.features = features_from(features, where + ".features", individual);
    // Penalized fits need standardized columns unless told otherwise.
    if (cfg.method == FitMethod::ElasticNet && !features.contains("standardize")) {
        cfg.features.standardize = true;
    }
    return cfg;
}

EstimatorKind estimator_from(const json& value, const std::string& where) {
    if (!value.is_string()) config_error(where, "expected an estimator name");
    auto kind = estimator_from_key(value.get<std::string>());
    if (!kind) config_error(where, "unknown estimator '" + value.get<std::string>() + "'");
    return *kind;
}

}  // namespace

OutputFormat output_format_from_key(std::string_view key) {
    if (key == "table") return OutputFormat::Table;
    if (key == "json") return OutputFormat::Json;
    if (key == "csv") return OutputFormat::Csv;
    throw Error(ErrorCode::ConfigError, "format must be table, json or csv");
}

DgpConfig parse_dgp_config(const json& doc) {
    const std::string where = "dgp";
    allow_keys(doc, where, {"m", "n_min", "n_max", "arms", "arm_probabilities", "q", "p", "rho",
                            "alpha", "beta", "tau", "seed"});
    DgpConfig cfg;
    cfg.m = get_or(doc, "m", where, cfg.m);
    cfg.n_min = get_or(doc, "n_min", where, cfg.n_min);
    cfg.n_max = get_or(doc, "n_max", where, cfg.n_max);
    cfg.arms = get_or(doc, "arms", where, cfg.arms);
    cfg.arm_probabilities = get_or(doc, "arm_probabilities", where, cfg.arm_probabilities);
    cfg.q = get_or(doc, "q", where, cfg.q);
    cfg.p = get_or(doc, "p", where, cfg.p);
    cfg.rho = get_or(doc, "rho", where, cfg.rho);
    cfg.tau = get_or(doc, "tau", where, cfg.tau);
    cfg.seed = get_or(doc, "seed", where, cfg.seed);
    if (!doc.contains("alpha")) config_error(where, "alpha is required");
    cfg.alpha = vector_of(doc["alpha"], where + ".alpha");
    if (!doc.contains("beta") || !doc["beta"].is_object()) {
        config_error(where, "beta must map each arm to its coefficients");
    }
    for (const auto& arm : cfg.arms) {
        if (!doc["beta"].contains(arm)) config_error(where + ".beta", "missing arm '" + arm + "'");
        cfg.beta.push_back(vector_of(doc["beta"][arm], where + ".beta." + arm));
    }
    if (doc["beta"].size() != cfg.arms.size()) config_error(where + ".beta", "names an unknown arm");
    try {
        validate_dgp(cfg);
    } catch (const Error& e) {
        config_error(where, e.what());
    }
    return cfg;
}

nlohmann::ordered_json dgp_to_json(const DgpConfig& cfg) {
    nlohmann::ordered_json out;
    out["m"] = cfg.m;
    out["n_min"] = cfg.n_min;
    out["n_max"] = cfg.n_max;
    out["arms"] = cfg.arms;
    out["arm_probabilities"] = cfg.arm_probabilities;
    out["q"] = cfg.q;
    out["p"] = cfg.p;
    out["rho"] = cfg.rho;
    out["alpha"] = std::vector<double>(cfg.alpha.data(), cfg.alpha.data() + cfg.alpha.size());
    nlohmann::ordered_json beta;
    for (std::size_t k = 0; k < cfg.arms.size(); ++k) {
        beta[cfg.arms[k]] =
            std::vector<double>(cfg.beta[k].data(), cfg.beta[k].data() + cfg.beta[k].size());
    }
    out["beta"] = beta;
    out["tau"] = cfg.tau;
    out["seed"] = cfg.seed;
    return out;
}

NuisanceConfig parse_nuisance_config(const json& nuisance) {
    NuisanceConfig cfg;
    allow_keys(nuisance, "nuisance", {"participation", "treatment", "outcome"});
    cfg.participation = working_model_from(nuisance.value("participation", json::object()),
                                           "nuisance.participation", false);
    cfg.outcome = working_model_from(nuisance.value("outcome", json::object()),
                                     "nuisance.outcome", true);
    {
        const json t = nuisance.value("treatment", json::object());
        const std::string where = "nuisance.treatment";
        allow_keys(t, where, {"mode", "probabilities", "features"});
        const std::string mode = get_or<std::string>(t, "mode", where, "empirical");
        if (mode == "known") {
            cfg.treatment.mode = TreatmentMode::Known;
            if (!t.contains("probabilities")) config_error(where, "known mode needs 'probabilities'");
            cfg.treatment.known = get_or<std::map<std::string, double>>(t, "probabilities", where, {});
        } else if (mode == "empirical") {
            cfg.treatment.mode = TreatmentMode::Empirical;
        } else if (mode == "multinomial_logit") {
            cfg.treatment.mode = TreatmentMode::MultinomialLogit;
            if (t.contains("features")) {
                cfg.treatment.features = features_from(t["features"], where + ".features", false);
            }
        } else {
            config_error(where + ".mode", "must be known, empirical or multinomial_logit");
        }
    }
    return cfg;
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
    allow_keys(doc, "config", {"data", "dgp", "nuisance", "estimators", "arms", "contrasts",
                               "inference", "crossfit_folds", "seed", "threads", "output",
                               "simulation"});
    RunConfig cfg;
    if (doc.contains("data") == doc.contains("dgp")) {
        config_error("config", "give exactly one of 'data' and 'dgp'");
    }
    if (doc.contains("data")) {
        const json& d = doc["data"];
        allow_keys(d, "data", {"clusters", "individuals"});
        if (!d.contains("clusters") || !d.contains("individuals")) {
            config_error("data", "both 'clusters' and 'individuals' are required");
        }
        auto resolve = [&](const char* key) {
            std::filesystem::path path = get_or<std::string>(d, key, "data", "");
            return path.is_relative() ? base_dir / path : path;
        };
        cfg.clusters_path = resolve("clusters");
        cfg.individuals_path = resolve("individuals");
    } else {
        cfg.dgp = parse_dgp_config(doc["dgp"]);
    }

    cfg.nuisance = parse_nuisance_config(doc.value("nuisance", json::object()));

    if (doc.contains("estimators")) {
        if (!doc["estimators"].is_array() || doc["estimators"].empty()) {
            config_error("estimators", "expected a non-empty array");
        }
        cfg.estimators.clear();
        for (std::size_t i = 0; i < doc["estimators"].size(); ++i) {
            cfg.estimators.push_back(estimator_from(doc["estimators"][i], "estimators"));
        }
    }
    cfg.arms = get_or(doc, "arms", "config", cfg.arms);
    if (doc.contains("contrasts")) {
        for (const auto& c : doc["contrasts"]) {
            if (!c.is_array() || c.size() != 2 || !c[0].is_string() || !c[1].is_string()) {
                config_error("contrasts", "each contrast is a pair [arm, reference_arm]");
            }
            cfg.contrasts.emplace_back(c[0].get<std::string>(), c[1].get<std::string>());
        }
    }

    {
        const json inf = doc.value("inference", json::object());
        const std::string where = "inference";
        allow_keys(inf, where, {"method", "level", "replicates", "stratified"});
        const std::string method = get_or<std::string>(inf, "method", where, "auto");
        if (method == "auto") cfg.inference = InferenceChoice::Auto;
        else if (method == "influence_curve") cfg.inference = InferenceChoice::InfluenceCurve;
        else if (method == "cluster_bootstrap") cfg.inference = InferenceChoice::ClusterBootstrap;
        else if (method == "cluster_robust_ols") cfg.inference = InferenceChoice::ClusterRobustOls;
        else config_error(where + ".method", "unknown inference method '" + method + "'");
        cfg.level = get_or(inf, "level", where, cfg.level);
        if (!(cfg.level > 0.0 && cfg.level < 1.0)) config_error(where + ".level", "must lie in (0, 1)");
        cfg.bootstrap_replicates = get_or(inf, "replicates", where, cfg.bootstrap_replicates);
        cfg.bootstrap_stratified = get_or(inf, "stratified", where, cfg.bootstrap_stratified);
        if (cfg.inference == InferenceChoice::ClusterBootstrap && cfg.bootstrap_replicates < 200) {
            config_error(where + ".replicates", "the cluster bootstrap needs at least 200");
        }
    }

    cfg.crossfit_folds = get_or(doc, "crossfit_folds", "config", 0);
    if (cfg.crossfit_folds < 0) config_error("crossfit_folds", "must be >= 0");
    cfg.seed = get_or<std::uint64_t>(doc, "seed", "config", cfg.dgp ? cfg.dgp->seed : 1);
    cfg.threads = get_or(doc, "threads", "config", 1);

    {
        const json out = doc.value("output", json::object());
        allow_keys(out, "output", {"path", "format", "percent"});
        if (out.contains("path")) {
            std::filesystem::path path = get_or<std::string>(out, "path", "output", "");
            cfg.output_path = path.is_relative() ? base_dir / path : path;
        }
        cfg.format = output_format_from_key(get_or<std::string>(out, "format", "output", "table"));
        cfg.percent = get_or(out, "percent", "output", false);
    }

    if (doc.contains("simulation")) {
        const json& s = doc["simulation"];
        allow_keys(s, "simulation", {"scenarios", "replications", "oracle_draws"});
        if (s.contains("scenarios")) {
            cfg.simulation.scenarios.clear();
            for (const auto& key : s["scenarios"]) {
                if (!key.is_string()) config_error("simulation.scenarios", "expected names");
                try {
                    cfg.simulation.scenarios.push_back(scenario_from_key(key.get<std::string>()));
                } catch (const Error& e) {
                    config_error("simulation.scenarios", e.what());
                }
            }
        }
        cfg.simulation.replications = get_or(s, "replications", "simulation", cfg.simulation.replications);
        cfg.simulation.oracle_draws = get_or(s, "oracle_draws", "simulation", cfg.simulation.oracle_draws);
        if (cfg.simulation.replications < 1) config_error("simulation.replications", "must be >= 1");
        if (cfg.simulation.oracle_draws < 100000) config_error("simulation.oracle_draws", "must be >= 1e5");
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ConfigError, path.filename().string() + ": " + e.what());
    }
    return parse_run_config(doc, path.parent_path());
}

}  // namespace clusterdr
