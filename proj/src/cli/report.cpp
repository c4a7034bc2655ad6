#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "clusterdr/cli.hpp"

namespace clusterdr {

using nlohmann::ordered_json;

namespace {

ordered_json number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

std::string fixed(double v, int decimals) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    // "-0.00" reads as a sign error in a table.
    if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
    return s;
}

std::string full(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string column_label(const EstimateRow& row) {
    std::string label = "a=" + row.arm;
    if (row.reference_arm) label += " vs " + *row.reference_arm;
    return label;
}

std::string row_label(const EstimateRow& row) {
    return std::string(estimator_name(row.estimator)) + " / " + row.model_tag;
}

std::string pad(const std::string& s, std::size_t width, bool right = false) {
    if (s.size() >= width) return s;
    return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

// Lays out `cells` (first row is the header) with two-space gutters.
std::string grid(const std::vector<std::vector<std::string>>& cells) {
    std::vector<std::size_t> widths;
    for (const auto& row : cells) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    }
    std::ostringstream out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        std::string line;
        for (std::size_t c = 0; c < cells[r].size(); ++c) {
            if (c > 0) line += "  ";
            line += pad(cells[r][c], widths[c], c > 0);
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c > 0 ? 2 : 0);
            out << std::string(total, '-') << '\n';
        }
    }
    return out.str();
}

ordered_json weights_json(const std::optional<WeightDiagnostics>& w) {
    if (!w) return nullptr;
    ordered_json out;
    out["count"] = w->count;
    out["min"] = number(w->min);
    out["max"] = number(w->max);
    out["effective_sample_size"] = number(w->effective_sample_size);
    return out;
}

}  // namespace

ordered_json summary_to_json(const DatasetSummary& summary, const std::vector<std::string>& warnings) {
    ordered_json out;
    out["clusters"] = summary.clusters;
    out["trial_clusters"] = summary.trial_clusters;
    out["individuals"] = summary.individuals;
    out["trial_individuals"] = summary.trial_individuals;
    ordered_json per_arm = ordered_json::object();
    for (const auto& [arm, n] : summary.clusters_per_arm) per_arm[arm] = n;
    out["clusters_per_arm"] = per_arm;
    out["trial_fraction"] = number(summary.trial_fraction);
    out["warnings"] = warnings;
    return out;
}

ordered_json report_to_json(const EstimateReport& report) {
    ordered_json out;
    out["schema_version"] = "1";
    out["command"] = "estimate";
    out["seed"] = report.seed;
    out["level"] = report.level;
    out["crossfit_folds"] = report.crossfit_folds;
    ordered_json dataset = summary_to_json(report.summary, {});
    dataset.erase("warnings");
    out["dataset"] = dataset;
    out["arms"] = report.arms;

    ordered_json results = ordered_json::array();
    for (const EstimateRow& row : report.rows) {
        ordered_json r;
        r["estimator"] = estimator_key(row.estimator);
        r["label"] = row_label(row);
        r["model"] = row.model_tag;
        r["arm"] = row.arm;
        r["reference_arm"] = row.reference_arm ? ordered_json(*row.reference_arm) : ordered_json(nullptr);
        r["point"] = number(row.interval.point);
        r["se"] = number(row.interval.se);
        r["lower"] = number(row.interval.lower);
        r["upper"] = number(row.interval.upper);
        r["level"] = row.interval.level;
        r["method"] = interval_method_key(row.interval.method);
        if (row.interval.method == IntervalMethod::ClusterBootstrap) {
            r["replicates"] = row.interval.replicates;
            r["failed_replicates"] = row.interval.failed_replicates;
        }
        r["weights"] = weights_json(row.weights);
        results.push_back(std::move(r));
    }
    out["results"] = std::move(results);

    ordered_json nuisance;
    nuisance["clipped_participation"] = report.clipped_participation;
    nuisance["clipped_treatment"] = report.clipped_treatment;
    ordered_json models = ordered_json::array();
    for (const ModelDiagnostics& m : report.models) {
        ordered_json j;
        j["name"] = m.name;
        j["method"] = m.method;
        j["features"] = m.feature_names;
        ordered_json coef = ordered_json::array();
        for (double c : m.coefficients) coef.push_back(number(c));
        j["coefficients"] = std::move(coef);
        j["iterations"] = m.fit.iterations;
        j["converged"] = m.fit.converged;
        j["max_change"] = number(m.fit.max_change);
        j["gradient_norm"] = number(m.fit.gradient_norm);
        models.push_back(std::move(j));
    }
    nuisance["models"] = std::move(models);
    out["nuisance"] = std::move(nuisance);
    out["warnings"] = report.warnings;
    return out;
}

ordered_json report_to_json(const SimulationReport& report) {
    ordered_json out;
    out["schema_version"] = "1";
    out["command"] = "simulate";
    out["exploratory"] = report.exploratory;
    out["seed"] = report.seed;
    out["replications"] = report.replications;
    out["dgp"] = dgp_to_json(report.dgp);

    ordered_json oracle;
    oracle["draws"] = report.truth.draws;
    oracle["nonrandomized_draws"] = report.truth.nonrandomized_draws;
    ordered_json arms = ordered_json::object();
    for (std::size_t k = 0; k < report.truth.arms.size(); ++k) {
        ordered_json a;
        a["psi"] = number(report.truth.psi[k]);
        a["psi_se"] = number(report.truth.psi_se[k]);
        a["phi"] = number(report.truth.phi[k]);
        a["phi_se"] = number(report.truth.phi_se[k]);
        arms[report.truth.arms[k]] = std::move(a);
    }
    oracle["arms"] = std::move(arms);
    out["oracle"] = std::move(oracle);

    ordered_json scenarios = ordered_json::array();
    for (const ScenarioResult& s : report.scenarios) {
        ordered_json j;
        j["scenario"] = scenario_key(s.scenario);
        j["replications_requested"] = s.replications_requested;
        j["replications_used"] = s.replications_used;
        j["replications_failed"] = s.replications_failed;
        ordered_json rows = ordered_json::array();
        for (const EstimatorSummary& e : s.estimators) {
            ordered_json r;
            r["estimator"] = estimator_key(e.estimator);
            r["arm"] = e.arm;
            r["truth"] = number(e.truth);
            r["mean_estimate"] = number(e.mean_estimate);
            r["mean_bias"] = number(e.mean_bias);
            r["mc_se"] = number(e.mc_se);
            r["empirical_se"] = number(e.empirical_se);
            r["mean_estimated_se"] = number(e.mean_estimated_se);
            r["se_ratio"] = number(e.mean_estimated_se / e.empirical_se);
            r["coverage"] = number(e.coverage);
            r["relative_efficiency"] = number(e.relative_efficiency);
            r["replications"] = e.replications;
            rows.push_back(std::move(r));
        }
        j["estimators"] = std::move(rows);
        j["failures"] = s.failure_messages;
        scenarios.push_back(std::move(j));
    }
    out["scenarios"] = std::move(scenarios);
    out["warnings"] = report.warnings;
    return out;
}

std::string render_table(const EstimateReport& report, bool percent) {
    const double scale = percent ? 100.0 : 1.0;
    const int decimals = percent ? 2 : 4;

    std::vector<std::string> columns;
    std::vector<std::string> labels;
    for (const EstimateRow& row : report.rows) {
        const std::string c = column_label(row);
        if (std::find(columns.begin(), columns.end(), c) == columns.end()) columns.push_back(c);
        const std::string l = row_label(row);
        if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    }
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"Estimator / working model"});
    cells[0].insert(cells[0].end(), columns.begin(), columns.end());
    for (const std::string& label : labels) {
        std::vector<std::string> line{label};
        for (const std::string& column : columns) {
            std::string cell = "-";
            for (const EstimateRow& row : report.rows) {
                if (row_label(row) != label || column_label(row) != column) continue;
                const IntervalEstimate& ci = row.interval;
                cell = fixed(ci.point * scale, decimals) + " (" + fixed(ci.lower * scale, decimals) +
                       ", " + fixed(ci.upper * scale, decimals) + ")";
            }
            line.push_back(cell);
        }
        cells.push_back(std::move(line));
    }

    std::ostringstream out;
    out << grid(cells);
    out << "\n" << fixed(report.level * 100.0, 0) << "% confidence intervals"
        << (percent ? "; percentage scale" : "") << ". Clusters: " << report.summary.clusters
        << " (" << report.summary.trial_clusters << " randomized).\n";
    for (const std::string& w : report.warnings) out << "warning: " << w << '\n';
    return out.str();
}

std::string render_table(const SimulationReport& report, bool percent) {
    const double scale = percent ? 100.0 : 1.0;
    const int decimals = percent ? 2 : 4;
    std::ostringstream out;
    if (report.exploratory) {
        out << "EXPLORATORY: " << report.replications
            << " replications (fewer than 200); not an acceptance run.\n\n";
    }
    out << "Oracle (" << report.truth.draws << " draws)\n";
    {
        std::vector<std::vector<std::string>> cells{{"Arm", "psi", "MC SE", "phi", "MC SE"}};
        for (std::size_t k = 0; k < report.truth.arms.size(); ++k) {
            cells.push_back({report.truth.arms[k], fixed(report.truth.psi[k] * scale, decimals + 2),
                             fixed(report.truth.psi_se[k] * scale, decimals + 2),
                             fixed(report.truth.phi[k] * scale, decimals + 2),
                             fixed(report.truth.phi_se[k] * scale, decimals + 2)});
        }
        out << grid(cells);
    }
    for (const ScenarioResult& s : report.scenarios) {
        out << "\nScenario " << scenario_key(s.scenario) << " (" << s.replications_used << " of "
            << s.replications_requested << " replications)\n";
        std::vector<std::vector<std::string>> cells{
            {"Estimator", "Arm", "Truth", "Mean", "Bias", "MC SE", "Emp SE", "Est SE", "Coverage"}};
        for (const EstimatorSummary& e : s.estimators) {
            cells.push_back({std::string(estimator_name(e.estimator)), e.arm,
                             fixed(e.truth * scale, decimals), fixed(e.mean_estimate * scale, decimals),
                             fixed(e.mean_bias * scale, decimals), fixed(e.mc_se * scale, decimals),
                             fixed(e.empirical_se * scale, decimals),
                             fixed(e.mean_estimated_se * scale, decimals), fixed(e.coverage, 3)});
        }
        out << grid(cells);
    }
    for (const std::string& w : report.warnings) out << "warning: " << w << '\n';
    return out.str();
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

// Warnings trail the data as rows tagged "warning" in the first column.
void csv_warnings(std::ostream& out, const std::vector<std::string>& warnings, int columns) {
    for (const std::string& w : warnings) {
        out << "warning," << csv_field(w) << std::string(static_cast<std::size_t>(columns - 2), ',') << '\n';
    }
}

}  // namespace

std::string render_csv(const EstimateReport& report) {
    std::ostringstream out;
    out << "estimator,model,arm,reference_arm,point,se,lower,upper,level,method\n";
    for (const EstimateRow& row : report.rows) {
        out << estimator_key(row.estimator) << ',' << csv_field(row.model_tag) << ','
            << csv_field(row.arm) << ',' << csv_field(row.reference_arm.value_or("")) << ','
            << full(row.interval.point) << ','
            << full(row.interval.se) << ',' << full(row.interval.lower) << ','
            << full(row.interval.upper) << ',' << full(row.interval.level) << ','
            << interval_method_key(row.interval.method) << '\n';
    }
    csv_warnings(out, report.warnings, 10);
    return out.str();
}

std::string render_csv(const SimulationReport& report) {
    std::ostringstream out;
    out << "scenario,estimator,arm,truth,mean_estimate,mean_bias,mc_se,empirical_se,"
           "mean_estimated_se,coverage,replications\n";
    for (const ScenarioResult& s : report.scenarios) {
        for (const EstimatorSummary& e : s.estimators) {
            out << scenario_key(s.scenario) << ',' << estimator_key(e.estimator) << ',' << csv_field(e.arm)
                << ',' << full(e.truth) << ',' << full(e.mean_estimate) << ',' << full(e.mean_bias)
                << ',' << full(e.mc_se) << ',' << full(e.empirical_se) << ','
                << full(e.mean_estimated_se) << ',' << full(e.coverage) << ',' << e.replications
                << '\n';
        }
    }
    csv_warnings(out, report.warnings, 11);
    return out.str();
}

}  // namespace clusterdr
