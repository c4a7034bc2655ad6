#include "clusterdr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "clusterdr/error.hpp"
#include "clusterdr/numeric.hpp"
#include "clusterdr/rng.hpp"
#include "internal/parallel.hpp"

namespace clusterdr {

namespace {

void check_level(double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "confidence level must lie in (0, 1)");
    }
}

double poly(const double* c, int n, double x) {
    double acc = c[n - 1];
    for (int i = n - 2; i >= 0; --i) acc = acc * x + c[i];
    return acc;
}

}  // namespace

std::string_view interval_method_key(IntervalMethod method) {
    switch (method) {
        case IntervalMethod::InfluenceCurve: return "influence_curve";
        case IntervalMethod::ClusterBootstrap: return "cluster_bootstrap";
        case IntervalMethod::ClusterRobustOls: return "cluster_robust_ols";
    }
    return "unknown";
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw Error(ErrorCode::InvalidArgument, "quantile probability outside [0, 1]");
    }
    static constexpr double a[] = {3.3871328727963666080e0, 1.3314166789178437745e2,
                                   1.9715909503065514427e3, 1.3731693765509461125e4,
                                   4.5921953931549871457e4, 6.7265770927008700853e4,
                                   3.3430575583588128105e4, 2.5090809287301226727e3};
    static constexpr double b[] = {1.0,
                                   4.2313330701600911252e1, 6.8718700749205790830e2,
                                   5.3941960214247511077e3, 2.1213794301586595867e4,
                                   3.9307895800092710610e4, 2.8729085735721942674e4,
                                   5.2264952788528545610e3};
    static constexpr double c[] = {1.42343711074968357734e0, 4.63033784615654529590e0,
                                   5.76949722146069140550e0, 3.64784832476320460504e0,
                                   1.27045825245236838258e0, 2.41780725177450611770e-1,
                                   2.27238449892691845833e-2, 7.74545014278341407640e-4};
    static constexpr double d[] = {1.0,
                                   2.05319162663775882187e0, 1.67638483018380384940e0,
                                   6.89767334985100004550e-1, 1.48103976427480074590e-1,
                                   1.51986665636164571966e-2, 5.47593808499534494600e-4,
                                   1.05075007164441684324e-9};
    static constexpr double e[] = {6.65790464350110377720e0, 5.46378491116411436990e0,
                                   1.78482653991729133580e0, 2.96560571828504891230e-1,
                                   2.65321895265761230930e-2, 1.24266094738807843860e-3,
                                   2.71155556874348757815e-5, 2.01033439929228813265e-7};
    static constexpr double f[] = {1.0,
                                   5.99832206555887937690e-1, 1.36929880922735805310e-1,
                                   1.48753612908506148525e-2, 7.86869131145613259100e-4,
                                   1.84631831751005468180e-5, 1.42151175831644588870e-7,
                                   2.04426310338993978564e-15};

    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q * poly(a, 8, r) / poly(b, 8, r);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double z;
    if (r <= 5.0) {
        r -= 1.6;
        z = poly(c, 8, r) / poly(d, 8, r);
    } else {
        r -= 5.0;
        z = poly(e, 8, r) / poly(f, 8, r);
    }
    return q < 0.0 ? -z : z;
}

IntervalEstimate influence_curve_interval(const PointEstimate& est, double level) {
    check_level(level);
    if (!est.influence || est.influence->size() < 2) {
        throw Error(ErrorCode::NoInfluenceValues, "estimate carries no influence values");
    }
    const Eigen::VectorXd& v = *est.influence;
    const auto m = static_cast<double>(v.size());
    KahanSum sum;
    for (Eigen::Index j = 0; j < v.size(); ++j) sum.add(v(j));
    const double mean = sum.value() / m;
    KahanSum ss;
    for (Eigen::Index j = 0; j < v.size(); ++j) ss.add((v(j) - mean) * (v(j) - mean));
    const double variance = ss.value() / (m - 1.0);

    IntervalEstimate out;
    out.point = est.value;
    out.level = level;
    out.method = IntervalMethod::InfluenceCurve;
    out.se = std::sqrt(variance / m);
    const double z = normal_quantile(0.5 + level / 2.0);
    out.lower = out.point - z * out.se;
    out.upper = out.point + z * out.se;
    return out;
}

StudyDataset bootstrap_resample(const StudyDataset& ds, std::uint64_t seed, std::uint64_t index,
                                bool stratified) {
    RandomStream stream(seed, stream_id(StreamDomain::Bootstrap, index));
    const std::vector<std::size_t>& order = ds.summation_order();
    std::vector<std::size_t> draws;
    draws.reserve(ds.size());
    if (!stratified) {
        const auto hi = static_cast<std::int64_t>(ds.size()) - 1;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            draws.push_back(order[static_cast<std::size_t>(stream.uniform_int(0, hi))]);
        }
    } else {
        for (int stratum = -1; stratum < static_cast<int>(ds.arms().size()); ++stratum) {
            std::vector<std::size_t> members;
            for (std::size_t j : order) {
                if (ds.arm_index_of(j) == stratum) members.push_back(j);
            }
            if (members.empty()) continue;
            const auto hi = static_cast<std::int64_t>(members.size()) - 1;
            for (std::size_t i = 0; i < members.size(); ++i) {
                draws.push_back(members[static_cast<std::size_t>(stream.uniform_int(0, hi))]);
            }
        }
    }
    std::vector<ClusterRecord> records;
    records.reserve(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
        ClusterRecord copy = ds.cluster(draws[i]);
        copy.cluster_id += "#" + std::to_string(i);
        records.push_back(std::move(copy));
    }
    return validate_dataset(std::move(records));
}

double sorted_quantile(const std::vector<double>& sorted, double prob) {
    if (sorted.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of no values");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

IntervalEstimate cluster_bootstrap_interval(const StudyDataset& ds, const DatasetEstimator& estimator,
                                            double level, int replicates, std::uint64_t seed,
                                            const BootstrapOptions& options) {
    check_level(level);
    if (replicates < 200) {
        throw Error(ErrorCode::InvalidArgument, "the cluster bootstrap needs at least 200 replicates");
    }
    const auto n = static_cast<std::size_t>(replicates);
    std::vector<std::optional<double>> values(n);
    detail::parallel_for(n, options.threads, [&](std::size_t b) {
        try {
            const double v = estimator(bootstrap_resample(ds, seed, b, options.stratified));
            if (std::isfinite(v)) values[b] = v;
        } catch (const Error&) {
            // Counted below as a failed replicate.
        }
    });

    std::vector<double> kept;
    for (const auto& v : values) {
        if (v) kept.push_back(*v);
    }
    const auto failed = static_cast<int>(n - kept.size());
    if (static_cast<double>(failed) > 0.02 * static_cast<double>(n)) {
        throw Error(ErrorCode::TooManyFailedReplicates,
                    std::to_string(failed) + " of " + std::to_string(n) +
                        " bootstrap replicates failed");
    }

    IntervalEstimate out;
    out.point = estimator(ds);
    out.level = level;
    out.method = IntervalMethod::ClusterBootstrap;
    out.replicates = static_cast<int>(kept.size());
    out.failed_replicates = failed;

    KahanSum sum;
    for (double v : kept) sum.add(v);
    const double mean = sum.value() / static_cast<double>(kept.size());
    KahanSum ss;
    for (double v : kept) ss.add((v - mean) * (v - mean));
    out.se = std::sqrt(ss.value() / (static_cast<double>(kept.size()) - 1.0));

    std::sort(kept.begin(), kept.end());
    const double alpha = 1.0 - level;
    out.lower = sorted_quantile(kept, alpha / 2.0);
    out.upper = sorted_quantile(kept, 1.0 - alpha / 2.0);
    return out;
}

IntervalEstimate cluster_robust_trial_interval(const StudyDataset& ds, std::string_view arm,
                                               double level) {
    check_level(level);
    const std::size_t k = ds.require_arm(arm);
    const PointEstimate est = trial_only_estimate(ds, arm);

    KahanSum n_a;
    KahanSum sq;
    std::size_t G = 0;
    for (std::size_t j : ds.summation_order()) {
        if (ds.arm_index_of(j) != static_cast<int>(k)) continue;
        const ClusterRecord& c = ds.cluster(j);
        KahanSum r;
        for (Eigen::Index i = 0; i < c.size(); ++i) r.add((*c.y)(i) - est.value);
        sq.add(r.value() * r.value());
        n_a.add(static_cast<double>(c.size()));
        ++G;
    }
    if (G < 2) {
        throw Error(ErrorCode::FewerThanTwoClusters,
                    "cluster-robust variance needs at least 2 clusters in arm '" +
                        std::string(arm) + "'");
    }
    const double g = static_cast<double>(G);
    const double variance = g / (g - 1.0) * sq.value() / (n_a.value() * n_a.value());

    IntervalEstimate out;
    out.point = est.value;
    out.level = level;
    out.method = IntervalMethod::ClusterRobustOls;
    out.se = std::sqrt(variance);
    const double z = normal_quantile(0.5 + level / 2.0);
    out.lower = out.point - z * out.se;
    out.upper = out.point + z * out.se;
    return out;
}

}  // namespace clusterdr
