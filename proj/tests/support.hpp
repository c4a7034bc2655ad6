#pragma once

// Shared test helpers: hand-built records, random inputs and brute-force
// oracles written directly from the estimator definitions. The oracles use
// plain loops over std::vector so they share no code with the library.

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clusterdr/data_model.hpp"
#include "clusterdr/estimators.hpp"

namespace support {

using clusterdr::ClusterRecord;

inline std::filesystem::path source_dir() { return CLUSTERDR_SOURCE_DIR; }

inline ClusterRecord trial(std::string id, std::string arm, std::vector<double> y,
                           std::vector<double> x = {0.0}) {
    ClusterRecord r;
    r.cluster_id = std::move(id);
    r.participates = true;
    r.arm = std::move(arm);
    r.x = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    r.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(y.size()), 1);
    r.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    return r;
}

inline ClusterRecord target(std::string id, int n = 2, std::vector<double> x = {0.0}) {
    ClusterRecord r;
    r.cluster_id = std::move(id);
    r.x = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    r.w = Eigen::MatrixXd::Zero(n, 1);
    return r;
}

inline double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

/// Random records with m clusters of 1..n_max individuals. Every arm gets at
/// least `per_arm` randomized clusters and at least one cluster is not
/// randomized. Outcomes are binary unless `fractional`.
inline std::vector<ClusterRecord> random_records(std::mt19937_64& rng, int m, int n_max,
                                                 const std::vector<std::string>& arms,
                                                 int per_arm = 1, int q = 1, int p = 1,
                                                 bool fractional = false) {
    std::uniform_int_distribution<int> size(1, n_max);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int forced = per_arm * static_cast<int>(arms.size());
    std::vector<ClusterRecord> out;
    for (int j = 0; j < m; ++j) {
        ClusterRecord r;
        r.cluster_id = "k" + std::to_string(1000 + static_cast<int>(rng() % 9000)) + "_" + std::to_string(j);
        const int n = size(rng);
        r.x.resize(q);
        for (int c = 0; c < q; ++c) r.x(c) = normal(rng);
        r.w.resize(n, p);
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < p; ++c) r.w(i, c) = normal(rng);
        }
        const bool randomized = j < forced || (j < m - 1 && unit(rng) < 0.5);
        if (randomized) {
            r.participates = true;
            r.arm = j < forced ? arms[static_cast<std::size_t>(j % static_cast<int>(arms.size()))]
                               : arms[rng() % arms.size()];
            r.y = Eigen::VectorXd(n);
            for (int i = 0; i < n; ++i) {
                (*r.y)(i) = fractional ? unit(rng) : (unit(rng) < 0.4 ? 1.0 : 0.0);
            }
        }
        out.push_back(std::move(r));
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

/// Random nuisance values aligned with `ds`: p in (0.05, 1), e a random
/// point of the simplex, g in [0, 1].
inline clusterdr::NuisanceEstimates random_nuisance(const clusterdr::StudyDataset& ds,
                                                    std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto m = static_cast<Eigen::Index>(ds.size());
    const auto K = static_cast<Eigen::Index>(ds.arms().size());
    std::vector<std::string> ids;
    std::vector<int> arm_of;
    std::vector<std::optional<double>> ybar;
    Eigen::VectorXd p(m);
    Eigen::MatrixXd e(m, K), g(m, K);
    for (Eigen::Index j = 0; j < m; ++j) {
        const auto& c = ds.cluster(static_cast<std::size_t>(j));
        ids.push_back(c.cluster_id);
        arm_of.push_back(ds.arm_index_of(static_cast<std::size_t>(j)));
        ybar.push_back(c.y ? std::optional<double>(c.y->mean()) : std::nullopt);
        p(j) = 0.05 + 0.95 * unit(rng);
        double total = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) {
            e(j, k) = 0.2 + unit(rng);
            total += e(j, k);
        }
        e.row(j) /= total;
        // Renormalized rows can miss 1 by an ulp; fold the slack into the last arm.
        e(j, K - 1) = 1.0 - (e.row(j).sum() - e(j, K - 1));
        for (Eigen::Index k = 0; k < K; ++k) g(j, k) = unit(rng);
    }
    return clusterdr::make_nuisance_estimates(ids, ds.arms(), arm_of, p, e, g, ybar);
}

/// Plain-vector view of nuisance values for the oracles.
struct Plain {
    std::vector<int> arm_of;
    std::vector<double> p;
    std::vector<std::vector<double>> e;
    std::vector<std::vector<double>> g;
    std::vector<double> ybar;  // NaN when not randomized
};

inline Plain plain(const clusterdr::NuisanceEstimates& ne) {
    Plain out;
    for (std::size_t j = 0; j < ne.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        out.arm_of.push_back(ne.arm_of[j]);
        out.p.push_back(ne.p_hat(jj));
        std::vector<double> e, g;
        for (Eigen::Index k = 0; k < ne.e_hat.cols(); ++k) {
            e.push_back(ne.e_hat(jj, k));
            g.push_back(ne.g_hat(jj, k));
        }
        out.e.push_back(e);
        out.g.push_back(g);
        out.ybar.push_back(ne.ybar[j].value_or(std::numeric_limits<double>::quiet_NaN()));
    }
    return out;
}

struct OracleValue {
    double value = 0.0;
    std::vector<double> influence;
};

inline OracleValue oracle_aipw(const Plain& d, int a) {
    const std::size_t m = d.p.size();
    std::vector<double> term(m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double g = d.g[j][static_cast<std::size_t>(a)];
        term[j] = g;
        if (d.arm_of[j] == a) term[j] += (d.ybar[j] - g) / (d.p[j] * d.e[j][static_cast<std::size_t>(a)]);
        total += term[j];
    }
    OracleValue out{total / static_cast<double>(m), {}};
    for (double t : term) out.influence.push_back(t - out.value);
    return out;
}

inline OracleValue oracle_ipw(const Plain& d, int a) {
    const std::size_t m = d.p.size();
    std::vector<double> term(m, 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        if (d.arm_of[j] == a) term[j] = d.ybar[j] / (d.p[j] * d.e[j][static_cast<std::size_t>(a)]);
        total += term[j];
    }
    OracleValue out{total / static_cast<double>(m), {}};
    for (double t : term) out.influence.push_back(t - out.value);
    return out;
}

inline OracleValue oracle_hajek(const Plain& d, int a) {
    const std::size_t m = d.p.size();
    std::vector<double> w(m, 0.0);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        if (d.arm_of[j] != a) continue;
        w[j] = 1.0 / (d.p[j] * d.e[j][static_cast<std::size_t>(a)]);
        num += w[j] * d.ybar[j];
        den += w[j];
    }
    OracleValue out{num / den, {}};
    for (std::size_t j = 0; j < m; ++j) {
        const double y = d.arm_of[j] == a ? d.ybar[j] : 0.0;
        out.influence.push_back(static_cast<double>(m) * w[j] * (y - out.value) / den);
    }
    return out;
}

inline OracleValue oracle_gformula(const Plain& d, int a) {
    double total = 0.0;
    for (const auto& g : d.g) total += g[static_cast<std::size_t>(a)];
    OracleValue out{total / static_cast<double>(d.g.size()), {}};
    for (const auto& g : d.g) out.influence.push_back(g[static_cast<std::size_t>(a)] - out.value);
    return out;
}

inline OracleValue oracle_transport(const Plain& d, int a) {
    const std::size_t m = d.p.size();
    double n0 = 0.0;
    for (int arm : d.arm_of) n0 += arm < 0 ? 1.0 : 0.0;
    std::vector<double> wres(m, 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double g = d.g[j][static_cast<std::size_t>(a)];
        if (d.arm_of[j] == a) {
            wres[j] = (1.0 - d.p[j]) / (d.p[j] * d.e[j][static_cast<std::size_t>(a)]) * (d.ybar[j] - g);
        }
        total += wres[j] + (d.arm_of[j] < 0 ? g : 0.0);
    }
    OracleValue out{total / n0, {}};
    for (std::size_t j = 0; j < m; ++j) {
        const double g = d.g[j][static_cast<std::size_t>(a)];
        const double centered = d.arm_of[j] < 0 ? g - out.value : 0.0;
        out.influence.push_back(static_cast<double>(m) / n0 * (wres[j] + centered));
    }
    return out;
}

/// Individual-pooled arm mean with CR1 variance, from the records.
struct TrialOracle {
    double mean = 0.0;
    double cr1_variance = 0.0;
    std::vector<double> cluster_weighted_influence;
    double cluster_weighted_mean = 0.0;
};

inline TrialOracle oracle_trial(const std::vector<ClusterRecord>& records, const std::string& arm) {
    TrialOracle out;
    double sum = 0.0, n = 0.0, ybar_sum = 0.0, G = 0.0;
    for (const auto& r : records) {
        if (!r.participates || r.arm != arm) continue;
        for (Eigen::Index i = 0; i < r.y->size(); ++i) sum += (*r.y)(i);
        n += static_cast<double>(r.y->size());
        ybar_sum += r.y->mean();
        G += 1.0;
    }
    out.mean = sum / n;
    out.cluster_weighted_mean = ybar_sum / G;
    double rr = 0.0;
    for (const auto& r : records) {
        const bool in_arm = r.participates && r.arm == arm;
        double resid = 0.0;
        if (in_arm) {
            for (Eigen::Index i = 0; i < r.y->size(); ++i) resid += (*r.y)(i) - out.mean;
        }
        rr += resid * resid;
        out.cluster_weighted_influence.push_back(
            in_arm ? static_cast<double>(records.size()) / G * (r.y->mean() - out.cluster_weighted_mean)
                   : 0.0);
    }
    out.cr1_variance = G / (G - 1.0) * rr / (n * n);
    return out;
}

/// Generic quasi-Newton (BFGS with backtracking) maximizer of a smooth
/// concave objective, used as an independent check on IRLS.
inline Eigen::VectorXd bfgs_maximize(const std::function<double(const Eigen::VectorXd&)>& f,
                                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                                     Eigen::VectorXd x, int max_iter = 2000, double tol = 1e-12) {
    const Eigen::Index d = x.size();
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);  // inverse Hessian of -f
    Eigen::VectorXd g = -grad(x);
    for (int it = 0; it < max_iter && g.lpNorm<Eigen::Infinity>() > tol; ++it) {
        Eigen::VectorXd dir = -H * g;
        double step = 1.0;
        const double fx = -f(x);
        while (-f(x + step * dir) > fx + 1e-4 * step * g.dot(dir) && step > 1e-20) step *= 0.5;
        const Eigen::VectorXd s = step * dir;
        x += s;
        const Eigen::VectorXd g_new = -grad(x);
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-300) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        g = g_new;
    }
    return x;
}

inline bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace support
