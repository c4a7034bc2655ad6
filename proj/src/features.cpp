#include "clusterdr/features.hpp"

#include <algorithm>

#include "clusterdr/error.hpp"

namespace clusterdr {

FeatureSpec FeatureSpec::cluster_level(Eigen::Index p, bool use_x, bool standardize) {
    FeatureSpec spec;
    spec.use_x = use_x;
    spec.w_aggregates.assign(static_cast<std::size_t>(p), Aggregate::Mean);
    spec.standardize = standardize;
    return spec;
}

FeatureSpec FeatureSpec::individual_level(bool use_x, bool standardize) {
    FeatureSpec spec;
    spec.use_x = use_x;
    spec.include_individual = true;
    spec.standardize = standardize;
    return spec;
}

bool FeatureSpec::has_aggregates() const {
    return std::any_of(w_aggregates.begin(), w_aggregates.end(),
                       [](Aggregate a) { return a != Aggregate::None; });
}

namespace {

struct Layout {
    Eigen::Index cols = 1;
    std::vector<std::string> names{"(intercept)"};
    std::vector<Eigen::Index> aggregate_columns;
};

Layout layout_for(const StudyDataset& ds, const FeatureSpec& spec, bool individual) {
    if (!spec.use_x && !spec.include_individual && !spec.has_aggregates()) {
        throw Error(ErrorCode::EmptySpec, "feature spec enables no covariates");
    }
    if (!spec.w_aggregates.empty() &&
        spec.w_aggregates.size() != static_cast<std::size_t>(ds.p())) {
        throw Error(ErrorCode::DimensionMismatch,
                    "feature spec lists " + std::to_string(spec.w_aggregates.size()) +
                        " W aggregates for p=" + std::to_string(ds.p()));
    }
    if (spec.include_individual != individual) {
        throw Error(ErrorCode::InvalidArgument,
                    individual ? "individual features need include_individual=true"
                               : "cluster features need include_individual=false");
    }
    Layout L;
    if (spec.use_x) {
        for (Eigen::Index k = 0; k < ds.q(); ++k) L.names.push_back("x" + std::to_string(k + 1));
    }
    if (spec.include_individual) {
        for (Eigen::Index k = 0; k < ds.p(); ++k) L.names.push_back("w" + std::to_string(k + 1));
    }
    for (std::size_t k = 0; k < spec.w_aggregates.size(); ++k) {
        if (spec.w_aggregates[k] == Aggregate::Mean) {
            L.aggregate_columns.push_back(static_cast<Eigen::Index>(k));
            L.names.push_back("mean_w" + std::to_string(k + 1));
        }
    }
    L.cols = static_cast<Eigen::Index>(L.names.size());
    return L;
}

// Fills [1, X, (W_i), aggregates] into `row`.
void fill_row(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, const ClusterRecord& c,
              const FeatureSpec& spec, const Layout& L, const Eigen::RowVectorXd& w_means, Eigen::Index individual) {
    Eigen::Index col = 0;
    row(col++) = 1.0;
    if (spec.use_x) {
        row.segment(col, c.x.size()) = c.x.transpose();
        col += c.x.size();
    }
    if (spec.include_individual) {
        row.segment(col, c.w.cols()) = c.w.row(individual);
        col += c.w.cols();
    }
    for (Eigen::Index k : L.aggregate_columns) row(col++) = w_means(k);
}

FeatureMatrix build(const StudyDataset& ds, const FeatureSpec& spec, bool individual) {
    const Layout L = layout_for(ds, spec, individual);
    FeatureMatrix fm;
    fm.names = L.names;
    fm.spec = spec;

    Eigen::Index total = 0;
    for (const auto& c : ds.clusters()) total += individual ? c.size() : 1;
    fm.values.resize(total, L.cols);
    fm.rows.reserve(static_cast<std::size_t>(total));

    Eigen::Index r = 0;
    for (std::size_t j = 0; j < ds.size(); ++j) {
        const ClusterRecord& c = ds.cluster(j);
        const Eigen::RowVectorXd w_means = c.w.colwise().mean();
        if (individual) {
            for (Eigen::Index i = 0; i < c.size(); ++i, ++r) {
                fill_row(fm.values.row(r), c, spec, L, w_means, i);
                fm.rows.push_back({j, i});
            }
        } else {
            fill_row(fm.values.row(r), c, spec, L, w_means, 0);
            fm.rows.push_back({j, -1});
            ++r;
        }
    }
    return fm;
}

}  // namespace

Standardization compute_standardization(const Eigen::MatrixXd& raw) {
    std::vector<std::size_t> all(static_cast<std::size_t>(raw.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return compute_standardization(raw, all);
}

Standardization compute_standardization(const Eigen::MatrixXd& raw,
                                        std::span<const std::size_t> rows) {
    const Eigen::Index k = raw.cols() - 1;
    Standardization s;
    s.center = Eigen::VectorXd::Zero(k);
    s.scale = Eigen::VectorXd::Ones(k);
    const auto n = static_cast<double>(rows.size());
    if (rows.empty() || k <= 0) return s;
    for (Eigen::Index c = 0; c < k; ++c) {
        double mean = 0.0;
        for (std::size_t r : rows) mean += raw(static_cast<Eigen::Index>(r), c + 1);
        mean /= n;
        double ss = 0.0;
        for (std::size_t r : rows) {
            const double d = raw(static_cast<Eigen::Index>(r), c + 1) - mean;
            ss += d * d;
        }
        const double sd = rows.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        s.center(c) = mean;
        // Rounding leaves constant columns (e.g. means of a constant W) with
        // an sd of a few ulps; treat those as constant.
        s.scale(c) = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
    }
    return s;
}

FeatureMatrix apply_standardization(FeatureMatrix raw, const Standardization& stats) {
    if (raw.standardization) {
        throw Error(ErrorCode::InvalidArgument, "feature matrix is already standardized");
    }
    if (stats.center.size() != raw.num_cols() - 1) {
        throw Error(ErrorCode::DimensionMismatch, "standardization does not match feature columns");
    }
    auto body = raw.values.rightCols(raw.num_cols() - 1);
    body.rowwise() -= stats.center.transpose();
    body.array().rowwise() /= stats.scale.transpose().array();
    raw.standardization = stats;
    return raw;
}

Eigen::MatrixXd destandardize(const FeatureMatrix& fm) {
    Eigen::MatrixXd out = fm.values;
    if (!fm.standardization) return out;
    const auto& s = *fm.standardization;
    auto body = out.rightCols(out.cols() - 1);
    body.array().rowwise() *= s.scale.transpose().array();
    body.rowwise() += s.center.transpose();
    return out;
}

FeatureMatrix cluster_features(const StudyDataset& ds, const FeatureSpec& spec) {
    FeatureMatrix fm = build(ds, spec, false);
    if (!spec.standardize) return fm;
    const Standardization stats = compute_standardization(fm.values);
    return apply_standardization(std::move(fm), stats);
}

FeatureMatrix cluster_features(const StudyDataset& ds, const FeatureSpec& spec,
                               const Standardization& stats) {
    return apply_standardization(build(ds, spec, false), stats);
}

FeatureMatrix individual_features(const StudyDataset& ds, const FeatureSpec& spec) {
    FeatureMatrix fm = build(ds, spec, true);
    if (!spec.standardize) return fm;
    const Standardization stats = compute_standardization(fm.values);
    return apply_standardization(std::move(fm), stats);
}

FeatureMatrix individual_features(const StudyDataset& ds, const FeatureSpec& spec,
                                  const Standardization& stats) {
    return apply_standardization(build(ds, spec, true), stats);
}

FeatureMatrix raw_cluster_features(const StudyDataset& ds, const FeatureSpec& spec) {
    return build(ds, spec, false);
}

FeatureMatrix raw_individual_features(const StudyDataset& ds, const FeatureSpec& spec) {
    return build(ds, spec, true);
}

FeatureMatrix intercept_only_features(Eigen::Index rows) {
    FeatureMatrix fm;
    fm.values = Eigen::MatrixXd::Ones(rows, 1);
    fm.names = {"(intercept)"};
    fm.spec.use_x = false;
    fm.rows.resize(static_cast<std::size_t>(rows));
    for (Eigen::Index r = 0; r < rows; ++r) fm.rows[static_cast<std::size_t>(r)].cluster = static_cast<std::size_t>(r);
    return fm;
}

FeatureMatrix select_rows(const FeatureMatrix& fm, std::span<const std::size_t> rows) {
    FeatureMatrix out;
    out.names = fm.names;
    out.spec = fm.spec;
    out.standardization = fm.standardization;
    out.values.resize(static_cast<Eigen::Index>(rows.size()), fm.num_cols());
    out.rows.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.values.row(static_cast<Eigen::Index>(r)) = fm.values.row(static_cast<Eigen::Index>(rows[r]));
        if (!fm.rows.empty()) out.rows.push_back(fm.rows[rows[r]]);
    }
    return out;
}

}  // namespace clusterdr
