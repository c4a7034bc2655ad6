#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace clusterdr {

inline constexpr double kProbabilityFloor = 1e-6;
inline constexpr double kProbabilityCeiling = 1.0 - 1e-6;

inline double expit(double eta) {
    if (eta >= 0.0) {
        return 1.0 / (1.0 + std::exp(-eta));
    }
    const double z = std::exp(eta);
    return z / (1.0 + z);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Neumaier-compensated accumulator. Callers that need order independence
/// feed values in a canonical order (see StudyDataset::summation_order).
class KahanSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double kahan_sum(std::span<const double> values) {
    KahanSum acc;
    for (double v : values) acc.add(v);
    return acc.value();
}

}  // namespace clusterdr
