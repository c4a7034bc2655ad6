#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clusterdr {

enum class ErrorCode {
    InvalidArgument,
    MissingOutcome,
    DimensionMismatch,
    IncompleteTrialCluster,
    DuplicateId,
    EmptyArm,
    EmptyCluster,
    NonFiniteValue,
    OutcomeOutOfRange,
    TooFewClusters,
    EmptySpec,
    Separation,
    SingularSystem,
    NotStandardized,
    NonConvergence,
    ProbabilitiesDontSumToOne,
    TooFewTrialClusters,
    NoTreatedClusters,
    NoNonRandomizedClusters,
    MismatchedEstimates,
    TooManyFolds,
    NoInfluenceValues,
    TooManyFailedReplicates,
    FewerThanTwoClusters,
    OrphanIndividual,
    UnparseableCell,
    ConfigError,
    IoError,
};

std::string_view code_name(ErrorCode code) noexcept;

/// Exception carrying a stable machine-readable code. `what()` is the
/// human-readable detail; `code_name(code())` is what the CLI prints.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace clusterdr
