#include "clusterdr/error.hpp"

namespace clusterdr {

std::string_view code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::MissingOutcome: return "MissingOutcome";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::IncompleteTrialCluster: return "IncompleteTrialCluster";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::EmptyArm: return "EmptyArm";
        case ErrorCode::EmptyCluster: return "EmptyCluster";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::OutcomeOutOfRange: return "OutcomeOutOfRange";
        case ErrorCode::TooFewClusters: return "TooFewClusters";
        case ErrorCode::EmptySpec: return "EmptySpec";
        case ErrorCode::Separation: return "Separation";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::NotStandardized: return "NotStandardized";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::ProbabilitiesDontSumToOne: return "ProbabilitiesDontSumToOne";
        case ErrorCode::TooFewTrialClusters: return "TooFewTrialClusters";
        case ErrorCode::NoTreatedClusters: return "NoTreatedClusters";
        case ErrorCode::NoNonRandomizedClusters: return "NoNonRandomizedClusters";
        case ErrorCode::MismatchedEstimates: return "MismatchedEstimates";
        case ErrorCode::TooManyFolds: return "TooManyFolds";
        case ErrorCode::NoInfluenceValues: return "NoInfluenceValues";
        case ErrorCode::TooManyFailedReplicates: return "TooManyFailedReplicates";
        case ErrorCode::FewerThanTwoClusters: return "FewerThanTwoClusters";
        case ErrorCode::OrphanIndividual: return "OrphanIndividual";
        case ErrorCode::UnparseableCell: return "UnparseableCell";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace clusterdr
