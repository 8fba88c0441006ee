#pragma once

#include <stdexcept>
#include <string>

namespace pmbp {

// Error taxonomy. Dimension/shape problems are std::invalid_argument,
// everything numerical derives from std::runtime_error.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};
struct EvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ExplosionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateParameterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalConsistencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FitFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pmbp
