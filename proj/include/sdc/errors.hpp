#pragma once

#include <stdexcept>
#include <string>

namespace sdc {

// Error taxonomy shared by all modules. Every failure mode that callers are
// expected to branch on gets its own type; everything else surfaces as
// std::invalid_argument / std::runtime_error.

struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NotPositiveDefinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidProbability : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DegenerateData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DeltaOutOfRange : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalBreakdown : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InfeasibleAtAllFrequencies : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InfeasibleAtGivenTs : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidBox : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyTrajectory : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct SchemaMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace sdc
