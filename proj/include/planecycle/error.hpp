#pragma once

#include <stdexcept>
#include <string>

namespace planecycle {

// All library failures carry a stable machine-parsable code (E_*) next to the
// human-readable message. The CLI prints "<code>: <message>" on one line.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

#define PLANECYCLE_ERROR(Name, code)                                          \
    struct Name : Error {                                                      \
        explicit Name(const std::string& message) : Error(code, message) {}    \
    }

PLANECYCLE_ERROR(ShapeMismatch, "E_SHAPE_MISMATCH");
PLANECYCLE_ERROR(InvalidPermutation, "E_INVALID_PERMUTATION");
PLANECYCLE_ERROR(InvalidLength, "E_INVALID_LENGTH");
PLANECYCLE_ERROR(NonFiniteValue, "E_NON_FINITE");
PLANECYCLE_ERROR(IndivisibleExtent, "E_INDIVISIBLE_EXTENT");
PLANECYCLE_ERROR(UnsupportedHeadDim, "E_UNSUPPORTED_HEAD_DIM");
PLANECYCLE_ERROR(EmptyMask, "E_EMPTY_MASK");
PLANECYCLE_ERROR(ZeroReferenceFeature, "E_ZERO_REFERENCE");
PLANECYCLE_ERROR(ConvergenceFailure, "E_PCA_CONVERGENCE");
PLANECYCLE_ERROR(MalformedHeader, "E_MALFORMED_HEADER");
PLANECYCLE_ERROR(OverlappingRanges, "E_OVERLAPPING_RANGES");
PLANECYCLE_ERROR(TruncatedFile, "E_TRUNCATED_FILE");
PLANECYCLE_ERROR(UnsupportedDtype, "E_UNSUPPORTED_DTYPE");
PLANECYCLE_ERROR(DuplicateName, "E_DUPLICATE_NAME");
PLANECYCLE_ERROR(IoFailure, "E_IO");
PLANECYCLE_ERROR(InvalidArch, "E_INVALID_ARCH");
PLANECYCLE_ERROR(ManifestError, "E_MANIFEST");
PLANECYCLE_ERROR(ScheduleError, "E_SCHEDULE");
PLANECYCLE_ERROR(MissingWeights, "E_NO_WEIGHTS");
PLANECYCLE_ERROR(MissingInput, "E_NO_INPUT");

#undef PLANECYCLE_ERROR

} // namespace planecycle
