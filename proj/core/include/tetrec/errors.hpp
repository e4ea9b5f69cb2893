#pragma once

#include <stdexcept>
#include <string>

namespace tetrec {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define TETREC_DEFINE_ERROR(Name)                 \
    struct Name : Error {                         \
        using Error::Error;                       \
    }

TETREC_DEFINE_ERROR(ParseError);
TETREC_DEFINE_ERROR(TopologyError);
TETREC_DEFINE_ERROR(DegenerateNormal);
TETREC_DEFINE_ERROR(NonManifoldInput);
TETREC_DEFINE_ERROR(PreconditionError);
TETREC_DEFINE_ERROR(LengthMismatch);
TETREC_DEFINE_ERROR(ShapeMismatch);
TETREC_DEFINE_ERROR(StaleCache);
TETREC_DEFINE_ERROR(StaleBuffers);
TETREC_DEFINE_ERROR(DimensionMismatch);
TETREC_DEFINE_ERROR(EmptySet);
TETREC_DEFINE_ERROR(EmptyMesh);
TETREC_DEFINE_ERROR(EmptyShell);
TETREC_DEFINE_ERROR(OutOfRange);
TETREC_DEFINE_ERROR(MissingGender);
TETREC_DEFINE_ERROR(CorrespondenceMismatch);
TETREC_DEFINE_ERROR(DivergenceDetected);
TETREC_DEFINE_ERROR(IoError);

#undef TETREC_DEFINE_ERROR

} // namespace tetrec
