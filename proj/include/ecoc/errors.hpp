#ifndef ECOC_ERRORS_HPP
#define ECOC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ecoc {

/// Base of all library errors. `name()` is the stable identifier used in
/// CLI diagnostics and tests; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& msg)
        : std::runtime_error(name + ": " + msg), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

#define ECOC_DEFINE_ERROR(Type)                                             \
    class Type : public Error {                                             \
    public:                                                                 \
        explicit Type(const std::string& msg) : Error(#Type, msg) {}        \
    }

ECOC_DEFINE_ERROR(InvalidArgs);
ECOC_DEFINE_ERROR(InfeasibleCode);
ECOC_DEFINE_ERROR(AttemptBudgetExceeded);
ECOC_DEFINE_ERROR(InvalidMatrix);
ECOC_DEFINE_ERROR(IndexOutOfRange);
ECOC_DEFINE_ERROR(LengthMismatch);
ECOC_DEFINE_ERROR(IoFailure);
ECOC_DEFINE_ERROR(ParseError);
ECOC_DEFINE_ERROR(InconsistentDims);
ECOC_DEFINE_ERROR(TraceMismatch);
ECOC_DEFINE_ERROR(ShapeMismatch);
ECOC_DEFINE_ERROR(EmptyVector);
ECOC_DEFINE_ERROR(LabelOutOfRange);
ECOC_DEFINE_ERROR(NonFiniteFeature);
ECOC_DEFINE_ERROR(DegenerateTable);
ECOC_DEFINE_ERROR(EmptySplit);
ECOC_DEFINE_ERROR(DimensionMismatch);
ECOC_DEFINE_ERROR(IncompatibleModels);

#undef ECOC_DEFINE_ERROR

} // namespace ecoc

#endif
