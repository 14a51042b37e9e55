#pragma once

#include <stdexcept>
#include <string>

namespace qp {

// Every domain error carries a stable kind name used in reports and exit handling.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define QP_ERROR(Name)                                                         \
    struct Name : Error {                                                      \
        explicit Name(const std::string& w) : Error(#Name, w) {}               \
    };

QP_ERROR(InvalidScheme)
QP_ERROR(TailNotCertifiable)
QP_ERROR(HypothesisViolation)
QP_ERROR(ScheduleTooShort)
QP_ERROR(PrecisionExhausted)
QP_ERROR(BranchResolutionFailure)
QP_ERROR(RootNotBracketed)
QP_ERROR(ThetaNotAboveOne)
QP_ERROR(OrbitEscapedCantorSet)
QP_ERROR(TargetNotRealized)
QP_ERROR(AmbiguousBracket)
QP_ERROR(BudgetExhausted)
QP_ERROR(NoBracket)
QP_ERROR(BranchInversionFailure)
QP_ERROR(SeriesDiverging)
QP_ERROR(WeightOverflow)
QP_ERROR(DomainError)

#undef QP_ERROR

}  // namespace qp
