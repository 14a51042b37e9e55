#pragma once
// Nonnegative quantity held as its base-2 logarithm, with a distinguished zero.

#include "qp/real.hpp"

#include <string>
#include <vector>

namespace qp {

class ExtendedLogValue {
public:
    ExtendedLogValue() : zero_(true) {}
    static ExtendedLogValue zero() { return {}; }
    static ExtendedLogValue one() { return from_log2(Real(0L)); }
    static ExtendedLogValue from_log2(const Real& l);
    static ExtendedLogValue from_real(const Real& x);  // x >= 0
    static ExtendedLogValue infinity();

    bool is_zero() const { return zero_; }
    bool is_inf() const { return !zero_ && lg_.is_inf(); }
    // log2 of the value; -inf for zero.
    Real log2() const { return zero_ ? Real::inf(-1) : lg_; }
    Real to_real() const;
    std::string log2_str(std::size_t digits = 0) const;

    ExtendedLogValue& operator*=(const ExtendedLogValue& o);
    ExtendedLogValue& operator/=(const ExtendedLogValue& o);
    ExtendedLogValue& operator+=(const ExtendedLogValue& o);
    ExtendedLogValue scaled_log2(const Real& shift) const;  // value * 2^shift

private:
    bool zero_;
    Real lg_;
};

ExtendedLogValue operator*(ExtendedLogValue a, const ExtendedLogValue& b);
ExtendedLogValue operator/(ExtendedLogValue a, const ExtendedLogValue& b);
ExtendedLogValue operator+(ExtendedLogValue a, const ExtendedLogValue& b);
// a - b for a >= b; throws if b > a beyond rounding.
ExtendedLogValue diff(const ExtendedLogValue& a, const ExtendedLogValue& b);
int cmp(const ExtendedLogValue& a, const ExtendedLogValue& b);
inline bool operator<(const ExtendedLogValue& a, const ExtendedLogValue& b) { return cmp(a, b) < 0; }
inline bool operator<=(const ExtendedLogValue& a, const ExtendedLogValue& b) { return cmp(a, b) <= 0; }
inline bool operator>(const ExtendedLogValue& a, const ExtendedLogValue& b) { return cmp(a, b) > 0; }
inline bool operator>=(const ExtendedLogValue& a, const ExtendedLogValue& b) { return cmp(a, b) >= 0; }

// Sum in the given order (callers pass ascending block order).
ExtendedLogValue sum(const std::vector<ExtendedLogValue>& terms);

// log2(2^x + 2^y) without overflow.
Real log2_add(const Real& x, const Real& y);

}  // namespace qp
