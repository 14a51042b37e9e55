#include "qp/logval.hpp"

#include <stdexcept>

namespace qp {

Real log2_add(const Real& x, const Real& y) {
    if (x.is_inf() && x.sign() < 0) return y;
    if (y.is_inf() && y.sign() < 0) return x;
    const Real& hi = x >= y ? x : y;
    const Real& lo = x >= y ? y : x;
    if (hi.is_inf()) return hi;
    Real d = lo - hi;  // <= 0
    // far below the working precision the smaller term cannot matter
    if (d < Real(-static_cast<long>(Real::working_bits()) - 8)) return hi;
    // log2(1 + 2^d) = log1p(2^d) / ln 2
    return hi + log1p(exp2(d)) / ln2();
}

ExtendedLogValue ExtendedLogValue::from_log2(const Real& l) {
    ExtendedLogValue v;
    if (l.is_nan()) throw std::domain_error("log value is NaN");
    if (l.is_inf() && l.sign() < 0) return v;
    v.zero_ = false;
    v.lg_ = l;
    return v;
}

ExtendedLogValue ExtendedLogValue::from_real(const Real& x) {
    if (x.sign() < 0) throw std::domain_error("negative value in log domain");
    if (x.is_zero()) return {};
    return from_log2(qp::log2(x));
}

ExtendedLogValue ExtendedLogValue::infinity() { return from_log2(Real::inf(1)); }

Real ExtendedLogValue::to_real() const {
    if (zero_) return Real(0L);
    return exp2(lg_);
}

std::string ExtendedLogValue::log2_str(std::size_t digits) const {
    if (zero_) return "-inf";
    return lg_.str(digits);
}

ExtendedLogValue& ExtendedLogValue::operator*=(const ExtendedLogValue& o) {
    if (zero_ || o.zero_) {
        zero_ = true;
        return *this;
    }
    lg_ += o.lg_;
    return *this;
}

ExtendedLogValue& ExtendedLogValue::operator/=(const ExtendedLogValue& o) {
    if (o.zero_) throw std::domain_error("division by zero in log domain");
    if (zero_) return *this;
    lg_ -= o.lg_;
    return *this;
}

ExtendedLogValue& ExtendedLogValue::operator+=(const ExtendedLogValue& o) {
    if (o.zero_) return *this;
    if (zero_) {
        *this = o;
        return *this;
    }
    lg_ = log2_add(lg_, o.lg_);
    return *this;
}

ExtendedLogValue ExtendedLogValue::scaled_log2(const Real& shift) const {
    if (zero_) return *this;
    return from_log2(lg_ + shift);
}

ExtendedLogValue operator*(ExtendedLogValue a, const ExtendedLogValue& b) { return a *= b; }
ExtendedLogValue operator/(ExtendedLogValue a, const ExtendedLogValue& b) { return a /= b; }
ExtendedLogValue operator+(ExtendedLogValue a, const ExtendedLogValue& b) { return a += b; }

ExtendedLogValue diff(const ExtendedLogValue& a, const ExtendedLogValue& b) {
    if (b.is_zero()) return a;
    int c = cmp(a, b);
    if (c < 0) throw std::domain_error("negative difference in log domain");
    if (c == 0) return {};
    Real d = b.log2() - a.log2();  // < 0
    // log2(1 - 2^d) = log1p(-2^d)/ln2
    return ExtendedLogValue::from_log2(a.log2() + log1p(-exp2(d)) / ln2());
}

int cmp(const ExtendedLogValue& a, const ExtendedLogValue& b) {
    if (a.is_zero() && b.is_zero()) return 0;
    if (a.is_zero()) return -1;
    if (b.is_zero()) return 1;
    return cmp(a.log2(), b.log2());
}

ExtendedLogValue sum(const std::vector<ExtendedLogValue>& terms) {
    ExtendedLogValue acc;
    for (const auto& t : terms) acc += t;
    return acc;
}

}  // namespace qp
