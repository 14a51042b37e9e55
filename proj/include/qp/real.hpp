#pragma once
// Thin RAII wrapper over mpfr_t. Precision of new values comes from a
// thread-local working precision so threads never share mutable state.

#include <mpfr.h>
#include <gmpxx.h>

#include <cstdint>
#include <string>
#include <utility>

namespace qp {

class Real {
public:
    static mpfr_prec_t working_bits();
    static void set_working_bits(mpfr_prec_t bits);

    Real();
    Real(double d);  // NOLINT: implicit on purpose, exact for doubles
    Real(long v);    // NOLINT
    Real(int v) : Real(static_cast<long>(v)) {}
    explicit Real(const mpz_class& z);
    static Real from_string(const std::string& s);
    static Real with_bits(mpfr_prec_t bits);

    Real(const Real& o);
    Real(Real&& o) noexcept;
    Real& operator=(const Real& o);
    Real& operator=(Real&& o) noexcept;
    ~Real();

    mpfr_ptr get() { return v_; }
    mpfr_srcptr get() const { return v_; }
    mpfr_prec_t bits() const { return mpfr_get_prec(v_); }

    double to_double() const { return mpfr_get_d(v_, MPFR_RNDN); }
    long double to_ldouble() const { return mpfr_get_ld(v_, MPFR_RNDN); }
    long to_long_floor() const { return mpfr_get_si(v_, MPFR_RNDD); }
    mpz_class to_mpz_floor() const;
    // Decimal string with `digits` significant digits (0 = enough to round trip).
    std::string str(std::size_t digits = 0) const;

    bool is_zero() const { return mpfr_zero_p(v_) != 0; }
    bool is_inf() const { return mpfr_inf_p(v_) != 0; }
    bool is_nan() const { return mpfr_nan_p(v_) != 0; }
    bool is_integer() const { return mpfr_integer_p(v_) != 0; }
    int sign() const { return mpfr_sgn(v_); }

    Real& operator+=(const Real& o);
    Real& operator-=(const Real& o);
    Real& operator*=(const Real& o);
    Real& operator/=(const Real& o);
    Real operator-() const;

    static Real inf(int sgn = 1);
    static Real nan();

private:
    mpfr_t v_;
};

Real operator+(const Real& a, const Real& b);
Real operator-(const Real& a, const Real& b);
Real operator*(const Real& a, const Real& b);
Real operator/(const Real& a, const Real& b);

int cmp(const Real& a, const Real& b);
inline bool operator<(const Real& a, const Real& b) { return cmp(a, b) < 0; }
inline bool operator>(const Real& a, const Real& b) { return cmp(a, b) > 0; }
inline bool operator<=(const Real& a, const Real& b) { return cmp(a, b) <= 0; }
inline bool operator>=(const Real& a, const Real& b) { return cmp(a, b) >= 0; }
inline bool operator==(const Real& a, const Real& b) { return cmp(a, b) == 0; }
inline bool operator!=(const Real& a, const Real& b) { return cmp(a, b) != 0; }

Real abs(const Real& a);
Real sqrt(const Real& a);
Real log(const Real& a);
Real log2(const Real& a);
Real log1p(const Real& a);
Real exp(const Real& a);
Real exp2(const Real& a);
Real expm1(const Real& a);
Real floor(const Real& a);
Real ceil(const Real& a);
Real pow(const Real& a, const Real& b);
Real min(const Real& a, const Real& b);
Real max(const Real& a, const Real& b);
Real ln2();
Real pi();

// Directed-rounding helpers for interval arithmetic.
Real add_rnd(const Real& a, const Real& b, mpfr_rnd_t r);
Real sub_rnd(const Real& a, const Real& b, mpfr_rnd_t r);
Real mul_rnd(const Real& a, const Real& b, mpfr_rnd_t r);
Real sqr_rnd(const Real& a, mpfr_rnd_t r);
Real sqrt_rnd(const Real& a, mpfr_rnd_t r);

// Exact rational value of a decimal literal such as "-1.75" or "2.5e-3".
mpq_class parse_decimal_exact(const std::string& s);
mpq_class to_mpq(const Real& x);  // exact
Real from_mpq(const mpq_class& q);  // rounded to working precision

// Scoped change of the thread's working precision.
class PrecisionScope {
public:
    explicit PrecisionScope(mpfr_prec_t bits) : saved_(Real::working_bits()) { Real::set_working_bits(bits); }
    ~PrecisionScope() { Real::set_working_bits(saved_); }
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

private:
    mpfr_prec_t saved_;
};

}  // namespace qp
