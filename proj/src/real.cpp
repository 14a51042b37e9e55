#include "qp/real.hpp"

#include <mutex>
#include <stdexcept>
#include <vector>

namespace qp {

namespace {

thread_local mpfr_prec_t g_bits = 256;

// Terms such as 2^{q s^3} sit near the default exponent limit, so widen it once.
void widen_exponent_range() {
    static std::once_flag once;
    std::call_once(once, [] {
        mpfr_set_emax(mpfr_get_emax_max());
        mpfr_set_emin(mpfr_get_emin_min());
    });
}

}  // namespace

mpfr_prec_t Real::working_bits() { return g_bits; }

void Real::set_working_bits(mpfr_prec_t bits) {
    if (bits < MPFR_PREC_MIN || bits > (1 << 20)) throw std::invalid_argument("precision out of range");
    g_bits = bits;
}

Real::Real() {
    widen_exponent_range();
    mpfr_init2(v_, g_bits);
    mpfr_set_zero(v_, 1);
}

Real::Real(double d) {
    widen_exponent_range();
    mpfr_init2(v_, g_bits < 53 ? 53 : g_bits);
    mpfr_set_d(v_, d, MPFR_RNDN);
}

Real::Real(long v) {
    widen_exponent_range();
    mpfr_init2(v_, g_bits < 64 ? 64 : g_bits);
    mpfr_set_si(v_, v, MPFR_RNDN);
}

Real::Real(const mpz_class& z) {
    widen_exponent_range();
    mpfr_init2(v_, g_bits);
    mpfr_set_z(v_, z.get_mpz_t(), MPFR_RNDN);
}

Real Real::from_string(const std::string& s) {
    Real r;
    if (mpfr_set_str(r.v_, s.c_str(), 10, MPFR_RNDN) != 0) {
        // mpfr_set_str returns nonzero on a partial parse as well as failure
        char* end = nullptr;
        Real t;
        mpfr_strtofr(t.v_, s.c_str(), &end, 10, MPFR_RNDN);
        if (end == s.c_str() || *end != '\0') throw std::invalid_argument("not a decimal number: " + s);
        return t;
    }
    return r;
}

Real Real::with_bits(mpfr_prec_t bits) {
    PrecisionScope ps(bits);
    return Real();
}

Real::Real(const Real& o) {
    mpfr_init2(v_, mpfr_get_prec(o.v_));
    mpfr_set(v_, o.v_, MPFR_RNDN);
}

Real::Real(Real&& o) noexcept {
    mpfr_init2(v_, mpfr_get_prec(o.v_));
    mpfr_swap(v_, o.v_);
}

Real& Real::operator=(const Real& o) {
    if (this != &o) {
        mpfr_set_prec(v_, mpfr_get_prec(o.v_));
        mpfr_set(v_, o.v_, MPFR_RNDN);
    }
    return *this;
}

Real& Real::operator=(Real&& o) noexcept {
    mpfr_swap(v_, o.v_);
    return *this;
}

Real::~Real() { mpfr_clear(v_); }

mpz_class Real::to_mpz_floor() const {
    mpz_class z;
    mpfr_get_z(z.get_mpz_t(), v_, MPFR_RNDD);
    return z;
}

std::string Real::str(std::size_t digits) const {
    if (is_nan()) return "nan";
    if (is_inf()) return sign() > 0 ? "inf" : "-inf";
    if (is_zero()) return "0";
    if (digits == 0) digits = mpfr_get_str_ndigits(10, mpfr_get_prec(v_));
    mpfr_exp_t e = 0;
    char* raw = mpfr_get_str(nullptr, &e, 10, digits, v_, MPFR_RNDN);
    std::string m(raw);
    mpfr_free_str(raw);
    bool neg = false;
    if (!m.empty() && m[0] == '-') {
        neg = true;
        m.erase(0, 1);
    }
    while (m.size() > 1 && m.back() == '0') m.pop_back();
    std::string out;
    // plain notation for moderate exponents, scientific otherwise
    if (e > 0 && e <= 40) {
        if (static_cast<std::size_t>(e) >= m.size()) {
            out = m + std::string(e - m.size(), '0');
        } else {
            out = m.substr(0, e) + "." + m.substr(e);
        }
    } else if (e <= 0 && e > -20) {
        out = "0." + std::string(-e, '0') + m;
    } else {
        out = m.substr(0, 1);
        if (m.size() > 1) out += "." + m.substr(1);
        out += "e" + std::to_string(static_cast<long>(e) - 1);
    }
    return neg ? "-" + out : out;
}

#define QP_BINOP(op, fn)                                   \
    Real& Real::operator op##=(const Real& o) {            \
        fn(v_, v_, o.v_, MPFR_RNDN);                       \
        return *this;                                      \
    }                                                      \
    Real operator op(const Real& a, const Real& b) {       \
        Real r;                                            \
        fn(r.get(), a.get(), b.get(), MPFR_RNDN);          \
        return r;                                          \
    }

QP_BINOP(+, mpfr_add)
QP_BINOP(-, mpfr_sub)
QP_BINOP(*, mpfr_mul)
QP_BINOP(/, mpfr_div)
#undef QP_BINOP

Real Real::operator-() const {
    Real r = *this;
    mpfr_neg(r.v_, r.v_, MPFR_RNDN);
    return r;
}

Real Real::inf(int sgn) {
    Real r;
    mpfr_set_inf(r.v_, sgn);
    return r;
}

Real Real::nan() {
    Real r;
    mpfr_set_nan(r.v_);
    return r;
}

int cmp(const Real& a, const Real& b) { return mpfr_cmp(a.get(), b.get()); }

#define QP_UNARY(name, fn)                 \
    Real name(const Real& a) {             \
        Real r;                            \
        fn(r.get(), a.get(), MPFR_RNDN);   \
        return r;                          \
    }

QP_UNARY(abs, mpfr_abs)
QP_UNARY(sqrt, mpfr_sqrt)
QP_UNARY(log, mpfr_log)
QP_UNARY(log2, mpfr_log2)
QP_UNARY(log1p, mpfr_log1p)
QP_UNARY(exp, mpfr_exp)
QP_UNARY(exp2, mpfr_exp2)
QP_UNARY(expm1, mpfr_expm1)
#undef QP_UNARY

Real floor(const Real& a) {
    Real r;
    mpfr_floor(r.get(), a.get());
    return r;
}

Real ceil(const Real& a) {
    Real r;
    mpfr_ceil(r.get(), a.get());
    return r;
}

Real pow(const Real& a, const Real& b) {
    Real r;
    mpfr_pow(r.get(), a.get(), b.get(), MPFR_RNDN);
    return r;
}

Real min(const Real& a, const Real& b) { return a <= b ? a : b; }
Real max(const Real& a, const Real& b) { return a >= b ? a : b; }

Real ln2() {
    Real r;
    mpfr_const_log2(r.get(), MPFR_RNDN);
    return r;
}

Real pi() {
    Real r;
    mpfr_const_pi(r.get(), MPFR_RNDN);
    return r;
}

Real add_rnd(const Real& a, const Real& b, mpfr_rnd_t rnd) {
    Real r;
    mpfr_add(r.get(), a.get(), b.get(), rnd);
    return r;
}

Real sub_rnd(const Real& a, const Real& b, mpfr_rnd_t rnd) {
    Real r;
    mpfr_sub(r.get(), a.get(), b.get(), rnd);
    return r;
}

Real mul_rnd(const Real& a, const Real& b, mpfr_rnd_t rnd) {
    Real r;
    mpfr_mul(r.get(), a.get(), b.get(), rnd);
    return r;
}

Real sqr_rnd(const Real& a, mpfr_rnd_t rnd) {
    Real r;
    mpfr_sqr(r.get(), a.get(), rnd);
    return r;
}

Real sqrt_rnd(const Real& a, mpfr_rnd_t rnd) {
    Real r;
    mpfr_sqrt(r.get(), a.get(), rnd);
    return r;
}

mpq_class parse_decimal_exact(const std::string& text) {
    std::string s = text;
    if (s.empty()) throw std::invalid_argument("empty number");
    long exp10 = 0;
    auto epos = s.find_first_of("eE");
    if (epos != std::string::npos) {
        exp10 = std::stol(s.substr(epos + 1));
        s = s.substr(0, epos);
    }
    bool neg = false;
    if (s[0] == '-' || s[0] == '+') {
        neg = s[0] == '-';
        s.erase(0, 1);
    }
    auto dot = s.find('.');
    std::string digits = s;
    if (dot != std::string::npos) {
        digits = s.substr(0, dot) + s.substr(dot + 1);
        exp10 -= static_cast<long>(s.size() - dot - 1);
    }
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
        throw std::invalid_argument("not a decimal number: " + text);
    }
    mpz_class num(digits, 10);
    mpz_class p10;
    mpz_ui_pow_ui(p10.get_mpz_t(), 10, static_cast<unsigned long>(exp10 < 0 ? -exp10 : exp10));
    mpq_class q = exp10 >= 0 ? mpq_class(num * p10) : mpq_class(num, p10);
    q.canonicalize();
    return neg ? mpq_class(-q) : q;
}

mpq_class to_mpq(const Real& x) {
    mpq_class q;
    mpfr_get_q(q.get_mpq_t(), x.get());
    return q;
}

Real from_mpq(const mpq_class& q) {
    Real r;
    mpfr_set_q(r.get(), q.get_mpq_t(), MPFR_RNDN);
    return r;
}

}  // namespace qp
