#include "qp/itinerary_schedule.hpp"

#include "qp/errors.hpp"

namespace qp {

using json = nlohmann::json;

const char* hat_name(HatSymbol h) {
    switch (h) {
        case HatSymbol::Zero: return "0";
        case HatSymbol::OnePlus: return "1+";
        case HatSymbol::OneMinus: return "1-";
    }
    return "?";
}

ScheduleScheme schedule_scheme(const std::string& xi_decimal, long q, bool allow_toy) {
    ScheduleScheme out;
    out.q_requested = q;
    out.scheme = PartitionScheme::make(xi_decimal, q, allow_toy);
    if ((out.scheme.q + out.scheme.Xi) % 2 != 0) {
        out.scheme = PartitionScheme::make(xi_decimal, q + 1, allow_toy);
        out.q_adjusted = true;
    }
    return out;
}

namespace {

// Smallest integer S >= 0 with S^2 >= x (x rational, x >= 0).
long ceil_sqrt(const mpq_class& x) {
    mpz_class fl = x.get_num() / x.get_den();
    mpz_class r;
    mpz_sqrt(r.get_mpz_t(), fl.get_mpz_t());
    long S = r.get_si();
    while (S > 0 && mpq_class((S - 1) * (S - 1)) >= x) --S;
    while (mpq_class(S) * S < x) ++S;
    return S;
}

}  // namespace

TauSchedule build_schedule(const PartitionScheme& sc, const mpq_class& Omega, int m_max,
                           const std::optional<UserConstants>& constants) {
    if (Omega < 0) throw DomainError("Omega must be nonnegative");
    if (m_max < 1) throw DomainError("schedule needs m_max >= 1");
    mpq_class two_xi = 2 * sc.xi_exact;
    mpq_class d_plus = mpq_class(sc.Xi) - two_xi;
    mpq_class d_minus = mpq_class(sc.Xi) + two_xi;
    if (d_plus <= 0) throw InvalidScheme("Xi - 2 xi must be positive");

    TauSchedule t;
    t.scheme = sc;
    t.Omega = Omega;
    // tau_0 >= 1 - 1/(400q)  <=>  S_0^2 >= 400 (Xi - 2xi)
    t.S.push_back(ceil_sqrt(400 * d_plus));
    for (int m = 1; m <= m_max; ++m) {
        // smallest integer S with S - Omega - 6 > S_{m-1} sqrt(d_minus / d_plus)
        mpq_class prev2 = mpq_class(t.S.back()) * t.S.back() * d_minus / d_plus;
        long S = ceil_sqrt(prev2) + ceil_sqrt(Omega * Omega) + 6 - 2;
        if (S < 0) S = 0;
        auto ok = [&](long cand) {
            mpq_class y = mpq_class(cand) - Omega - 6;
            return y > 0 && y * y > prev2;
        };
        while (S > 0 && ok(S - 1)) --S;
        while (!ok(S)) ++S;
        t.S.push_back(S);
    }
    for (long S : t.S) {
        mpq_class tau = 1 - d_plus / (mpq_class(sc.q) * S * S);
        tau.canonicalize();
        t.tau.push_back(tau);
    }
    t.ell.push_back(0);
    for (std::size_t m = 1; m < t.S.size(); ++m) t.ell.push_back(t.S[m] - 5);
    for (std::size_t m = 1; m < t.ell.size(); ++m) {
        if (t.ell[m] <= t.ell[m - 1]) throw InvalidScheme("block schedule is not strictly increasing");
    }
    t.unchecked_constraints.push_back(
        "t_{*,sup} (1 - tau_0) log C0 <= t_{*,inf} upsilon0 / (8q): constants not computable here");
    if (constants) {
        Real one_m = from_mpq(1 - t.tau[0]);
        Real lhs = constants->t_sup * one_m * log(constants->C0);
        Real rhs = constants->t_inf * constants->upsilon0 / Real(8L * sc.q);
        t.user_constant_check = lhs <= rhs;
    }
    return t;
}

json TauSchedule::to_json() const {
    json j;
    j["scheme"] = scheme.to_json();
    j["Omega"] = Omega.get_str();
    j["S_m"] = S;
    json taus = json::array();
    for (const auto& x : tau) taus.push_back(x.get_str());
    j["tau_m"] = taus;
    j["ell_m"] = ell;
    j["unchecked_constraints"] = unchecked_constraints;
    j["user_constant_check"] = user_constant_check ? json(*user_constant_check) : json(nullptr);
    return j;
}

Sign SignSequence::at(long m) const {
    if (m < 1) throw DomainError("sign sequence is indexed from 1");
    auto i = static_cast<std::size_t>(m - 1);
    return i < prefix.size() ? prefix[i] : tail;
}

SignSequence SignSequence::parse(const std::string& text) {
    SignSequence s;
    std::string body = text;
    auto comma = text.find(',');
    if (comma != std::string::npos) {
        body = text.substr(0, comma);
        std::string t = text.substr(comma + 1);
        if (t != "+" && t != "-") throw DomainError("sign tail must be + or -");
        s.tail = t == "+" ? Sign::Plus : Sign::Minus;
    } else if (!text.empty()) {
        s.tail = text.back() == '+' ? Sign::Plus : Sign::Minus;
    }
    for (char c : body) {
        if (c == '+') s.prefix.push_back(Sign::Plus);
        else if (c == '-') s.prefix.push_back(Sign::Minus);
        else throw DomainError(std::string("bad sign character '") + c + "'");
    }
    return s;
}

std::string SignSequence::str() const {
    std::string s;
    for (Sign x : prefix) s += x == Sign::Plus ? '+' : '-';
    s += ',';
    s += tail == Sign::Plus ? '+' : '-';
    return s;
}

std::string BitItinerary::str() const {
    std::string s;
    for (auto b : bits) s += b ? '1' : '0';
    return s;
}

namespace {

HatSymbol band_symbol(const TauSchedule& sch, const SignSequence& sg, long k) {
    if (k >= sch.ell.back()) {
        throw ScheduleTooShort("J-block " + std::to_string(k) + " lies beyond ell(m_max) = " +
                               std::to_string(sch.ell.back()));
    }
    long m = 0;
    while (m + 1 < static_cast<long>(sch.ell.size()) && sch.ell[m + 1] <= k) ++m;
    if (m == 0) return HatSymbol::OnePlus;
    return sg.at(m) == Sign::Plus ? HatSymbol::OnePlus : HatSymbol::OneMinus;
}

mpz_class pow2(const mpz_class& e) {
    mpz_class r;
    mpz_mul_2exp(r.get_mpz_t(), mpz_class(1).get_mpz_t(), e.get_ui());
    return r;
}

}  // namespace

HatSymbol hat_symbol_at(const TauSchedule& sch, const SignSequence& sg, const mpz_class& j) {
    if (j < 0) throw DomainError("negative position");
    const PartitionScheme& sc = sch.scheme;
    mpz_class pos = j + 1;
    long floor_log2 = static_cast<long>(mpz_sizeinbase(pos.get_mpz_t(), 2)) - 1;
    long s = 0;
    while (cubic_z(sc, s + 1) <= floor_log2) ++s;
    mpz_class q0 = cubic_z(sc, s), q1 = cubic_z(sc, s + 1);
    mpz_class b = pow2(q0) + q1 - q0 + sc.Xi;
    if (pos < b) return HatSymbol::Zero;
    return band_symbol(sch, sg, s);
}

HatItinerary hat_itinerary(const TauSchedule& sch, const SignSequence& sg, long length) {
    if (length < 1) throw DomainError("itinerary length must be positive");
    const PartitionScheme& sc = sch.scheme;
    HatItinerary h;
    h.sign_seq = sg;
    h.symbols.assign(static_cast<std::size_t>(length), HatSymbol::Zero);
    // positions j+1 in [1, length]; walk the blocks in order
    mpz_class len = length;
    for (long s = 0;; ++s) {
        mpz_class q0 = cubic_z(sc, s), q1 = cubic_z(sc, s + 1);
        if (q0 > 62) break;
        mpz_class a = pow2(q0);
        if (a > len) break;
        mpz_class b = a + q1 - q0 + sc.Xi;
        if (b > len) break;  // rest of the request lies in the I-block
        HatSymbol sym = band_symbol(sch, sg, s);
        mpz_class a1 = q1 <= 62 ? pow2(q1) : len + 1;
        mpz_class end = a1 < len + 1 ? a1 : mpz_class(len + 1);
        for (long p = b.get_si(); p < end.get_si(); ++p) h.symbols[static_cast<std::size_t>(p - 1)] = sym;
    }
    return h;
}

BitItinerary bit_itinerary(const HatItinerary& hat) {
    BitItinerary b;
    b.bits.resize(hat.symbols.size());
    for (std::size_t j = 0; j < hat.symbols.size(); ++j) {
        switch (hat.symbols[j]) {
            case HatSymbol::Zero: b.bits[j] = 0; break;
            case HatSymbol::OnePlus: b.bits[j] = 1; break;
            case HatSymbol::OneMinus: b.bits[j] = (j % 2 == 0) ? 0 : 1; break;
        }
    }
    return b;
}

Compatibility check_compatible(const BitItinerary& bits, const HatItinerary& hat) {
    if (bits.bits.size() != hat.symbols.size()) throw DomainError("length mismatch");
    const auto& x = bits.bits;
    const auto& h = hat.symbols;
    for (std::size_t j = 0; j < h.size(); ++j) {
        bool bad = (h[j] == HatSymbol::Zero && x[j] != 0) || (h[j] == HatSymbol::OnePlus && x[j] != 1) ||
                   (j + 1 < h.size() && h[j] == HatSymbol::OneMinus && h[j + 1] == HatSymbol::OneMinus &&
                    x[j] == x[j + 1]);
        if (bad) return {false, static_cast<long>(j)};
    }
    return {};
}

Compatibility check_admissible(const HatItinerary& hat) {
    const auto& h = hat.symbols;
    for (std::size_t j = 0; j + 1 < h.size(); ++j) {
        if ((h[j] == HatSymbol::OnePlus && h[j + 1] == HatSymbol::OneMinus) ||
            (h[j] == HatSymbol::OneMinus && h[j + 1] == HatSymbol::OnePlus)) {
            return {false, static_cast<long>(j)};
        }
    }
    return {};
}

}  // namespace qp
