#pragma once
// Temperature ladder, block schedule, and the two itinerary families built
// from a sign sequence: symbols over {0, 1+, 1-} and the {0,1} coding.

#include "qp/partition_core.hpp"

#include <gmpxx.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qp {

enum class HatSymbol : std::uint8_t { Zero = 0, OnePlus = 1, OneMinus = 2 };
const char* hat_name(HatSymbol h);

// For schedules the partition needs q + Xi even; q is bumped by one if not.
struct ScheduleScheme {
    PartitionScheme scheme;
    bool q_adjusted = false;
    long q_requested = 0;
};
ScheduleScheme schedule_scheme(const std::string& xi_decimal, long q, bool allow_toy);

struct UserConstants {
    // t_{*,sup}, t_{*,inf}, C0, upsilon0 for the log-constant condition on tau_0
    Real t_sup, t_inf, C0, upsilon0;
};

struct TauSchedule {
    PartitionScheme scheme;
    mpq_class Omega;
    std::vector<long> S;          // S_m = s+(tau_m)
    std::vector<mpq_class> tau;   // tau_m = 1 - (Xi - 2xi)/(q S_m^2), exact
    std::vector<long> ell;        // ell(0) = 0, ell(m) = S_m - 5
    std::vector<std::string> unchecked_constraints;
    std::optional<bool> user_constant_check;  // set when constants were supplied

    nlohmann::json to_json() const;
};

TauSchedule build_schedule(const PartitionScheme& sc, const mpq_class& Omega, int m_max,
                           const std::optional<UserConstants>& constants = std::nullopt);

// Sign sequence indexed from 1: a finite prefix then a constant tail.
struct SignSequence {
    std::vector<Sign> prefix;
    Sign tail = Sign::Plus;
    Sign at(long m) const;  // m >= 1
    static SignSequence parse(const std::string& text);  // e.g. "+-+" or "+-+,-" (tail after comma)
    std::string str() const;
};

struct HatItinerary {
    std::vector<HatSymbol> symbols;
    SignSequence sign_seq;
};

struct BitItinerary {
    std::vector<std::uint8_t> bits;
    std::string str() const;
};

// Symbol at a single (possibly astronomically large) position.
HatSymbol hat_symbol_at(const TauSchedule& sch, const SignSequence& sg, const mpz_class& j);
HatItinerary hat_itinerary(const TauSchedule& sch, const SignSequence& sg, long length);
BitItinerary bit_itinerary(const HatItinerary& hat);

struct Compatibility {
    bool ok = true;
    long first_violation = -1;
};
Compatibility check_compatible(const BitItinerary& bits, const HatItinerary& hat);
// No 1+ directly followed by 1-, or the reverse.
Compatibility check_admissible(const HatItinerary& hat);

}  // namespace qp
