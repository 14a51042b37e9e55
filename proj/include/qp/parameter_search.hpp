#pragma once
// Parameters c whose critical orbit enters the Cantor set of g = f^3 after n
// steps with a prescribed itinerary, found by certified nested subdivision.

#include "qp/itinerary_schedule.hpp"
#include "qp/real_dynamics.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace qp {

struct KneadingTarget {
    int n = 5;
    std::vector<std::uint8_t> prefix;  // itinerary bits 0..L-1
    int depth_lambda = 0;              // 0 means L + 8
    static KneadingTarget make(int n, const std::string& bits, int depth = 0);
    std::string prefix_str() const;
};

struct MembershipResult {
    bool member = false;
    int chain_fail_index = -1;  // first k with f^k(c) > f^{k+1}(c) or f^{n-1}(c) > 0 violated; -1 if the chain holds
    int escape_index = -1;      // first j with g^j(f^n(c)) outside Y u Y~; -1 if none up to depth
    int depth = 0;
    std::vector<std::string> notes;
};
MembershipResult kn_membership(const QuadMap& f, int n, int depth);

// Bit k is 0 if f^{n+3k}(c) lies in Y, 1 if in Y~. Throws OrbitEscapedCantorSet.
BitItinerary itinerary_of_parameter(const QuadMap& f, int n, int length);

struct SearchOptions {
    long bits = 512;
    unsigned threads = 1;
    std::string domain_lo = "-2";
    std::string domain_hi = "-1.9";
    std::size_t max_kept = 1u << 14;
};

struct SearchResult {
    Real c_lo, c_hi;
    int achieved_length = 0;  // itinerary bits certified on the whole interval
    int depth = 0;            // deepest g-step checked
    int levels = 0;           // bisection levels used
    long bits = 0;
    std::vector<std::string> residuals;
    Real midpoint() const;
    nlohmann::json to_json(const KneadingTarget& t) const;
};

// The target itinerary is the prefix followed by zeros, which picks out a
// single parameter; the result brackets it to width < 2^{-bits/2}.
SearchResult find_parameter(const KneadingTarget& target, const SearchOptions& opt = {});

}  // namespace qp
