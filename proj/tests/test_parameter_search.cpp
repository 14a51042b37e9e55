#include "doctest.h"

#include "qp/errors.hpp"
#include "qp/parameter_search.hpp"

using namespace qp;

namespace {

bool reproduces(const SearchResult& r, int n, const std::string& prefix, long bits) {
    for (const Real& c : {r.c_lo, r.midpoint(), r.c_hi}) {
        auto it = itinerary_of_parameter(QuadMap::make(c, bits), n, (int)prefix.size());
        if (it.str() != prefix) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("membership is false outside the open domain") {
    auto m = kn_membership(QuadMap::make("-2", 256), 5, 4);
    CHECK_FALSE(m.member);
    CHECK_FALSE(m.notes.empty());
}

TEST_CASE("membership reports where the monotone chain fails") {
    auto m = kn_membership(QuadMap::make("-1.7549", 256), 5, 4);
    CHECK_FALSE(m.member);
    CHECK(m.chain_fail_index >= 1);
    CHECK(m.chain_fail_index <= 4);
}

TEST_CASE("round trip for short prefixes") {
    for (const char* p : {"0", "1", "0110"}) {
        auto t = KneadingTarget::make(5, p);
        auto r = find_parameter(t);
        CHECK(r.achieved_length >= (int)t.prefix.size());
        CHECK(r.c_lo < r.c_hi);
        CHECK(log2(r.c_hi - r.c_lo) < Real(-256L));
        CHECK(reproduces(r, 5, p, 512));
        // membership is certified on the whole bracket up to the resolved length
        for (const Real& c : {r.c_lo, r.midpoint(), r.c_hi}) {
            auto mem = kn_membership(QuadMap::make(c, 512), 5, r.achieved_length - 1);
            CHECK(mem.member);
            CHECK(mem.chain_fail_index == -1);
        }
    }
}

TEST_CASE("itinerary is stable under doubled precision") {
    auto r = find_parameter(KneadingTarget::make(5, "1011"));
    auto a = itinerary_of_parameter(QuadMap::make(r.midpoint(), 512), 5, 8);
    auto b = itinerary_of_parameter(QuadMap::make(r.midpoint(), 1024), 5, 8);
    CHECK(a.str() == b.str());
    CHECK(itinerary_of_parameter(QuadMap::make(r.midpoint(), 512), 5, 0).bits.empty());
}

TEST_CASE("the all-zero target reads back as zeros") {
    auto r = find_parameter(KneadingTarget::make(5, "00000000"));
    CHECK(itinerary_of_parameter(QuadMap::make(r.midpoint(), 512), 5, 8).str() == "00000000");
}

TEST_CASE("distinct prefixes give disjoint intervals") {
    std::vector<SearchResult> rs;
    std::vector<std::string> ps{"000", "001", "010", "011", "100", "101", "110", "111"};
    for (const auto& p : ps) rs.push_back(find_parameter(KneadingTarget::make(5, p)));
    for (std::size_t i = 0; i < rs.size(); ++i)
        for (std::size_t j = i + 1; j < rs.size(); ++j) CHECK((rs[i].c_hi < rs[j].c_lo || rs[j].c_hi < rs[i].c_lo));
}

TEST_CASE("a parameter off the Cantor set escapes") {
    // the chain holds for n = 5 on (-2, -1.9) only on a small set
    auto f = QuadMap::make("-1.93", 256);
    auto m = kn_membership(f, 5, 6);
    CHECK_FALSE(m.member);
    if (m.chain_fail_index == -1) CHECK_THROWS_AS(itinerary_of_parameter(f, 5, 6), OrbitEscapedCantorSet);
}

TEST_CASE("search rejects bad input") {
    CHECK_THROWS(KneadingTarget::make(5, "01x"));
    SearchOptions o;
    o.domain_lo = "-1.5";
    o.domain_hi = "-1.6";
    CHECK_THROWS_AS(find_parameter(KneadingTarget::make(5, "0"), o), DomainError);
}
