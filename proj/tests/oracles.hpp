#pragma once
// Reference values computed straight from the definitions, independent of the
// closed forms in the library. Shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace oracle {

// Union of the I-blocks [2^{Q(s)}, 2^{Q(s)} + Q(s+1) - Q(s) + Xi) for blocks
// whose left end fits in a long, merged into disjoint sorted runs.
struct Blocks {
    long q = 0, Xi = 0;
    std::vector<std::pair<long, long>> raw;     // [a_s, b_s) as listed
    std::vector<std::pair<long, long>> merged;  // disjoint union

    Blocks(long q_, long Xi_) : q(q_), Xi(Xi_) {
        for (long s = 0;; ++s) {
            long Q0 = q * s * s * s, Q1 = q * (s + 1) * (s + 1) * (s + 1);
            if (Q0 > 61) break;
            long a = 1L << Q0;
            raw.push_back({a, a + (Q1 - Q0) + Xi});
        }
        auto v = raw;
        std::sort(v.begin(), v.end());
        for (auto r : v) {
            if (!merged.empty() && r.first <= merged.back().second)
                merged.back().second = std::max(merged.back().second, r.second);
            else
                merged.push_back(r);
        }
    }
    long a(long s) const { return raw.at(s).first; }
    long b(long s) const { return raw.at(s).second; }
    bool in_I(long x) const {
        for (auto r : merged)
            if (r.first <= x && x < r.second) return true;
        return false;
    }
    // number of positions 1..k in the union
    long N(long k) const {
        long n = 0;
        for (auto r : merged) n += std::max(0L, std::min(k + 1, r.second) - std::max(1L, r.first));
        return n;
    }
    // number of maximal runs of constant membership over 1..k
    long B(long k) const {
        if (k <= 0) return 0;
        long runs = 1;
        for (auto r : merged) {
            if (r.first > 1 && r.first <= k) ++runs;
            if (r.second > 1 && r.second <= k) ++runs;
        }
        return runs;
    }
};

// sum_{k=lo}^{hi-1} w(k) 2^{-lambda k - tau N(k) + sign tau xi B(k)}, split as
// the first exponent (kept symbolic through lo, N(lo), B(lo)) and log2 of the
// sum relative to it, so callers can rebuild the total at any precision.
// Compensated summation; the loop stops once terms fall below 2^{-cut} of the
// first (all weights used here make the summands eventually decreasing).
struct BlockSum {
    long lo = 0, N0 = 0, B0 = 0;
    long double rel = -INFINITY;  // log2 of the sum over the first term's 2-power
    bool empty() const { return std::isinf(rel); }
    template <class R>
    R log2_total(const R& lambda, const R& tau, const R& xi, int sign) const {
        return -(lambda * R(lo)) - tau * R(N0) + R(long(sign)) * tau * xi * R(B0) + R(double(rel));
    }
};

inline BlockSum block_sum(const Blocks& bl, long lo, long hi, int sign, long double xi, long double tau,
                          long double lambda, const std::function<long double(long)>& w = nullptr,
                          long double cut = 200) {
    BlockSum r;
    r.lo = lo;
    if (hi <= lo) return r;
    r.N0 = bl.N(lo);
    r.B0 = bl.B(lo);
    long n = r.N0, runs = r.B0;
    long double sum = 0, comp = 0;
    for (long k = lo; k < hi; ++k) {
        if (k > lo) {
            bool now = bl.in_I(k), before = bl.in_I(k - 1);
            n += now;
            runs += (now != before);
        }
        long double e = -lambda * (k - lo) - tau * (n - r.N0) + sign * tau * xi * (runs - r.B0);
        long double term = std::exp2(e) * (w ? w(k) : 1.0L);
        long double y = term - comp, t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if (e < -cut && k - lo > 64) break;
    }
    r.rel = std::log2(sum);
    return r;
}

}  // namespace oracle
