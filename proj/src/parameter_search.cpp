#include "qp/parameter_search.hpp"

#include "qp/errors.hpp"
#include "qp/parallel.hpp"

#include <algorithm>

namespace qp {

using json = nlohmann::json;

KneadingTarget KneadingTarget::make(int n, const std::string& bits, int depth) {
    if (n < 3) throw DomainError("n must be >= 3");
    if (bits.empty()) throw DomainError("prefix must be nonempty");
    KneadingTarget t;
    t.n = n;
    t.depth_lambda = depth;
    for (char ch : bits) {
        if (ch != '0' && ch != '1') throw DomainError(std::string("bad prefix character '") + ch + "'");
        t.prefix.push_back(static_cast<std::uint8_t>(ch - '0'));
    }
    return t;
}

std::string KneadingTarget::prefix_str() const {
    std::string s;
    for (auto b : prefix) s += static_cast<char>('0' + b);
    return s;
}

MembershipResult kn_membership(const QuadMap& f, int n, int depth) {
    PrecisionScope ps(f.bits);
    MembershipResult r;
    r.depth = depth;
    if (!(f.c > Real(-2L) && f.c < Real(-0.75))) {
        r.notes.push_back("c outside (-2, -3/4)");
        return r;
    }
    auto o = orbit_log_derivative(f, f.c, n + 3 * depth);
    // o.x[k] = f^k(c)
    for (int k = 1; k + 1 <= n - 1; ++k) {
        if (!(o.x[k] > o.x[k + 1])) {
            r.chain_fail_index = k;
            r.notes.push_back("f^" + std::to_string(k) + "(c) > f^" + std::to_string(k + 1) + "(c) fails");
            return r;
        }
    }
    if (!(o.x[n - 1].sign() > 0)) {
        r.chain_fail_index = n - 1;
        r.notes.push_back("f^" + std::to_string(n - 1) + "(c) > 0 fails");
        return r;
    }
    PuzzleIntervalsR pz;
    try {
        pz = puzzle_intervals(f);
    } catch (const BranchResolutionFailure& e) {
        r.notes.push_back(e.what());
        return r;
    }
    for (int j = 0; j <= depth; ++j) {
        const Real& v = o.x[n + 3 * j];
        if (!pz.Y.contains(v) && !pz.Ytilde.contains(v)) {
            r.escape_index = j;
            r.notes.push_back("g^" + std::to_string(j) + "(f^n(c)) leaves Y u Y~");
            return r;
        }
    }
    r.member = true;
    return r;
}

BitItinerary itinerary_of_parameter(const QuadMap& f, int n, int length) {
    BitItinerary b;
    if (length <= 0) return b;
    PrecisionScope ps(f.bits);
    auto pz = puzzle_intervals(f);
    auto o = orbit_log_derivative(f, f.c, n + 3 * (length - 1));
    for (int k = 0; k < length; ++k) {
        const Real& v = o.x[n + 3 * k];
        if (pz.Y.contains(v)) b.bits.push_back(0);
        else if (pz.Ytilde.contains(v)) b.bits.push_back(1);
        else throw OrbitEscapedCantorSet("f^{n+3k}(c) outside Y u Y~ at k = " + std::to_string(k));
    }
    return b;
}

Real SearchResult::midpoint() const {
    PrecisionScope ps(bits);
    return (c_lo + c_hi) / Real(2L);
}

json SearchResult::to_json(const KneadingTarget& t) const {
    return {{"n", t.n},
            {"prefix", t.prefix_str()},
            {"target_tail", "0"},
            {"c_lo", c_lo.str(0)},
            {"c_hi", c_hi.str(0)},
            {"achieved_length", achieved_length},
            {"depth", depth},
            {"levels", levels},
            {"precision_bits", bits},
            {"residuals", residuals},
            {"assumption_flags",
             {"Cantor-set membership checked to finite depth only",
              "itinerary continued by zeros beyond the prefix to single out one parameter",
              "gamma selected as the root of f^2(x) = -alpha with x < 0 and f(x) < alpha"}}};
}

namespace {

// Closed interval with outward rounding.
struct RI {
    Real lo, hi;
};

RI ri_point(const Real& x) { return {x, x}; }
RI add(const RI& a, const RI& b) { return {add_rnd(a.lo, b.lo, MPFR_RNDD), add_rnd(a.hi, b.hi, MPFR_RNDU)}; }
RI neg(const RI& a) { return {-a.hi, -a.lo}; }
RI sub(const RI& a, const RI& b) { return add(a, neg(b)); }

RI sqr(const RI& a) {
    if (a.lo.sign() >= 0) return {sqr_rnd(a.lo, MPFR_RNDD), sqr_rnd(a.hi, MPFR_RNDU)};
    if (a.hi.sign() <= 0) return {sqr_rnd(a.hi, MPFR_RNDD), sqr_rnd(a.lo, MPFR_RNDU)};
    Real m = max(-a.lo, a.hi);
    return {Real(0L), sqr_rnd(m, MPFR_RNDU)};
}

// sqrt on the nonnegative part; false if the interval lies below zero.
bool ri_sqrt(const RI& a, RI& out) {
    if (a.hi.sign() < 0) return false;
    Real lo = a.lo.sign() < 0 ? Real(0L) : a.lo;
    out = {sqrt_rnd(lo, MPFR_RNDD), sqrt_rnd(a.hi, MPFR_RNDU)};
    return true;
}

RI scale_half(const RI& a) {
    RI r = a;
    mpfr_div_2ui(r.lo.get(), r.lo.get(), 1, MPFR_RNDD);
    mpfr_div_2ui(r.hi.get(), r.hi.get(), 1, MPFR_RNDU);
    return r;
}

// Enclosure of the piece endpoints inv(alpha), inv(-alpha) over a parameter interval.
struct PieceEncl {
    bool ok = false;
    Real lo_min, hi_max;  // outer hull
    Real lo_max, hi_min;  // inner core (certain membership)
};

bool inv_branch(const RI& C, const int s[3], const RI& y, RI& out) {
    RI v = y;
    for (int k = 2; k >= 0; --k) {
        RI r;
        if (!ri_sqrt(sub(v, C), r)) return false;
        v = s[k] < 0 ? neg(r) : r;
    }
    out = v;
    return true;
}

PieceEncl piece(const RI& C, const RI& alpha, const int s[3]) {
    PieceEncl p;
    RI e1, e2;
    if (!inv_branch(C, s, alpha, e1) || !inv_branch(C, s, neg(alpha), e2)) return p;
    // which endpoint is lower depends on the branch orientation; use hulls
    RI lo = e1.hi < e2.lo ? e1 : e2;
    RI hi = e1.hi < e2.lo ? e2 : e1;
    if (!(lo.hi < hi.lo)) {
        // endpoint enclosures overlap: only the outer hull is meaningful
        p.ok = true;
        p.lo_min = min(e1.lo, e2.lo);
        p.hi_max = max(e1.hi, e2.hi);
        p.lo_max = p.hi_max;
        p.hi_min = p.lo_min;
        return p;
    }
    p.ok = true;
    p.lo_min = lo.lo;
    p.lo_max = lo.hi;
    p.hi_min = hi.lo;
    p.hi_max = hi.hi;
    return p;
}

struct CellVerdict {
    bool discard = false;
    int resolved = 0;  // target bits certified over the whole cell
    int depth = -1;    // deepest j examined
};

CellVerdict judge(const RI& C, const KneadingTarget& t, int j_max, const int sY[3], const int sYt[3]) {
    CellVerdict v;
    const int n = t.n;
    std::vector<RI> orb;
    orb.reserve(n + 1);
    orb.push_back(C);
    for (int k = 1; k <= n; ++k) orb.push_back(add(sqr(orb.back()), C));
    for (int k = 1; k + 1 <= n - 1; ++k) {
        if (orb[k].hi <= orb[k + 1].lo) {
            v.discard = true;
            return v;
        }
    }
    if (orb[n - 1].hi.sign() <= 0) {
        v.discard = true;
        return v;
    }
    // alpha = (1 - sqrt(1 - 4c)) / 2
    RI d = sub(ri_point(Real(1L)), add(add(add(C, C), C), C));
    RI sd;
    if (!ri_sqrt(d, sd)) {
        v.discard = true;
        return v;
    }
    RI alpha = scale_half(sub(ri_point(Real(1L)), sd));
    PieceEncl Y = piece(C, alpha, sY), Yt = piece(C, alpha, sYt);
    if (!Y.ok || !Yt.ok) return v;
    RI x = orb[n];
    bool certain = true;
    for (int j = 0; j <= j_max; ++j) {
        if (j > 0) {
            for (int r = 0; r < 3; ++r) x = add(sqr(x), C);
        }
        if (x.lo.is_nan() || x.hi.is_nan()) return v;
        int bit = j < static_cast<int>(t.prefix.size()) ? t.prefix[j] : 0;
        const PieceEncl& T = bit == 0 ? Y : Yt;
        if (x.hi < T.lo_min || x.lo > T.hi_max) {
            v.discard = true;
            return v;
        }
        v.depth = j;
        bool inside = x.lo >= T.lo_max && x.hi <= T.hi_min;
        if (!inside) {
            certain = false;
            // once an enclosure spans a whole piece nothing deeper can be decided
            if (x.hi - x.lo > T.hi_max - T.lo_min) return v;
        }
        if (certain) v.resolved = j + 1;
    }
    return v;
}

struct Cell {
    Real lo, hi;
};

}  // namespace

SearchResult find_parameter(const KneadingTarget& t, const SearchOptions& opt) {
    if (t.prefix.empty()) throw DomainError("empty prefix");
    if (opt.bits < 64) throw DomainError("need at least 64 bits");
    PrecisionScope ps(opt.bits);
    Real dlo = from_mpq(parse_decimal_exact(opt.domain_lo));
    Real dhi = from_mpq(parse_decimal_exact(opt.domain_hi));
    if (!(dlo < dhi) || dlo < Real(-2L) || dhi > Real(-0.75)) throw DomainError("search domain must lie in [-2, -3/4]");

    // branch orientation of Y and Y~ is constant on the domain; read it at its upper end
    auto f_ref = QuadMap::make(dhi, opt.bits);
    auto pz_ref = puzzle_intervals(f_ref);

    const int L = static_cast<int>(t.prefix.size());
    const int j_max = std::max<int>(L + 8, static_cast<int>(opt.bits / 3));
    Real target_w(1L);
    mpfr_mul_2si(target_w.get(), target_w.get(), -opt.bits / 2, MPFR_RNDN);

    std::vector<Cell> kept{{dlo, dhi}};
    SearchResult res;
    res.bits = opt.bits;
    const int max_levels = static_cast<int>(opt.bits) + 64;
    std::vector<CellVerdict> last;
    for (int level = 1; level <= max_levels; ++level) {
        std::vector<Cell> cand;
        cand.reserve(kept.size() * 2);
        for (const auto& c : kept) {
            Real m = (c.lo + c.hi) / Real(2L);
            cand.push_back({c.lo, m});
            cand.push_back({m, c.hi});
        }
        std::vector<CellVerdict> verdict(cand.size());
        parallel_for(cand.size(), opt.threads, [&](std::size_t i) {
            PrecisionScope inner(opt.bits);
            verdict[i] = judge({cand[i].lo, cand[i].hi}, t, j_max, pz_ref.sY, pz_ref.sYt);
        });
        std::vector<Cell> next;
        std::vector<CellVerdict> nv;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            if (!verdict[i].discard) {
                next.push_back(cand[i]);
                nv.push_back(verdict[i]);
            }
        }
        if (next.empty()) throw TargetNotRealized("no parameter cell consistent with prefix " + t.prefix_str());
        if (next.size() > opt.max_kept) throw AmbiguousBracket("kept set exceeds " + std::to_string(opt.max_kept));
        kept = std::move(next);
        last = std::move(nv);
        res.levels = level;
        // contiguous cells merge into one bracket
        bool contiguous = true;
        for (std::size_t i = 1; i < kept.size(); ++i) {
            if (!(kept[i].lo == kept[i - 1].hi)) contiguous = false;
        }
        if (contiguous && kept.back().hi - kept.front().lo < target_w) break;
        if (level == max_levels) {
            throw AmbiguousBracket(std::to_string(kept.size()) + " separate cells remain after " +
                                   std::to_string(level) + " levels");
        }
    }
    res.c_lo = kept.front().lo;
    res.c_hi = kept.back().hi;
    res.achieved_length = last.front().resolved;
    res.depth = last.front().depth;
    for (const auto& v : last) {
        res.achieved_length = std::min(res.achieved_length, v.resolved);
        res.depth = std::min(res.depth, v.depth);
    }

    // sampled round trip at both ends and the midpoint
    for (const Real& c : {res.c_lo, res.midpoint(), res.c_hi}) {
        auto f = QuadMap::make(c, opt.bits);
        auto mem = kn_membership(f, t.n, L - 1);
        auto it = itinerary_of_parameter(f, t.n, L);
        bool ok = mem.member;
        for (int k = 0; k < L; ++k) ok = ok && it.bits[k] == t.prefix[k];
        res.residuals.push_back("c=" + c.str(25) + " member=" + (mem.member ? "1" : "0") + " itinerary=" + it.str() +
                                (ok ? " ok" : " MISMATCH"));
        if (!ok) throw TargetNotRealized("sampled point does not reproduce prefix " + t.prefix_str());
    }
    if (res.achieved_length < L) {
        throw TargetNotRealized("prefix certified only to length " + std::to_string(res.achieved_length));
    }
    return res;
}

}  // namespace qp
