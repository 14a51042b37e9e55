#include "qp/partition_core.hpp"

#include "qp/errors.hpp"
#include "qp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace qp {

using json = nlohmann::json;

namespace {

Real at_working(const Real& x) {
    Real r;
    mpfr_set(r.get(), x.get(), MPFR_RNDN);
    return r;
}

Real neg_inf() { return Real::inf(-1); }

Real Xi_r(const PartitionScheme& sc) { return Real(sc.Xi); }

// Xi - 2 xi for the plus sign, Xi + 2 xi for the minus sign.
Real shifted_Xi(const PartitionScheme& sc, Sign sg) { return Xi_r(sc) - Real(2L * as_int(sg)) * sc.xi; }

// Block data for an integer index, all as reals at working precision.
struct Blk {
    long j;
    Real Q0, Q1;  // Q(j), Q(j+1)
    Real a, lenI, lenJ;
};

Blk blk(const PartitionScheme& sc, long j) {
    Blk B;
    B.j = j;
    B.Q0 = cubic(sc, Real(j));
    B.Q1 = cubic(sc, Real(j + 1));
    B.a = exp2(B.Q0);
    B.lenI = B.Q1 - B.Q0 + Xi_r(sc);
    Real a1 = exp2(B.Q1);
    B.lenJ = (a1 - B.a) - B.lenI;
    return B;
}

// lambda * b_j without forming b_j itself
Real lambda_b(const Blk& B, const Real& lambda) { return lambda * B.a + lambda * B.lenI; }

// 2^{pref} * sum_{m=0}^{K-1} (A + m) 2^{-h m}
ExtendedLogValue lin_block(const Real& pref, const Real& A, const Real& h, const Real& K) {
    if (K.sign() <= 0) return {};
    ExtendedLogValue acc;
    if (A.sign() > 0) acc += ExtendedLogValue::from_log2(log2(A) + log2_geometric(h, K));
    if (K >= Real(2L)) acc += ExtendedLogValue::from_log2(log2_arith_geometric(h, K));
    return acc.scaled_log2(pref);
}

ExtendedLogValue geo_block(const Real& pref, const Real& h, const Real& K) {
    if (K.sign() <= 0) return {};
    return ExtendedLogValue::from_log2(pref + log2_geometric(h, K));
}

Real J_prefactor(const PartitionScheme& sc, const Blk& B, Sign sg, const Real& tau) {
    return -(tau * (B.Q1 + shifted_Xi(sc, sg) * Real(B.j + 1)));
}

// log2 of the common factor of I-block terms: pi_k = 2^{C - h m}, k = a_j + m - 1
Real I_prefactor(const PartitionScheme& sc, const Blk& B, Sign sg, const Real& tau, const Real& lambda) {
    Real lam_a1 = lambda * B.a - lambda;
    Real C = -lam_a1 - tau * (B.Q0 + Xi_r(sc) * Real(B.j));
    C += Real(static_cast<long>(as_int(sg))) * tau * sc.xi * Real(2 * B.j + 1);
    return C;
}

ExtendedLogValue J_block(const PartitionScheme& sc, const Blk& B, Sign sg, const Real& tau, const Real& lambda) {
    return geo_block(J_prefactor(sc, B, sg, tau) - lambda_b(B, lambda), lambda, B.lenJ);
}

ExtendedLogValue I_block(const PartitionScheme& sc, const Blk& B, Sign sg, const Real& tau, const Real& lambda) {
    Real h = lambda + tau;
    return geo_block(I_prefactor(sc, B, sg, tau, lambda) - h, h, B.lenI);
}

ExtendedLogValue J_hat_block(const PartitionScheme& sc, const Blk& B, Sign sg, const Real& tau, const Real& lambda) {
    Real sq = Real(B.j * B.j);
    Real K = B.lenJ - sq;
    if (K.sign() <= 0) return {};
    Real shift = lambda * B.a + lambda * (B.lenI + sq);
    return lin_block(J_prefactor(sc, B, sg, tau) - shift, Real(1L), lambda, K);
}

ExtendedLogValue J_tilde_block(const PartitionScheme& sc, const Blk& B, const Real& tau, const Real& lambda) {
    Real b = B.a + B.lenI;
    return lin_block(J_prefactor(sc, B, Sign::Plus, tau) - lambda_b(B, lambda), b, lambda, B.lenJ);
}

ExtendedLogValue I_tilde_block(const PartitionScheme& sc, const Blk& B, const Real& tau, const Real& lambda) {
    Real h = lambda + tau;
    return lin_block(I_prefactor(sc, B, Sign::Plus, tau, lambda) - h, B.a, h, B.lenI);
}

Real log2_one_minus_pow2(const Real& e) {
    // log2(1 - 2^{e}) for e < 0
    return log1p(-exp2(e)) / ln2();
}

// Certified bound on sum_{j >= j0} (I_j + J_j), from geometric domination with
// nonincreasing block ratios.
ExtendedLogValue tail_bound(const PartitionScheme& sc, Sign sg, const Real& tau, const Real& lambda, long j0) {
    if (tau.sign() <= 0) throw TailNotCertifiable("tau must be positive");
    Blk B0 = blk(sc, j0), B1 = blk(sc, j0 + 1), B2 = blk(sc, j0 + 2);
    Real sig2xi = Real(2L * as_int(sg)) * sc.xi;
    Real L2 = ln2();

    // I-blocks
    Real h = lambda + tau;
    Real UI = I_prefactor(sc, B0, sg, tau, lambda) - h - log2(-expm1(-h * L2));
    Real eI = -(lambda * B1.a - lambda * B0.a) - tau * (B0.lenI) + tau * sig2xi;
    if (eI.sign() >= 0) throw TailNotCertifiable("I-block ratio not below one at block " + std::to_string(j0));
    ExtendedLogValue tI = ExtendedLogValue::from_log2(UI - log2_one_minus_pow2(eI));

    // J-blocks, two dominating sequences; keep the smaller valid one
    Real sX = shifted_Xi(sc, sg);
    Real dQ = B1.Q1 - B0.Q1;  // Q(j0+2) - Q(j0+1)
    Real lb0 = lambda_b(B0, lambda), lb1 = lambda_b(B1, lambda);
    Real dlb = lb1 - lb0;
    std::optional<ExtendedLogValue> tJ;
    {
        Real one_m = Real(1L) - tau;
        Real UJ = one_m * B0.Q1 - tau * sX * Real(j0 + 1) - lb0;
        Real eJ = one_m * dQ - tau * sX - dlb;
        bool monotone = one_m.sign() <= 0;
        if (!monotone && lambda.sign() > 0) {
            // (1-tau) * second difference of Q  <=  lambda * (a_{j0+2} - 2 a_{j0+1})
            Real lhs = one_m * Real(6L * sc.q * (j0 + 2));
            Real a_j2 = exp2(B2.Q0);
            Real rhs = lambda * (a_j2 - Real(2L) * B1.a);
            monotone = lhs <= rhs;
        }
        if (monotone && eJ.sign() < 0) tJ = ExtendedLogValue::from_log2(UJ - log2_one_minus_pow2(eJ));
    }
    if (lambda.sign() > 0) {
        Real UJ = J_prefactor(sc, B0, sg, tau) - lb0 - log2(-expm1(-lambda * L2));
        Real eJ = -tau * (dQ + sX) - dlb;
        if (eJ.sign() < 0) {
            auto cand = ExtendedLogValue::from_log2(UJ - log2_one_minus_pow2(eJ));
            if (!tJ || cand < *tJ) tJ = cand;
        }
    }
    if (!tJ) {
        throw TailNotCertifiable(lambda.is_zero() && tau < Real(1L)
                                     ? std::string("series diverges for lambda = 0 and tau < 1")
                                     : "J-block decay not certified at block " + std::to_string(j0));
    }
    return tI + *tJ;
}

struct Accum {
    ExtendedLogValue value = ExtendedLogValue::one();
    long next = 0;  // next block index to add
};

void add_blocks(const PartitionScheme& sc, Sign sg, const Real& tau, const Real& lambda, Accum& acc, long upto) {
    for (; acc.next <= upto; ++acc.next) {
        Blk B = blk(sc, acc.next);
        acc.value += I_block(sc, B, sg, tau, lambda);
        acc.value += J_block(sc, B, sg, tau, lambda);
    }
}

void add_weighted_blocks(const PartitionScheme& sc, const Real& tau, const Real& lambda, Accum& acc, long upto) {
    for (; acc.next <= upto; ++acc.next) {
        Blk B = blk(sc, acc.next);
        acc.value += I_tilde_block(sc, B, tau, lambda);
        acc.value += J_tilde_block(sc, B, tau, lambda);
    }
}

ExtendedLogValue weighted_tail(const PartitionScheme& sc, const Real& tau, const Real& lambda, long j0) {
    if (lambda.sign() <= 0) throw TailNotCertifiable("weighted series needs lambda > 0");
    // k 2^{-lambda k} <= (2 / (e lambda ln 2)) 2^{-lambda k / 2}
    Real half = lambda / Real(2L);
    Real factor = log2(Real(2L) / (exp(Real(1L)) * lambda * ln2()));
    return tail_bound(sc, Sign::Plus, tau, half, j0).scaled_log2(factor);
}

bool tail_small(const SeriesValue& v, long rel_bits) {
    if (v.tail_bound.is_zero()) return true;
    return v.tail_bound.log2() <= v.value.log2() - Real(rel_bits);
}

}  // namespace

// ---------------------------------------------------------------------------

PartitionScheme PartitionScheme::make(const Real& xi, long q, bool allow_toy) {
    if (xi.sign() <= 0) throw InvalidScheme("xi must be positive");
    if (q <= 0) throw InvalidScheme("q must be positive");
    PartitionScheme sc;
    sc.xi = xi;
    sc.xi_exact = to_mpq(xi);
    sc.Xi = ceil(Real(2L) * xi).to_long_floor() + 1;
    sc.q = q;
    if (q < 100 * (sc.Xi + 1)) sc.violations.push_back("q >= 100(Xi+1) fails");
    // 2^{q-3} >= q + 1 + Xi
    if (q - 3 < 62 && (q < 3 || (1L << (q - 3)) < q + 1 + sc.Xi)) sc.violations.push_back("2^(q-3) >= q+1+Xi fails");
    sc.strict_mode = sc.violations.empty();
    if (!sc.strict_mode && !allow_toy) {
        throw InvalidScheme("scheme violates strict constraints (" + sc.violations.front() + "); pass the toy flag");
    }
    return sc;
}

PartitionScheme PartitionScheme::make(const std::string& xi_decimal, long q, bool allow_toy) {
    mpq_class x = parse_decimal_exact(xi_decimal);
    PartitionScheme sc = make(from_mpq(x), q, allow_toy);
    sc.xi_exact = x;
    return sc;
}

json PartitionScheme::to_json() const {
    return json{{"xi", xi.str(20)}, {"Xi", Xi}, {"q", q}, {"strict_mode", strict_mode},
                {"toy_regime", !strict_mode}, {"violations", violations}};
}

Real cubic(const PartitionScheme& sc, const Real& s) { return Real(sc.q) * s * s * s; }

mpz_class cubic_z(const PartitionScheme& sc, long s) {
    mpz_class z = s;
    return z * z * z * sc.q;
}

BlockIndices block_bounds(const PartitionScheme& sc, const Real& s) {
    if (s.sign() < 0) throw DomainError("block index must be nonnegative");
    BlockIndices bi;
    bi.s = s;
    Real Q0 = cubic(sc, s);
    Real Q1 = cubic(sc, s + Real(1L));
    bi.a = exp2(Q0);
    bi.a_next = exp2(Q1);
    bi.len_I = Q1 - Q0 + Xi_r(sc);
    bi.b = bi.a + bi.len_I;
    bi.len_J = (bi.a_next - bi.a) - bi.len_I;
    if (s.is_integer() && Q1 <= Real(kExactEndpointBits)) {
        long si = s.to_long_floor();
        mpz_class q0 = cubic_z(sc, si), q1 = cubic_z(sc, si + 1);
        bi.exact = true;
        mpz_mul_2exp(bi.a_z.get_mpz_t(), mpz_class(1).get_mpz_t(), q0.get_ui());
        mpz_mul_2exp(bi.a_next_z.get_mpz_t(), mpz_class(1).get_mpz_t(), q1.get_ui());
        bi.b_z = bi.a_z + q1 - q0 + sc.Xi;
        bi.len_J = Real(mpz_class(bi.a_next_z - bi.b_z));
        bi.b = Real(bi.b_z);
    }
    return bi;
}

namespace {

// Largest s with a_s <= k (k >= 1).
long block_of(const PartitionScheme& sc, const mpz_class& k) {
    long floor_log2 = static_cast<long>(mpz_sizeinbase(k.get_mpz_t(), 2)) - 1;
    long s = 0;
    while (cubic_z(sc, s + 1) <= floor_log2) ++s;
    return s;
}

}  // namespace

mpz_class count_N(const PartitionScheme& sc, const mpz_class& k) {
    if (k < 0) throw DomainError("k must be nonnegative");
    if (k == 0) return 0;
    long s = block_of(sc, k);
    BlockIndices bi = block_bounds(sc, Real(s));
    mpz_class Qs = cubic_z(sc, s), Qs1 = cubic_z(sc, s + 1);
    if (k < bi.b_z) return k + 1 - bi.a_z + Qs + mpz_class(sc.Xi) * s;
    return Qs1 + mpz_class(sc.Xi) * (s + 1);
}

mpz_class count_B(const PartitionScheme& sc, const mpz_class& k) {
    if (k < 0) throw DomainError("k must be nonnegative");
    if (k == 0) return 0;
    long s = block_of(sc, k);
    BlockIndices bi = block_bounds(sc, Real(s));
    return k < bi.b_z ? 2 * s + 1 : 2 * s + 2;
}

CountTable count_enumerate(const PartitionScheme& sc, long kmax) {
    // membership of the positions 1..kmax in the union of [a_s, b_s)
    std::vector<char> in_I(static_cast<std::size_t>(kmax) + 2, 0);
    for (long s = 0;; ++s) {
        mpz_class q0 = cubic_z(sc, s), q1 = cubic_z(sc, s + 1);
        if (q0 > 62) break;
        long a = 1L << q0.get_si();
        if (a > kmax + 1) break;
        long b = a + mpz_class(q1 - q0).get_si() + sc.Xi;
        for (long x = a; x < b && x <= kmax + 1; ++x) in_I[x] = 1;
    }
    CountTable t;
    t.N.assign(static_cast<std::size_t>(kmax) + 1, 0);
    t.B.assign(static_cast<std::size_t>(kmax) + 1, 0);
    long n = 0, runs = 0;
    for (long k = 1; k <= kmax; ++k) {
        n += in_I[k];  // j = k-1 contributes when j+1 = k is covered
        if (k == 1 || in_I[k] != in_I[k - 1]) ++runs;
        t.N[k] = n;
        t.B[k] = runs;
    }
    return t;
}

Real lambda_real(const PartitionScheme& sc, const Real& s) {
    BlockIndices bi = block_bounds(sc, s);
    if (bi.len_J.sign() <= 0) throw DomainError("J-block is empty at s = " + s.str(12));
    return Real(1L) / bi.len_J;
}

ExtendedLogValue lambda_of(const PartitionScheme& sc, const Real& s) {
    return ExtendedLogValue::from_log2(-log2(block_bounds(sc, s).len_J));
}

Real s_plus(const PartitionScheme& sc, const Real& tau) {
    if (tau >= Real(1L)) throw DomainError("s+ needs tau < 1");
    return sqrt(shifted_Xi(sc, Sign::Plus) / (Real(sc.q) * (Real(1L) - tau)));
}

Real s_minus(const PartitionScheme& sc, const Real& tau) {
    if (tau >= Real(1L)) throw DomainError("s- needs tau < 1");
    return sqrt(shifted_Xi(sc, Sign::Minus) / (Real(sc.q) * (Real(1L) - tau)));
}

Real log2_geometric(const Real& h, const Real& K) {
    if (K.sign() <= 0) return neg_inf();
    if (h.is_zero()) return log2(K);
    Real x = h * ln2();
    Real E = -expm1(-(x * K));
    Real d = -expm1(-x);
    return log2(E) - log2(d);
}

Real log2_arith_geometric(const Real& h, const Real& K) {
    if (K < Real(2L)) return neg_inf();
    Real M = K - Real(1L);
    Real tri = log2(M) + log2(M + Real(1L)) - Real(1L);
    if (h.is_zero()) return tri;
    Real u = h * M * ln2();
    if (u < exp2(Real(-64L))) {
        // sum m e^{-m x} = M(M+1)/2 (1 - x (2M+1)/3 + O((Mx)^2))
        Real x = h * ln2();
        return tri + log1p(-(x * (Real(2L) * M + Real(1L)) / Real(3L))) / ln2();
    }
    // closed form r(1 - (M+1) r^M + M r^{M+1})/(1-r)^2 loses about log2(1/u) bits
    long lost = std::max(0L, -log2(u).to_long_floor());
    Real out;
    {
        PrecisionScope ps(Real::working_bits() + lost + 32);
        Real x = h * ln2();
        Real d = -expm1(-x);
        Real E = -expm1(-(x * M));
        Real rM = exp2(-(h * M));
        Real num = E - rM * M * d;
        if (num.sign() <= 0) throw PrecisionExhausted("arithmetico-geometric numerator lost");
        out = -h + log2(num) - Real(2L) * log2(d);
    }
    return at_working(out);
}

ExtendedLogValue block_sum_J(const PartitionScheme& sc, long s, Sign sg, const Real& tau, const Real& lambda) {
    if (s < 0 || tau.sign() <= 0 || lambda.sign() < 0) throw DomainError("block_sum_J needs s >= 0, tau > 0, lambda >= 0");
    return J_block(sc, blk(sc, s), sg, tau, lambda);
}

ExtendedLogValue block_sum_I(const PartitionScheme& sc, long s, Sign sg, const Real& tau, const Real& lambda) {
    if (s < 0 || tau.sign() <= 0 || lambda.sign() < 0) throw DomainError("block_sum_I needs s >= 0, tau > 0, lambda >= 0");
    return I_block(sc, blk(sc, s), sg, tau, lambda);
}

ExtendedLogValue block_sum_J_hat(const PartitionScheme& sc, long s, Sign sg, const Real& tau, const Real& lambda) {
    if (s < 0 || tau.sign() <= 0 || lambda.sign() < 0) throw DomainError("block_sum_J_hat needs s >= 0, tau > 0, lambda >= 0");
    return J_hat_block(sc, blk(sc, s), sg, tau, lambda);
}

WeightedBlockSums weighted_block_sums(const PartitionScheme& sc, long s, Sign sg, const Real& tau, const Real& lambda) {
    if (s < 0 || tau.sign() <= 0 || lambda.sign() < 0) throw DomainError("weighted sums need s >= 0, tau > 0, lambda >= 0");
    Blk B = blk(sc, s);
    return {J_tilde_block(sc, B, tau, lambda), I_tilde_block(sc, B, tau, lambda), J_hat_block(sc, B, sg, tau, lambda)};
}

ExtendedLogValue tower_middle(const PartitionScheme& sc, const Real& tau, const Real& lambda, long s0, long last) {
    if (s0 < 1) throw DomainError("tower_middle needs s0 >= 1");
    const Real one(1L);
    ExtendedLogValue m = ExtendedLogValue::one();
    for (long j = 0; j <= last; ++j) {
        Blk B = blk(sc, j);
        m += I_tilde_block(sc, B, tau, lambda);
        if (j < s0 - 3 || j > s0) {
            m += J_tilde_block(sc, B, tau, lambda);
            continue;
        }
        Real pref = J_prefactor(sc, B, Sign::Plus, tau);
        Real sq = Real(j * j);
        Real b = B.a + B.lenI;
        Real lb = lambda_b(B, lambda);
        Real lbs = lambda * B.a + lambda * (B.lenI + sq);
        Real head = min(sq, B.lenJ);
        Real rest = B.lenJ - sq;
        if (j < s0) {
            // sum_{k<b+sq} k pi_k + (b + sq - 1) sum_{k >= b+sq} pi_k
            m += lin_block(pref - lb, b, lambda, head);
            m += geo_block(pref - lbs, lambda, rest).scaled_log2(log2(b + sq - one));
        } else {
            Blk Bp = blk(sc, j - 1);
            Real delta = B.lenI + (Bp.a + Bp.lenI);  // b_{s0} - |J_{s0-1}|
            m += lin_block(pref - lb, delta + sq, lambda, head);
            m += geo_block(pref - lbs, lambda, rest).scaled_log2(log2(delta + Real(2L) * sq - one));
        }
    }
    return m;
}

SeriesValue pi_total(const PartitionScheme& sc, Sign sg, const Real& tau, const Real& lambda, long s_max) {
    if (tau.sign() <= 0 || lambda.sign() < 0 || s_max < 0) throw DomainError("pi_total needs tau > 0, lambda >= 0, s_max >= 0");
    Accum acc;
    add_blocks(sc, sg, tau, lambda, acc, s_max);
    return {acc.value, tail_bound(sc, sg, tau, lambda, s_max + 1), s_max + 1};
}

SeriesValue pi_weighted_total(const PartitionScheme& sc, const Real& tau, const Real& lambda, long s_max) {
    if (tau.sign() <= 0 || lambda.sign() < 0 || s_max < 0) throw DomainError("weighted series needs tau > 0, lambda >= 0");
    Accum acc;
    add_weighted_blocks(sc, tau, lambda, acc, s_max);
    return {acc.value, weighted_tail(sc, tau, lambda, s_max + 1), s_max + 1};
}

SeriesValue pi_total_auto(const PartitionScheme& sc, Sign sg, const Real& tau, const Real& lambda, long s_start,
                          long rel_bits, long s_limit) {
    Accum acc;
    std::optional<SeriesValue> best;
    std::string last_err;
    for (long sm = std::max(0L, s_start); sm <= s_limit; ++sm) {
        add_blocks(sc, sg, tau, lambda, acc, sm);
        try {
            SeriesValue v{acc.value, tail_bound(sc, sg, tau, lambda, sm + 1), sm + 1};
            best = v;
            if (tail_small(v, rel_bits)) return v;
        } catch (const TailNotCertifiable& e) {
            last_err = e.what();
        }
    }
    if (best) return *best;
    throw TailNotCertifiable(last_err);
}

SeriesValue pi_weighted_total_auto(const PartitionScheme& sc, const Real& tau, const Real& lambda, long s_start,
                                   long rel_bits, long s_limit) {
    Accum acc;
    std::optional<SeriesValue> best;
    std::string last_err;
    for (long sm = std::max(0L, s_start); sm <= s_limit; ++sm) {
        add_weighted_blocks(sc, tau, lambda, acc, sm);
        try {
            SeriesValue v{acc.value, weighted_tail(sc, tau, lambda, sm + 1), sm + 1};
            best = v;
            if (tail_small(v, rel_bits)) return v;
        } catch (const TailNotCertifiable& e) {
            last_err = e.what();
        }
    }
    if (best) return *best;
    throw TailNotCertifiable(last_err);
}

std::vector<BlockRow> series_rows(const PartitionScheme& sc, Sign sg, const Real& tau, const Real& lambda, long s_max) {
    std::vector<BlockRow> rows;
    for (long j = 0; j <= s_max; ++j) {
        Blk B = blk(sc, j);
        rows.push_back({j, 'I', sg, I_block(sc, B, sg, tau, lambda), {}});
        rows.push_back({j, 'J', sg, J_block(sc, B, sg, tau, lambda), {}});
    }
    rows.back().tail = tail_bound(sc, sg, tau, lambda, s_max + 1);
    return rows;
}

// ---- verification ----------------------------------------------------------

std::vector<Real> default_tau_grid(const PartitionScheme& sc, int points) {
    std::vector<Real> out;
    Real hi(0.9), lo(0.001);
    for (int i = 0; i < points; ++i) {
        Real frac = points == 1 ? Real(0L) : Real(static_cast<long>(i)) / Real(static_cast<long>(points - 1));
        Real u = hi * pow(lo / hi, frac);
        out.push_back(Real(1L) - u / Real(sc.q));
    }
    return out;
}

namespace {

std::string log2_text(const ExtendedLogValue& v) {
    if (v.is_zero()) return "-inf";
    return v.log2().str(30);
}

struct CheckBuilder {
    std::vector<Check>& out;

    Check base(const std::string& lemma) {
        Check c;
        c.lemma = lemma;
        c.margin_log2 = Real::nan();
        return c;
    }

    void le(Check c, const ExtendedLogValue& lhs, const ExtendedLogValue& rhs, bool strict = false) {
        c.relation = strict ? "<" : "<=";
        c.lhs = lhs;
        c.rhs = rhs;
        c.margin_log2 = rhs.log2() - lhs.log2();
        c.pass = strict ? c.margin_log2.sign() > 0 : c.margin_log2.sign() >= 0;
        c.status = "ok";
        out.push_back(std::move(c));
    }

    void finite(Check c, const ExtendedLogValue& value) {
        c.relation = "finite";
        c.lhs = value;
        c.rhs = ExtendedLogValue::infinity();
        c.margin_log2 = Real::inf(1);
        c.pass = !value.is_inf();
        c.status = "ok";
        out.push_back(std::move(c));
    }

    void violation(Check c, const std::string& why) {
        c.status = "HypothesisViolation";
        c.note = why;
        out.push_back(std::move(c));
    }

    void error(Check c, const Error& e) {
        c.status = e.kind();
        c.note = e.what();
        c.pass = false;
        out.push_back(std::move(c));
    }
};

ExtendedLogValue lv(const Real& log2value) { return ExtendedLogValue::from_log2(log2value); }
ExtendedLogValue rv(const Real& x) { return ExtendedLogValue::from_real(x); }

// Partial sum without tail; a valid lower estimate of the full series.
ExtendedLogValue partial(const PartitionScheme& sc, Sign sg, const Real& tau, const Real& lambda, long s_max) {
    Accum acc;
    add_blocks(sc, sg, tau, lambda, acc, s_max);
    return acc.value;
}

long floor_l(const Real& x) { return floor(x).to_long_floor(); }
long ceil_l(const Real& x) { return ceil(x).to_long_floor(); }

// Checks that do not involve tau.
void block_checks(const PartitionScheme& sc, const std::vector<Real>& s_grid, std::vector<Check>& out) {
    CheckBuilder cb{out};
    std::vector<Real> sorted = s_grid;
    std::sort(sorted.begin(), sorted.end());
    for (const Real& s : s_grid) {
        BlockIndices bi = block_bounds(sc, s);
        {
            Check c = cb.base("b_at_most_half_next_a");
            c.s = s;
            cb.le(c, rv(bi.b), lv(cubic(sc, s + Real(1L)) - Real(1L)));
        }
        {
            Check c = cb.base("J_length_at_least_half_next_a");
            c.s = s;
            cb.le(c, lv(cubic(sc, s + Real(1L)) - Real(1L)), rv(bi.len_J));
        }
        {
            Check c = cb.base("lambda_at_most_quarter");
            c.s = s;
            cb.le(c, lambda_of(sc, s), lv(Real(-2L)));
        }
        {
            Check c = cb.base("b_plus_square_below_five_quarters_a");
            c.s = s;
            if (s < Real(1L)) {
                cb.violation(c, "requires s >= 1");
            } else {
                Real sq = (s + Real(1L)) * (s + Real(1L));
                cb.le(c, rv(bi.b + Real(2L) * sq), rv(Real(1.25) * bi.a));
            }
        }
        {
            Check c = cb.base("b_s0_plus_square_below_three_J");
            c.s = s;
            if (s < Real(1L)) {
                cb.violation(c, "requires s >= 1");
            } else {
                Real s0 = ceil(s);
                BlockIndices b0 = block_bounds(sc, s0);
                cb.le(c, rv(b0.b + Real(2L) * s0 * s0), rv(Real(3L) * bi.len_J));
            }
        }
    }
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        Check c = cb.base("lambda_strictly_decreasing");
        c.s = sorted[i];
        c.s_next = sorted[i + 1];
        cb.le(c, lambda_of(sc, sorted[i + 1]), lambda_of(sc, sorted[i]), true);
    }
}

// Every statement involving one value of tau.
void tau_checks(const PartitionScheme& sc, const Real& tau, bool main_grid, const std::vector<Real>& s_grid,
                const std::vector<Real>& omega_grid, std::vector<Check>& out) {
    CheckBuilder cb{out};
    const Real one(1L);
    Real q_lo = Real(sc.q - 1) / Real(sc.q);
    bool in_open_band = tau > q_lo && tau < one;
    Real two_xi = Real(2L) * sc.xi;

    auto guarded = [&](Check c, auto&& body) {
        try {
            body(c);
        } catch (const Error& e) {
            cb.error(c, e);
        }
    };

    // Bound on the plus series at lambda = 0 for tau >= 1.
    guarded(cb.base("pi_plus_zero_lambda_bound"), [&](Check c) {
        c.tau = tau;
        if (tau < one) return cb.violation(c, "requires tau >= 1");
        SeriesValue v = pi_total_auto(sc, Sign::Plus, tau, Real(0L), 1);
        cb.le(c, v.upper(), rv(Real(2L) * (exp2(tau * sc.xi) + one)));
    });
    if (!main_grid) return;

    for (const Real& s : s_grid) {
        Real lam;
        try {
            lam = lambda_real(sc, s);
        } catch (const Error& e) {
            Check c = cb.base("lambda_defined");
            c.s = s;
            cb.error(c, e);
            continue;
        }
        long fs = floor_l(s);

        guarded(cb.base("pi_plus_at_lambda_s_bound"), [&](Check c) {
            c.s = s;
            c.tau = tau;
            Real thr = (cubic(sc, s + one) - one) / cubic(sc, s + Real(2L));
            if (!(tau > Real(2L) / Real(3L) && tau < one)) return cb.violation(c, "requires tau in (2/3, 1)");
            if (!(tau > thr)) return cb.violation(c, "requires tau > (Q(s+1)-1)/Q(s+2)");
            SeriesValue v = pi_total_auto(sc, Sign::Plus, tau, lam, fs + 2);
            ExtendedLogValue rhs = rv(Real(4L) + Real(5L) * exp2(tau * sc.xi));
            ExtendedLogValue sum;
            for (long j = 0; j <= fs + 1; ++j) {
                sum += lv((one - tau) * cubic(sc, Real(j + 1)) - tau * (Real(sc.Xi) - two_xi) * Real(j + 1));
            }
            rhs += sum.scaled_log2(one);
            cb.le(c, v.upper(), rhs);
        });

        guarded(cb.base("pi_minus_at_lambda_s_lower"), [&](Check c) {
            c.s = s;
            c.tau = tau;
            Real e = Real(fs + 1);
            Real lhs = Real(-3L) + (one - tau) * cubic(sc, e) - tau * (Real(sc.Xi) + two_xi) * e;
            cb.le(c, lv(lhs), partial(sc, Sign::Minus, tau, lam, fs + 2));
        });
    }

    // First-floor bounds; defined on ((q-1)/q, 1).
    guarded(cb.base("pi_plus_first_floor_upper"), [&](Check c) {
        c.tau = tau;
        if (!in_open_band) return cb.violation(c, "requires tau in ((q-1)/q, 1)");
        Real arg = s_plus(sc, tau) - Real(2L);
        if (arg.sign() < 0) return cb.violation(c, "lambda(s+(tau) - 2) undefined: s+(tau) < 2");
        SeriesValue v = pi_total_auto(sc, Sign::Plus, tau, lambda_real(sc, arg), floor_l(arg) + 2);
        cb.le(c, v.upper(), rv(Real(25L) + Real(5L) * exp2(tau * sc.xi)));
    });
    for (const Real& om : omega_grid) {
        guarded(cb.base("pi_minus_first_floor_lower"), [&](Check c) {
            c.tau = tau;
            c.omega = om;
            if (!in_open_band) return cb.violation(c, "requires tau in ((q-1)/q, 1)");
            if (om.sign() < 0) return cb.violation(c, "requires Omega >= 0");
            Real arg = s_minus(sc, tau) + om;
            ExtendedLogValue rhs = partial(sc, Sign::Minus, tau, lambda_real(sc, arg), floor_l(arg) + 2);
            cb.le(c, lv(Real(2L) * om - Real(3L)), rhs);
        });
    }

    // Weighted series and the tower estimates; tau restricted to [1/2,1] and ((q-1)/q, 1).
    bool tower_tau = in_open_band && tau >= Real(0.5);
    for (const Real& s : s_grid) {
        guarded(cb.base("weighted_pi_finite"), [&](Check c) {
            c.s = s;
            c.tau = tau;
            if (!tower_tau) return cb.violation(c, "requires tau in [1/2,1] and ((q-1)/q, 1)");
            if (s.sign() <= 0) return cb.violation(c, "requires s > 0");
            SeriesValue v = pi_weighted_total_auto(sc, tau, lambda_real(sc, s), floor_l(s) + 2);
            cb.finite(c, v.upper());
        });

        bool tower_s = s >= Real(10L);
        long s0 = ceil_l(s);
        auto tower_guard = [&](Check& c) -> bool {
            c.s = s;
            c.tau = tau;
            if (!tower_tau) {
                cb.violation(c, "requires tau in [1/2,1] and ((q-1)/q, 1)");
                return false;
            }
            if (!tower_s) {
                cb.violation(c, "requires s >= 10");
                return false;
            }
            return true;
        };
        if (!tower_tau || !tower_s) {
            for (const char* name : {"tower_upper_vs_weighted", "tower_weighted_vs_hat", "hat_J_lower",
                                     "J_plus_vs_hat_inner", "J_plus_vs_hat_top"}) {
                Check c = cb.base(name);
                tower_guard(c);
            }
            continue;
        }
        Real lam = lambda_real(sc, s);
        Real s0r(s0);
        Real qs0sq = Real(sc.q) * s0r * s0r;

        std::map<long, ExtendedLogValue> hat_minus, hat_plus, jplus;
        for (long v = s0 - 3; v <= s0; ++v) {
            Blk B = blk(sc, v);
            hat_minus[v] = J_hat_block(sc, B, Sign::Minus, tau, lam);
            hat_plus[v] = J_hat_block(sc, B, Sign::Plus, tau, lam);
            jplus[v] = J_block(sc, B, Sign::Plus, tau, lam);
        }
        ExtendedLogValue hat_minus_sum;
        for (long v = s0 - 3; v <= s0; ++v) hat_minus_sum += hat_minus[v];

        // Middle quantity: weighted series minus the hat terms and the s0 correction,
        // assembled from nonnegative pieces so that no subtraction is needed.
        ExtendedLogValue middle_lower;  // value part
        ExtendedLogValue middle_tail;
        guarded(cb.base("tower_upper_vs_weighted"), [&](Check c) {
            tower_guard(c);
            long smax = s0 + 2;
            SeriesValue plus = pi_total_auto(sc, Sign::Plus, tau, lam, smax);
            long last = std::max(smax, plus.blocks_summed - 1);
            ExtendedLogValue m = tower_middle(sc, tau, lam, s0, last);
            ExtendedLogValue mt = weighted_tail(sc, tau, lam, last + 1);
            middle_lower = m;
            middle_tail = mt;
            cb.le(c, plus.upper(), m);
        });
        guarded(cb.base("tower_weighted_vs_hat"), [&](Check c) {
            tower_guard(c);
            if (middle_lower.is_zero()) throw PrecisionExhausted("middle quantity unavailable");
            cb.le(c, middle_lower + middle_tail, hat_minus_sum.scaled_log2(-qs0sq));
        });
        guarded(cb.base("hat_J_lower"), [&](Check c) {
            tower_guard(c);
            Real e = Real(-9L) + Real(2L) * cubic(sc, s + one) - tau * cubic(sc, Real(s0 + 1)) -
                     (Real(sc.Xi) + two_xi) * tau * Real(s0 + 1);
            cb.le(c, lv(e), hat_minus[s0]);
        });
        for (long v = s0 - 3; v <= s0 - 1; ++v) {
            guarded(cb.base("J_plus_vs_hat_inner"), [&](Check c) {
                tower_guard(c);
                c.varsigma = Real(v);
                Blk B = blk(sc, v);
                Real coef = B.a + B.lenI + Real(v * v);
                cb.le(c, jplus[v].scaled_log2(log2(coef)), hat_minus[v].scaled_log2(-qs0sq - log2(Real(20L))));
            });
        }
        guarded(cb.base("J_plus_vs_hat_top"), [&](Check c) {
            tower_guard(c);
            Blk B = blk(sc, s0), Bp = blk(sc, s0 - 1);
            Real coef = B.lenI + (Bp.a + Bp.lenI) + Real(2L * s0 * s0);
            cb.le(c, jplus[s0].scaled_log2(log2(coef)), hat_minus[s0].scaled_log2(-qs0sq - Real(2L)));
        });
    }
}

std::vector<Check> run_checks(const PartitionScheme& sc, const VerifyGrid& grid, long bits, unsigned threads) {
    // group 0: tau-free checks; then one group per tau point
    std::size_t groups = 1 + grid.tau.size() + grid.tau_aux.size();
    std::vector<std::vector<Check>> parts(groups);
    parallel_for(groups, threads, [&](std::size_t g) {
        PrecisionScope ps(bits);
        if (g == 0) {
            block_checks(sc, grid.s, parts[g]);
        } else if (g <= grid.tau.size()) {
            tau_checks(sc, at_working(grid.tau[g - 1]), true, grid.s, grid.omega, parts[g]);
        } else {
            tau_checks(sc, at_working(grid.tau_aux[g - 1 - grid.tau.size()]), false, grid.s, grid.omega, parts[g]);
        }
    });
    std::vector<Check> all;
    for (auto& p : parts) {
        for (auto& c : p) all.push_back(std::move(c));
    }
    return all;
}

}  // namespace

json Check::point_json() const {
    json p = json::object();
    if (s) p["s"] = s->str(30);
    if (s_next) p["s_next"] = s_next->str(30);
    if (tau) p["tau"] = tau->str(30);
    if (omega) p["Omega"] = omega->str(30);
    if (varsigma) p["varsigma"] = varsigma->str(30);
    return p;
}

bool VerificationReport::all_pass() const { return failures() == 0 && evaluated() > 0; }

long VerificationReport::evaluated() const {
    return std::count_if(checks.begin(), checks.end(), [](const Check& c) { return c.pass.has_value(); });
}

long VerificationReport::failures() const {
    return std::count_if(checks.begin(), checks.end(), [](const Check& c) { return c.pass.has_value() && !*c.pass; });
}

double VerificationReport::min_agreement_bits() const {
    double m = 1e300;
    for (const auto& c : checks) {
        if (c.pass.has_value() && c.status == "ok") m = std::min(m, c.agreement_bits);
    }
    return m;
}

json VerificationReport::to_json() const {
    json j;
    j["scheme"] = scheme.to_json();
    auto strs = [](const std::vector<Real>& v) {
        json a = json::array();
        for (const auto& x : v) a.push_back(x.str(30));
        return a;
    };
    j["grid"] = {{"tau", strs(grid.tau)}, {"tau_aux", strs(grid.tau_aux)}, {"Omega", strs(grid.omega)},
                 {"s", strs(grid.s)}};
    j["precision_bits"] = bits;
    json arr = json::array();
    for (const auto& c : checks) {
        json e;
        e["lemma"] = c.lemma;
        e["point"] = c.point_json();
        e["relation"] = c.relation;
        bool evaluated = c.status == "ok";
        e["lhs_log2"] = evaluated ? json(log2_text(c.lhs)) : json(nullptr);
        e["rhs_log2"] = evaluated ? json(c.rhs.is_inf() ? std::string("inf") : log2_text(c.rhs)) : json(nullptr);
        e["margin_log2"] = evaluated ? json(c.margin_log2.str(30)) : json(nullptr);
        e["pass"] = c.pass ? json(*c.pass) : json(nullptr);
        e["status"] = c.status;
        if (!c.note.empty()) e["note"] = c.note;
        if (evaluated) e["correct_bits"] = std::floor(c.agreement_bits);
        arr.push_back(e);
    }
    j["checks"] = arr;
    j["summary"] = {{"evaluated", evaluated()},
                    {"failures", failures()},
                    {"hypothesis_violations",
                     std::count_if(checks.begin(), checks.end(),
                                   [](const Check& c) { return c.status == "HypothesisViolation"; })},
                    {"all_pass", all_pass()},
                    {"min_correct_bits", std::floor(min_agreement_bits())}};
    return j;
}

VerificationReport verify_appendix(const PartitionScheme& sc, const VerifyGrid& grid, const VerifyOptions& opt) {
    if (!sc.strict_mode) throw HypothesisViolation("verification requires a strict-mode scheme");
    VerificationReport rep;
    rep.scheme = sc;
    rep.grid = grid;
    rep.bits = opt.bits;
    rep.checks = run_checks(sc, grid, opt.bits, opt.threads);
    std::vector<Check> hi = run_checks(sc, grid, opt.bits + opt.check_bits_extra, opt.threads);
    if (hi.size() != rep.checks.size()) throw PrecisionExhausted("check lists differ between precisions");
    for (std::size_t i = 0; i < hi.size(); ++i) {
        Check& c = rep.checks[i];
        if (c.status != "ok" || hi[i].status != "ok") continue;
        if (c.margin_log2.is_inf()) {
            c.agreement_bits = static_cast<double>(opt.bits);
            continue;
        }
        PrecisionScope ps(opt.bits + opt.check_bits_extra);
        Real d = abs(c.margin_log2 - hi[i].margin_log2);
        Real scale = max(Real(1L), abs(hi[i].margin_log2));
        c.agreement_bits = d.is_zero() ? static_cast<double>(opt.bits) : -log2(d / scale).to_double();
        // a margin sign that flips between precisions is not resolved
        if (c.margin_log2.sign() != hi[i].margin_log2.sign()) c.agreement_bits = 0;
    }
    return rep;
}

}  // namespace qp
