#include "doctest.h"
#include "oracles.hpp"

#include "qp/errors.hpp"
#include "qp/partition_core.hpp"

#include <climits>
#include <cmath>

using namespace qp;

namespace {

PartitionScheme strict400() { return PartitionScheme::make("1", 400); }
PartitionScheme toy(long q) { return PartitionScheme::make("0.25", q, true); }

double ld(const ExtendedLogValue& v) { return v.log2().to_double(); }

// closed form against term enumeration, relative error below 2^-bits
bool matches(const ExtendedLogValue& v, const oracle::BlockSum& o, double lam, double tau, int sign, long bits = 40) {
    if (o.empty()) return v.is_zero();
    if (v.is_zero()) return false;
    Real d = v.log2() - o.log2_total(Real(lam), Real(tau), Real(0.25), sign);
    return abs(exp2(d) - Real(1L)) < exp2(Real(-bits));
}

}  // namespace

TEST_CASE("cubic is exact on integers") {
    PrecisionScope ps(256);
    CHECK(cubic(strict400(), Real(0L)) == Real(0L));
    CHECK(cubic(strict400(), Real(1L)) == Real(400L));
    CHECK(cubic(toy(2), Real(3L)) == Real(54L));
    CHECK(cubic_z(strict400(), 7) == mpz_class(400 * 343));
}

TEST_CASE("scheme constraints") {
    CHECK(strict400().Xi == 3);
    CHECK(strict400().strict_mode);
    CHECK(toy(2).Xi == 2);
    CHECK_FALSE(toy(2).strict_mode);
    CHECK_THROWS_AS(PartitionScheme::make("0.25", 2, false), InvalidScheme);
    CHECK_THROWS_AS(PartitionScheme::make("0", 400), InvalidScheme);
}

TEST_CASE("block bounds") {
    PrecisionScope ps(256);
    auto b0 = block_bounds(strict400(), Real(0L));
    CHECK(b0.a_z == 1);
    CHECK(b0.b_z == 404);
    CHECK(b0.len_I == Real(403L));
    auto b1 = block_bounds(strict400(), Real(1L));
    CHECK(log2(b1.a) == Real(400L));
    auto t1 = block_bounds(toy(2), Real(1L));
    CHECK(t1.a_z == 4);
    CHECK(t1.b_z == 20);
    CHECK(t1.a_next_z == 65536);
    // fractional s still gives ordered endpoints
    auto bh = block_bounds(strict400(), Real(10.5));
    CHECK(bh.len_I.sign() > 0);
    CHECK(bh.len_J.sign() > 0);
    CHECK(bh.a <= bh.b);
}

TEST_CASE("toy scheme q = 2 has overlapping first blocks") {
    // b_0 = 5 > a_1 = 4: I_0 and I_1 share the position 4
    oracle::Blocks bl(2, 2);
    CHECK(bl.b(0) == 5);
    CHECK(bl.a(1) == 4);
    CHECK(bl.merged.front() == std::make_pair(1L, 20L));
}

TEST_CASE("N and B at the listed points") {
    auto sc = strict400();
    CHECK(count_N(sc, 0) == 0);
    CHECK(count_N(sc, 500) == 403);
    CHECK(count_B(sc, 0) == 0);
    CHECK(count_B(sc, 100) == 1);
    CHECK(count_B(sc, 1000000) == 2);
    mpz_class big = mpz_class(1) << 500;  // inside J_1
    CHECK(count_N(sc, big) == 400 * 8 + 3 * 2);
    CHECK(count_B(sc, big) == 4);
}

TEST_CASE("N and B closed forms match the definitions on a disjoint toy scheme") {
    auto sc = toy(3);
    oracle::Blocks bl(3, sc.Xi);
    REQUIRE(bl.merged.size() == bl.raw.size());
    auto tab = count_enumerate(sc, 100000);
    long bad = 0;
    for (long k = 0; k <= 100000; ++k) {
        if (count_N(sc, k) != bl.N(k) || tab.N[k] != bl.N(k)) ++bad;
        if (count_B(sc, k) != bl.B(k) || tab.B[k] != bl.B(k)) ++bad;
    }
    CHECK(bad == 0);
}

TEST_CASE("lambda") {
    PrecisionScope ps(256);
    Real two400 = exp2(Real(400L));
    Real expect = -log2(two400 - Real(404L));
    CHECK(abs(lambda_of(strict400(), Real(0L)).log2() - expect) < Real(1e-60));
    CHECK(lambda_real(toy(2), Real(1L)) == Real(1L) / Real(65516L));
    for (auto sc : {strict400(), PartitionScheme::make("0.5", 300), PartitionScheme::make("2", 600)}) {
        CHECK(lambda_of(sc, Real(1L)) < lambda_of(sc, Real(0L)));
        CHECK(lambda_of(sc, Real(0L)).log2() <= Real(-2L));
    }
}

TEST_CASE("s plus and s minus") {
    PrecisionScope ps(256);
    auto sc = strict400();
    Real tau = Real(1L) - Real(1L) / Real(160000L);
    CHECK(abs(s_plus(sc, tau) - Real(20L)) < Real(1e-60));
    CHECK(abs(s_minus(sc, tau) - sqrt(Real(2000L))) < Real(1e-60));
    Real t2 = Real(0.9);
    CHECK(abs(s_minus(sc, t2) / s_plus(sc, t2) - sqrt(Real(5L))) < Real(1e-60));
    CHECK_THROWS_AS(s_plus(sc, Real(1L)), DomainError);
}

TEST_CASE("closed-form arithmetic helpers") {
    PrecisionScope ps(256);
    CHECK(log2_geometric(Real(0L), Real(17L)) == log2(Real(17L)));
    CHECK(abs(log2_arith_geometric(Real(0L), Real(10L)) - log2(Real(45L))) < Real(1e-60));
    // sum_{m=0}^{K-1} m r^m against direct summation
    Real h(0.3), acc(0L);
    for (long m = 0; m < 40; ++m) acc += Real(m) * exp2(-h * Real(m));
    CHECK(abs(log2_arith_geometric(h, Real(40L)) - log2(acc)) < Real(1e-60));
}

TEST_CASE("I_0 plus at tau 1, lambda 0 on the strict scheme") {
    PrecisionScope ps(512);
    auto v = block_sum_I(strict400(), 0, Sign::Plus, Real(1L), Real(0L));
    // N(k) = k and B(k) = 1 on I_0, so the block is 2 * sum_{m=1}^{403} 2^{-m}
    Real direct(0L);
    for (long m = 1; m <= 403; ++m) direct += exp2(Real(-m));
    direct *= Real(2L);
    Real closed = Real(2L) * (Real(1L) - exp2(Real(-403L)));
    CHECK(abs(direct - closed) < exp2(Real(-500L)));
    CHECK(abs(v.log2() - log2(closed)) < exp2(Real(-400L)));
}

TEST_CASE("J-block at lambda 0 counts its terms") {
    PrecisionScope ps(256);
    auto sc = toy(3);
    oracle::Blocks bl(3, sc.Xi);
    long b1 = bl.b(1);
    for (Sign sg : {Sign::Plus, Sign::Minus}) {
        auto v = block_sum_J(sc, 1, sg, Real(1L), Real(0L));
        double expect = std::log2(double(bl.a(2) - b1)) - bl.N(b1) + as_int(sg) * 0.25 * bl.B(b1);
        CHECK(ld(v) == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("block sums equal term enumeration on a disjoint toy scheme") {
    PrecisionScope ps(256);
    auto sc = toy(3);
    oracle::Blocks bl(3, sc.Xi);
    long bad = 0, cases = 0;
    for (long s = 0; s <= 2; ++s)
        for (double tau : {0.5, 1.0})
            for (double lam : {0.01, 0.3})
                for (Sign sg : {Sign::Plus, Sign::Minus}) {
                    int sgn = as_int(sg);
                    long a = bl.a(s), b = bl.b(s), an = s + 1 < (long)bl.raw.size() ? bl.a(s + 1) : LONG_MAX;
                    Real T(tau), L(lam);
                    auto I = block_sum_I(sc, s, sg, T, L);
                    auto J = block_sum_J(sc, s, sg, T, L);
                    auto W = weighted_block_sums(sc, s, sg, T, L);
                    auto oI = oracle::block_sum(bl, a, b, sgn, 0.25, tau, lam);
                    auto oJ = oracle::block_sum(bl, b, an, sgn, 0.25, tau, lam);
                    long off = b + s * s;
                    auto oH = oracle::block_sum(bl, off, an, sgn, 0.25, tau, lam,
                                                [off](long k) { return (long double)(k + 1 - off); });
                    auto kw = [](long k) { return (long double)k; };
                    auto oIt = oracle::block_sum(bl, a, b, +1, 0.25, tau, lam, kw);
                    auto oJt = oracle::block_sum(bl, b, an, +1, 0.25, tau, lam, kw);
                    bad += !matches(I, oI, lam, tau, sgn);
                    bad += !matches(J, oJ, lam, tau, sgn);
                    bad += !matches(W.J_hat, oH, lam, tau, sgn);
                    bad += !matches(W.I_tilde, oIt, lam, tau, +1);
                    bad += !matches(W.J_tilde, oJt, lam, tau, +1);
                    cases += 5;
                    CHECK(ld(block_sum_J_hat(sc, s, sg, T, L)) == ld(W.J_hat));
                }
    CHECK(cases == 120);
    CHECK(bad == 0);
}

TEST_CASE("minus side never exceeds plus side") {
    PrecisionScope ps(256);
    for (auto sc : {strict400(), toy(3)})
        for (long s = 0; s <= 6; ++s)
            for (double tau : {0.6, 0.999, 1.0})
                for (double lam : {0.0, 1e-3, 0.2}) {
                    Real T(tau), L(lam);
                    CHECK(block_sum_I(sc, s, Sign::Minus, T, L) <= block_sum_I(sc, s, Sign::Plus, T, L));
                    CHECK(block_sum_J(sc, s, Sign::Minus, T, L) <= block_sum_J(sc, s, Sign::Plus, T, L));
                    auto W = weighted_block_sums(sc, s, Sign::Minus, T, L);
                    CHECK(W.J_hat <= W.J_tilde);
                }
}

TEST_CASE("series totals") {
    PrecisionScope ps(256);
    auto sc = strict400();
    auto v = pi_total_auto(sc, Sign::Plus, Real(1L), Real(0L), 2);
    CHECK(v.upper() <= ExtendedLogValue::from_real(Real(6L)));
    // the k = 0 term is exactly 1
    auto t0 = pi_total(sc, Sign::Plus, Real(1L), Real(0.5), 0);
    auto blocks = block_sum_I(sc, 0, Sign::Plus, Real(1L), Real(0.5)) + block_sum_J(sc, 0, Sign::Plus, Real(1L), Real(0.5));
    CHECK(abs(diff(t0.value, blocks).log2()) < Real(1e-60));
    // tail bound brackets the brute-force total on a toy scheme
    auto ts = toy(3);
    oracle::Blocks bl(3, ts.Xi);
    for (Sign sg : {Sign::Plus, Sign::Minus}) {
        auto tv = pi_total(ts, sg, Real(1L), Real(0.01), 2);
        auto o = oracle::block_sum(bl, 0, LONG_MAX, as_int(sg), 0.25, 1.0, 0.01);
        Real ol = o.log2_total(Real(0.01), Real(1L), Real(0.25), as_int(sg));
        CHECK(tv.value.log2() <= ol + Real(1e-12));
        CHECK(tv.upper().log2() >= ol - Real(1e-12));
    }
    CHECK(pi_total(sc, Sign::Minus, Real(1L), Real(0L), 3).value <= pi_total(sc, Sign::Plus, Real(1L), Real(0L), 3).value);
}

TEST_CASE("tower middle is bracketed by its pieces") {
    PrecisionScope ps(256);
    auto sc = strict400();
    Real tau(0.999), lam = lambda_real(sc, Real(9L));
    auto w = pi_weighted_total(sc, tau, lam, 14);
    auto m = tower_middle(sc, tau, lam, 12, 14);
    CHECK(m <= w.value);
    CHECK(m >= ExtendedLogValue::one());
}

TEST_CASE("verification examples") {
    auto sc = strict400();
    VerifyGrid g;
    {
        PrecisionScope ps(256);
        g.tau = {Real(1L) - Real(1L) / Real(160000L)};
        g.omega = {Real(1L)};
        g.s = {Real(0L), Real(10L)};
    }
    auto rep = verify_appendix(sc, g);
    CHECK(rep.all_pass());
    CHECK(rep.failures() == 0);
    bool saw_b1 = false, saw_floor = false;
    for (const auto& c : rep.checks) {
        if (c.lemma == "b_at_most_half_next_a" && c.s && *c.s == Real(0L)) {
            saw_b1 = true;
            CHECK(c.margin_log2.to_double() == doctest::Approx(399 - std::log2(404.0)).epsilon(1e-12));
        }
        if (c.lemma == "pi_minus_first_floor_lower" && c.status == "ok") {
            saw_floor = true;
            CHECK(c.lhs.log2().to_double() == doctest::Approx(-1.0));
            CHECK(c.margin_log2.sign() >= 0);
        }
    }
    CHECK(saw_b1);
    CHECK(saw_floor);
    CHECK(rep.min_agreement_bits() >= 40);
}

TEST_CASE("hypothesis violations are reported") {
    auto sc = strict400();
    VerifyGrid g;
    {
        PrecisionScope ps(256);
        g.tau = {Real(0.5)};
        g.omega = {Real(0L)};
        g.s = {Real(0L)};
    }
    auto rep = verify_appendix(sc, g);
    long hv = 0;
    for (const auto& c : rep.checks) hv += c.status == "HypothesisViolation";
    CHECK(hv > 0);
}
