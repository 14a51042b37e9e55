// Acceptance run: one PASS/FAIL line per criterion A1..A9. With arguments, only
// the named criteria run (e.g. `qp_acceptance A2 A7`). Exit 0 iff all ran green.

#include "oracles.hpp"

#include "qp/errors.hpp"
#include "qp/measure_builder.hpp"
#include "qp/parameter_search.hpp"
#include "qp/partition_core.hpp"
#include "qp/pressure_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#ifndef QP_CLI_PATH
#define QP_CLI_PATH "qp"
#endif

using namespace qp;

namespace {

// ---- pinned tolerances and budgets ----
constexpr double kA1MinCorrectBits = 40;
constexpr double kA1MaxSeconds = 120;
constexpr long kA2KMax = 100000;
constexpr long kA2RelBits = 40;
constexpr int kA3Period = 14;
constexpr double kA3P0Tol = 1e-3, kA3P1Tol = 1e-2, kA3ConvexTol = 1e-6;
constexpr double kA3MaxSeconds = 30;
constexpr int kA4Period = 16;
constexpr double kA4Tol = 0.05, kA4DefectLog2 = -10, kA4MaxSeconds = 300;
constexpr long kA5Bits = 512;
constexpr double kA5MaxSeconds = 600;
constexpr int kA7Points = 50;
constexpr double kA7Decades = 6;
constexpr double kA8NormLog2 = -30, kA8LevelLog2 = -40, kA8ConformalTol = 1e-9;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Real> s_grid() {
    std::vector<Real> s;
    for (long i = 0; i <= 12; ++i) s.emplace_back(i);
    s.push_back(Real(10.5));
    return s;
}

// ---- A1 ----
Outcome a1() {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o{true, ""};
    const std::pair<const char*, long> schemes[] = {{"0.5", 300}, {"1", 400}, {"1", 800}, {"2", 600}};
    for (auto [xi, q] : schemes) {
        PrecisionScope ps(256);
        auto sc = PartitionScheme::make(xi, q);
        VerifyGrid g;
        g.tau = default_tau_grid(sc, 9);
        g.tau_aux = {Real(1L), Real(1.5), Real(2L)};
        g.omega = {Real(0L), Real(1L), Real(4L)};
        g.s = s_grid();
        VerifyOptions vo;
        vo.bits = 256;
        auto rep = verify_appendix(sc, g, vo);
        // every evaluated statement must have a recorded nonnegative margin
        long neg = 0;
        for (const auto& c : rep.checks)
            if (c.pass.has_value() && (!*c.pass || c.margin_log2.sign() < 0)) ++neg;
        double bits = rep.min_agreement_bits();
        bool ok = rep.all_pass() && neg == 0 && rep.evaluated() > 0 && bits >= kA1MinCorrectBits;
        o.pass = o.pass && ok;
        o.detail += fmt("(%s,%ld): %ld checks, %ld failed, min bits %.0f; ", xi, q, rep.evaluated(), neg, bits);
    }
    double el = seconds_since(t0);
    o.pass = o.pass && el < kA1MaxSeconds;
    o.detail += fmt("%.1fs", el);
    return o;
}

// ---- A2 ----
bool close_rel(const ExtendedLogValue& v, const oracle::BlockSum& b, double lam, double tau, double xi, int sign) {
    if (b.empty()) return v.is_zero();
    if (v.is_zero()) return false;
    Real d = v.log2() - b.log2_total(Real(lam), Real(tau), Real(xi), sign);
    return abs(exp2(d) - Real(1L)) < exp2(Real(-kA2RelBits));
}

struct A2Counts {
    long count_bad = 0, enum_bad = 0, sum_bad = 0, sums = 0;
    long first_bad_k = -1;
};

A2Counts a2_scheme(long q) {
    PrecisionScope ps(256);
    auto sc = PartitionScheme::make("0.25", q, true);
    oracle::Blocks bl(q, sc.Xi);
    A2Counts r;
    // closed forms vs the definitions, and the library's own enumeration vs the definitions
    auto tab = count_enumerate(sc, kA2KMax);
    for (long k = 0; k <= kA2KMax; ++k) {
        long n = bl.N(k), b = bl.B(k);
        bool bad = count_N(sc, k) != n || count_B(sc, k) != b;
        r.count_bad += bad;
        r.enum_bad += tab.N[k] != n || tab.B[k] != b;
        if (bad && r.first_bad_k < 0) r.first_bad_k = k;
    }
    for (long s = 0; s <= 2; ++s)
        for (double tau : {0.5, 1.0})
            for (double lam : {0.01, 0.3})
                for (Sign sg : {Sign::Plus, Sign::Minus}) {
                    int sgn = as_int(sg);
                    long a = bl.a(s), b = bl.b(s);
                    long an = s + 1 < (long)bl.raw.size() ? bl.a(s + 1) : LONG_MAX;
                    Real T(tau), L(lam);
                    long off = b + s * s;
                    auto oI = oracle::block_sum(bl, a, b, sgn, 0.25, tau, lam);
                    auto oJ = oracle::block_sum(bl, b, an, sgn, 0.25, tau, lam);
                    auto oH = oracle::block_sum(bl, off, an, sgn, 0.25, tau, lam,
                                                [off](long k) { return (long double)(k + 1 - off); });
                    r.sum_bad += !close_rel(block_sum_I(sc, s, sg, T, L), oI, lam, tau, 0.25, sgn);
                    r.sum_bad += !close_rel(block_sum_J(sc, s, sg, T, L), oJ, lam, tau, 0.25, sgn);
                    r.sum_bad += !close_rel(block_sum_J_hat(sc, s, sg, T, L), oH, lam, tau, 0.25, sgn);
                    r.sums += 3;
                }
    return r;
}

Outcome a2() {
    auto t0 = std::chrono::steady_clock::now();
    auto r2 = a2_scheme(2), r3 = a2_scheme(3);
    Outcome o;
    o.pass = r2.count_bad == 0 && r2.enum_bad == 0 && r2.sum_bad == 0;
    o.detail = fmt("q=2: closed-form N/B mismatches %ld (first k=%ld), enumeration mismatches %ld, block sums %ld/%ld off; "
                   "q=3 companion: %ld, %ld, %ld/%ld; %.1fs",
                   r2.count_bad, r2.first_bad_k, r2.enum_bad, r2.sum_bad, r2.sums, r3.count_bad, r3.enum_bad,
                   r3.sum_bad, r3.sums, seconds_since(t0));
    if (!o.pass) o.detail += "; blocks I_0 = [1,5) and I_1 = [4,12) overlap at q=2, the closed forms assume disjoint blocks";
    return o;
}

// ---- A3 ----
Outcome a3() {
    auto t0 = std::chrono::steady_clock::now();
    auto f = QuadMap::make("-2", 256);
    auto s = enumerate_periodic_points(f, kA3Period);
    std::vector<double> P;
    const int steps = 40;
    for (int i = 0; i <= steps; ++i) P.push_back(periodic_orbit_pressure(s, 2.0 * i / steps));
    double p0 = P[0], p1 = P[steps / 2];
    double min_second = INFINITY, max_first = -INFINITY;
    for (int i = 1; i < steps; ++i) min_second = std::min(min_second, P[i + 1] - 2 * P[i] + P[i - 1]);
    for (int i = 0; i < steps; ++i) max_first = std::max(max_first, P[i + 1] - P[i]);
    double el = seconds_since(t0);
    Outcome o;
    o.pass = std::fabs(p0 - std::log(2.0)) < kA3P0Tol && std::fabs(p1) < kA3P1Tol && min_second >= -kA3ConvexTol &&
             max_first <= 0 && el < kA3MaxSeconds;
    o.detail = fmt("P(0)-log2 = %.2e, P(1) = %.2e, min second difference %.2e, max step %.2e, %.1fs",
                   p0 - std::log(2.0), p1, min_second, max_first, el);
    return o;
}

// ---- A4 ----
Outcome a4() {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o{true, ""};
    for (const char* prefix : {"0", "1"}) {
        auto r = find_parameter(KneadingTarget::make(5, prefix));
        auto f = QuadMap::make(r.midpoint(), 256);
        auto ps = enumerate_periodic_points(f, kA4Period);
        auto sys = build_induced_system(f, 5);
        double worst = 0;
        for (double t : {0.0, 0.5, 1.0}) {
            double a = periodic_orbit_pressure(ps, t), b = bowen_pressure(sys, t).p;
            worst = std::max(worst, std::fabs(a - b));
        }
        double defect = sys.completeness_defect.is_zero() ? -INFINITY : sys.completeness_defect.log2().to_double();
        o.pass = o.pass && worst < kA4Tol && defect < kA4DefectLog2;
        o.detail += fmt("\"%s\" c=%s: max |bowen-periodic| %.2e, defect 2^%.1f; ", prefix, f.c.str(12).c_str(), worst,
                        defect);
    }
    double el = seconds_since(t0);
    o.pass = o.pass && el < kA4MaxSeconds;
    o.detail += fmt("%.1fs", el);
    return o;
}

// ---- A5 ----
Outcome a5() {
    auto t0 = std::chrono::steady_clock::now();
    SearchOptions so;
    so.bits = kA5Bits;
    std::vector<SearchResult> rs;
    long trips = 0;
    for (int m = 0; m < 16; ++m) {
        std::string p;
        for (int b = 3; b >= 0; --b) p += (m >> b & 1) ? '1' : '0';
        auto r = find_parameter(KneadingTarget::make(5, p), so);
        auto it = itinerary_of_parameter(QuadMap::make(r.midpoint(), kA5Bits), 5, 4);
        trips += it.str() == p;
        rs.push_back(std::move(r));
    }
    long overlaps = 0;
    for (std::size_t i = 0; i < rs.size(); ++i)
        for (std::size_t j = i + 1; j < rs.size(); ++j)
            overlaps += !(rs[i].c_hi < rs[j].c_lo || rs[j].c_hi < rs[i].c_lo);
    double el = seconds_since(t0);
    Outcome o;
    o.pass = trips == 16 && overlaps == 0 && el < kA5MaxSeconds;
    o.detail = fmt("%ld/16 round trips, %ld overlapping pairs, %.1fs", trips, overlaps, el);
    return o;
}

// ---- A6 ----
Outcome a6() {
    auto t0 = std::chrono::steady_clock::now();
    auto r = oscillation_run(OscillationOptions{});
    auto last = [](const OscillationSide& s) {
        const auto& m = s.reports.back();
        return fmt("plus %.3f minus %.3f", m.mass_plus, m.mass_minus);
    };
    Outcome o;
    o.pass = r.flipped;
    o.detail = fmt("constant band: %s; alternating band: %s (at the largest t); %.1fs", last(r.constant_band).c_str(),
                   last(r.alternating_band).c_str(), seconds_since(t0));
    return o;
}

// ---- A7 ----
Outcome a7() {
    PrecisionScope ps(256);
    EnvelopeParams e;
    e.q = 400;
    e.xi = Real(1L);
    e.Xi = Real(3L);
    e.Delta = Real(2L);
    e.Omega = Real(1L);
    e.t_star = Real(1L);
    e.chi_crit = log(Real(4L));
    auto at = pressure_envelope(e, e.t_star);
    bool zero_at_star = at.delta_plus.is_zero() && at.delta_minus.is_zero();
    Real span = e.t_star - e.t0();
    // t_* - t = span 10^{-decades i / points}, i = 1..points
    std::vector<Real> gap;
    std::vector<Real> ratio;  // log2 of delta+ / (t_* - t)^2
    long order_bad = 0;
    for (int i = 1; i <= kA7Points; ++i) {
        Real u = span * exp2(Real(-kA7Decades * std::log2(10.0) * i / kA7Points));
        auto v = pressure_envelope(e, e.t_star - u);
        order_bad += !(v.P_minus <= v.P_plus) || !(v.delta_minus <= v.delta_plus);
        gap.push_back(u);
        ratio.push_back(v.delta_plus.is_zero() ? Real(-INFINITY) : v.delta_plus.log2() - Real(2L) * log2(u));
    }
    // last decade: points with t_* - t within a factor 10 of the smallest gap
    long mono_bad = 0, in_decade = 0;
    Real edge = gap.back() * Real(10L);
    for (std::size_t i = 1; i < gap.size(); ++i)
        if (gap[i - 1] <= edge) {
            ++in_decade;
            mono_bad += !(ratio[i] < ratio[i - 1]);
        }
    bool vanishing = ratio.back() < Real(-64L);
    Outcome o;
    o.pass = zero_at_star && order_bad == 0 && in_decade >= 2 && mono_bad == 0 && vanishing;
    o.detail = fmt("delta(t*) zero: %s, order violations %ld, last-decade steps %ld with %ld non-decreasing, "
                   "log2 ratio at the last point %s",
                   zero_at_star ? "yes" : "no", order_bad, in_decade, mono_bad, ratio.back().str(6).c_str());
    return o;
}

// ---- A8 ----
Outcome a8() {
    Outcome o{true, ""};
    {
        auto r = find_parameter(KneadingTarget::make(5, "0"));
        auto f = QuadMap::make(r.midpoint(), 256);
        auto sys = build_induced_system(f, 5);
        double t = 0.5;
        auto g = gibbs_weights(sys, t, gibbs_proxy_pressure(sys, t));
        auto m = spread_measure(f, sys, g);
        std::size_t count = 0;
        for (const auto& b : sys.branches) count += b.return_time;
        double total = 0;
        bool nonneg = true;
        for (const auto& a : m.atoms) {
            total += a.mass;
            nonneg = nonneg && a.mass >= 0;
        }
        bool ok = m.atoms.size() == count && nonneg && std::fabs(total - 1) < std::ldexp(1.0, kA8NormLog2);
        o.pass = o.pass && ok;
        o.detail += fmt("spread: %zu atoms for sum of return times %zu, |mass-1| = %.1e; ", m.atoms.size(), count,
                        std::fabs(total - 1));
    }
    {
        auto f = QuadMap::make("-2", 256);
        double p = std::log(2.0) + 0.1;
        const int depth = 12;
        auto m = atomic_conformal_measure(f, 0, p, depth);
        std::vector<double> level(depth + 1, 0);
        std::vector<long> per(depth + 1, 0);
        double total = 0;
        for (const auto& a : m.atoms) {
            level[a.level] += a.mass;
            per[a.level]++;
            total += a.mass;
        }
        // level j carries (2 e^{-p})^j times level 0
        double worst = 0;
        bool counts = true;
        for (int j = 0; j <= depth; ++j) {
            counts = counts && per[j] == (1L << j);
            worst = std::max(worst, std::fabs(std::log(level[j] / level[0]) - j * (std::log(2.0) - p)));
        }
        double defect = conformality_defect(f, m, 0, p);
        bool ok = counts && worst < std::ldexp(1.0, kA8LevelLog2) && std::fabs(total - 1) < std::ldexp(1.0, kA8NormLog2) &&
                  defect < kA8ConformalTol;
        o.pass = o.pass && ok;
        o.detail += fmt("atomic: level identity gap %.1e, conformality defect %.1e, |mass-1| = %.1e", worst, defect,
                        std::fabs(total - 1));
    }
    return o;
}

// ---- A9 ----
std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

Outcome a9(const std::string& cli) {
    auto t0 = std::chrono::steady_clock::now();
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / fmt("qp_acceptance_%ld", (long)::getpid());
    fs::create_directories(dir);
    std::vector<std::string> configs;
    for (auto [xi, q] : std::vector<std::pair<const char*, long>>{{"0.5", 300}, {"1", 400}, {"1", 800}, {"2", 600}})
        configs.push_back(fmt("verify-appendix --xi %s --q %ld", xi, q));
    configs.push_back("pressure --c -2 --method periodic --period 14 --t-min 0 --t-max 2 --steps 41");
    for (int m = 0; m < 16; ++m) {
        std::string p;
        for (int b = 3; b >= 0; --b) p += (m >> b & 1) ? '1' : '0';
        configs.push_back("--bits 512 find-param --n 5 --prefix " + p);
    }
    long differ = 0, failed = 0;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        std::string out[2];
        for (int k = 0; k < 2; ++k) {
            fs::path file = dir / fmt("run%zu_%d.out", i, k);
            std::string cmd = "\"" + cli + "\" --threads " + (k ? "8" : "1") + " --out \"" + file.string() + "\" " + configs[i];
            int rc = std::system(cmd.c_str());
            if (rc != 0) ++failed;
            out[k] = slurp(file);
        }
        if (out[0].empty() || out[0] != out[1]) ++differ;
    }
    fs::remove_all(dir);
    Outcome o;
    o.pass = differ == 0 && failed == 0;
    o.detail = fmt("%zu configs, %ld differ between 1 and 8 threads, %ld runs exited nonzero, %.1fs", configs.size(), differ,
                   failed, seconds_since(t0));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli = QP_CLI_PATH;
    std::vector<std::string> only;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a.rfind("--cli=", 0) == 0)
            cli = a.substr(6);
        else
            only.push_back(a);
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> all = {
        {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5},
        {"A6", a6}, {"A7", a7}, {"A8", a8}, {"A9", [&] { return a9(cli); }}};
    bool green = true;
    for (const auto& [name, fn] : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        green = green && o.pass;
        std::printf("%s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return green ? 0 : 1;
}
