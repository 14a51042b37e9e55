#include "qp/real_dynamics.hpp"

#include "qp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace qp {

using json = nlohmann::json;

QuadMap QuadMap::make(const std::string& c_decimal, long bits) {
    if (bits < 64) throw DomainError("precision_bits must be >= 64");
    PrecisionScope ps(bits);
    QuadMap f;
    f.bits = bits;
    f.c = from_mpq(parse_decimal_exact(c_decimal));
    return f;
}

QuadMap QuadMap::make(const Real& c, long bits) {
    if (bits < 64) throw DomainError("precision_bits must be >= 64");
    PrecisionScope ps(bits);
    QuadMap f;
    f.bits = bits;
    f.c = Real() + c;
    return f;
}

namespace {

// log2(2^a + 2^b) in doubles; both may be very negative.
double lse2(double a, double b) {
    if (std::isinf(a) && a < 0) return b;
    if (std::isinf(b) && b < 0) return a;
    double m = std::max(a, b);
    return m + std::log2(1.0 + std::exp2(-std::fabs(a - b)));
}

// log2 |x| for bookkeeping; exponent-safe.
double lg_abs(const Real& x) {
    if (x.is_zero()) return -INFINITY;
    long e = 0;
    double m = mpfr_get_d_2exp(&e, x.get(), MPFR_RNDN);
    return std::log2(std::fabs(m)) + static_cast<double>(e);
}

Real eps_bits(long bits) {
    Real e(1L);
    mpfr_mul_2si(e.get(), e.get(), -bits, MPFR_RNDN);
    return e;
}

}  // namespace

OrbitData orbit_log_derivative(const QuadMap& f, const Real& z0, int n) {
    if (n < 1) throw DomainError("orbit length must be >= 1");
    PrecisionScope ps(f.bits);
    const double P = static_cast<double>(f.bits);
    OrbitData o;
    o.x.reserve(n + 1);
    o.x.push_back(Real() + z0);
    o.log_deriv.push_back(Real(0L));
    // absolute error bound of x_k as log2; starts at one rounding of z0
    double le = std::max(lg_abs(z0), 0.0) - P;
    o.certified_bits.push_back(std::max(lg_abs(z0), 0.0) - le);
    bool hit_zero = false;
    for (int k = 0; k < n; ++k) {
        const Real& x = o.x.back();
        Real next = f.apply(x);
        if (x.is_zero()) hit_zero = true;
        Real ld = hit_zero ? Real::inf(-1) : o.log_deriv.back() + log(abs(Real(2L) * x));
        // e' <= 2|x| e + e^2 + ulp(next)
        double grow = 1.0 + lg_abs(x);
        double prop = lse2(grow + le, 2 * le);
        double scale = std::max(lg_abs(next), 0.0);
        le = lse2(prop, scale - P);
        double cert = scale - le;
        o.x.push_back(std::move(next));
        o.log_deriv.push_back(std::move(ld));
        o.certified_bits.push_back(cert);
        if (cert < 8) {
            throw PrecisionExhausted("orbit keeps " + std::to_string(cert) + " bits after " + std::to_string(k + 1) +
                                     " steps at " + std::to_string(f.bits) + "-bit precision");
        }
    }
    return o;
}

FixedPoints fixed_points(const QuadMap& f) {
    PrecisionScope ps(f.bits);
    Real disc = Real(1L) - Real(4L) * f.c;
    if (disc.sign() <= 0) throw DomainError("1 - 4c must be positive");
    Real r = sqrt(disc);
    return {(Real(1L) - r) / Real(2L), (Real(1L) + r) / Real(2L)};
}

GreenValue green_function(const QuadMap& f, const Real& re, const Real& im, const Real& escape_radius, int n_max) {
    PrecisionScope ps(f.bits);
    Real R = Real() + escape_radius;
    if (R < Real(2L) + abs(f.c)) throw DomainError("escape radius must be >= 2 + |c|");
    Real x = Real() + re, y = Real() + im;
    Real R2 = R * R;
    GreenValue g;
    g.value = Real(0L);
    g.error_bound = Real(0L);
    for (int n = 0; n <= n_max; ++n) {
        Real m2 = x * x + y * y;
        if (m2 > R2) {
            g.escaped = true;
            g.n = n;
            Real scale = Real(1L);
            mpfr_mul_2si(scale.get(), scale.get(), -n, MPFR_RNDN);
            g.value = scale * log(m2) / Real(2L);
            // sum_{k>=n} 2^{-k-1} log(1 + |c|/R^2), bounded by twice the first term
            g.error_bound = scale * Real(2L) * log1p(abs(f.c) / R2);
            return g;
        }
        Real nx = x * x - y * y + f.c;
        y = Real(2L) * x * y;
        x = std::move(nx);
    }
    return g;
}

json PeriodicPoint::to_json() const {
    json orb = json::array();
    for (const auto& v : orbit) orb.push_back(v.str(40));
    return {{"x", x.str(40)},
            {"period_f", period_f},
            {"log_multiplier", log_multiplier.str(30)},
            {"chi", chi.str(30)},
            {"residual", residual.str(6)},
            {"bracket_width", bracket_width.str(6)},
            {"orbit", orb}};
}

json PuzzleIntervalsR::to_json() const {
    auto iv = [](const Interval& I) { return json::array({I.lo.str(40), I.hi.str(40)}); };
    return {{"alpha", alpha.str(40)}, {"beta", beta.str(40)}, {"P1", iv(P1)},
            {"Y", iv(Y)},             {"Ytilde", iv(Ytilde)}, {"gamma", gamma.str(40)},
            {"assumptions", assumptions}};
}

namespace {

std::vector<Interval> preimage(const Real& c, const Interval& I) {
    Real u = I.lo - c, v = I.hi - c;
    if (v.sign() < 0) return {};
    if (u.sign() <= 0) {
        Real r = sqrt(v);
        return {{-r, r}};
    }
    Real a = sqrt(u), b = sqrt(v);
    return {{-b, -a}, {a, b}};
}

int sgn(const Real& x) { return x.sign() < 0 ? -1 : 1; }

}  // namespace

PuzzleIntervalsR puzzle_intervals(const QuadMap& f) {
    PrecisionScope ps(f.bits);
    // c = -2 is kept: the real pieces still exist there and give closed-form checks
    if (!(f.c >= Real(-2L) && f.c < Real(-0.75))) throw DomainError("puzzle intervals need c in [-2, -3/4)");
    PuzzleIntervalsR pz;
    auto fp = fixed_points(f);
    pz.alpha = fp.alpha;
    pz.beta = fp.beta;
    pz.P1 = {pz.alpha, -pz.alpha};
    std::vector<Interval> level{pz.P1};
    for (int k = 0; k < 3; ++k) {
        std::vector<Interval> next;
        for (const auto& I : level) {
            for (auto& J : preimage(f.c, I)) next.push_back(std::move(J));
        }
        level = std::move(next);
    }
    Real tol = eps_bits(f.bits - 16);
    std::vector<Interval> inside;
    for (auto& I : level) {
        if (I.lo >= pz.P1.lo - tol && I.hi <= pz.P1.hi + tol && I.width() > tol) inside.push_back(I);
    }
    std::sort(inside.begin(), inside.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    if (inside.size() != 2) {
        throw BranchResolutionFailure("expected 2 components of f^-3(P1) in P1, found " +
                                      std::to_string(inside.size()));
    }
    if (!(inside[0].hi < inside[1].lo)) throw BranchResolutionFailure("components are not separated");

    bool found = false;
    for (int i = 0; i < 2 && !found; ++i) {
        for (const Real* e : {&inside[i].lo, &inside[i].hi}) {
            Real f1 = f.apply(*e);
            Real f2 = f.apply(f1);
            if (e->sign() < 0 && f1 < pz.alpha && abs(f2 + pz.alpha) <= tol) {
                pz.gamma = *e;
                pz.Y = inside[i];
                pz.Ytilde = inside[1 - i];
                found = true;
                break;
            }
        }
    }
    if (!found) throw BranchResolutionFailure("no component endpoint satisfies the gamma conditions");
    auto signs = [&](const Interval& I, int* s) {
        Real m = I.mid();
        s[0] = sgn(m);
        m = f.apply(m);
        s[1] = sgn(m);
        m = f.apply(m);
        s[2] = sgn(m);
    };
    signs(pz.Y, pz.sY);
    signs(pz.Ytilde, pz.sYt);
    pz.assumptions.push_back(
        "gamma selected as the root of f^2(x) = -alpha with x < 0 and f(x) < alpha (no ray tracing)");
    return pz;
}

Real g_inverse(const QuadMap& f, const int signs[3], const Real& y) {
    PrecisionScope ps(f.bits);
    Real tol = eps_bits(f.bits - 16);
    Real v = y;
    for (int k = 2; k >= 0; --k) {
        Real r = v - f.c;
        if (r.sign() < 0) {
            if (r < -tol) throw BranchInversionFailure("value below the critical value during inversion");
            r = Real(0L);
        }
        v = sqrt(r);
        if (signs[k] < 0) v = -v;
    }
    return v;
}

Real g_map(const QuadMap& f, const Real& x) {
    PrecisionScope ps(f.bits);
    return f.apply(f.apply(f.apply(x)));
}

namespace {

// Fixed point of the inverse-branch composition H on piece I. H maps I into
// itself, so H(lo) - lo >= 0 >= H(hi) - hi and bisection always brackets.
template <class H>
std::pair<Real, Real> bisect_fixed(const QuadMap& f, const Interval& I, H h) {
    Real lo = I.lo, hi = I.hi;
    Real dlo = h(lo) - lo, dhi = h(hi) - hi;
    if (dlo.sign() < 0 || dhi.sign() > 0) throw RootNotBracketed("no sign change of H(x) - x on the piece");
    for (long it = 0; it < f.bits + 64; ++it) {
        Real m = (lo + hi) / Real(2L);
        if (m == lo || m == hi) break;
        Real d = h(m) - m;
        if (d.sign() >= 0) lo = m;
        else hi = m;
    }
    return {(lo + hi) / Real(2L), hi - lo};
}

PeriodicPoint finish(const QuadMap& f, const Real& x, int period, const Real& width) {
    PeriodicPoint p;
    p.x = x;
    p.period_f = period;
    auto o = orbit_log_derivative(f, x, period);
    p.log_multiplier = o.log_deriv[period];
    p.chi = p.log_multiplier / Real(static_cast<long>(period));
    p.residual = abs(o.x[period] - x);
    p.bracket_width = width;
    for (int j = 0; j < period; ++j) p.orbit.push_back(o.x[j]);
    return p;
}

}  // namespace

GPeriodicPoints g_periodic_points(const QuadMap& f, const PuzzleIntervalsR& pz) {
    PrecisionScope ps(f.bits);
    GPeriodicPoints out;
    auto [xp, wp] = bisect_fixed(f, pz.Y, [&](const Real& y) { return g_inverse(f, pz.sY, y); });
    out.p = finish(f, xp, 3, wp);
    auto [xq, wq] = bisect_fixed(f, pz.Ytilde, [&](const Real& y) { return g_inverse(f, pz.sYt, y); });
    out.p_plus = finish(f, xq, 3, wq);
    // p- in Y~ with g(p-) in Y: x = inv_Yt(inv_Y(x))
    auto [xm, wm] = bisect_fixed(f, pz.Ytilde,
                                 [&](const Real& y) { return g_inverse(f, pz.sYt, g_inverse(f, pz.sY, y)); });
    out.p_minus = finish(f, xm, 6, wm);
    return out;
}

ThetaData theta_and_tstar(const QuadMap& f, const GPeriodicPoints& pp) {
    PrecisionScope ps(f.bits);
    ThetaData t;
    t.theta = exp(Real(1.5) * (pp.p.chi - pp.p_plus.chi));
    t.admissibility_gap = abs(pp.p_plus.chi - pp.p_minus.chi);
    if (t.theta - Real(1L) <= eps_bits(f.bits / 2)) {
        throw ThetaNotAboveOne("theta = " + t.theta.str(20) + " is not above 1");
    }
    t.t_star = log(Real(2L)) / log(t.theta);
    return t;
}

CriticalData chi_crit(const QuadMap& f, int n, const GPeriodicPoints* pp) {
    if (n < 1) throw DomainError("n must be >= 1");
    // errors grow by at most 4 per step, so spend two bits per step
    QuadMap g = QuadMap::make(f.c, std::max<long>(f.bits, 2L * n + 64));
    PrecisionScope ps(g.bits);
    auto o = orbit_log_derivative(g, g.c, n);
    CriticalData d;
    d.n_used = n;
    d.chi_crit_estimate = o.log_deriv[n] / Real(static_cast<long>(n));
    if (pp) d.identity_check = d.chi_crit_estimate - pp->p_plus.log_multiplier / Real(3L);
    return d;
}

std::vector<Real> alpha_preimages(const QuadMap& f, int depth) {
    PrecisionScope ps(f.bits);
    auto fp = fixed_points(f);
    std::vector<Real> all{fp.alpha};
    if (depth < 1) return all;
    // alpha is its own preimage, so only -alpha is new at depth 1
    std::vector<Real> cur{-fp.alpha};
    all.push_back(-fp.alpha);
    for (int k = 2; k <= depth; ++k) {
        std::vector<Real> next;
        for (const auto& y : cur) {
            Real r = y - f.c;
            if (r.sign() < 0) continue;
            Real s = sqrt(r);
            next.push_back(-s);
            next.push_back(s);
        }
        for (const auto& y : next) all.push_back(y);
        cur = std::move(next);
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

Interval central_piece(const QuadMap& f, int depth) {
    if (depth < 1) throw DomainError("central piece needs depth >= 1");
    PrecisionScope ps(f.bits);
    auto pts = alpha_preimages(f, depth);
    auto it = std::upper_bound(pts.begin(), pts.end(), Real(0L));
    if (it == pts.begin() || it == pts.end()) throw BranchResolutionFailure("0 is not enclosed by preimages of alpha");
    return {*(it - 1), *it};
}

Interval piece_containing(const QuadMap& f, const Real& z, int depth) {
    if (depth < 0) throw DomainError("piece depth must be >= 0");
    PrecisionScope ps(std::max<long>(f.bits, 2L * depth + 96));
    Real c = f.c;
    auto fp = fixed_points(f);
    std::vector<Real> orb{z};
    for (int i = 0; i < depth; ++i) orb.push_back(orb.back() * orb.back() + c);
    const Real& w = orb.back();
    if (w == fp.alpha) throw BranchResolutionFailure("orbit lands on alpha");
    Interval P = w > fp.alpha ? Interval{fp.alpha, fp.beta} : Interval{-fp.beta, fp.alpha};
    for (int i = depth - 1; i >= 0; --i) {
        const Real& x = orb[i];
        if (P.hi <= c) throw BranchResolutionFailure("piece has no real preimage");
        Real v = sqrt(P.hi - c);
        if (P.lo <= c) {
            P = {-v, v};
        } else {
            Real u = sqrt(P.lo - c);
            P = x.sign() >= 0 ? Interval{u, v} : Interval{-v, -u};
        }
        if (!P.contains(x)) throw BranchResolutionFailure("pullback lost the orbit point");
    }
    return P;
}

}  // namespace qp
