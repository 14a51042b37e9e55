#include "qp/measure_builder.hpp"

#include "qp/errors.hpp"
#include "qp/parameter_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qp {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double lse(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::fabs(a - b)));
}

double log_listed(const InducedSystem& sys, double t, double p) {
    double acc = -kInf;
    for (const auto& b : sys.branches) acc = lse(acc, -b.return_time * p - t * b.log_deriv_min);
    return acc;
}

}  // namespace

GibbsApprox gibbs_weights(const InducedSystem& sys, double t, double p) {
    if (sys.branches.empty()) throw WeightOverflow("no branches to weight");
    GibbsApprox g;
    g.t = t;
    g.p = p;
    std::vector<double> lw;
    double Z = -kInf;
    for (const auto& b : sys.branches) {
        double l = -p * b.return_time - t * b.log_deriv_mid;
        if (std::isnan(l)) throw WeightOverflow("branch weight is not a number");
        lw.push_back(l);
        Z = lse(Z, l);
    }
    if (!std::isfinite(Z)) throw WeightOverflow("branch weights are all zero or overflow");
    g.log_normalizer = Z;
    for (std::size_t i = 0; i < lw.size(); ++i) {
        const auto& b = sys.branches[i];
        g.weights.push_back(std::exp(lw[i] - Z));
        g.sandwich.emplace_back(std::exp(-p * b.return_time - t * b.log_deriv_max - Z),
                                std::exp(-p * b.return_time - t * b.log_deriv_min - Z));
    }
    g.diagnostics.push_back(
        "every branch maps onto V, so the normalized weights serve as both the conformal and the invariant proxy");
    g.diagnostics.push_back("branch sum covers listed branches only; Lebesgue coverage " +
                            std::to_string(sys.explicit_coverage));
    return g;
}

double gibbs_proxy_pressure(const InducedSystem& sys, double t) {
    if (sys.branches.empty()) throw NoBracket("no branches");
    // log Z_1 is decreasing in p; grow the bracket until it changes sign
    double a = -1, b = 1;
    for (int i = 0; i < 200 && !(log_listed(sys, t, a) > 0); ++i) a = 2 * a - 1;
    for (int i = 0; i < 200 && !(log_listed(sys, t, b) < 0); ++i) b = 2 * b + 1;
    if (!(log_listed(sys, t, a) > 0) || !(log_listed(sys, t, b) < 0)) throw NoBracket("listed-branch sum has no root");
    for (int it = 0; it < 200 && b - a > 1e-13 * std::max(1.0, std::fabs(a)); ++it) {
        double m = 0.5 * (a + b);
        if (log_listed(sys, t, m) > 0)
            a = m;
        else
            b = m;
    }
    return 0.5 * (a + b);
}

SpreadMeasure spread_measure(const QuadMap& f, const InducedSystem& sys, const GibbsApprox& g) {
    if (g.weights.size() != sys.branches.size()) throw DomainError("weights do not match the branch list");
    SpreadMeasure s;
    double total = 0, max_width = 0;
    for (std::size_t i = 0; i < sys.branches.size(); ++i) {
        const auto& b = sys.branches[i];
        PrecisionScope ps(std::max<long>(128, 4L * b.return_time + 64));
        Real c(f.c);
        Real x = (Real(b.lo) + Real(b.hi)) / Real(2L);
        for (int j = 0; j < b.return_time; ++j) {
            s.atoms.push_back({x.to_double(), g.weights[i], j});
            x = x * x + c;
        }
        total += b.return_time * g.weights[i];
        max_width = std::max(max_width, (b.hi - b.lo).to_double());
    }
    if (!(total > 0)) throw WeightOverflow("spread measure has zero mass");
    for (auto& a : s.atoms) a.mass /= total;
    std::stable_sort(s.atoms.begin(), s.atoms.end(), [](const Atom& a, const Atom& b) { return a.x < b.x; });
    s.total_before_normalization = total;
    s.diagnostics["atom_count"] = s.atoms.size();
    s.diagnostics["branches"] = sys.branches.size();
    s.diagnostics["max_branch_width"] = max_width;
    s.diagnostics["placement"] = "branch midpoints";
    return s;
}

OrbitSets orbit_sets(const QuadMap& f) {
    auto pz = puzzle_intervals(f);
    auto pp = g_periodic_points(f, pz);
    OrbitSets o;
    for (const auto& x : pp.p_plus.orbit) o.plus.push_back(x.to_double());
    for (const auto& x : pp.p_minus.orbit) o.minus.push_back(x.to_double());
    if (o.plus.size() != 3 || o.minus.size() != 6) throw BranchResolutionFailure("unexpected orbit sizes for p+ or p-");
    return o;
}

json MassReport::to_json() const {
    return {{"radius", radius},
            {"mass_plus", mass_plus},
            {"mass_minus", mass_minus},
            {"mass_other", mass_other},
            {"orbit_plus", orbit_plus},
            {"orbit_minus", orbit_minus}};
}

MassReport mass_near_orbits(const SpreadMeasure& m, const OrbitSets& o, double radius) {
    if (!(radius > 0)) throw DomainError("radius must be positive");
    MassReport r;
    r.radius = radius;
    r.orbit_plus = o.plus;
    r.orbit_minus = o.minus;
    auto dist = [](double x, const std::vector<double>& s) {
        double d = kInf;
        for (double y : s) d = std::min(d, std::fabs(x - y));
        return d;
    };
    for (const auto& a : m.atoms) {
        double dp = dist(a.x, o.plus), dm = dist(a.x, o.minus);
        if (std::min(dp, dm) > radius || dp == dm)
            r.mass_other += a.mass;
        else if (dp < dm)
            r.mass_plus += a.mass;
        else
            r.mass_minus += a.mass;
    }
    return r;
}

SpreadMeasure atomic_conformal_measure(const QuadMap& f, double t, double p, int depth) {
    if (depth < 0 || depth > 24) throw DomainError("depth must be in [0, 24]");
    PrecisionScope ps(std::max<long>(f.bits, 128));
    Real c(f.c);
    Real top = c * c + c;
    struct Pt {
        Real y;
        double logd;
    };
    std::vector<Pt> level{{Real(0L), 0.0}};
    std::vector<Atom> atoms;
    std::vector<double> log_level;  // natural log of each level's unnormalized total
    std::vector<double> log_mass;
    for (int j = 0; j <= depth; ++j) {
        double tot = -kInf;
        for (const auto& q : level) {
            double lm = -j * p - t * q.logd;
            atoms.push_back({q.y.to_double(), 0.0, j});
            log_mass.push_back(lm);
            tot = lse(tot, lm);
        }
        log_level.push_back(tot);
        if (j == depth) break;
        std::vector<Pt> next;
        for (const auto& q : level) {
            if (q.y < c) continue;
            Real r = sqrt(q.y - c);
            double ld = std::log(2.0 * r.to_double()) + q.logd;
            if (r <= top) {
                next.push_back({r, ld});
                next.push_back({-r, ld});
            } else if (-r >= c) {
                next.push_back({-r, ld});
            }
        }
        level = std::move(next);
    }
    SpreadMeasure s;
    if (depth >= 2) {
        int w = std::min(depth, 4);
        double ratio = std::exp((log_level[depth] - log_level[depth - w]) / w);
        s.diagnostics["ratio"] = ratio;
        s.diagnostics["window"] = w;
        if (!(ratio < 1)) throw SeriesDiverging("level totals do not decay over the last levels");
    }
    double Z = -kInf;
    for (double l : log_level) Z = lse(Z, l);
    for (std::size_t i = 0; i < atoms.size(); ++i) atoms[i].mass = std::exp(log_mass[i] - Z);
    std::stable_sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) {
        return a.x < b.x || (a.x == b.x && a.level < b.level);
    });
    s.atoms = std::move(atoms);
    s.total_before_normalization = std::exp(Z);
    json lv = json::array();
    for (double l : log_level) lv.push_back(l - Z);
    s.diagnostics["log_level_mass"] = lv;
    s.diagnostics["depth"] = depth;
    return s;
}

double conformality_defect(const QuadMap& f, const SpreadMeasure& m, double t, double p) {
    const double c = f.c.to_double();
    double worst = 0;
    for (const auto& a : m.atoms) {
        if (a.level < 1 || a.x <= 0) continue;
        double fx = a.x * a.x + c;
        // matching atom one level up
        auto it = std::lower_bound(m.atoms.begin(), m.atoms.end(), fx - 1e-9,
                                   [](const Atom& u, double v) { return u.x < v; });
        const Atom* hit = nullptr;
        for (; it != m.atoms.end() && it->x <= fx + 1e-9; ++it)
            if (it->level == a.level - 1) hit = &*it;
        if (!hit) throw DomainError("image atom missing from the measure");
        double pred = std::exp(p) * std::pow(2.0 * a.x, t) * a.mass;
        worst = std::max(worst, std::fabs(hit->mass - pred) / hit->mass);
    }
    return worst;
}

json spread_to_json(const SpreadMeasure& m) {
    json a = json::array();
    for (const auto& x : m.atoms) a.push_back({{"x", x.x}, {"mass", x.mass}, {"level", x.level}});
    return {{"atoms", a}, {"total_before_normalization", m.total_before_normalization}, {"diagnostics", m.diagnostics}};
}

namespace {

OscillationSide oscillation_side(const OscillationOptions& o, const std::string& prefix, bool want_plus) {
    SearchOptions so;
    so.bits = o.bits;
    so.threads = o.threads;
    auto r = find_parameter(KneadingTarget::make(o.n, prefix), so);
    auto f = QuadMap::make(r.midpoint(), 256);
    auto pz = puzzle_intervals(f);
    auto pp = g_periodic_points(f, pz);
    auto th = theta_and_tstar(f, pp);
    auto sys = build_induced_system(f, o.n, InducedBudget{}, o.threads);
    auto orbits = orbit_sets(f);
    OscillationSide s;
    s.prefix = prefix;
    s.c = r.midpoint().str(30);
    s.t_star = th.t_star.to_double();
    s.expected_side_dominates = true;
    for (double fr : o.fractions) {
        double t = fr * s.t_star;
        double p = gibbs_proxy_pressure(sys, t);
        auto sm = spread_measure(f, sys, gibbs_weights(sys, t, p));
        auto rep = mass_near_orbits(sm, orbits, o.radius);
        bool ok = want_plus ? rep.mass_plus > rep.mass_minus : rep.mass_minus > rep.mass_plus;
        s.expected_side_dominates = s.expected_side_dominates && ok;
        s.t.push_back(t);
        s.p.push_back(p);
        s.reports.push_back(rep);
    }
    return s;
}

json side_json(const OscillationSide& s) {
    json rows = json::array();
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        json r = s.reports[i].to_json();
        r["t"] = s.t[i];
        r["p"] = s.p[i];
        rows.push_back(r);
    }
    return {{"prefix", s.prefix},
            {"c", s.c},
            {"t_star", s.t_star},
            {"samples", rows},
            {"expected_side_dominates", s.expected_side_dominates}};
}

}  // namespace

json OscillationResult::to_json() const {
    return {{"constant_band", side_json(constant_band)},
            {"alternating_band", side_json(alternating_band)},
            {"flipped", flipped}};
}

OscillationResult oscillation_run(const OscillationOptions& o) {
    if (o.band < 2) throw DomainError("band must have length >= 2");
    std::string a = "0" + std::string(o.band, '1');
    std::string b = "0";
    for (int i = 0; i < o.band; ++i) b += (i % 2 == 0) ? '1' : '0';
    OscillationResult r;
    r.constant_band = oscillation_side(o, a, true);
    r.alternating_band = oscillation_side(o, b, false);
    r.flipped = r.constant_band.expected_side_dominates && r.alternating_band.expected_side_dominates;
    return r;
}

}  // namespace qp
