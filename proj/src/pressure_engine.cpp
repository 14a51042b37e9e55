#include "qp/pressure_engine.hpp"

#include "qp/errors.hpp"
#include "qp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>

namespace qp {

using nlohmann::json;

namespace {

using ld = long double;
constexpr double kInf = std::numeric_limits<double>::infinity();

double lse(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    if (a == kInf || b == kInf) return kInf;
    double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::fabs(a - b)));
}

double lg2abs(const Real& x) { return std::log(2.0 * std::fabs(x.to_double())); }

ExtendedLogValue from_ln(double l) {
    if (l == -kInf) return ExtendedLogValue::zero();
    if (l == kInf) return ExtendedLogValue::infinity();
    return ExtendedLogValue::from_log2(Real(l) / ln2());
}

}  // namespace

// ---- periodic orbits ----

PeriodicOrbitSet enumerate_periodic_points(const QuadMap& f, int N, unsigned threads) {
    if (N < 1 || N > 26) throw DomainError("period must be in [1, 26]");
    const ld c = f.c.to_ldouble();
    const ld top = c * c + c;
    if (!(top > c)) throw BranchInversionFailure("I(f) is degenerate");
    const std::size_t words = std::size_t(1) << N;
    std::vector<double> out(words, std::numeric_limits<double>::quiet_NaN());

    // H = h_{s_0} o ... o h_{s_{N-1}} with h_s(y) = s sqrt(y - c), clamped to I(f).
    auto H = [&](std::size_t w, ld y, bool& clamped, double* logm) {
        clamped = false;
        ld z = y;
        double acc = 0;
        for (int i = N - 1; i >= 0; --i) {
            ld d = z - c;
            if (d < 0) {
                d = 0;
                clamped = true;
            }
            ld r = std::sqrt(d);
            z = ((w >> i) & 1u) ? -r : r;
            if (z > top) {
                z = top;
                clamped = true;
            }
            if (logm) acc += std::log(2.0L * std::fabs(z));
        }
        if (logm) *logm = acc;
        return z;
    };

    const std::size_t chunk = 1024;
    const std::size_t nchunks = (words + chunk - 1) / chunk;
    parallel_for(nchunks, threads, [&](std::size_t ci) {
        for (std::size_t w = ci * chunk; w < std::min(words, (ci + 1) * chunk); ++w) {
            ld a = c, b = top;
            bool cl;
            for (int it = 0; it < 80; ++it) {
                ld m = (a + b) / 2;
                if (m <= a || m >= b) break;
                if (H(w, m, cl, nullptr) - m >= 0)
                    a = m;
                else
                    b = m;
            }
            ld x = (a + b) / 2;
            double logm = 0;
            ld hx = H(w, x, cl, &logm);
            if (cl || std::fabs(hx - x) > 1e-12L * (1 + std::fabs(x))) continue;
            out[w] = logm;
        }
    });

    PeriodicOrbitSet s;
    s.N = N;
    for (double v : out) {
        if (std::isnan(v))
            ++s.empty_cylinders;
        else
            s.log_mult.push_back(v);
    }
    return s;
}

double periodic_orbit_pressure(const PeriodicOrbitSet& s, double t) {
    if (s.log_mult.empty()) throw BranchInversionFailure("no periodic points found");
    double acc = -kInf;
    for (double L : s.log_mult) acc = lse(acc, -t * L);
    return acc / s.N;
}

double periodic_orbit_pressure(const QuadMap& f, double t, int N, unsigned threads) {
    return periodic_orbit_pressure(enumerate_periodic_points(f, N, threads), t);
}

// ---- induced system ----

namespace {

struct Node {
    Real lo, hi, mid;  // mid is the pullback of 0
    double Llo = 0, Lhi = 0, Lmid = 0;
};

struct TreeCtx {
    Real c, top;  // I(f) = [c, top]
    Interval V;
    Real tol;
};

double fwd_logd(const Real& c, Real x, int steps) {
    double acc = 0;
    for (int i = 0; i < steps; ++i) {
        acc += lg2abs(x);
        x = x * x + c;
    }
    return acc;
}

// Component of f^{-1}(A) on the side s, clipped to I(f). `clamped` when A
// reaches below c, in which case the two sides merge into one interval around 0.
bool pull(const TreeCtx& k, const Node& A, int s, int steps, Node& B, bool& clamped) {
    clamped = false;
    if (A.hi <= k.c) return false;
    Real v = sqrt(A.hi - k.c);
    if (A.lo <= k.c) {
        clamped = true;
        B.lo = -v;
        B.hi = v;
        B.Llo = B.Lhi = lg2abs(v) + A.Lhi;
    } else {
        Real u = sqrt(A.lo - k.c);
        if (s > 0) {
            B.lo = u;
            B.hi = v;
            B.Llo = lg2abs(u) + A.Llo;
            B.Lhi = lg2abs(v) + A.Lhi;
        } else {
            B.lo = -v;
            B.hi = -u;
            B.Llo = lg2abs(v) + A.Lhi;
            B.Lhi = lg2abs(u) + A.Llo;
        }
    }
    Real m = A.mid > k.c ? sqrt(A.mid - k.c) : Real(0L);
    B.mid = s > 0 ? m : -m;
    B.Lmid = lg2abs(B.mid) + A.Lmid;
    if (B.lo >= k.top) return false;
    if (B.hi > k.top) {
        B.hi = k.top;
        B.Lhi = fwd_logd(k.c, B.hi, steps);
    }
    return true;
}

enum class Where { Inside, Outside, Straddle };

Where classify(const TreeCtx& k, const Node& B) {
    if (B.lo >= k.V.lo - k.tol && B.hi <= k.V.hi + k.tol) return Where::Inside;
    if (B.hi <= k.V.lo + k.tol || B.lo >= k.V.hi - k.tol) return Where::Outside;
    return Where::Straddle;
}

ReturnBranch to_branch(const Node& B, int m, bool sampled) {
    ReturnBranch r;
    r.lo = B.lo;
    r.hi = B.hi;
    r.return_time = m;
    r.log_deriv_min = std::min({B.Llo, B.Lhi, B.Lmid});
    r.log_deriv_max = std::max({B.Llo, B.Lhi, B.Lmid});
    r.log_deriv_mid = B.Lmid;
    r.sampled = sampled;
    return r;
}

double log_int_pow(double ua, double ub, double s) {
    // log of the integral of u^{-s} over [ua, ub], 0 <= ua < ub
    if (ua <= 0) {
        if (s >= 1) return kInf;
        return (1 - s) * std::log(ub) - std::log(1 - s);
    }
    double L = std::log(ub / ua);
    double z = (1 - s) * L;
    double lphi;
    if (std::fabs(z) < 1e-12)
        lphi = z / 2;
    else if (z > 0)
        lphi = z + std::log(-std::expm1(-z)) - std::log(z);
    else
        lphi = std::log(std::expm1(z) / z);
    return (1 - s) * std::log(ua) + std::log(L) + lphi;
}

struct Split {
    std::vector<ld> le, gt;  // returns with time <= cut and > cut, on V cells
    bool diverged = false;
    double tail_log2 = -kInf;  // share of the returned mass that comes from the unresolved or extrapolated tail
};

// One pass of the first-return operator: sum over m of e^{-mp} 1_V T (1_{V^c} T)^{m-1} g.
Split first_return_pass(const AggregateModel& A, const std::vector<ld>& w, const std::vector<ld>& g, double p, int cut,
                        int max_m, bool need_gt) {
    const std::size_t n = A.lo.size();
    Split r;
    r.le.assign(n, 0);
    r.gt.assign(n, 0);
    std::vector<ld> y = g, ny(n);
    const ld ep = std::exp(-(ld)p);
    std::vector<ld> hist;
    std::vector<ld> last_ret(n, 0);
    ld total = 0;
    int m = 1;
    for (; m <= max_m; ++m) {
        ld mass = 0, retm = 0;
        for (std::size_t i = 0; i < n; ++i) {
            ld v = 0;
            if (A.pre_plus[i] >= 0) v += y[A.pre_plus[i]];
            if (A.pre_minus[i] >= 0) v += y[A.pre_minus[i]];
            v *= w[i] * ep;
            ny[i] = v;
        }
        for (std::size_t i = 0; i < n; ++i) {
            ld len = A.hi[i] - A.lo[i];
            if (A.in_V[i]) {
                if (m <= cut)
                    r.le[i] += ny[i];
                else
                    r.gt[i] += ny[i];
                last_ret[i] = ny[i];
                retm += ny[i] * len;
                y[i] = 0;
            } else {
                y[i] = ny[i];
                mass += ny[i] * len;
            }
        }
        total += retm;
        hist.push_back(mass);
        if (!(mass < 1e300L) || std::isnan((double)mass)) {
            r.diverged = true;
            return r;
        }
        if (m >= cut && !need_gt) {
            r.tail_log2 = mass > 0 ? std::log2((double)(mass / A.V_len)) : -kInf;
            return r;
        }
        if (mass == 0 || (m > cut && mass < 1e-22L * total)) {
            r.tail_log2 = mass > 0 ? std::log2((double)(mass / total)) : -kInf;
            return r;
        }
        // once the non-returned mass decays geometrically, sum the tail in closed form
        if (m > cut && m >= 300 && m % 25 == 0 && hist[m - 201] > 0) {
            ld r1 = std::pow(hist[m - 1] / hist[m - 101], 0.01L);
            ld r2 = std::pow(hist[m - 101] / hist[m - 201], 0.01L);
            if (std::fabs((double)(r1 - r2)) < 1e-10) {
                if (r1 >= 1) {
                    r.diverged = true;
                    return r;
                }
                ld k = r1 / (1 - r1);
                for (std::size_t i = 0; i < n; ++i)
                    if (A.in_V[i]) r.gt[i] += last_ret[i] * k;
                r.tail_log2 = std::log2((double)(retm * k / (total + retm * k)));
                return r;
            }
        }
    }
    // horizon reached: extrapolate geometrically or declare divergence
    int W = std::min<int>(200, (int)hist.size() - 1);
    ld rho = 1;
    if (W > 0 && hist[hist.size() - 1 - W] > 0) rho = std::pow(hist.back() / hist[hist.size() - 1 - W], 1.0L / W);
    if (!(rho < 1 - 1e-9L)) {
        r.diverged = true;
        return r;
    }
    ld k = rho / (1 - rho);
    ld retm = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (A.in_V[i]) {
            r.gt[i] += last_ret[i] * k;
            retm += last_ret[i] * (A.hi[i] - A.lo[i]);
        }
    r.tail_log2 = std::log2((double)(retm * k / (total + retm * k)));
    return r;
}

ld avg_V(const AggregateModel& A, const std::vector<ld>& h) {
    ld s = 0;
    for (std::size_t i = 0; i < h.size(); ++i)
        if (A.in_V[i]) s += h[i] * (A.hi[i] - A.lo[i]);
    return s / A.V_len;
}

std::vector<ld> add(const std::vector<ld>& a, const std::vector<ld>& b) {
    std::vector<ld> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

struct ZDiag {
    double tail_log2 = -kInf;
};

double log_explicit(const InducedSystem& sys, double t, double p, bool breadth_only) {
    double acc = -kInf;
    for (const auto& b : sys.branches) {
        if (breadth_only && b.sampled) continue;
        acc = lse(acc, -b.return_time * p - t * b.log_deriv_min);
    }
    return acc;
}

std::vector<ld> agg_weights_ld(const AggregateModel& A, double t) {
    auto w = A.weights(t);
    std::vector<ld> r(w.begin(), w.end());
    for (auto v : r)
        if (!std::isfinite((double)v)) throw WeightOverflow("aggregate weight is infinite at this t");
    return r;
}

// natural log of Z_ell with the aggregate remainder
double log_Z_aggregate(const InducedSystem& sys, const std::vector<ld>& w, int ell, double t, double p, ZDiag* d) {
    const auto& A = sys.agg;
    const int cut = sys.complete_to;
    const int H = sys.budget.aggregate_horizon;
    std::vector<ld> one(A.lo.size(), 0);
    for (std::size_t i = 0; i < one.size(); ++i)
        if (A.in_V[i]) one[i] = 1;
    // powers K_F^k 1 for k < ell
    std::vector<std::vector<ld>> KF{one};
    double tail = -kInf;
    for (int k = 1; k < ell; ++k) {
        auto s = first_return_pass(A, w, KF.back(), p, cut, H, true);
        if (s.diverged) return kInf;
        tail = std::max(tail, s.tail_log2);
        KF.push_back(add(s.le, s.gt));
    }
    // sum over i of K_<=^i K_> K_F^{ell-1-i} 1
    ld R = 0;
    for (int i = 0; i < ell; ++i) {
        auto s = first_return_pass(A, w, KF[ell - 1 - i], p, cut, H, true);
        if (s.diverged) return kInf;
        tail = std::max(tail, s.tail_log2);
        std::vector<ld> v = s.gt;
        for (int j = 0; j < i; ++j) v = first_return_pass(A, w, v, p, cut, cut, false).le;
        R += avg_V(A, v);
    }
    if (d) d->tail_log2 = tail;
    double E = ell * log_explicit(sys, t, p, true);
    return lse(E, R > 0 ? (double)std::log(R) : -kInf);
}

}  // namespace

std::vector<double> AggregateModel::weights(double t) const {
    std::vector<double> w(lo.size(), 0.0);
    const double s = t / 2;
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (hi[i] <= c) continue;
        double ua = std::max(lo[i], c) - c, ub = hi[i] - c;
        double l = -s * std::log(4.0) + log_int_pow(ua, ub, s) - std::log(hi[i] - lo[i]);
        w[i] = std::exp(l);
    }
    return w;
}

std::size_t InducedSystem::breadth_count() const {
    return std::count_if(branches.begin(), branches.end(), [](const ReturnBranch& b) { return !b.sampled; });
}

json InducedSystem::summary_json() const {
    json j;
    j["n"] = n;
    j["c"] = c;
    j["bits"] = bits;
    j["V"] = {V.lo.str(20), V.hi.str(20)};
    j["branches"] = branches.size();
    j["breadth_branches"] = breadth_count();
    j["sampled_branches"] = branches.size() - breadth_count();
    j["landing_domains"] = landing.size();
    j["complete_to_return_time"] = complete_to;
    j["explicit_coverage"] = explicit_coverage;
    j["completeness_defect_log2"] = completeness_defect.is_zero() ? -kInf : completeness_defect.log2().to_double();
    j["defect_horizon"] = defect_horizon;
    j["aggregate_cells"] = agg.lo.size();
    double dist = 0;
    std::map<int, int> lv;
    int maxm = 0;
    for (const auto& b : branches) {
        dist = std::max(dist, b.log_deriv_max - b.log_deriv_min);
        lv[b.level]++;
        maxm = std::max(maxm, b.return_time);
    }
    j["max_distortion"] = dist;
    j["max_return_time"] = maxm;
    json h = json::object();
    for (auto& [k, v] : lv) h[std::to_string(k)] = v;
    j["level_histogram"] = h;
    j["budget"] = {{"max_return_time", budget.max_return_time},
                   {"max_nodes", budget.max_nodes},
                   {"forward_samples", budget.forward_samples},
                   {"forward_geometric", budget.forward_geometric},
                   {"forward_max_time", budget.forward_max_time},
                   {"cell_depth", budget.cell_depth},
                   {"aggregate_horizon", budget.aggregate_horizon}};
    j["notes"] = notes;
    return j;
}

InducedSystem build_induced_system(const QuadMap& f, int n, const InducedBudget& budget, unsigned threads) {
    if (n < 1) throw DomainError("n must be >= 1");
    const long bits = std::max<long>(160, std::min<long>(f.bits, 256));
    PrecisionScope ps(bits);
    InducedSystem sys;
    sys.n = n;
    sys.c = f.c.to_double();
    sys.bits = bits;
    sys.budget = budget;

    TreeCtx k;
    k.c = Real(f.c);
    k.top = k.c * k.c + k.c;
    sys.V = piece_containing(f, Real(0L), n + 1);
    sys.V.lo = Real(sys.V.lo);
    sys.V.hi = Real(sys.V.hi);
    k.V = sys.V;
    k.tol = exp2(Real(-(bits - 24)));

    Node root;
    root.lo = sys.V.lo;
    root.hi = sys.V.hi;
    root.mid = Real(0L);

    // breadth tree
    std::vector<Node> cur{root};
    std::vector<ReturnBranch> found;
    long straddles = 0, clamps = 0;
    sys.complete_to = budget.max_return_time;
    for (int j = 0; j < budget.max_return_time; ++j) {
        struct Kid {
            Node nd;
            Where where;
            bool ok = false, cl = false;
        };
        std::vector<Kid> kids(cur.size() * 2);
        parallel_for(cur.size(), threads, [&](std::size_t i) {
            PrecisionScope wps(bits);
            for (int s = 0; s < 2; ++s) {
                Kid& kd = kids[2 * i + s];
                kd.ok = pull(k, cur[i], s == 0 ? 1 : -1, j + 1, kd.nd, kd.cl);
                if (kd.ok && kd.cl && s == 1) kd.ok = false;  // merged interval counted once
                if (kd.ok) kd.where = classify(k, kd.nd);
            }
        });
        std::vector<Node> next;
        for (auto& kd : kids) {
            if (!kd.ok) continue;
            if (kd.cl) ++clamps;
            switch (kd.where) {
                case Where::Inside: found.push_back(to_branch(kd.nd, j + 1, false)); break;
                case Where::Outside: next.push_back(std::move(kd.nd)); break;
                case Where::Straddle: ++straddles; break;
            }
        }
        for (const auto& nd : next) {
            LandingDomain L;
            L.lo = nd.lo;
            L.hi = nd.hi;
            L.landing_time = j + 1;
            L.log_deriv_min = std::min({nd.Llo, nd.Lhi, nd.Lmid});
            L.log_deriv_max = std::max({nd.Llo, nd.Lhi, nd.Lmid});
            sys.landing.push_back(std::move(L));
        }
        cur = std::move(next);
        if (cur.empty()) {
            sys.complete_to = std::max(j + 1, budget.aggregate_horizon);
            break;
        }
        if (cur.size() > budget.max_nodes && j + 1 < budget.max_return_time) {
            sys.complete_to = j + 1;
            sys.notes.push_back("breadth tree stopped at node cap after return time " + std::to_string(j + 1));
            break;
        }
    }
    if (straddles) sys.notes.push_back(std::to_string(straddles) + " preimage pieces straddled V and were dropped");
    if (clamps) sys.notes.push_back(std::to_string(clamps) + " preimage pieces contained the critical value");

    // forward sampling past the breadth horizon
    std::vector<Real> samples;
    {
        Real w = sys.V.width();
        for (int i = 0; i < budget.forward_samples; ++i)
            samples.push_back(sys.V.lo + w * Real((2.0 * i + 1) / (2.0 * budget.forward_samples)));
        for (int i = 1; i <= budget.forward_geometric; ++i) {
            Real r = sys.V.hi * exp2(Real(-i));
            samples.push_back(r);
            samples.push_back(-r);
        }
    }
    const long fbits = std::max<long>(bits, 4L * budget.forward_max_time + 64);
    std::vector<std::optional<ReturnBranch>> sampled(samples.size());
    long sample_rejects = 0;
    std::vector<char> rejected(samples.size(), 0);
    parallel_for(samples.size(), threads, [&](std::size_t si) {
        std::vector<int> signs;
        int m = 0;
        {
            PrecisionScope fps(fbits);
            Real c = f.c;
            Real x(samples[si]);
            for (int step = 1; step <= budget.forward_max_time; ++step) {
                signs.push_back(x.sign() < 0 ? -1 : 1);
                x = x * x + c;
                if (x > sys.V.lo && x < sys.V.hi) {
                    m = step;
                    break;
                }
            }
        }
        if (m == 0 || m <= sys.complete_to) return;
        // |f'| <= 4 on the tree, so 2 extra bits per step keep the forward image exact to working precision
        PrecisionScope wps(bits + 2L * m);
        Node nd = root;
        for (int i = m - 1; i >= 0; --i) {
            Node B;
            bool cl;
            if (!pull(k, nd, signs[i], m - i, B, cl) || cl) {
                rejected[si] = 1;
                return;
            }
            Where wh = classify(k, B);
            if ((i >= 1 && wh != Where::Outside) || (i == 0 && wh != Where::Inside)) {
                rejected[si] = 1;
                return;
            }
            nd = std::move(B);
        }
        if (!(nd.lo <= samples[si] && samples[si] <= nd.hi)) {
            rejected[si] = 1;
            return;
        }
        sampled[si] = to_branch(nd, m, true);
    });
    for (char r : rejected) sample_rejects += r;
    if (sample_rejects) sys.notes.push_back(std::to_string(sample_rejects) + " forward samples failed the pullback check");
    for (auto& o : sampled)
        if (o) found.push_back(std::move(*o));

    std::sort(found.begin(), found.end(), [](const ReturnBranch& a, const ReturnBranch& b) {
        int cl = cmp(a.lo, b.lo);
        if (cl != 0) return cl < 0;
        return a.sampled < b.sampled;
    });
    // duplicates: the same branch reached from several samples
    std::vector<ReturnBranch> uniq;
    for (auto& b : found) {
        if (!uniq.empty() && abs(uniq.back().lo - b.lo) <= k.tol && abs(uniq.back().hi - b.hi) <= k.tol) continue;
        uniq.push_back(std::move(b));
    }
    sys.branches = std::move(uniq);

    // levels
    for (int kk = 0;; ++kk) {
        int d = n + 3 * kk + 2;
        if (d > 200) break;
        Interval P = piece_containing(f, Real(0L), d);
        sys.level_radius.push_back(Real(P.hi));
    }
    long level_viol = 0, unleveled = 0;
    for (auto& b : sys.branches) {
        Real r = max(abs(b.lo), abs(b.hi));
        int lev = -1;
        for (std::size_t kk = 0; kk < sys.level_radius.size(); ++kk)
            if (r <= sys.level_radius[kk] + k.tol) lev = (int)kk;
        b.level = lev;
        if (lev < 0)
            ++unleveled;
        else if (b.return_time < n + 3 * lev)
            ++level_viol;
    }
    if (unleveled) sys.notes.push_back(std::to_string(unleveled) + " branches are not inside P_{n+2}(0)");
    if (level_viol) sys.notes.push_back(std::to_string(level_viol) + " branches violate m >= n + 3k");

    Real cov(0L);
    for (const auto& b : sys.branches) cov += b.hi - b.lo;
    sys.explicit_coverage = (cov / sys.V.width()).to_double();

    // aggregate model on alpha-preimage cells
    {
        const int D = std::max(budget.cell_depth, n + 1);
        auto pts = alpha_preimages(f, D);
        auto fp = fixed_points(f);
        std::vector<double> bd;
        bd.push_back(-fp.beta.to_double());
        for (const auto& p : pts) bd.push_back(p.to_double());
        bd.push_back(fp.beta.to_double());
        std::sort(bd.begin(), bd.end());
        bd.erase(std::unique(bd.begin(), bd.end()), bd.end());
        AggregateModel& A = sys.agg;
        A.c = sys.c;
        const double vlo = sys.V.lo.to_double(), vhi = sys.V.hi.to_double();
        A.V_len = vhi - vlo;
        for (std::size_t i = 0; i + 1 < bd.size(); ++i) {
            A.lo.push_back(bd[i]);
            A.hi.push_back(bd[i + 1]);
            double mid = 0.5 * (bd[i] + bd[i + 1]);
            A.in_V.push_back(mid > vlo && mid < vhi);
        }
        const std::size_t nc = A.lo.size();
        auto cell_of = [&](double y) {
            auto it = std::upper_bound(bd.begin(), bd.end(), y);
            long idx = long(it - bd.begin()) - 1;
            return (int)std::clamp<long>(idx, 0, (long)nc - 1);
        };
        A.pre_plus.assign(nc, -1);
        A.pre_minus.assign(nc, -1);
        for (std::size_t i = 0; i < nc; ++i) {
            if (A.hi[i] <= A.c) continue;
            double x = 0.5 * (std::max(A.lo[i], A.c) + A.hi[i]);
            double y = std::sqrt(x - A.c);
            A.pre_plus[i] = cell_of(y);
            A.pre_minus[i] = cell_of(-y);
        }
        double vl = 0;
        for (std::size_t i = 0; i < nc; ++i)
            if (A.in_V[i]) vl += A.hi[i] - A.lo[i];
        if (std::fabs(vl - A.V_len) > 1e-9 * A.V_len) sys.notes.push_back("V is not a union of aggregate cells");

        // Lebesgue mass of V not returned within the horizon (t = 1, p = 0)
        auto w = agg_weights_ld(A, 1.0);
        std::vector<ld> y(nc, 0), ny(nc);
        for (std::size_t i = 0; i < nc; ++i)
            if (A.in_V[i]) y[i] = 1;
        ld mass = 1;
        int m = 0;
        while (m < budget.aggregate_horizon) {
            ++m;
            mass = 0;
            for (std::size_t i = 0; i < nc; ++i) {
                ld v = 0;
                if (A.pre_plus[i] >= 0) v += y[A.pre_plus[i]];
                if (A.pre_minus[i] >= 0) v += y[A.pre_minus[i]];
                ny[i] = A.in_V[i] ? 0 : v * w[i];
                mass += ny[i] * (A.hi[i] - A.lo[i]);
            }
            y.swap(ny);
            mass /= A.V_len;
            if (mass < 1e-18L) break;
        }
        sys.defect_horizon = m;
        sys.completeness_defect = mass > 0 ? from_ln(std::log((double)mass)) : ExtendedLogValue::zero();
    }
    return sys;
}

ExtendedLogValue partition_function_Z(const InducedSystem& sys, int ell, double t, double p, const ZOptions& o) {
    if (ell < 1 || ell > 3) throw DomainError("ell must be 1, 2 or 3");
    if (sys.branches.empty()) throw DomainError("induced system has no branches");
    if (!o.include_aggregate) {
        // sup weights factor over words, so the word expansion is the ell-th power
        return from_ln(ell * log_explicit(sys, t, p, false));
    }
    auto w = agg_weights_ld(sys.agg, t);
    return from_ln(log_Z_aggregate(sys, w, ell, t, p, nullptr));
}

BowenResult bowen_pressure(const InducedSystem& sys, double t, std::pair<double, double> bracket, int ell) {
    if (ell < 1 || ell > 3) throw DomainError("ell must be 1, 2 or 3");
    BowenResult res;
    res.ell = ell;
    if (!(bracket.first < bracket.second)) bracket = {-(1.0 + 2.0 * t), 2.0};
    bool use_agg = true;
    std::vector<ld> w;
    try {
        w = agg_weights_ld(sys.agg, t);
    } catch (const WeightOverflow&) {
        use_agg = false;
        res.warnings.push_back("aggregate model singular at this t; root uses listed branches only");
    }
    ZDiag diag;
    auto F = [&](int L, double p) {
        double lz = use_agg ? log_Z_aggregate(sys, w, L, t, p, &diag) : L * log_explicit(sys, t, p, false);
        return lz / L;
    };
    auto root = [&](int L) {
        double a = bracket.first, b = bracket.second;
        double Fa = F(L, a), Fb = F(L, b);
        if (!(Fa > 0) || !(Fb < 0)) throw NoBracket("no sign change of the induced pressure on the bracket");
        int side = 0;
        for (int it = 0; it < 200 && b - a > 1e-11; ++it) {
            double x;
            if (std::isfinite(Fa) && std::isfinite(Fb)) {
                x = b - Fb * (b - a) / (Fb - Fa);
                double lo = a + 1e-3 * (b - a), hi = b - 1e-3 * (b - a);
                x = std::clamp(x, lo, hi);
            } else {
                x = 0.5 * (a + b);
            }
            double Fx = F(L, x);
            if (Fx == 0) return x;
            if (Fx > 0) {
                a = x;
                Fa = Fx;
                if (side == 1) Fb /= 2;
                side = 1;
            } else {
                b = x;
                Fb = Fx;
                if (side == -1) Fa /= 2;
                side = -1;
            }
        }
        return 0.5 * (a + b);
    };
    res.p_ell1 = root(1);
    res.p_ell2 = ell == 1 ? res.p_ell1 : root(2);
    res.p = ell == 1 ? res.p_ell1 : (ell == 2 ? res.p_ell2 : root(ell));
    F(ell, res.p);
    res.tail_share_log2 = use_agg ? diag.tail_log2 : std::nan("");
    if (std::fabs(res.p_ell1 - res.p_ell2) > 0.02) res.warnings.push_back("ell = 1 and ell = 2 roots differ by more than 0.02");
    return res;
}

// ---- postcritical series ----

PostcriticalSeries postcritical_series(const QuadMap& f, int n, double t, double p, int K) {
    if (K < 0 || n < 0) throw DomainError("n and K must be >= 0");
    QuadMap g = f;
    g.bits = std::max<long>(f.bits, 2L * (n + 3L * K) + 96);
    PrecisionScope ps(g.bits);
    auto orb = orbit_log_derivative(g, g.c, n + 3 * K);
    PostcriticalSeries s;
    ExtendedLogValue acc = ExtendedLogValue::zero();
    const Real R_p(p), R_half_t(t / 2);
    for (int k = 0; k <= K; ++k) {
        int j = n + 3 * k;
        const Real& L = orb.log_deriv[j];
        Real lt = -Real(long(j)) * R_p;
        if (t != 0) lt -= R_half_t * L;
        double ld_ = lt.to_double();
        s.log_terms.push_back(ld_);
        acc += lt.is_inf() ? (lt.sign() > 0 ? ExtendedLogValue::infinity() : ExtendedLogValue::zero())
                           : ExtendedLogValue::from_log2(lt / ln2());
        s.partial.push_back(acc);
    }
    s.window = std::max(1, std::min(K, std::max(5, K / 4)));
    if (K == 0) {
        s.verdict = "undecided";
        s.ratio = 0;
        return s;
    }
    double a = s.log_terms[K - s.window], b = s.log_terms[K];
    if (std::isinf(b) && b > 0) {
        s.verdict = "diverging";
        s.ratio = kInf;
        return s;
    }
    s.ratio = std::exp((b - a) / s.window);
    if (s.ratio < 1 - 1e-6)
        s.verdict = "converging";
    else if (s.ratio > 1 + 1e-6)
        s.verdict = "diverging";
    else
        s.verdict = "undecided";
    return s;
}

// ---- envelopes ----

Real EnvelopeParams::t0() const { return (Real(1L) - Real(1L) / Real(400L * q)) * t_star; }

EnvelopeValue pressure_envelope(const EnvelopeParams& e, const Real& t) {
    if (t <= e.t0()) throw DomainError("t must exceed t_0");
    if (!(e.Xi - Real(2L) * e.xi > Real(0L))) throw DomainError("Xi - 2 xi must be positive");
    EnvelopeValue v;
    Real base = -t * e.chi_crit / Real(2L);
    if (t >= e.t_star) {
        v.delta_plus = v.delta_minus = ExtendedLogValue::zero();
    } else {
        Real qr(e.q);
        Real gap = qr * (e.t_star - t);
        Real ap = sqrt(e.t_star * (e.Xi - Real(2L) * e.xi) / gap) - Real(1L);
        Real am = sqrt(e.t_star * (e.Xi + Real(2L) * e.xi) / gap) + e.Delta;
        Real lg2 = ln2();
        v.delta_plus = ExtendedLogValue::from_log2(log2(Real(2L) * lg2 / Real(3L)) - qr * ap * ap * ap);
        v.delta_minus = ExtendedLogValue::from_log2(log2(lg2 / Real(3L)) - qr * am * am * am);
    }
    v.P_plus = base + v.delta_plus.to_real();
    v.P_minus = base + v.delta_minus.to_real();
    return v;
}

// ---- Peierls margins ----

PeierlsReport peierls_margins(const InducedSystem& sys, double kappa, double upsilon, double chi_crit) {
    if (!(kappa > 0)) throw DomainError("kappa must be positive");
    PeierlsReport r;
    const double lk = std::log(kappa), rate = chi_crit / 2 + upsilon;
    std::vector<std::pair<int, double>> all;
    for (const auto& L : sys.landing) all.emplace_back(L.landing_time, L.log_deriv_min - lk - rate * L.landing_time);
    for (const auto& b : sys.branches) all.emplace_back(b.return_time, b.log_deriv_min - lk - rate * b.return_time);
    r.count = all.size();
    if (all.empty()) return r;
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    r.min_margin = all.front().second;
    r.argmin_time = all.front().first;
    all.resize(std::min<std::size_t>(all.size(), 20));
    r.worst = std::move(all);
    return r;
}

}  // namespace qp
