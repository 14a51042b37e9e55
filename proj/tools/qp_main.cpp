// Command-line front end. Exit codes: 0 ok, 2 a check failed, 1 error.

#include "qp/errors.hpp"
#include "qp/itinerary_schedule.hpp"
#include "qp/measure_builder.hpp"
#include "qp/parameter_search.hpp"
#include "qp/partition_core.hpp"
#include "qp/pressure_engine.hpp"
#include "qp/version.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using nlohmann::json;
using namespace qp;

namespace {

struct Global {
    unsigned threads = 1;
    long bits = 0;  // 0 picks the subcommand default
    std::string out;
};

long bits_or(const Global& g, long dflt) { return g.bits > 0 ? g.bits : dflt; }

void emit(const Global& g, const std::string& text) {
    if (g.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(g.out, std::ios::binary);
    if (!f) throw DomainError("cannot open output file " + g.out);
    f << text;
}

json envelope(const std::string& command, const json& config, const json& assumptions, const json& result) {
    return {{"tool", {{"name", kToolName}, {"version", kVersion}}},
            {"command", command},
            {"config", config},
            {"assumptions", assumptions},
            {"result", result}};
}

const json kDynamicsFlags = {
    "real traces only: puzzle pieces are intervals",
    "gamma: endpoint x < 0 of Y with f(x) < alpha and f^2(x) = -alpha",
    "p-: period-2 point of g in Y~ whose g-image lies in Y",
    "log-derivative bounds sampled at branch endpoints and the preimage of 0, not certified",
    "completeness defect measured by the aggregate cell model at t = 1, p = 0"};

std::vector<Real> parse_reals(const std::vector<std::string>& v) {
    std::vector<Real> r;
    for (const auto& s : v) r.push_back(Real::from_string(s));
    return r;
}

std::string fmt(double x) {
    if (std::isnan(x)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12f", x);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pressure, itinerary and series toolkit for real quadratic maps"};
    app.set_config("--config", "", "key=value configuration file; flags on the command line win");
    app.require_subcommand(1);
    app.fallthrough();
    Global g;
    app.add_option("--threads", g.threads, "worker threads")->check(CLI::Range(1u, 256u));
    app.add_option("--bits", g.bits, "working precision in bits");
    app.add_option("--out", g.out, "output file (default stdout)");
    app.add_flag_callback("--version", [] {
        std::cout << kToolName << " " << kVersion << "\n";
        throw CLI::Success();
    });

    // verify-appendix
    auto* va = app.add_subcommand("verify-appendix", "check the series inequalities on a grid");
    std::string va_xi = "1";
    long va_q = 400;
    int va_tau_points = 9;
    std::vector<std::string> va_omega{"0", "1", "4"};
    std::vector<std::string> va_s{"0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11", "12", "10.5"};
    va->add_option("--xi", va_xi);
    va->add_option("--q", va_q);
    va->add_option("--tau-points", va_tau_points)->check(CLI::Range(1, 200));
    va->add_option("--omega", va_omega)->delimiter(',');
    va->add_option("--s", va_s)->delimiter(',');

    // series
    auto* se = app.add_subcommand("series", "block-by-block values of the two-variable series");
    std::string se_xi = "1", se_sign = "plus", se_tau = "1", se_lambda = "0";
    long se_q = 400, se_smax = 3;
    bool se_toy = false;
    se->add_option("--xi", se_xi);
    se->add_option("--q", se_q);
    se->add_flag("--toy", se_toy, "accept schemes outside the strict constraints");
    se->add_option("--sign", se_sign)->check(CLI::IsMember({"plus", "minus"}));
    se->add_option("--tau", se_tau);
    se->add_option("--lambda", se_lambda);
    se->add_option("--smax", se_smax);

    // schedule
    auto* sc = app.add_subcommand("schedule", "temperature ladder and block schedule");
    std::string sc_xi = "1", sc_omega = "1";
    long sc_q = 400;
    int sc_m = 4;
    bool sc_toy = false;
    std::string sc_tsup, sc_tinf, sc_C0, sc_ups;
    sc->add_option("--xi", sc_xi);
    sc->add_option("--q", sc_q);
    sc->add_option("--omega", sc_omega);
    sc->add_option("--m-max", sc_m)->check(CLI::Range(0, 60));
    sc->add_flag("--toy", sc_toy);
    sc->add_option("--t-sup", sc_tsup);
    sc->add_option("--t-inf", sc_tinf);
    sc->add_option("--C0", sc_C0);
    sc->add_option("--upsilon0", sc_ups);

    // itinerary
    auto* it = app.add_subcommand("itinerary", "symbolic and binary itineraries from a sign sequence");
    std::string it_xi = "1", it_omega = "1", it_signs = "+";
    long it_q = 400, it_len = 200;
    int it_m = 4;
    bool it_toy = false;
    it->add_option("--xi", it_xi);
    it->add_option("--q", it_q);
    it->add_option("--omega", it_omega);
    it->add_option("--m-max", it_m)->check(CLI::Range(0, 60));
    it->add_flag("--toy", it_toy);
    it->add_option("--signs", it_signs, "e.g. +-+ or +-+,- (tail after the comma)");
    it->add_option("--length", it_len)->check(CLI::Range(1L, 10000000L));

    // find-param
    auto* fp = app.add_subcommand("find-param", "bracket the parameter with a given itinerary prefix");
    int fp_n = 5, fp_depth = 0;
    std::string fp_prefix = "0", fp_lo = "-2", fp_hi = "-1.9";
    fp->add_option("--n", fp_n)->check(CLI::Range(3, 60));
    fp->add_option("--prefix", fp_prefix);
    fp->add_option("--depth", fp_depth);
    fp->add_option("--domain-lo", fp_lo);
    fp->add_option("--domain-hi", fp_hi);

    // pressure
    auto* pr = app.add_subcommand("pressure", "pressure curve by periodic orbits and by the first-return map");
    std::string pr_c = "-2", pr_method = "both";
    int pr_n = 5, pr_steps = 11, pr_period = 14, pr_env_delta = 2;
    double pr_tmin = 0, pr_tmax = 1;
    std::string pr_env_xi = "1", pr_env_omega = "1";
    long pr_env_q = 400;
    pr->add_option("--c", pr_c);
    pr->add_option("--n", pr_n)->check(CLI::Range(1, 60));
    pr->add_option("--t-min", pr_tmin);
    pr->add_option("--t-max", pr_tmax);
    pr->add_option("--steps", pr_steps)->check(CLI::Range(1, 10000));
    pr->add_option("--method", pr_method)->check(CLI::IsMember({"periodic", "bowen", "both"}));
    pr->add_option("--period", pr_period, "period N of the periodic-orbit sums")->check(CLI::Range(1, 24));
    pr->add_option("--env-xi", pr_env_xi);
    pr->add_option("--env-q", pr_env_q);
    pr->add_option("--env-delta", pr_env_delta);
    pr->add_option("--env-omega", pr_env_omega);

    // measure
    auto* me = app.add_subcommand("measure", "spread Gibbs measure or atomic conformal measure");
    std::string me_c = "-1.99", me_kind = "spread";
    int me_n = 5, me_depth = 12;
    double me_t = 1, me_radius = 0.05;
    std::optional<double> me_p;
    me->add_option("--c", me_c);
    me->add_option("--n", me_n)->check(CLI::Range(1, 60));
    me->add_option("--t", me_t);
    me->add_option("--p", me_p, "pressure parameter; spread defaults to the listed-branch root");
    me->add_option("--kind", me_kind)->check(CLI::IsMember({"spread", "atomic"}));
    me->add_option("--radius", me_radius);
    me->add_option("--depth", me_depth)->check(CLI::Range(0, 24));

    // oscillation
    auto* os = app.add_subcommand("oscillation", "mass near the p+ and p- orbits for constant vs alternating bands");
    OscillationOptions oo;
    os->add_option("--n", oo.n)->check(CLI::Range(3, 60));
    os->add_option("--band", oo.band)->check(CLI::Range(2, 200));
    os->add_option("--radius", oo.radius);
    os->add_option("--fractions", oo.fractions)->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success&) {
        return 0;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*va) {
            long bits = bits_or(g, 256);
            auto scheme = PartitionScheme::make(va_xi, va_q, false);
            VerifyGrid grid;
            grid.tau = default_tau_grid(scheme, va_tau_points);
            grid.tau_aux = {Real(1L), Real(1.5), Real(2L)};
            {
                PrecisionScope ps(bits);
                grid.omega = parse_reals(va_omega);
                grid.s = parse_reals(va_s);
            }
            VerifyOptions vo;
            vo.bits = bits;
            vo.threads = g.threads;
            auto rep = verify_appendix(scheme, grid, vo);
            json cfg = {{"xi", va_xi}, {"q", va_q}, {"tau_points", va_tau_points},
                        {"omega", va_omega}, {"s", va_s}, {"bits", bits}};
            emit(g, envelope("verify-appendix", cfg, json::array({"strict scheme"}), rep.to_json()).dump(1) + "\n");
            return rep.all_pass() ? 0 : 2;
        }
        if (*se) {
            long bits = bits_or(g, 256);
            PrecisionScope ps(bits);
            auto scheme = PartitionScheme::make(se_xi, se_q, se_toy);
            Sign sg = se_sign == "plus" ? Sign::Plus : Sign::Minus;
            Real tau = Real::from_string(se_tau), lam = Real::from_string(se_lambda);
            auto rows = series_rows(scheme, sg, tau, lam, se_smax);
            auto tot = pi_total(scheme, sg, tau, lam, se_smax);
            json jr = json::array();
            for (const auto& r : rows)
                jr.push_back({{"s", r.s},
                              {"kind", std::string(1, r.kind)},
                              {"sign", sign_name(r.sign)},
                              {"log2_value", r.value.log2_str(30)},
                              {"log2_tail", r.tail.log2_str(30)}});
            json res = {{"rows", jr},
                        {"value", tot.value.to_real().str(30)},
                        {"log2_value", tot.value.log2_str(30)},
                        {"log2_tail_bound", tot.tail_bound.log2_str(30)},
                        {"upper", tot.upper().to_real().str(30)},
                        {"scheme", scheme.to_json()}};
            json cfg = {{"xi", se_xi}, {"q", se_q}, {"toy", se_toy}, {"sign", se_sign},
                        {"tau", se_tau}, {"lambda", se_lambda}, {"smax", se_smax}, {"bits", bits}};
            json flags = json::array({scheme.strict_mode ? "strict scheme" : "toy scheme"});
            emit(g, envelope("series", cfg, flags, res).dump(1) + "\n");
            return 0;
        }
        if (sc->parsed() || it->parsed()) {
            bool is_sc = sc->parsed();
            long bits = bits_or(g, 256);
            PrecisionScope ps(bits);
            auto ss = schedule_scheme(is_sc ? sc_xi : it_xi, is_sc ? sc_q : it_q, is_sc ? sc_toy : it_toy);
            mpq_class Om = parse_decimal_exact(is_sc ? sc_omega : it_omega);
            std::optional<UserConstants> uc;
            if (is_sc && !sc_tsup.empty() && !sc_tinf.empty() && !sc_C0.empty() && !sc_ups.empty())
                uc = UserConstants{Real::from_string(sc_tsup), Real::from_string(sc_tinf), Real::from_string(sc_C0),
                                   Real::from_string(sc_ups)};
            auto sch = build_schedule(ss.scheme, Om, is_sc ? sc_m : it_m, uc);
            json flags = json::array({ss.scheme.strict_mode ? "strict scheme" : "toy scheme"});
            if (ss.q_adjusted) flags.push_back("q raised by 1 so that q + Xi is even");
            if (is_sc) {
                json cfg = {{"xi", sc_xi}, {"q", sc_q}, {"omega", sc_omega}, {"m_max", sc_m}, {"toy", sc_toy}};
                json res = sch.to_json();
                res["q_requested"] = ss.q_requested;
                emit(g, envelope("schedule", cfg, flags, res).dump(1) + "\n");
                return 0;
            }
            auto sg = SignSequence::parse(it_signs);
            auto hat = hat_itinerary(sch, sg, it_len);
            auto bits_it = bit_itinerary(hat);
            std::string hs;
            for (auto h : hat.symbols) hs += h == HatSymbol::Zero ? '0' : (h == HatSymbol::OnePlus ? '+' : '-');
            auto adm = check_admissible(hat);
            auto cmp_ = check_compatible(bits_it, hat);
            json res = {{"symbols", hs},
                        {"symbol_legend", {{"0", "0"}, {"+", "1+"}, {"-", "1-"}}},
                        {"bits", bits_it.str()},
                        {"signs", sg.str()},
                        {"admissible", adm.ok},
                        {"first_inadmissible", adm.first_violation},
                        {"compatible", cmp_.ok},
                        {"first_incompatible", cmp_.first_violation},
                        {"schedule", sch.to_json()}};
            json cfg = {{"xi", it_xi}, {"q", it_q}, {"omega", it_omega}, {"m_max", it_m},
                        {"toy", it_toy}, {"signs", it_signs}, {"length", it_len}};
            emit(g, envelope("itinerary", cfg, flags, res).dump(1) + "\n");
            return adm.ok && cmp_.ok ? 0 : 2;
        }
        if (*fp) {
            long bits = bits_or(g, 512);
            SearchOptions so;
            so.bits = bits;
            so.threads = g.threads;
            so.domain_lo = fp_lo;
            so.domain_hi = fp_hi;
            auto target = KneadingTarget::make(fp_n, fp_prefix, fp_depth);
            auto r = find_parameter(target, so);
            auto itin = itinerary_of_parameter(QuadMap::make(r.midpoint(), bits), fp_n, (int)target.prefix.size());
            bool ok = itin.bits == target.prefix;
            json res = r.to_json(target);
            res["midpoint"] = r.midpoint().str(0);
            res["midpoint_itinerary"] = itin.str();
            res["round_trip"] = ok;
            json cfg = {{"n", fp_n}, {"prefix", fp_prefix}, {"depth", fp_depth},
                        {"domain", {fp_lo, fp_hi}}, {"bits", bits}};
            emit(g, envelope("find-param", cfg, res["assumption_flags"], res).dump(1) + "\n");
            return ok ? 0 : 2;
        }
        if (*pr) {
            long bits = bits_or(g, 256);
            auto f = QuadMap::make(pr_c, bits);
            bool per = pr_method != "bowen", bow = pr_method != "periodic";
            std::optional<PeriodicOrbitSet> ps;
            if (per) ps = enumerate_periodic_points(f, pr_period, g.threads);
            std::optional<InducedSystem> sys;
            std::vector<std::string> notes;
            if (bow) {
                sys = build_induced_system(f, pr_n, InducedBudget{}, g.threads);
                for (const auto& n : sys->notes) notes.push_back(n);
            }
            std::optional<EnvelopeParams> env;
            try {
                PrecisionScope sc_(bits);
                auto pz = puzzle_intervals(f);
                auto pp = g_periodic_points(f, pz);
                auto th = theta_and_tstar(f, pp);
                auto cc = chi_crit(f, 200, &pp);
                auto scheme = PartitionScheme::make(pr_env_xi, pr_env_q, true);
                EnvelopeParams e;
                e.q = scheme.q;
                e.xi = scheme.xi;
                e.Xi = Real(scheme.Xi);
                e.Delta = Real(long(pr_env_delta));
                e.Omega = Real::from_string(pr_env_omega);
                e.t_star = th.t_star;
                e.chi_crit = cc.chi_crit_estimate;
                env = e;
            } catch (const Error& e) {
                notes.push_back(std::string("envelope unavailable: ") + e.what());
            }
            std::ostringstream csv;
            json cfg = {{"c", pr_c}, {"n", pr_n}, {"t_min", pr_tmin}, {"t_max", pr_tmax}, {"steps", pr_steps},
                        {"method", pr_method}, {"period", pr_period}, {"bits", bits},
                        {"env", {{"xi", pr_env_xi}, {"q", pr_env_q}, {"Delta", pr_env_delta}, {"Omega", pr_env_omega}}}};
            csv << "# tool: " << kToolName << " " << kVersion << "\n";
            csv << "# config: " << cfg.dump() << "\n";
            csv << "# assumptions: " << kDynamicsFlags.dump() << "\n";
            if (sys) csv << "# induced_system: " << sys->summary_json().dump() << "\n";
            for (const auto& n : notes) csv << "# note: " << n << "\n";
            csv << "t,p_periodic,p_bowen,p_minus_env,p_plus_env,tail_share_log2,warnings\n";
            long row_errors = 0;
            for (int i = 0; i < pr_steps; ++i) {
                double t = pr_steps == 1 ? pr_tmin : pr_tmin + (pr_tmax - pr_tmin) * i / (pr_steps - 1);
                double pp_ = NAN, pb = NAN, pm = NAN, pl = NAN, dl = NAN;
                std::string warn;
                if (ps) pp_ = periodic_orbit_pressure(*ps, t);
                if (sys) {
                    try {
                        auto b = bowen_pressure(*sys, t);
                        pb = b.p;
                        dl = b.tail_share_log2;
                        for (const auto& w : b.warnings) warn += (warn.empty() ? "" : "; ") + w;
                    } catch (const Error& e) {
                        warn += (warn.empty() ? "" : "; ") + std::string(e.what());
                        ++row_errors;
                    }
                }
                if (env) {
                    PrecisionScope sc_(bits);
                    Real tr(t);
                    if (tr > env->t0()) {
                        auto v = pressure_envelope(*env, tr);
                        pm = v.P_minus.to_double();
                        pl = v.P_plus.to_double();
                    }
                }
                csv << fmt(t) << "," << fmt(pp_) << "," << fmt(pb) << "," << fmt(pm) << "," << fmt(pl) << ","
                    << fmt(dl) << ",\"" << warn << "\"\n";
            }
            emit(g, csv.str());
            if (row_errors) {
                std::cerr << "error: " << row_errors << " of " << pr_steps << " rows raised; see the warnings column\n";
                return 1;
            }
            return 0;
        }
        if (*me) {
            long bits = bits_or(g, 256);
            auto f = QuadMap::make(me_c, bits);
            json cfg = {{"c", me_c}, {"n", me_n}, {"t", me_t}, {"kind", me_kind},
                        {"radius", me_radius}, {"depth", me_depth}, {"bits", bits}};
            if (me_p) cfg["p"] = *me_p;
            if (me_kind == "atomic") {
                if (!me_p) throw DomainError("--p is required for the atomic measure");
                auto m = atomic_conformal_measure(f, me_t, *me_p, me_depth);
                json res = spread_to_json(m);
                res["diagnostics"]["conformality_defect"] = conformality_defect(f, m, me_t, *me_p);
                emit(g, envelope("measure", cfg, json::array({"atoms on real preimages of 0 inside I(f)"}), res).dump(1) +
                            "\n");
                return 0;
            }
            auto sys = build_induced_system(f, me_n, InducedBudget{}, g.threads);
            double p = me_p ? *me_p : gibbs_proxy_pressure(sys, me_t);
            auto gw = gibbs_weights(sys, me_t, p);
            auto sm = spread_measure(f, sys, gw);
            json res = spread_to_json(sm);
            res["p"] = p;
            res["induced_system"] = sys.summary_json();
            res["diagnostics"]["gibbs"] = gw.diagnostics;
            try {
                res["report"] = mass_near_orbits(sm, orbit_sets(f), me_radius).to_json();
            } catch (const Error& e) {
                res["report"] = nullptr;
                res["diagnostics"]["report_unavailable"] = e.what();
            }
            emit(g, envelope("measure", cfg, kDynamicsFlags, res).dump(1) + "\n");
            return 0;
        }
        if (*os) {
            oo.bits = bits_or(g, 512);
            oo.threads = g.threads;
            auto r = oscillation_run(oo);
            json cfg = {{"n", oo.n}, {"band", oo.band}, {"radius", oo.radius}, {"fractions", oo.fractions},
                        {"bits", oo.bits}};
            json flags = kDynamicsFlags;
            flags.push_back("Gibbs proxy: listed branches only, pressure from Z_1 = 1");
            flags.push_back("qualitative check; constants of the concentration bound are not computed");
            emit(g, envelope("oscillation", cfg, flags, r.to_json()).dump(1) + "\n");
            return r.flipped ? 0 : 2;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
