#pragma once
// Gibbs weights on the first-return branches, the measure spread along the
// branch orbits, mass near the periodic orbits of g, and atomic conformal
// measures on the backward orbit of 0.

#include "qp/pressure_engine.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace qp {

struct GibbsApprox {
    double t = 0, p = 0;
    std::vector<double> weights;                          // per branch, sums to 1
    std::vector<std::pair<double, double>> sandwich;      // per branch (lower, upper), same normalizer
    double log_normalizer = 0;                            // natural log of the unnormalized sum
    std::vector<std::string> diagnostics;
};
// weight(W) proportional to exp(-p m - t log_deriv_mid)
GibbsApprox gibbs_weights(const InducedSystem& sys, double t, double p);

// Root p of the listed-branch sum Z_1(t, p) = 1; usable at any t because it
// never touches the aggregate model.
double gibbs_proxy_pressure(const InducedSystem& sys, double t);

struct Atom {
    double x = 0;
    double mass = 0;
    int level = 0;  // return-time index j for spread atoms, preimage depth for atomic measures
};

struct SpreadMeasure {
    std::vector<Atom> atoms;  // sorted by location
    double total_before_normalization = 0;
    nlohmann::json diagnostics = nlohmann::json::object();
};

// Atoms at f^j(mid W), 0 <= j < m(W), each of mass weight(W); normalized.
SpreadMeasure spread_measure(const QuadMap& f, const InducedSystem& sys, const GibbsApprox& g);

struct OrbitSets {
    std::vector<double> plus;   // orbit of p+ under f, 3 points
    std::vector<double> minus;  // orbit of p- under f, 6 points
};
OrbitSets orbit_sets(const QuadMap& f);

struct MassReport {
    double radius = 0;
    double mass_plus = 0, mass_minus = 0, mass_other = 0;
    std::vector<double> orbit_plus, orbit_minus;
    nlohmann::json to_json() const;
};
// An atom within the radius of either set goes to the closer one; equidistant atoms go to other.
MassReport mass_near_orbits(const SpreadMeasure& m, const OrbitSets& o, double radius);

// Atoms at real preimages y of 0 in I(f) up to the given depth, mass
// proportional to exp(-jp)|Df^j(y)|^{-t}. Throws SeriesDiverging when the level
// totals do not decay over the last levels.
SpreadMeasure atomic_conformal_measure(const QuadMap& f, double t, double p, int depth);

// Largest relative gap between mass(f(y)) and exp(p)|Df(y)|^t mass(y) over
// atoms y > 0 of level >= 1; these form one injective branch of f.
double conformality_defect(const QuadMap& f, const SpreadMeasure& m, double t, double p);

nlohmann::json spread_to_json(const SpreadMeasure& m);

// Two parameters whose itineraries share a leading 0 and then carry either a
// constant-1 band or an alternating band of the same length. For each, mass
// near the orbits of p+ and p- under the Gibbs proxy at t = fraction * t_*.
struct OscillationOptions {
    int n = 5;
    int band = 60;
    double radius = 0.05;
    std::vector<double> fractions{0.8, 0.85, 0.9, 0.95, 0.99};
    long bits = 512;
    unsigned threads = 1;
};
struct OscillationSide {
    std::string prefix;
    std::string c;  // decimal midpoint
    double t_star = 0;
    std::vector<double> t, p;
    std::vector<MassReport> reports;
    bool expected_side_dominates = false;  // plus for the constant band, minus for the alternating one
};
struct OscillationResult {
    OscillationSide constant_band, alternating_band;
    bool flipped = false;
    nlohmann::json to_json() const;
};
OscillationResult oscillation_run(const OscillationOptions& o);

}  // namespace qp
