#pragma once
// Geometric pressure of real quadratic maps by two routes: periodic-orbit sums
// and the first-return map to the central piece V with the Bowen root. Also the
// postcritical series, the envelope functions, and Peierls margins.

#include "qp/logval.hpp"
#include "qp/partition_core.hpp"
#include "qp/real_dynamics.hpp"

#include "json.hpp"

#include <string>
#include <utility>
#include <vector>

namespace qp {

// ---- periodic orbits ----

struct PeriodicOrbitSet {
    int N = 0;
    std::vector<double> log_mult;  // log|Df^N(x)| over real x in I(f) with f^N x = x
    long empty_cylinders = 0;
};
PeriodicOrbitSet enumerate_periodic_points(const QuadMap& f, int N, unsigned threads = 1);
double periodic_orbit_pressure(const PeriodicOrbitSet& s, double t);
double periodic_orbit_pressure(const QuadMap& f, double t, int N, unsigned threads = 1);

// ---- induced system ----

struct ReturnBranch {
    Real lo, hi;
    int return_time = 0;
    double log_deriv_min = 0, log_deriv_max = 0;  // bounds of log|DF| on the branch (three-point samples)
    double log_deriv_mid = 0;                     // at the preimage of 0
    int level = -1;                               // -1 when the branch is outside P_{n+2}(0)
    bool sampled = false;                         // found by forward sampling past the breadth budget
};

struct LandingDomain {
    Real lo, hi;
    int landing_time = 0;
    double log_deriv_min = 0, log_deriv_max = 0;
};

struct InducedBudget {
    int max_return_time = 14;        // breadth tree is complete up to this return time
    std::size_t max_nodes = 400000;  // cap on the breadth tree
    int forward_samples = 512;       // uniform samples in V
    int forward_geometric = 60;      // samples at r 2^{-i} on each side of 0
    int forward_max_time = 400;
    int cell_depth = 12;             // depth of the alpha-preimage cells of the aggregate model
    int aggregate_horizon = 6000;    // cap on return times followed by the aggregate model
};

// Transfer operator on the cells cut out by real preimages of alpha. Weights are
// cell averages of |Df|^{-t} over the inverse branches.
struct AggregateModel {
    std::vector<double> lo, hi;
    std::vector<int> pre_plus, pre_minus;  // cell containing each preimage branch; -1 if none
    std::vector<char> in_V;
    double c = 0;
    double V_len = 0;
    std::vector<double> weights(double t) const;
};

struct InducedSystem {
    int n = 0;
    double c = 0;
    long bits = 0;
    Interval V;
    std::vector<ReturnBranch> branches;  // breadth branches first (return time order), then sampled ones
    std::vector<LandingDomain> landing;
    InducedBudget budget;
    int complete_to = 0;                 // every branch with return time <= complete_to is listed
    double explicit_coverage = 0;        // Lebesgue fraction of V covered by listed branches
    ExtendedLogValue completeness_defect;  // Lebesgue fraction of V not returned within the aggregate horizon
    int defect_horizon = 0;
    AggregateModel agg;
    std::vector<std::string> notes;
    std::vector<Real> level_radius;      // r with P_{n+3k+2}(0) = (-r, r), k = 0, 1, ...
    std::size_t breadth_count() const;
    nlohmann::json summary_json() const;
};

InducedSystem build_induced_system(const QuadMap& f, int n, const InducedBudget& budget = {}, unsigned threads = 1);

struct ZOptions {
    bool include_aggregate = false;
};
// Word sums of length ell in {1,2,3} with sup weights exp(-t log_deriv_min) over
// the listed branches. With the aggregate, only breadth branches are summed
// explicitly and the aggregate model adds the words containing a return time
// beyond complete_to.
ExtendedLogValue partition_function_Z(const InducedSystem& sys, int ell, double t, double p, const ZOptions& o = {});

struct BowenResult {
    double p = 0;       // root for the default ell
    double p_ell1 = 0;  // root with ell = 1
    double p_ell2 = 0;
    int ell = 2;
    double tail_share_log2 = 0;  // share of the induced sum at the root summed in closed form past the explicit horizon; NaN without the aggregate
    std::vector<std::string> warnings;
};
// An empty bracket (first >= second) means [-(1 + 2t), 2].
BowenResult bowen_pressure(const InducedSystem& sys, double t, std::pair<double, double> bracket = {0.0, 0.0},
                           int ell = 2);

// ---- postcritical series ----

struct PostcriticalSeries {
    std::vector<ExtendedLogValue> partial;  // S_0..S_K
    std::vector<double> log_terms;          // natural log of each term
    std::string verdict;                    // converging / diverging / undecided
    double ratio = 0;                       // geometric-mean term ratio over the window
    int window = 0;
};
PostcriticalSeries postcritical_series(const QuadMap& f, int n, double t, double p, int K);

// ---- envelopes ----

struct EnvelopeParams {
    long q = 400;
    Real xi, Xi, Delta, Omega, t_star, chi_crit;
    Real t0() const;
};
struct EnvelopeValue {
    Real P_minus, P_plus;
    ExtendedLogValue delta_minus, delta_plus;
};
EnvelopeValue pressure_envelope(const EnvelopeParams& e, const Real& t);

// ---- Peierls margins ----

struct PeierlsReport {
    double min_margin = 0;
    int argmin_time = 0;
    std::size_t count = 0;
    std::vector<std::pair<int, double>> worst;  // (landing time, margin), smallest first
};
// margin = log|DL| - log kappa - (chi_crit/2 + upsilon) m over landing domains and return branches
PeierlsReport peierls_margins(const InducedSystem& sys, double kappa, double upsilon, double chi_crit);

}  // namespace qp
