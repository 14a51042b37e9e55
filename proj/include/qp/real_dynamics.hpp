#pragma once
// Real quadratic maps f_c(z) = z^2 + c: orbits with precision tracking,
// fixed points, Green's function, the central intervals Y and Y~ of the
// return map g = f^3, and the periodic points p, p+, p- of g.

#include "qp/real.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qp {

struct QuadMap {
    Real c;
    long bits = 256;
    static QuadMap make(const std::string& c_decimal, long bits = 256);
    static QuadMap make(const Real& c, long bits = 256);
    Real apply(const Real& x) const { return x * x + c; }
};

struct OrbitData {
    std::vector<Real> x;                 // x[0] = z0, ..., x[n]
    std::vector<Real> log_deriv;         // log|Df^k(z0)|, k = 0..n; -inf once the orbit hits 0
    std::vector<double> certified_bits;  // bits of x[k] we still trust
};

// Throws PrecisionExhausted when fewer than 8 bits survive.
OrbitData orbit_log_derivative(const QuadMap& f, const Real& z0, int n);

struct FixedPoints {
    Real alpha, beta;
};
FixedPoints fixed_points(const QuadMap& f);

struct GreenValue {
    Real value;
    Real error_bound;
    bool escaped = false;
    int n = 0;  // escape step
};
// z = re + i im. escape_radius must be >= 2 + |c|.
GreenValue green_function(const QuadMap& f, const Real& re, const Real& im, const Real& escape_radius, int n_max);

struct Interval {
    Real lo, hi;
    Real mid() const { return (lo + hi) / Real(2L); }
    Real width() const { return hi - lo; }
    bool contains(const Real& x) const { return lo <= x && x <= hi; }
};

struct PuzzleIntervalsR {
    Real alpha, beta;
    Interval P1;          // (alpha, -alpha)
    Interval Y, Ytilde;   // components of f^{-3}(P1) inside P1
    Real gamma;           // endpoint of Y with f^2 = -alpha, f < alpha
    int sY[3], sYt[3];    // signs of x, f(x), f^2(x) on each piece
    std::vector<std::string> assumptions;
    nlohmann::json to_json() const;
};
PuzzleIntervalsR puzzle_intervals(const QuadMap& f);

// Inverse of g on one piece: the unique x in that piece with g(x) = y.
Real g_inverse(const QuadMap& f, const int signs[3], const Real& y);
Real g_map(const QuadMap& f, const Real& x);

struct PeriodicPoint {
    Real x;
    int period_f = 0;
    Real log_multiplier;  // log|Df^period(x)|
    Real chi;             // log_multiplier / period
    Real residual;        // |f^period(x) - x|
    Real bracket_width;
    std::vector<Real> orbit;  // f^j(x), j < period
    nlohmann::json to_json() const;
};

struct GPeriodicPoints {
    PeriodicPoint p, p_plus, p_minus;
};
// p and p+ are the fixed points of g in Y and Y~. p- is the period-2 point of g
// starting in Y~ whose image lies in Y.
GPeriodicPoints g_periodic_points(const QuadMap& f, const PuzzleIntervalsR& pz);

struct ThetaData {
    Real theta, t_star;
    Real admissibility_gap;  // |chi(p+) - chi(p-)|
};
ThetaData theta_and_tstar(const QuadMap& f, const GPeriodicPoints& pp);

struct CriticalData {
    int n_used = 0;
    Real chi_crit_estimate;
    std::optional<Real> identity_check;
};
CriticalData chi_crit(const QuadMap& f, int n, const GPeriodicPoints* pp = nullptr);

// Real points y with f^k(y) = alpha for some 0 <= k <= depth, sorted.
std::vector<Real> alpha_preimages(const QuadMap& f, int depth);

// Real trace of the depth-d puzzle piece containing 0: (-r, r) with r the
// smallest |y| over preimages of alpha of depth <= d.
Interval central_piece(const QuadMap& f, int depth);

// Real trace of the depth-d piece containing z, by pulling the depth-0 piece
// of f^d(z) back along the orbit. Works for large d where enumeration cannot.
Interval piece_containing(const QuadMap& f, const Real& z, int depth);

}  // namespace qp
