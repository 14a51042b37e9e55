#pragma once
// Combinatorial partition of the positive integers into blocks I_s, J_s,
// the counting functions N and B, the two-variable series built on them and
// a numerical verifier for the inequalities proved about those series.

#include "qp/logval.hpp"
#include "qp/real.hpp"

#include <gmpxx.h>
#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qp {

enum class Sign { Plus = 1, Minus = -1 };
inline int as_int(Sign s) { return static_cast<int>(s); }
inline const char* sign_name(Sign s) { return s == Sign::Plus ? "plus" : "minus"; }

struct PartitionScheme {
    Real xi;
    mpq_class xi_exact;  // the rational value xi stands for
    long Xi = 0;
    long q = 0;
    bool strict_mode = true;
    std::vector<std::string> violations;  // strict-mode constraints that fail (toy only)

    // Builds the scheme with Xi = ceil(2 xi) + 1. A scheme violating the
    // strict constraints is accepted only when allow_toy is set.
    static PartitionScheme make(const Real& xi, long q, bool allow_toy = false);
    // Same, with xi given as a decimal string kept exactly.
    static PartitionScheme make(const std::string& xi_decimal, long q, bool allow_toy = false);
    nlohmann::json to_json() const;
};

// q s^3; exact for integer s.
Real cubic(const PartitionScheme& sc, const Real& s);
mpz_class cubic_z(const PartitionScheme& sc, long s);

struct BlockIndices {
    Real s;
    Real a, b, a_next;   // a_s, b_s, a_{s+1}
    Real len_I, len_J;   // |I_s| and |J_s|, formed without cancellation
    bool exact = false;  // integer s with exact integer endpoints below
    mpz_class a_z, b_z, a_next_z;
};

// Endpoints are kept as exact integers while Q(s+1) stays below this many bits.
constexpr long kExactEndpointBits = 1L << 22;

BlockIndices block_bounds(const PartitionScheme& sc, const Real& s);

mpz_class count_N(const PartitionScheme& sc, const mpz_class& k);
mpz_class count_B(const PartitionScheme& sc, const mpz_class& k);

// Brute-force N(k), B(k) for 0 <= k <= kmax straight from the definitions:
// N counts j < k with j+1 in a union of I-blocks, B counts maximal runs of
// membership over [1, k].
struct CountTable {
    std::vector<long> N, B;
};
CountTable count_enumerate(const PartitionScheme& sc, long kmax);

ExtendedLogValue lambda_of(const PartitionScheme& sc, const Real& s);
Real lambda_real(const PartitionScheme& sc, const Real& s);

Real s_plus(const PartitionScheme& sc, const Real& tau);
Real s_minus(const PartitionScheme& sc, const Real& tau);

// Closed forms for the blocks of the series; s is a block index.
ExtendedLogValue block_sum_J(const PartitionScheme& sc, long s, Sign sg, const Real& tau, const Real& lambda);
ExtendedLogValue block_sum_I(const PartitionScheme& sc, long s, Sign sg, const Real& tau, const Real& lambda);

struct WeightedBlockSums {
    ExtendedLogValue J_tilde;  // k-weighted J-block, plus sign
    ExtendedLogValue I_tilde;  // k-weighted I-block, plus sign
    ExtendedLogValue J_hat;    // offset-weighted tail of the J-block, requested sign
};
WeightedBlockSums weighted_block_sums(const PartitionScheme& sc, long s, Sign sg, const Real& tau, const Real& lambda);
ExtendedLogValue block_sum_J_hat(const PartitionScheme& sc, long s, Sign sg, const Real& tau, const Real& lambda);

struct SeriesValue {
    ExtendedLogValue value;
    ExtendedLogValue tail_bound;
    long blocks_summed = 0;
    ExtendedLogValue upper() const { return value + tail_bound; }
};

// 1 + sum over blocks j <= s_max, with a certified bound on the remainder.
SeriesValue pi_total(const PartitionScheme& sc, Sign sg, const Real& tau, const Real& lambda, long s_max);
// k-weighted version (plus sign only).
SeriesValue pi_weighted_total(const PartitionScheme& sc, const Real& tau, const Real& lambda, long s_max);

// Raises s_max from s_start until the tail is below 2^-rel_bits of the value.
SeriesValue pi_total_auto(const PartitionScheme& sc, Sign sg, const Real& tau, const Real& lambda, long s_start,
                          long rel_bits = 64, long s_limit = 400);
SeriesValue pi_weighted_total_auto(const PartitionScheme& sc, const Real& tau, const Real& lambda, long s_start,
                                   long rel_bits = 64, long s_limit = 400);

// Weighted series minus the offset-weighted tails of blocks s0-3..s0 and the
// (|J_{s0-1}| - s0^2) multiple of J_{s0}, summed over blocks j <= last.
// Built from nonnegative pieces, so no cancellation occurs.
ExtendedLogValue tower_middle(const PartitionScheme& sc, const Real& tau, const Real& lambda, long s0, long last);

// Per-block dump for the series subcommand.
struct BlockRow {
    long s;
    char kind;  // 'I' or 'J'
    Sign sign;
    ExtendedLogValue value;
    ExtendedLogValue tail;  // remainder bound after this block (zero except on the last row)
};
std::vector<BlockRow> series_rows(const PartitionScheme& sc, Sign sg, const Real& tau, const Real& lambda, long s_max);

// Closed-form arithmetic helpers, exposed for testing.
// log2 sum_{m=0}^{K-1} 2^{-h m}, h >= 0, K >= 1
Real log2_geometric(const Real& h, const Real& K);
// log2 sum_{m=0}^{K-1} m 2^{-h m}, K >= 2
Real log2_arith_geometric(const Real& h, const Real& K);

// ---- verification --------------------------------------------------------

struct VerifyGrid {
    std::vector<Real> tau;      // main grid, inside ((q-1)/q, 1)
    std::vector<Real> tau_aux;  // extra points for statements about tau >= 1
    std::vector<Real> omega;
    std::vector<Real> s;
};

// Geometric grid 1 - tau = u_i / q with u from 0.9 down to 0.001.
std::vector<Real> default_tau_grid(const PartitionScheme& sc, int points);

struct Check {
    std::string lemma;
    nlohmann::json point_json() const;
    std::optional<Real> s, tau, omega, varsigma, s_next;
    std::string relation;  // "<=", ">=", "<", "finite"
    ExtendedLogValue lhs, rhs;
    Real margin_log2;  // log2 rhs - log2 lhs for "<=" and "<"; log2 lhs - log2 rhs for ">="
    std::optional<bool> pass;  // unset for hypothesis violations
    std::string status;        // "ok", "HypothesisViolation", or an error kind
    std::string note;
    double agreement_bits = 0;  // agreement of the margin with a higher-precision recomputation
};

struct VerificationReport {
    PartitionScheme scheme;
    VerifyGrid grid;
    std::vector<Check> checks;
    long bits = 0;
    bool all_pass() const;
    long evaluated() const;
    long failures() const;
    double min_agreement_bits() const;
    nlohmann::json to_json() const;
};

struct VerifyOptions {
    long bits = 256;
    long check_bits_extra = 64;  // second pass used to estimate correct bits
    unsigned threads = 1;
};

VerificationReport verify_appendix(const PartitionScheme& sc, const VerifyGrid& grid, const VerifyOptions& opt = {});

}  // namespace qp
