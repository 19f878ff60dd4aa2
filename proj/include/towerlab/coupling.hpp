#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "towerlab/errors.hpp"
#include "towerlab/observables.hpp"
#include "towerlab/tower.hpp"

namespace towerlab {

// ---------------------------------------------------------------------------
// Stopping structure on the product tower
// ---------------------------------------------------------------------------

// Explicit product-cylinder leaf of the simultaneous-return partition; the
// words are consumed exactly, so the leaf maps injectively onto
// Delta0 x Delta0 under (F x F)^T.
struct ProductLeaf {
    Word x_word, y_word;
    int level_x = 0, level_y = 0;
    int T = 0;
    double mass = 0.0;  // (m x m) mass of the product cylinder
};

struct ProductLeafReport {
    std::vector<ProductLeaf> leaves;
    double resolved_mass = 0.0;
    double unresolved_mass = 0.0;  // mass with T beyond the horizon (or leaf cap)
    bool complete = true;
};

// Brute-force enumeration of the first simultaneous-return partition from a
// base start (both coordinates on level 0) or from the full tower under
// m x m. Exponential in the horizon; guarded by `max_leaves`. Used as the
// independent oracle for the chain representation below.
ProductLeafReport enumerate_product_leaves(const SymbolicTower& tower, int n0, int horizon,
                                           std::size_t max_leaves, bool base_start);

// Exact finite-state representation of the alternating stopping-time
// construction: return phases and symbol contexts of the two coordinates
// drive a Markov chain whose absorption times are the simultaneous returns.
// Scales linearly in the horizon where leaf enumeration explodes.
class StoppingStructure {
public:
    StoppingStructure(TowerPtr tower, int n0, int max_t_index, int horizon);

    const TowerPtr& tower() const { return tower_; }
    int n0() const { return n0_; }
    int horizon() const { return horizon_; }
    int max_t_index() const { return max_t_index_; }

    // law of T_i from a base start under normalized m0 x m0:
    // base_t_law()[i-1][t] = P{T_i = t}
    const std::vector<std::vector<double>>& base_t_law() const { return base_t_law_; }
    // mass that has not resolved T_i within the horizon
    const std::vector<double>& base_unresolved() const { return base_unresolved_; }
    double base_tail(int n) const;  // P{T > n} under normalized m0 x m0

private:
    TowerPtr tower_;
    int n0_;
    int max_t_index_;
    int horizon_;
    std::vector<std::vector<double>> base_t_law_;
    std::vector<double> base_unresolved_;
};

StoppingStructure build_stopping_structure(TowerPtr tower, int n0, int max_t_index,
                                           int horizon);

// ---------------------------------------------------------------------------
// Epsilon schedules
// ---------------------------------------------------------------------------

struct EpsilonSchedule {
    std::vector<double> v_star;     // v*_0..v*_I
    std::vector<double> eps_prime;  // eps'_1..eps'_I stored at [i-1]
    std::vector<double> eps;        // eps_i = delta_bar * eps'_i
    double delta_bar = 0.5;
    double c_param = 0.9;
    double K0 = 0.0;      // realized max of the two side conditions
    double e1_max = 0.0;  // max_i v_i(Phi) prod_{j<=i}(1+eps'_j)
    double e2_max = 0.0;  // max_i sum_j prod_k (1+eps'_k) beta^{i-j+1}
    bool trivial = false; // v_0(Phi) = 0

    int steps() const { return static_cast<int>(eps.size()); }
    std::string to_json_text() const;
    static EpsilonSchedule from_json_text(const std::string&);
};

// Slowest admissible epsilon sequence for a given variation profile:
// v*_i = max(v_i, c v*_{i-1}), eps'_i = log(v*_{i-1}/v*_i). Requires
// exp{-min(1/2, 1/beta - 1)} < c < 1. A profile shorter than `steps`+1 is
// extended with its last value.
EpsilonSchedule choose_epsilon_schedule(const std::vector<double>& v_phi, double beta,
                                        double delta_bar, double c_param, int steps);

// Analytic variation profiles for schedule construction.
std::vector<double> v_profile_exponential(double v0, double theta, int steps);
std::vector<double> v_profile_polynomial(double v0, double gamma, int steps);
std::vector<double> v_profile_stretched(double v0, double gamma, int steps);
std::vector<double> v_profile_log_poly(double v0, double gamma, int steps);

// ---------------------------------------------------------------------------
// The coupling run
// ---------------------------------------------------------------------------

struct CouplingStepStats {
    int index = 0;  // i, 1-based
    double eps = 0.0, eps_prime = 0.0;
    double mass_before = 0.0;     // mass entering the i-th matching
    double mass = 0.0;            // mass of Phi-hat_i (after the matching)
    double contraction = 0.0;     // mass / previous mass
    double guaranteed = 0.0;      // 1 - eps_i / K_emp
    double log_ratio_max = 0.0;   // worst same-leaf log-ratio of psi-tilde_i
    double symmetry_residual = 0.0;
    double t_q25 = 0.0, t_q50 = 0.0, t_q75 = 0.0;  // quantiles of T_i under P
};

struct CouplingTrace {
    std::vector<CouplingStepStats> steps;
    // t_law[i-1][t] = P{T_i = t} under the input pair (independent of the
    // subtraction)
    std::vector<std::vector<double>> t_law;
    std::vector<double> unresolved;  // P{T_i unresolved within horizon}
    std::vector<double> v_phi;       // measured v_n(Phi), n = 0..depth

    double C_phi = 0.0;            // 1/inf lambda + 1/inf lambda'
    double C_fhat = 0.0;           // measured one-step Jacobian oscillation
    double Cbar_measured = 0.0;    // max over steps of log_ratio_max
    double Cbar_theoretical = 0.0; // (C_phi + C_fhat / beta) K0
    double K0 = 0.0;
    double K_emp = 0.0;   // e^{Cbar_measured + C_fhat}
    double zeta = 0.0;    // delta_bar / K_emp
    double delta_bar = 0.0;
    double delta_check_margin = 0.0;  // worst slack in the delta-bar inequality
    int horizon = 0;

    void write_csv(std::ostream&) const;
    std::string constants_json() const;
};

// Run the measure-matching iteration for `steps` simultaneous returns.
// lambda, lambda' must be probability densities bounded away from zero, of
// depth <= 2, on a tower with jacobian_depth <= 1 (the exact chain
// aggregation tracks one symbol of shape context).
CouplingTrace run_coupling(const StoppingStructure& structure, const CylinderDensity& lambda,
                           const CylinderDensity& lambda_prime,
                           const EpsilonSchedule& schedule, int steps);

// Upper bound on |F^n_* lambda - F^n_* lambda'|:
//   2 P{T > n} + 2 sum_i prod_{j<=i} (1 - eps_j/K_emp) P{T_i <= n < T_{i+1}},
// with all mass unresolved within the horizon charged in full.
double correlation_bound(const CouplingTrace& trace, const StoppingStructure& structure,
                         int n);

// Conditional increment tails against the product-measure tail:
// sup_n P{T_{i+1} - T_i > n | class} / P_base{T > n} compared with
// e^{C_phi v_i(Phi) + C_fhat}.
struct IncrementTailRow {
    std::string class_id;
    double worst_ratio = 0.0;
    double kbar = 0.0;
    bool holds = false;
};
std::vector<IncrementTailRow> increment_tail_check(const StoppingStructure& structure,
                                                   const CouplingTrace& trace);

// Largest delta_bar for which the log-ratio expansion inequality
// |log psi-tilde ratio| <= (1 + eps') |log psi ratio| holds on every
// enumerated class and step of this tower, found by bisection.
double calibrate_delta_bar(const SymbolicTower& tower, const std::vector<double>& eps_prime);

// ---------------------------------------------------------------------------
// Predicted rates (the theorem's case analysis)
// ---------------------------------------------------------------------------

enum class TailKind { exponential, polynomial };

struct RateDescriptor {
    enum class Family {
        exponential,       // theta'^n
        stretched_exp,     // e^{-n^{gamma'}}
        log_poly_exp,      // e^{-(log n)^{gamma'}}
        polynomial,        // n^{-p}
        polynomial_log,    // n^{-p} log n
    };
    Family family = Family::exponential;
    double exponent = 0.0;   // p, gamma' or the geometric ratio
    bool strict = false;     // "for every gamma' < gamma"
    std::string sub_case;
    std::string text;
};

// u_n envelope for a tower with the given return tail and observable class.
// Throws class_error where the theorem gives no bound (gamma at or below
// 1/zeta in the exponential case, 2/zeta in the polynomial case).
RateDescriptor predicted_rate(TailKind tail, double tail_param, VClass v_class,
                              double v_gamma, double zeta);

// ---------------------------------------------------------------------------
// Correlation reduction and the CLT criterion
// ---------------------------------------------------------------------------

struct MeasurePair {
    CylinderDensity lambda;
    CylinderDensity lambda_prime;
    double a = 0.0;  // 1 - inf psi
    double b = 1.0;  // normalizer, in [1/(1+v0(psi)), 1]
};

// psi-tilde = b (psi + a) >= b > 0 with integral 1 against nu; lambda has
// density psi-tilde rho, lambda' = nu. Correlations of (phi, psi) against nu
// are bounded by (1/b) ||phi||_inf |F^n_* lambda - nu|.
MeasurePair observable_to_measures(const CylinderDensity& psi, const CylinderDensity& rho);

struct CltReport {
    std::vector<double> autocorrelation;  // |int (phi . F^n) phi dnu|
    std::vector<double> autocorr_partial; // partial sums
    bool summable = false;
    std::vector<double> dual_sup;         // sup |P^n(phi rho) / rho|
    std::vector<double> dual_partial;
    bool dual_bounded = false;
    double a = 0.0, b = 0.0;              // the positive-measure split
    double lambda_min = 0.0;              // inf of the split densities
    double sigma2 = 0.0;                  // C_0 + 2 sum C_n
    bool coboundary_suspect = false;
    bool centered_notice = false;         // input needed centering
};

// Liverani-criterion bookkeeping on the tower: autocorrelation summability,
// pointwise boundedness of sum P^n(phi rho)/rho, and the lambda/lambda'
// split with a positive shift.
CltReport clt_check(TowerPtr tower, const CylinderDensity& phi, int n_max);

} // namespace towerlab
