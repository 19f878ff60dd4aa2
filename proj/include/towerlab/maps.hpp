#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "towerlab/errors.hpp"
#include "towerlab/tower.hpp"

namespace towerlab {

enum class MapFamily { doubling, manneville_pomeau, log_singular };

// Concrete interval maps on [0,1] with monotone full branches and a Markov
// structure suitable for inducing a Young tower.
struct MapSpec {
    MapFamily family = MapFamily::doubling;
    double alpha = 0.5;  // MP contact exponent / log-singular exponent
    double a = 0.3;      // log-singular branch point (maps onto the critical point)
    double b = 0.6;      // log-singular base right endpoint

    static MapSpec doubling() { return {MapFamily::doubling, 0.0, 0.0, 0.0}; }
    static MapSpec manneville_pomeau(double alpha);
    static MapSpec log_singular(double a, double b, double alpha);

    std::string name() const;
};

// Map/derivative evaluation. x must lie inside a branch domain and at least
// `margin` away from the singular endpoints of the log-singular map (x = a,
// where the derivative blows up, and x = 1, the critical point).
double eval_map(const MapSpec& spec, double x, double margin = 0.0);
double eval_derivative(const MapSpec& spec, double x, double margin = 0.0);

struct ReturnBranch {
    double left = 0.0;
    double right = 0.0;
    int return_time = 1;
};

struct DistortionFit {
    double C = 0.0;
    double beta = 0.5;
    int pairs = 0;
};

// First-return structure of a map on a base interval: disjoint monotone
// branches with f^R mapping each onto the base.
struct ReturnPartition {
    MapSpec map;
    double base_left = 0.0;
    double base_right = 1.0;
    std::vector<ReturnBranch> branches;
    std::vector<double> tail;   // tail[n] = Leb{R > n}, n = 0..max_R
    double unresolved = 0.0;    // Leb{R > max_R}
    double kac_sum = 0.0;       // sum R * Leb(omega)
    double markov_residual = 0.0;

    double base_length() const { return base_right - base_left; }

    // CSV columns: left,right,R
    void write_csv(std::ostream& os) const;
    // Truncated SymbolicTowerSpec document (depth-0 Jacobian, fitted distortion)
    std::string tower_json(const DistortionFit& fit) const;
};

// Build the return partition. The base must make the first-return map
// full-branch: for MP this is [xhat, 1] with xhat + xhat^{1+alpha} = 1; for
// the log-singular map it is [0, b]; for the doubling map, [0, 1).
// Branch boundaries are located by bisection to `tol`.
ReturnPartition induce_return_partition(const MapSpec& spec, int max_R, double tol = 1e-12);

// Same with an explicit base; throws structure_error if the base does not
// match the family's full-branch base within tol.
ReturnPartition induce_return_partition(const MapSpec& spec, double base_lo, double base_hi,
                                        int max_R, double tol);

// f^R along a branch (composition of the underlying map).
double return_map(const ReturnPartition& part, std::size_t branch, double x);
double return_map_derivative(const ReturnPartition& part, std::size_t branch, double x);

// Sampled same-element distortion bound |log J(x) - log J(y)| <= C beta^s.
DistortionFit fit_distortion(const ReturnPartition& part, int max_depth = 3);

struct TailFit {
    double slope = 0.0;      // d log tail / d log n
    double intercept = 0.0;
    int n_lo = 0, n_hi = 0;
    double r2 = 0.0;
    bool polynomial = true;  // false when an exponential model fits better
    double exp_rate = 0.0;   // d log tail / d n under the exponential model
};

// Least-squares log-log slope of the return-time tail over a stable window,
// with polynomial-vs-exponential model selection. Requires >= 20 nonzero
// tail points.
TailFit tail_exponent(const ReturnPartition& part);

struct ModulusPoint {
    int k = 0;
    double oscillation = 0.0;        // sup |f(x)-f(y)| over probed s(x,y)=k pairs
    double cylinder_diameter = 0.0;  // diameter of the deepest probed cylinder
};

// Oscillation of the log-singular map over depth-k cylinders adjacent to the
// singular point, certifying the k^{-alpha} modulus of the tower projection.
// Deterministic worst-pair probes; the values are lower bounds for the sup.
std::vector<ModulusPoint> projection_modulus_probe(const MapSpec& spec, int k_max);

} // namespace towerlab
