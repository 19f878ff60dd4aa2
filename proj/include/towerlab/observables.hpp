#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "towerlab/errors.hpp"
#include "towerlab/maps.hpp"

namespace towerlab {

// Regularity classes on the interval (modulus R_eps) and on towers
// (variation v_n). Holder / stretched-exponential / log-intermediate /
// log-polynomial.
enum class RClass { R1, R2, R3, R4 };
enum class VClass { V1, V2, V3, V4 };

const char* to_string(RClass c);
const char* to_string(VClass c);

struct ObservableSpec {
    std::function<double(double)> evaluator;
    bool has_class = false;
    RClass r_class = RClass::R1;
    double gamma = 1.0;
    double anchor = 0.0;
    double floor_distance = 1e-300;
    double sup_modulus = 0.0;  // R_infinity: global oscillation bound
    std::string label;

    double operator()(double x) const { return evaluator(x); }
    std::string to_json_text() const;
};

// Canonical representative of (Ri, gamma) anchored at c:
//   R1: d^gamma        R2: exp{-|log d|^gamma}
//   R3: exp{-(log|log d|)^gamma}   R4: |log d|^{-gamma}
// with d = |x - c| floored at `floor` (and capped where the raw formula
// would blow up away from the anchor); value exactly 0 at d = 0.
ObservableSpec make_observable(RClass cls, double gamma, double anchor,
                               double floor = 1e-300);

ObservableSpec make_fourier_observable(int k);  // cos(2 pi k x)
ObservableSpec make_custom_observable(std::function<double(double)> f, std::string label);

struct ModulusEstimate {
    double epsilon = 0.0;
    double value = 0.0;  // lower-bound estimate of R_eps
};

// Empirical modulus of continuity on a decreasing epsilon grid: sampled
// pairs at distance <= eps plus deterministic probes at the anchor, made
// monotone by an isotonic pass. Lower bounds by construction.
std::vector<ModulusEstimate> estimate_modulus(const ObservableSpec& psi,
                                              std::vector<double> eps_grid, int samples,
                                              std::uint64_t seed = 1);

// Regularity of the tower projection pi.
struct ProjectionModulus {
    enum class Kind { holder, log_polynomial };
    Kind kind = Kind::holder;
    double beta = 0.5;   // holder: d(pi x, pi y) = O(beta^{s(x,y)})
    double alpha = 2.0;  // log_polynomial: oscillation ~ s^{-alpha}

    static ProjectionModulus holder_rate(double beta);
    static ProjectionModulus log_poly(double alpha);
};

struct VClassDescriptor {
    VClass v_class = VClass::V1;
    double gamma = 0.0;        // for V1 this is the geometric ratio
    bool gamma_strict = false; // class holds for every gamma' < gamma
    std::string note;
};

// Class of psi . pi on the tower given the class of psi on the interval:
// (R1,g)->(V1), (R2,g)->(V2,g'<g), (R3,g)->(V3,g'<g), (R4,g)->(V4,g) under a
// Holder projection; (R1,g)->(V4, alpha g) under the log-polynomial
// projection of the two-branch log-singular map.
VClassDescriptor project_class(RClass cls, double gamma, const ProjectionModulus& pi);

struct VariationProfile {
    std::vector<double> values;  // v_0..v_{n_max}
    bool has_class = false;
    VClass v_class = VClass::V1;
    double gamma = 0.0;
};

// Measured tower-side variation of psi . pi: max oscillation of psi . f^l
// over sampled points of enumerated depth-n cylinders of the induced map.
// `branch_cap` bounds the per-level refinement fan-out, so the values are
// lower bounds for towers with many branches.
VariationProfile variation_profile(const ObservableSpec& psi, const ReturnPartition& part,
                                   int n_max, int samples_per_cell = 5, int branch_cap = 8);

} // namespace towerlab
