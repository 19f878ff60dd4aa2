#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "towerlab/errors.hpp"

namespace towerlab {

using Symbol = int;
using Word = std::vector<Symbol>;

struct TowerElement {
    std::string id;
    double weight = 0.0;  // m0 mass of the base cylinder
    int return_time = 1;
};

struct DistortionParams {
    double C = 0.0;
    double beta = 0.5;
};

// A Young tower over a finite base alphabet. Each element i carries a base
// mass and return time; the return-map Jacobian is piecewise constant on
// (own element) x (depth-d prefix of the image point), which keeps every
// cylinder mass and transfer-operator step exactly computable.
//
// Immutable after construction; all member functions are const.
class SymbolicTower {
public:
    // `jacobian` is indexed [element][rank of depth-d image prefix]; pass an
    // empty table to get the zero-distortion Jacobian at any depth.
    SymbolicTower(std::vector<TowerElement> elements, int jacobian_depth,
                  std::vector<std::vector<double>> jacobian,
                  DistortionParams distortion);

    static SymbolicTower zero_distortion(std::vector<TowerElement> elements,
                                         DistortionParams distortion = {0.0, 0.5});

    static SymbolicTower from_json_text(const std::string& text);
    std::string to_json_text() const;

    int alphabet_size() const { return static_cast<int>(elements_.size()); }
    int jacobian_depth() const { return depth_; }
    const std::vector<TowerElement>& elements() const { return elements_; }
    const std::string& id(Symbol i) const { return elements_[i].id; }
    Symbol symbol_of(const std::string& id) const;

    int return_time(Symbol i) const { return elements_[i].return_time; }
    int max_return_time() const { return max_return_; }
    double weight(Symbol i) const { return elements_[i].weight; }
    double base_mass() const { return base_mass_; }    // m0(Delta0)
    double tower_mass() const { return tower_mass_; }  // sum_i R_i w_i
    double mean_return() const { return tower_mass_ / base_mass_; }
    const DistortionParams& distortion() const { return distortion_; }

    // Jacobian of the return map on element i, given the depth-d prefix of
    // the image point.
    double jacobian(Symbol i, const Word& image_prefix) const;
    double jacobian_by_rank(Symbol i, long prefix_rank) const {
        return jacobian_[static_cast<std::size_t>(i)][static_cast<std::size_t>(prefix_rank)];
    }

    // m0 mass of the base cylinder [w].
    double word_mass(const Word& w) const;

    // One-step transition mass ratio m0[u . j] / m0[u] where u is the last
    // min(d, available) symbols of context. For depth 0 this is w_j / m0.
    double transition(const Word& context, Symbol next) const;

    // Word enumeration helpers (rank = little-endian mixed radix, first
    // symbol most significant).
    long word_count(int depth) const;
    Word unrank_word(long rank, int depth) const;
    long rank_word(const Word& w) const;

    bool level_valid(int level, Symbol first) const {
        return level >= 0 && level < return_time(first);
    }

    // Exhaustive distortion certificate at depth d+1: the smallest C for
    // which |J(x)/J(y) - 1| <= C beta^{s(Fx,Fy)} over all same-element pairs.
    double distortion_certificate() const;
    double distortion_certificate(double beta) const;

private:
    void validate() const;
    void build_mass_tables();

    std::vector<TowerElement> elements_;
    int depth_ = 0;
    std::vector<std::vector<double>> jacobian_;  // [i][prefix rank]
    DistortionParams distortion_;
    double base_mass_ = 0.0;
    double tower_mass_ = 0.0;
    int max_return_ = 1;
    // mass_table_[k] = masses of depth-k words, k = 0..depth_
    std::vector<std::vector<double>> mass_table_;
};

using TowerPtr = std::shared_ptr<const SymbolicTower>;

// A point of the tower identified to base-cylinder depth len(symbols).
struct CylinderWord {
    int level = 0;
    Word symbols;
};

struct SeparationTime {
    int value = 0;
    bool lower_bound = false;  // words agree on their full common prefix
};

// Index of the first differing base symbol; a flagged lower bound when the
// words agree on their whole common prefix (finite words cannot certify
// equality).
SeparationTime separation_time(const SymbolicTower& tower, const CylinderWord& x,
                               const CylinderWord& y);

// Piecewise-constant density w.r.t. m on depth-`depth` cylinders of a tower.
// values are indexed by (level, word rank); cells whose level reaches the
// element's return time are invalid and held at zero.
class CylinderDensity {
public:
    CylinderDensity(TowerPtr tower, int depth, double fill = 0.0);

    const TowerPtr& tower() const { return tower_; }
    int depth() const { return depth_; }
    int levels() const { return levels_; }
    long words() const { return words_; }

    bool cell_valid(int level, long rank) const;
    double at(int level, long rank) const { return values_[level][static_cast<std::size_t>(rank)]; }
    void set(int level, long rank, double v);
    double cell_mass(long rank) const { return word_mass_[static_cast<std::size_t>(rank)]; }

    double mass() const;
    double min_value() const;  // over valid cells
    double max_value() const;
    void scale(double factor);
    void normalize();  // to total mass 1

    bool is_probability(double tol = 1e-10) const;

    CylinderDensity refined(int new_depth) const;    // exact
    CylinderDensity coarsened(int new_depth) const;  // mass-weighted average

    // sup-norm of the difference over valid cells
    static double sup_distance(const CylinderDensity& a, const CylinderDensity& b);
    // L1 (variation-norm) distance: integral of |a - b| dm
    static double variation_distance(const CylinderDensity& a, const CylinderDensity& b);

    // CSV columns: level,word,value,cylinder_mass
    void write_csv(std::ostream& os) const;

private:
    TowerPtr tower_;
    int depth_;
    int levels_;
    long words_;
    std::vector<std::vector<double>> values_;  // [level][rank]
    std::vector<double> word_mass_;            // m0 of each depth-`depth` word
};

// Exact pushforward of `dens` under the tower map. Requires
// dens.depth() >= jacobian_depth + 1; the result is stored at the same depth
// (the level-0 part is measurable one symbol coarser, which the fixed-depth
// representation absorbs exactly).
CylinderDensity transfer_push(const CylinderDensity& dens);

struct InvariantDensityOptions {
    int depth = -1;  // default: max(1, jacobian_depth + 1)
    int max_iterations = 20000;
    double tolerance = 1e-13;
};

struct InvariantDensityResult {
    CylinderDensity density;
    double residual = 0.0;  // sup-norm of transfer_push(rho) - rho
    int iterations = 0;
};

// Unique acip density rho = d(nu)/dm by power iteration of the transfer
// operator. Throws convergence_error (with the residual) if the iteration
// budget is exhausted.
InvariantDensityResult invariant_density(TowerPtr tower,
                                         InvariantDensityOptions opts = {});

// u_0..u_horizon with u_n = sum_k p_k u_{n-k}, p_k = m0{R=k}/m0(Delta0).
// u_n -> m0(Delta0)/int R dm0 for aperiodic towers.
std::vector<double> renewal_sequence(const SymbolicTower& tower, int horizon);

struct N0Certificate {
    int n0 = 0;
    double threshold = 0.0;      // required value of u_n
    double renewal_limit = 0.0;  // lim u_n = m0(Delta0)/int R dm0
    double margin = 0.0;         // renewal_limit - threshold
};

// Least N <= horizon with m(F^{-n} Delta0 ∩ Delta0) >= c for all
// N <= n <= horizon, via the renewal sequence (c is in measure units, so the
// threshold on u_n is c / m0(Delta0)). Requires c strictly below the limit
// m0(Delta0)^2 / int R dm0.
N0Certificate compute_n0(const SymbolicTower& tower, double c, int horizon);

// Default coupling constant: half the renewal limit of m(F^{-n}Delta0 ∩ Delta0).
double default_n0_constant(const SymbolicTower& tower);

} // namespace towerlab
