#include "towerlab/tower.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace towerlab {

namespace {

constexpr double kMassTol = 1e-12;
constexpr double kConsistencyTol = 1e-9;

long ipow(long base, int exp) {
    long r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

} // namespace

SymbolicTower::SymbolicTower(std::vector<TowerElement> elements, int jacobian_depth,
                             std::vector<std::vector<double>> jacobian,
                             DistortionParams distortion)
    : elements_(std::move(elements)), depth_(jacobian_depth),
      jacobian_(std::move(jacobian)), distortion_(distortion) {
    if (elements_.empty()) throw invalid_input_error("tower: no base elements");
    if (depth_ < 0) throw invalid_input_error("tower: jacobian_depth must be >= 0");

    base_mass_ = 0.0;
    tower_mass_ = 0.0;
    max_return_ = 1;
    for (const auto& e : elements_) {
        if (!(e.weight > 0.0) || !(e.weight <= 1.0))
            throw invalid_input_error("tower: element weight must lie in (0,1]: " + e.id);
        if (e.return_time < 1)
            throw invalid_input_error("tower: return time must be >= 1: " + e.id);
        base_mass_ += e.weight;
        tower_mass_ += e.weight * e.return_time;
        max_return_ = std::max(max_return_, e.return_time);
    }

    const long prefixes = ipow(alphabet_size(), depth_);
    if (jacobian_.empty()) {
        // zero-distortion table: J(i, .) = m0(Delta0)/w_i
        jacobian_.assign(elements_.size(),
                         std::vector<double>(static_cast<std::size_t>(prefixes), 0.0));
        for (std::size_t i = 0; i < elements_.size(); ++i)
            std::fill(jacobian_[i].begin(), jacobian_[i].end(),
                      base_mass_ / elements_[i].weight);
    }
    if (jacobian_.size() != elements_.size())
        throw invalid_input_error("tower: jacobian table must have one row per element");
    for (const auto& row : jacobian_) {
        if (static_cast<long>(row.size()) != prefixes)
            throw invalid_input_error("tower: jacobian row size must be alphabet^depth");
        for (double v : row)
            if (!(v > 0.0)) throw invalid_input_error("tower: jacobian values must be positive");
    }

    build_mass_tables();
    validate();
}

SymbolicTower SymbolicTower::zero_distortion(std::vector<TowerElement> elements,
                                             DistortionParams distortion) {
    return SymbolicTower(std::move(elements), 0, {}, distortion);
}

Symbol SymbolicTower::symbol_of(const std::string& id) const {
    for (std::size_t i = 0; i < elements_.size(); ++i)
        if (elements_[i].id == id) return static_cast<Symbol>(i);
    throw invalid_input_error("tower: unknown element id: " + id);
}

void SymbolicTower::build_mass_tables() {
    // mass_table_[k][rank] = m0 of depth-k cylinder, for k = 0..depth_.
    // Depth-1 masses are the element weights; deeper tables follow from the
    // left recursion m0[i.w] = m0[w]/J(i, prefix_d(w)), which for k <= depth_
    // closes only through consistency of the supplied table. Depths 0 and 1
    // are direct; for depth_ >= 2 the depth-d masses are the fixed point of
    // the refinement identity, found by power iteration and validated against
    // the element weights.
    const int s = alphabet_size();
    mass_table_.assign(static_cast<std::size_t>(depth_) + 1, {});
    mass_table_[0] = {base_mass_};
    if (depth_ == 0) return;

    std::vector<double> m1(static_cast<std::size_t>(s));
    for (int i = 0; i < s; ++i) m1[static_cast<std::size_t>(i)] = elements_[i].weight;
    mass_table_[1] = m1;
    if (depth_ == 1) return;

    const long n = ipow(s, depth_);
    std::vector<double> x(static_cast<std::size_t>(n), base_mass_ / static_cast<double>(n));
    std::vector<double> y(static_cast<std::size_t>(n));
    for (int iter = 0; iter < 50000; ++iter) {
        // y[w] = sum_j x[tail(w).j] / J(w0, tail(w).j)
        double diff = 0.0;
        for (long r = 0; r < n; ++r) {
            const Word w = unrank_word(r, depth_);
            const Symbol w0 = w[0];
            long tail = 0;
            for (int k = 1; k < depth_; ++k) tail = tail * s + w[static_cast<std::size_t>(k)];
            double acc = 0.0;
            for (int j = 0; j < s; ++j) {
                const long ext = tail * s + j;
                acc += x[static_cast<std::size_t>(ext)] /
                       jacobian_[static_cast<std::size_t>(w0)][static_cast<std::size_t>(ext)];
            }
            y[static_cast<std::size_t>(r)] = acc;
        }
        // project marginals back onto the element weights
        std::vector<double> marg(static_cast<std::size_t>(s), 0.0);
        const long block = n / s;
        for (long r = 0; r < n; ++r) marg[static_cast<std::size_t>(r / block)] += y[static_cast<std::size_t>(r)];
        for (long r = 0; r < n; ++r) {
            const std::size_t i = static_cast<std::size_t>(r / block);
            y[static_cast<std::size_t>(r)] *= elements_[i].weight / marg[i];
        }
        for (long r = 0; r < n; ++r)
            diff = std::max(diff, std::abs(y[static_cast<std::size_t>(r)] - x[static_cast<std::size_t>(r)]));
        x.swap(y);
        if (diff < 1e-15) break;
    }
    // fill intermediate depths by marginalization
    mass_table_[static_cast<std::size_t>(depth_)] = x;
    for (int k = depth_ - 1; k >= 2; --k) {
        const long nk = ipow(s, k);
        std::vector<double> mk(static_cast<std::size_t>(nk), 0.0);
        const auto& deeper = mass_table_[static_cast<std::size_t>(k) + 1];
        for (long r = 0; r < static_cast<long>(deeper.size()); ++r)
            mk[static_cast<std::size_t>(r / s)] += deeper[static_cast<std::size_t>(r)];
        mass_table_[static_cast<std::size_t>(k)] = mk;
    }
}

void SymbolicTower::validate() const {
    const int s = alphabet_size();

    // aperiodicity
    int g = 0;
    for (const auto& e : elements_) g = std::gcd(g, e.return_time);
    if (g != 1)
        throw invalid_input_error("tower: gcd of return times must be 1 (got " +
                                  std::to_string(g) + ")");

    // refinement consistency of the jacobian table with the weights:
    // sum over one-symbol extensions of m0[i.w] must equal m0-marginals.
    if (depth_ >= 1) {
        for (int i = 0; i < s; ++i) {
            double acc = 0.0;
            for (long p = 0; p < word_count(depth_); ++p) {
                const Word w = unrank_word(p, depth_);
                acc += word_mass(w) / jacobian_by_rank(i, p);
            }
            if (std::abs(acc - elements_[static_cast<std::size_t>(i)].weight) >
                kConsistencyTol * std::max(1.0, base_mass_))
                throw invalid_input_error(
                    "tower: jacobian table inconsistent with weights on element " +
                    elements_[static_cast<std::size_t>(i)].id);
        }
    }

    // bounded distortion against the declared (C, beta)
    const double cert = distortion_certificate();
    if (cert > distortion_.C + 1e-9)
        throw invalid_input_error(
            "tower: distortion certificate " + std::to_string(cert) +
            " exceeds declared C = " + std::to_string(distortion_.C));
}

double SymbolicTower::jacobian(Symbol i, const Word& image_prefix) const {
    if (static_cast<int>(image_prefix.size()) != depth_)
        throw invalid_input_error("tower: jacobian prefix length must equal jacobian_depth");
    return jacobian_by_rank(i, rank_word(image_prefix));
}

double SymbolicTower::word_mass(const Word& w) const {
    const int k = static_cast<int>(w.size());
    if (k <= depth_) {
        long r = 0;
        for (Symbol a : w) r = r * alphabet_size() + a;
        return mass_table_[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)];
    }
    // m0[w] = m0[tail] / J(w0, prefix_d(tail)), applied from the right
    Word suffix(w.end() - depth_, w.end());
    double mass = depth_ == 0 ? base_mass_
                              : mass_table_[static_cast<std::size_t>(depth_)]
                                           [static_cast<std::size_t>(rank_word(suffix))];
    for (int pos = k - depth_ - 1; pos >= 0; --pos) {
        long pr = 0;
        for (int t = 1; t <= depth_; ++t) pr = pr * alphabet_size() + w[static_cast<std::size_t>(pos + t)];
        mass /= jacobian_by_rank(w[static_cast<std::size_t>(pos)], pr);
    }
    return mass;
}

double SymbolicTower::transition(const Word& context, Symbol next) const {
    if (depth_ == 0) return elements_[static_cast<std::size_t>(next)].weight / base_mass_;
    const int use = std::min<int>(depth_, static_cast<int>(context.size()));
    Word u(context.end() - use, context.end());
    Word uj = u;
    uj.push_back(next);
    return word_mass(uj) / word_mass(u);
}

long SymbolicTower::word_count(int depth) const { return ipow(alphabet_size(), depth); }

Word SymbolicTower::unrank_word(long rank, int depth) const {
    Word w(static_cast<std::size_t>(depth));
    for (int k = depth - 1; k >= 0; --k) {
        w[static_cast<std::size_t>(k)] = static_cast<Symbol>(rank % alphabet_size());
        rank /= alphabet_size();
    }
    return w;
}

long SymbolicTower::rank_word(const Word& w) const {
    long r = 0;
    for (Symbol a : w) r = r * alphabet_size() + a;
    return r;
}

double SymbolicTower::distortion_certificate() const {
    return distortion_certificate(distortion_.beta);
}

double SymbolicTower::distortion_certificate(double beta) const {
    if (depth_ == 0) return 0.0;
    double worst = 0.0;
    const long n = word_count(depth_);
    for (int i = 0; i < alphabet_size(); ++i) {
        for (long p = 0; p < n; ++p) {
            for (long q = 0; q < n; ++q) {
                if (p == q) continue;
                const Word wp = unrank_word(p, depth_);
                const Word wq = unrank_word(q, depth_);
                int s = 0;
                while (s < depth_ && wp[static_cast<std::size_t>(s)] == wq[static_cast<std::size_t>(s)]) ++s;
                const double ratio =
                    std::abs(jacobian_by_rank(i, p) / jacobian_by_rank(i, q) - 1.0);
                worst = std::max(worst, ratio / std::pow(beta, s));
            }
        }
    }
    return worst;
}

std::string SymbolicTower::to_json_text() const {
    nlohmann::json j;
    j["elements"] = nlohmann::json::array();
    for (const auto& e : elements_)
        j["elements"].push_back({{"id", e.id}, {"weight", e.weight}, {"R", e.return_time}});
    j["jacobian_depth"] = depth_;
    j["distortion"] = {{"C", distortion_.C}, {"beta", distortion_.beta}};
    if (depth_ > 0) {
        nlohmann::json table = nlohmann::json::array();
        for (int i = 0; i < alphabet_size(); ++i) {
            for (long p = 0; p < word_count(depth_); ++p) {
                const Word w = unrank_word(p, depth_);
                nlohmann::json prefix = nlohmann::json::array();
                for (Symbol a : w) prefix.push_back(id(a));
                table.push_back({{"element", id(static_cast<Symbol>(i))},
                                 {"prefix", prefix},
                                 {"value", jacobian_by_rank(i, p)}});
            }
        }
        j["jacobian_table"] = table;
    }
    return j.dump(2);
}

SymbolicTower SymbolicTower::from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    std::vector<TowerElement> elements;
    for (const auto& e : j.at("elements"))
        elements.push_back({e.at("id").get<std::string>(), e.at("weight").get<double>(),
                            e.at("R").get<int>()});
    const int depth = j.value("jacobian_depth", 0);
    DistortionParams dist;
    if (j.contains("distortion")) {
        dist.C = j["distortion"].value("C", 0.0);
        dist.beta = j["distortion"].value("beta", 0.5);
    }
    std::vector<std::vector<double>> table;
    if (j.contains("jacobian_table") && depth > 0) {
        const int s = static_cast<int>(elements.size());
        long prefixes = 1;
        for (int k = 0; k < depth; ++k) prefixes *= s;
        table.assign(elements.size(), std::vector<double>(static_cast<std::size_t>(prefixes), 0.0));
        auto find = [&](const std::string& id) -> int {
            for (std::size_t i = 0; i < elements.size(); ++i)
                if (elements[i].id == id) return static_cast<int>(i);
            throw invalid_input_error("tower json: unknown element id " + id);
        };
        for (const auto& row : j["jacobian_table"]) {
            const int i = find(row.at("element").get<std::string>());
            long r = 0;
            for (const auto& p : row.at("prefix")) r = r * s + find(p.get<std::string>());
            table[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] =
                row.at("value").get<double>();
        }
        for (const auto& rowv : table)
            for (double v : rowv)
                if (!(v > 0.0))
                    throw invalid_input_error("tower json: jacobian_table incomplete");
    }
    return SymbolicTower(std::move(elements), depth, std::move(table), dist);
}

SeparationTime separation_time(const SymbolicTower& tower, const CylinderWord& x,
                               const CylinderWord& y) {
    if (x.symbols.empty() || y.symbols.empty())
        throw invalid_input_error("separation_time: empty word");
    if (x.level != y.level)
        throw invalid_input_error("separation_time: points at different levels");
    if (!tower.level_valid(x.level, x.symbols[0]) || !tower.level_valid(y.level, y.symbols[0]))
        throw invalid_input_error("separation_time: level inconsistent with return time");
    const int n = static_cast<int>(std::min(x.symbols.size(), y.symbols.size()));
    for (int k = 0; k < n; ++k)
        if (x.symbols[static_cast<std::size_t>(k)] != y.symbols[static_cast<std::size_t>(k)])
            return {k, false};
    return {n, true};
}

CylinderDensity::CylinderDensity(TowerPtr tower, int depth, double fill)
    : tower_(std::move(tower)), depth_(depth) {
    if (depth_ < 1) throw depth_error("density: depth must be >= 1");
    levels_ = tower_->max_return_time();
    words_ = tower_->word_count(depth_);
    values_.assign(static_cast<std::size_t>(levels_),
                   std::vector<double>(static_cast<std::size_t>(words_), 0.0));
    word_mass_.resize(static_cast<std::size_t>(words_));
    for (long r = 0; r < words_; ++r)
        word_mass_[static_cast<std::size_t>(r)] = tower_->word_mass(tower_->unrank_word(r, depth_));
    for (int l = 0; l < levels_; ++l)
        for (long r = 0; r < words_; ++r)
            if (cell_valid(l, r)) values_[static_cast<std::size_t>(l)][static_cast<std::size_t>(r)] = fill;
}

bool CylinderDensity::cell_valid(int level, long rank) const {
    const Symbol first = static_cast<Symbol>(rank / tower_->word_count(depth_ - 1));
    return tower_->level_valid(level, first);
}

void CylinderDensity::set(int level, long rank, double v) {
    if (!cell_valid(level, rank)) throw invalid_input_error("density: invalid cell");
    values_[static_cast<std::size_t>(level)][static_cast<std::size_t>(rank)] = v;
}

double CylinderDensity::mass() const {
    double acc = 0.0;
    for (int l = 0; l < levels_; ++l)
        for (long r = 0; r < words_; ++r)
            if (cell_valid(l, r))
                acc += at(l, r) * cell_mass(r);
    return acc;
}

double CylinderDensity::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (int l = 0; l < levels_; ++l)
        for (long r = 0; r < words_; ++r)
            if (cell_valid(l, r)) m = std::min(m, at(l, r));
    return m;
}

double CylinderDensity::max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < levels_; ++l)
        for (long r = 0; r < words_; ++r)
            if (cell_valid(l, r)) m = std::max(m, at(l, r));
    return m;
}

void CylinderDensity::scale(double factor) {
    for (auto& row : values_)
        for (auto& v : row) v *= factor;
}

void CylinderDensity::normalize() {
    const double m = mass();
    if (!(m > 0.0)) throw invalid_input_error("density: cannot normalize zero mass");
    scale(1.0 / m);
}

bool CylinderDensity::is_probability(double tol) const { return std::abs(mass() - 1.0) <= tol; }

CylinderDensity CylinderDensity::refined(int new_depth) const {
    if (new_depth < depth_) throw depth_error("refined: new depth must be >= current");
    CylinderDensity out(tower_, new_depth);
    const long block = tower_->word_count(new_depth - depth_);
    for (int l = 0; l < levels_; ++l)
        for (long r = 0; r < out.words_; ++r)
            if (out.cell_valid(l, r)) out.values_[static_cast<std::size_t>(l)][static_cast<std::size_t>(r)] = at(l, r / block);
    return out;
}

CylinderDensity CylinderDensity::coarsened(int new_depth) const {
    if (new_depth > depth_ || new_depth < 1)
        throw depth_error("coarsened: new depth must be in [1, current]");
    CylinderDensity out(tower_, new_depth);
    const long block = tower_->word_count(depth_ - new_depth);
    for (int l = 0; l < levels_; ++l)
        for (long r = 0; r < out.words_; ++r) {
            if (!out.cell_valid(l, r)) continue;
            double mass_sum = 0.0, weighted = 0.0;
            for (long e = r * block; e < (r + 1) * block; ++e) {
                mass_sum += cell_mass(e);
                weighted += at(l, e) * cell_mass(e);
            }
            out.values_[static_cast<std::size_t>(l)][static_cast<std::size_t>(r)] = weighted / mass_sum;
        }
    return out;
}

double CylinderDensity::sup_distance(const CylinderDensity& a, const CylinderDensity& b) {
    if (a.depth_ != b.depth_) throw depth_error("sup_distance: depth mismatch");
    double m = 0.0;
    for (int l = 0; l < a.levels_; ++l)
        for (long r = 0; r < a.words_; ++r)
            if (a.cell_valid(l, r)) m = std::max(m, std::abs(a.at(l, r) - b.at(l, r)));
    return m;
}

double CylinderDensity::variation_distance(const CylinderDensity& a, const CylinderDensity& b) {
    if (a.depth_ != b.depth_) throw depth_error("variation_distance: depth mismatch");
    double acc = 0.0;
    for (int l = 0; l < a.levels_; ++l)
        for (long r = 0; r < a.words_; ++r)
            if (a.cell_valid(l, r)) acc += std::abs(a.at(l, r) - b.at(l, r)) * a.cell_mass(r);
    return acc;
}

void CylinderDensity::write_csv(std::ostream& os) const {
    os << "level,word,value,cylinder_mass\n";
    char buf[128];
    for (int l = 0; l < levels_; ++l)
        for (long r = 0; r < words_; ++r) {
            if (!cell_valid(l, r)) continue;
            const Word w = tower_->unrank_word(r, depth_);
            std::string word;
            for (std::size_t k = 0; k < w.size(); ++k) {
                if (k) word += '.';
                word += tower_->id(w[k]);
            }
            std::snprintf(buf, sizeof(buf), "%d,%s,%.17g,%.17g", l, word.c_str(), at(l, r),
                          cell_mass(r));
            os << buf << '\n';
        }
}

CylinderDensity transfer_push(const CylinderDensity& dens) {
    const auto& tower = *dens.tower();
    const int d = tower.jacobian_depth();
    const int D = dens.depth();
    if (D < d + 1)
        throw depth_error("transfer_push: density depth must be >= jacobian_depth + 1");
    CylinderDensity out(dens.tower(), D);
    const int s = tower.alphabet_size();
    const long words = dens.words();
    const long sub = tower.word_count(D - 1);

    // non-returning branches shift levels up
    for (int l = 1; l < out.levels(); ++l)
        for (long r = 0; r < words; ++r)
            if (out.cell_valid(l, r)) out.set(l, r, dens.at(l - 1, r));

    // returning branches land on level 0:
    // out(0, w) = sum_i dens(R_i - 1, prefix_D(i.w)) / J(i, prefix_d(w))
    for (long r = 0; r < words; ++r) {
        const Word w = dens.tower()->unrank_word(r, D);
        long jac_rank = 0;
        for (int k = 0; k < d; ++k) jac_rank = jac_rank * s + w[static_cast<std::size_t>(k)];
        double acc = 0.0;
        for (int i = 0; i < s; ++i) {
            const long src = static_cast<long>(i) * sub + r / s;  // prefix_D(i.w)
            acc += dens.at(tower.return_time(i) - 1, src) / tower.jacobian_by_rank(i, jac_rank);
        }
        out.set(0, r, acc);
    }
    return out;
}

InvariantDensityResult invariant_density(TowerPtr tower, InvariantDensityOptions opts) {
    const int depth = opts.depth > 0 ? opts.depth : std::max(1, tower->jacobian_depth() + 1);
    CylinderDensity rho(tower, depth, 1.0);
    rho.normalize();
    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        CylinderDensity next = transfer_push(rho);
        residual = CylinderDensity::sup_distance(next, rho);
        rho = std::move(next);
        if (residual < opts.tolerance) break;
    }
    // report the fixed-point residual of the final iterate
    rho.normalize();
    residual = CylinderDensity::sup_distance(transfer_push(rho), rho);
    if (residual > 1e-10)
        throw convergence_error("invariant_density: power iteration residual " +
                                std::to_string(residual));
    return {std::move(rho), residual, it};
}

std::vector<double> renewal_sequence(const SymbolicTower& tower, int horizon) {
    if (horizon < 1) throw invalid_input_error("renewal_sequence: horizon must be >= 1");
    std::vector<double> p(static_cast<std::size_t>(tower.max_return_time()) + 1, 0.0);
    for (int i = 0; i < tower.alphabet_size(); ++i)
        p[static_cast<std::size_t>(tower.return_time(i))] += tower.weight(i) / tower.base_mass();
    std::vector<double> u(static_cast<std::size_t>(horizon) + 1, 0.0);
    u[0] = 1.0;
    for (int n = 1; n <= horizon; ++n) {
        double acc = 0.0;
        for (int k = 1; k <= std::min(n, tower.max_return_time()); ++k)
            acc += p[static_cast<std::size_t>(k)] * u[static_cast<std::size_t>(n - k)];
        u[static_cast<std::size_t>(n)] = acc;
    }
    return u;
}

N0Certificate compute_n0(const SymbolicTower& tower, double c, int horizon) {
    const double limit = tower.base_mass() / tower.mean_return();  // lim u_n
    const double threshold = c / tower.base_mass();
    if (!(c > 0.0) || threshold >= limit)
        throw infeasible_error("compute_n0: c must lie in (0, m0(Delta0)^2 / int R dm0)");
    // n0 = 0 only makes sense when every point sits in the base at every
    // time (R == 1); otherwise the coupling needs a positive offset.
    if (tower.max_return_time() == 1) return {0, threshold, limit, limit - threshold};
    const auto u = renewal_sequence(tower, horizon);
    int n0 = 1;
    for (int n = horizon; n >= 1; --n) {
        if (u[static_cast<std::size_t>(n)] < threshold) {
            n0 = n + 1;
            break;
        }
    }
    if (n0 > horizon)
        throw horizon_error("compute_n0: threshold not attained within horizon");
    return {n0, threshold, limit, limit - threshold};
}

double default_n0_constant(const SymbolicTower& tower) {
    return 0.5 * tower.base_mass() * tower.base_mass() / tower.tower_mass();
}

} // namespace towerlab
