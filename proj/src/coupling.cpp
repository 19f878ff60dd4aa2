#include "towerlab/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <tuple>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

namespace towerlab {

namespace {

// ---------------------------------------------------------------------------
// Brute-force product leaves (oracle path, kept independent of the chain)
// ---------------------------------------------------------------------------

struct PartialPair {
    int level_x, level_y;
    Word wx, wy;
    double mass;
};

// arrival times of a coordinate given its start level and word so far;
// arrivals are the instants the orbit lands on the base (one per symbol)
std::vector<int> arrivals(const SymbolicTower& tw, int level, const Word& w) {
    std::vector<int> h;
    int t = 0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        t += tw.return_time(w[j]) - (j == 0 ? level : 0);
        h.push_back(t);
    }
    return h;
}

struct ResolveOut {
    int T = -1;
    bool need_x = false, need_y = false;  // which word is too short to decide
    bool beyond = false;                  // T provably past the horizon
    std::size_t used_x = 0, used_y = 0;   // symbols T actually consumes
};

// walk the alternating stopping times on explicit words
ResolveOut resolve_T(const SymbolicTower& tw, const PartialPair& p, int n0, int horizon) {
    const auto hx = arrivals(tw, p.level_x, p.wx);
    const auto hy = arrivals(tw, p.level_y, p.wy);
    auto first_at_least = [](const std::vector<int>& h, int target) {
        for (std::size_t j = 0; j < h.size(); ++j)
            if (h[j] >= target) return static_cast<long>(j);
        return static_cast<long>(-1);
    };
    ResolveOut out;
    int tau = 0;
    for (int i = 1;; ++i) {
        const bool x_active = (i % 2) == 1;
        const auto& ha = x_active ? hx : hy;
        const long j = first_at_least(ha, tau + n0);
        if (j < 0) {
            (x_active ? out.need_x : out.need_y) = true;
            return out;
        }
        tau = ha[static_cast<std::size_t>(j)];
        auto& used_a = x_active ? out.used_x : out.used_y;
        used_a = std::max(used_a, static_cast<std::size_t>(j) + 1);
        if (tau > horizon) {
            out.beyond = true;
            return out;
        }
        if (i >= 2) {
            const auto& hp = x_active ? hy : hx;
            auto& used_p = x_active ? out.used_y : out.used_x;
            int hit = -1;
            for (std::size_t k = 0; k < hp.size(); ++k) {
                if (hp[k] == tau) {
                    used_p = std::max(used_p, k + 1);
                    hit = 1;
                    break;
                }
                if (hp[k] > tau) {
                    hit = 0;
                    break;
                }
            }
            if (hit < 0) {
                (x_active ? out.need_y : out.need_x) = true;
                return out;
            }
            if (hit == 1) {
                out.T = tau;
                return out;
            }
        }
    }
}

} // namespace

ProductLeafReport enumerate_product_leaves(const SymbolicTower& tower, int n0, int horizon,
                                           std::size_t max_leaves, bool base_start) {
    if (tower.jacobian_depth() > 1)
        throw invalid_input_error("enumerate_product_leaves: jacobian_depth <= 1 only");
    ProductLeafReport report;
    std::vector<PartialPair> work;
    const int s = tower.alphabet_size();
    const double norm =
        base_start ? tower.base_mass() * tower.base_mass()
                   : tower.tower_mass() * tower.tower_mass();

    if (base_start) {
        for (Symbol a = 0; a < s; ++a)
            for (Symbol b = 0; b < s; ++b)
                work.push_back({0, 0, {a}, {b},
                                tower.word_mass({a}) * tower.word_mass({b}) / norm});
    } else {
        for (Symbol a = 0; a < s; ++a)
            for (int la = 0; la < tower.return_time(a); ++la)
                for (Symbol b = 0; b < s; ++b)
                    for (int lb = 0; lb < tower.return_time(b); ++lb)
                        work.push_back({la, lb, {a}, {b},
                                        tower.word_mass({a}) * tower.word_mass({b}) / norm});
    }

    std::map<std::tuple<int, int, Word, Word>, std::size_t> leaf_index;
    while (!work.empty()) {
        PartialPair p = std::move(work.back());
        work.pop_back();
        const ResolveOut res = resolve_T(tower, p, n0, horizon);
        if (res.beyond) {
            report.unresolved_mass += p.mass;
            continue;
        }
        if (res.T >= 0) {
            // trim to exact consumption so the leaf maps onto Delta0 x Delta0
            // (trimmed twins from over-extension re-merge here)
            p.wx.resize(res.used_x);
            p.wy.resize(res.used_y);
            const auto key = std::make_tuple(p.level_x, p.level_y, p.wx, p.wy);
            auto it = leaf_index.find(key);
            if (it != leaf_index.end()) {
                report.leaves[it->second].mass += p.mass;
            } else if (report.leaves.size() >= max_leaves) {
                report.complete = false;
                report.unresolved_mass += p.mass;
            } else {
                leaf_index.emplace(key, report.leaves.size());
                report.leaves.push_back({p.wx, p.wy, p.level_x, p.level_y, res.T, p.mass});
            }
            continue;
        }
        // extend whichever word is too short to decide
        const bool extend_x = res.need_x;
        const Word& ctx = extend_x ? p.wx : p.wy;
        for (Symbol j = 0; j < s; ++j) {
            PartialPair q = p;
            (extend_x ? q.wx : q.wy).push_back(j);
            q.mass = p.mass * tower.transition(ctx, j);
            work.push_back(std::move(q));
        }
    }
    for (const auto& leaf : report.leaves) report.resolved_mass += leaf.mass;
    return report;
}

// ---------------------------------------------------------------------------
// The alternating-return chain
// ---------------------------------------------------------------------------

namespace {

struct Coord {
    int ctx;      // element whose pass the point is in
    int r;        // steps until the next base arrival (0 = arriving now)
    int pending;  // predrawn next symbol, -1 once consumed
    int lvl0;     // start level retained while pending (first-leaf profile)
};

struct ChainState {
    Coord x, y;
    int active;  // 0 = x probes the next stopping time
    int round2;  // 1 before the first stopping time of the step, else 2
    int wait;    // countdown until the stopping-time window opens
    int step;    // simultaneous returns already realized
};

std::uint64_t pack(const ChainState& st) {
    auto coord = [](const Coord& c) -> std::uint64_t {
        return static_cast<std::uint64_t>(c.ctx) | (static_cast<std::uint64_t>(c.r) << 4) |
               (static_cast<std::uint64_t>(c.pending + 1) << 10) |
               (static_cast<std::uint64_t>(c.lvl0 + 1) << 14);
    };
    return coord(st.x) | (coord(st.y) << 20) |
           (static_cast<std::uint64_t>(st.active) << 40) |
           (static_cast<std::uint64_t>(st.round2 - 1) << 41) |
           (static_cast<std::uint64_t>(st.wait) << 42) |
           (static_cast<std::uint64_t>(st.step) << 50);
}

ChainState unpack(std::uint64_t k) {
    auto coord = [](std::uint64_t v) -> Coord {
        return {static_cast<int>(v & 15), static_cast<int>((v >> 4) & 63),
                static_cast<int>(((v >> 10) & 15)) - 1, static_cast<int>(((v >> 14) & 63)) - 1};
    };
    ChainState st;
    st.x = coord(k & 0xFFFFF);
    st.y = coord((k >> 20) & 0xFFFFF);
    st.active = static_cast<int>((k >> 40) & 1);
    st.round2 = static_cast<int>((k >> 41) & 1) + 1;
    st.wait = static_cast<int>((k >> 42) & 255);
    st.step = static_cast<int>((k >> 50) & 255);
    return st;
}

using FlowMap = std::unordered_map<std::uint64_t, double>;

struct StepClassStats {
    double inf_prof = 0.0;
    double osc_log_prof = 0.0;  // same-leaf oscillation of log psi_i
    double osc_log_h = 0.0;     // Jacobian part only
};

struct RunCollect {
    int steps = 0;
    int horizon = 0;
    std::vector<std::vector<double>> law;  // [i-1][t]: absorbed mass at step i, time t
    std::vector<double> mass_before, mass_after;
    std::vector<double> log_ratio_max;   // osc log(psi-tilde_i)
    std::vector<double> delta_margin;    // worst lhs - (1+eps') rhs
    std::vector<std::vector<double>> sub_x, sub_y;  // subtracted marginal masses
    std::vector<double> end_mass_by_step;           // [0..steps-1]
    double c_fhat = 0.0;
    double cbar_entry = 0.0;  // osc log Phi over first-step classes
};

struct ChainConfig {
    const SymbolicTower* tower = nullptr;
    int n0 = 0;
    int horizon = 0;
    int steps = 0;
    const std::vector<double>* eps = nullptr;        // per step, may be null (all zero)
    const std::vector<double>* eps_prime = nullptr;  // for the delta-bar margin
    const CylinderDensity* lam = nullptr;            // null for base start
    const CylinderDensity* lamp = nullptr;
};

double eps_at(const ChainConfig& cfg, int step) {
    if (!cfg.eps) return 0.0;
    return (*cfg.eps)[static_cast<std::size_t>(step - 1)];
}

double epsp_at(const ChainConfig& cfg, int step) {
    if (!cfg.eps_prime) return 0.0;
    return (*cfg.eps_prime)[static_cast<std::size_t>(step - 1)];
}

// profile of the pushed density over the next-draw window (p, q); class
// determined by the contexts plus any unconsumed initial symbols
struct BoundaryClass {
    int cx, cy, px, lx, py, ly;
    bool operator<(const BoundaryClass& o) const {
        return std::tie(cx, cy, px, lx, py, ly) <
               std::tie(o.cx, o.cy, o.px, o.lx, o.py, o.ly);
    }
};

struct BoundaryProfile {
    std::vector<double> prof;   // [p*s+q]
    std::vector<double> hpart;  // Jacobian-only part
    double inf_prof = 0.0;
};

BoundaryProfile boundary_profile(const ChainConfig& cfg, const BoundaryClass& cls) {
    const auto& tw = *cfg.tower;
    const int s = tw.alphabet_size();
    const int d = tw.jacobian_depth();
    BoundaryProfile bp;
    bp.prof.resize(static_cast<std::size_t>(s) * s);
    bp.hpart.resize(static_cast<std::size_t>(s) * s);
    double inf = std::numeric_limits<double>::infinity();
    for (int p = 0; p < s; ++p) {
        const double jx = tw.jacobian_by_rank(cls.cx, d == 1 ? p : 0);
        const double ax =
            cls.px >= 0 ? cfg.lam->at(cls.lx, static_cast<long>(cls.cx) * s + p) : 1.0;
        for (int q = 0; q < s; ++q) {
            const double jy = tw.jacobian_by_rank(cls.cy, d == 1 ? q : 0);
            const double ay =
                cls.py >= 0 ? cfg.lamp->at(cls.ly, static_cast<long>(cls.cy) * s + q) : 1.0;
            const double h = 1.0 / (jx * jy);
            bp.hpart[static_cast<std::size_t>(p) * s + q] = h;
            bp.prof[static_cast<std::size_t>(p) * s + q] = ax * ay * h;
            inf = std::min(inf, ax * ay * h);
        }
    }
    bp.inf_prof = inf;
    return bp;
}

double osc_log(const std::vector<double>& v) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return lo > 0.0 ? std::log(hi / lo) : 0.0;
}

RunCollect run_chain(const ChainConfig& cfg) {
    const auto& tw = *cfg.tower;
    const int s = tw.alphabet_size();
    if (s > 15 || tw.max_return_time() > 63)
        throw invalid_input_error("coupling chain: alphabet or return times too large");

    RunCollect out;
    out.steps = cfg.steps;
    out.horizon = cfg.horizon;
    out.law.assign(static_cast<std::size_t>(cfg.steps),
                   std::vector<double>(static_cast<std::size_t>(cfg.horizon) + 1, 0.0));
    out.mass_before.assign(static_cast<std::size_t>(cfg.steps), 0.0);
    out.mass_after.assign(static_cast<std::size_t>(cfg.steps), 0.0);
    out.log_ratio_max.assign(static_cast<std::size_t>(cfg.steps), 0.0);
    out.delta_margin.assign(static_cast<std::size_t>(cfg.steps),
                            -std::numeric_limits<double>::infinity());
    out.sub_x.assign(static_cast<std::size_t>(cfg.steps),
                     std::vector<double>(static_cast<std::size_t>(s), 0.0));
    out.sub_y = out.sub_x;
    out.end_mass_by_step.assign(static_cast<std::size_t>(cfg.steps), 0.0);

    // initial flows
    FlowMap flows;
    auto push = [&flows](const ChainState& st, double w) {
        if (w != 0.0) flows[pack(st)] += w;
    };
    if (!cfg.lam) {
        // base start under normalized m0 x m0
        for (Symbol a = 0; a < s; ++a)
            for (Symbol b = 0; b < s; ++b) {
                ChainState st{{a, tw.return_time(a), -1, -1},
                              {b, tw.return_time(b), -1, -1},
                              0, 1, cfg.n0, 0};
                push(st, tw.weight(a) * tw.weight(b) /
                             (tw.base_mass() * tw.base_mass()));
            }
    } else {
        const int D = cfg.lam->depth();
        for (int la = 0; la < cfg.lam->levels(); ++la)
            for (long ra = 0; ra < cfg.lam->words(); ++ra) {
                if (!cfg.lam->cell_valid(la, ra)) continue;
                const Word wa = tw.unrank_word(ra, D);
                const double ma = cfg.lam->at(la, ra) * cfg.lam->cell_mass(ra);
                if (ma == 0.0) continue;
                for (int lb = 0; lb < cfg.lamp->levels(); ++lb)
                    for (long rb = 0; rb < cfg.lamp->words(); ++rb) {
                        if (!cfg.lamp->cell_valid(lb, rb)) continue;
                        const Word wb = tw.unrank_word(rb, D);
                        const double mb = cfg.lamp->at(lb, rb) * cfg.lamp->cell_mass(rb);
                        if (mb == 0.0) continue;
                        ChainState st{{wa[0], tw.return_time(wa[0]) - la,
                                       D == 2 ? wa[1] : -1, D == 2 ? la : -1},
                                      {wb[0], tw.return_time(wb[0]) - lb,
                                       D == 2 ? wb[1] : -1, D == 2 ? lb : -1},
                                      0, 1, cfg.n0, 0};
                        push(st, ma * mb);
                    }
            }
    }

    std::map<BoundaryClass, BoundaryProfile> profile_cache;

    for (int t = 0; t <= cfg.horizon; ++t) {
        // deterministic order
        std::vector<std::pair<std::uint64_t, double>> items(flows.begin(), flows.end());
        std::sort(items.begin(), items.end());
        flows.clear();
        FlowMap next;
        auto park = [&next](const ChainState& st, double w) {
            if (w != 0.0) next[pack(st)] += w;
        };

        for (auto& [key, w] : items) {
            ChainState st = unpack(key);
            // stopping-time events at this instant
            bool absorbed = false;
            while (st.wait == 0) {
                Coord& act = st.active == 0 ? st.x : st.y;
                Coord& pas = st.active == 0 ? st.y : st.x;
                if (act.r != 0) break;
                if (st.round2 == 2 && pas.r == 0) {
                    absorbed = true;
                    break;
                }
                st.round2 = 2;
                st.active ^= 1;
                st.wait = cfg.n0;
            }

            if (absorbed) {
                const int i = st.step + 1;  // this simultaneous return's index
                out.mass_before[static_cast<std::size_t>(i - 1)] += w;
                const double eps_i = eps_at(cfg, i);
                const BoundaryClass cls{st.x.ctx, st.y.ctx, st.x.pending, st.x.lvl0,
                                        st.y.pending, st.y.lvl0};
                auto it = profile_cache.find(cls);
                if (it == profile_cache.end())
                    it = profile_cache.emplace(cls, boundary_profile(cfg, cls)).first;
                const BoundaryProfile& bp = it->second;

                // class statistics
                out.c_fhat = std::max(out.c_fhat, osc_log(bp.hpart));
                if (i == 1) {
                    // oscillation of Phi over the entry class
                    std::vector<double> aprof(bp.prof.size());
                    for (std::size_t k = 0; k < bp.prof.size(); ++k)
                        aprof[k] = bp.prof[k] / bp.hpart[k];
                    out.cbar_entry = std::max(out.cbar_entry, osc_log(aprof));
                }
                std::vector<double> after(bp.prof.size());
                for (std::size_t k = 0; k < bp.prof.size(); ++k)
                    after[k] = bp.prof[k] - eps_i * bp.inf_prof;
                out.log_ratio_max[static_cast<std::size_t>(i - 1)] =
                    std::max(out.log_ratio_max[static_cast<std::size_t>(i - 1)],
                             osc_log(after));
                if (cfg.eps_prime) {
                    const double ep = epsp_at(cfg, i);
                    double margin = -std::numeric_limits<double>::infinity();
                    for (std::size_t u = 0; u < bp.prof.size(); ++u)
                        for (std::size_t v = 0; v < bp.prof.size(); ++v) {
                            if (u == v) continue;
                            const double lhs = std::abs(std::log(after[u] / after[v]));
                            const double rhs = std::abs(std::log(bp.prof[u] / bp.prof[v]));
                            margin = std::max(margin, lhs - (1.0 + ep) * rhs);
                        }
                    out.delta_margin[static_cast<std::size_t>(i - 1)] =
                        std::max(out.delta_margin[static_cast<std::size_t>(i - 1)], margin);
                }

                // boundary draws with the matching tilt
                for (int p = 0; p < s; ++p) {
                    const double probx = st.x.pending >= 0
                                             ? (p == st.x.pending ? 1.0 : 0.0)
                                             : tw.transition({st.x.ctx}, p);
                    if (probx == 0.0) continue;
                    for (int q = 0; q < s; ++q) {
                        const double proby = st.y.pending >= 0
                                                 ? (q == st.y.pending ? 1.0 : 0.0)
                                                 : tw.transition({st.y.ctx}, q);
                        if (proby == 0.0) continue;
                        const double prof = bp.prof[static_cast<std::size_t>(p) * s + q];
                        const double cut = eps_i * bp.inf_prof / prof;
                        const double slice = w * probx * proby;
                        out.sub_x[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(p)] +=
                            slice * cut;
                        out.sub_y[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(q)] +=
                            slice * cut;
                        const double nw = slice * (1.0 - cut);
                        out.mass_after[static_cast<std::size_t>(i - 1)] += nw;
                        out.law[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(t)] +=
                            nw;
                        if (i < cfg.steps && nw != 0.0) {
                            ChainState ns{{p, tw.return_time(p), -1, -1},
                                          {q, tw.return_time(q), -1, -1},
                                          0, 1, cfg.n0, i};
                            // advance into t+1 below: r and wait decrement once
                            ns.x.r -= 1;
                            ns.y.r -= 1;
                            ns.wait = std::max(ns.wait - 1, 0);
                            park(ns, nw);
                        }
                    }
                }
                continue;
            }

            // plain draws for any coordinate arriving now
            std::vector<std::pair<ChainState, double>> fan{{st, w}};
            for (Coord ChainState::*cp : {&ChainState::x, &ChainState::y}) {
                std::vector<std::pair<ChainState, double>> grown;
                for (auto& [cs, cw] : fan) {
                    Coord& c = cs.*cp;
                    if (c.r != 0) {
                        grown.emplace_back(cs, cw);
                        continue;
                    }
                    if (c.pending >= 0) {
                        ChainState ns = cs;
                        Coord& nc = ns.*cp;
                        nc.ctx = c.pending;
                        nc.r = tw.return_time(c.pending);
                        nc.pending = -1;
                        nc.lvl0 = -1;
                        grown.emplace_back(ns, cw);
                    } else {
                        for (Symbol j = 0; j < s; ++j) {
                            const double pr = tw.transition({c.ctx}, j);
                            if (pr == 0.0) continue;
                            ChainState ns = cs;
                            Coord& nc = ns.*cp;
                            nc.ctx = j;
                            nc.r = tw.return_time(j);
                            grown.emplace_back(ns, cw * pr);
                        }
                    }
                }
                fan.swap(grown);
            }
            // advance to t+1
            for (auto& [cs, cw] : fan) {
                ChainState ns = cs;
                ns.x.r -= 1;
                ns.y.r -= 1;
                ns.wait = std::max(ns.wait - 1, 0);
                park(ns, cw);
            }
        }
        flows.swap(next);
    }

    for (auto& [key, w] : flows) {
        const ChainState st = unpack(key);
        out.end_mass_by_step[static_cast<std::size_t>(st.step)] += w;
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// StoppingStructure
// ---------------------------------------------------------------------------

StoppingStructure::StoppingStructure(TowerPtr tower, int n0, int max_t_index, int horizon)
    : tower_(std::move(tower)), n0_(n0), max_t_index_(max_t_index), horizon_(horizon) {
    if (n0_ < 0) throw invalid_input_error("stopping structure: n0 must be >= 0");
    if (horizon_ < 1 || max_t_index_ < 1)
        throw invalid_input_error("stopping structure: horizon and max_t_index must be >= 1");
    if (tower_->jacobian_depth() > 1)
        throw invalid_input_error(
            "stopping structure: exact chain aggregation supports jacobian_depth <= 1");
    ChainConfig cfg;
    cfg.tower = tower_.get();
    cfg.n0 = n0_;
    cfg.horizon = horizon_;
    cfg.steps = max_t_index_;
    auto res = run_chain(cfg);
    base_t_law_ = std::move(res.law);
    base_unresolved_.assign(static_cast<std::size_t>(max_t_index_), 0.0);
    double cum = 0.0;
    for (int i = 0; i < max_t_index_; ++i) {
        cum += res.end_mass_by_step[static_cast<std::size_t>(i)];
        base_unresolved_[static_cast<std::size_t>(i)] = cum;
    }
}

double StoppingStructure::base_tail(int n) const {
    if (n > horizon_) throw horizon_error("base_tail: n beyond resolved horizon");
    double cum = 0.0;
    for (int t = 0; t <= n; ++t) cum += base_t_law_[0][static_cast<std::size_t>(t)];
    return 1.0 - cum;
}

StoppingStructure build_stopping_structure(TowerPtr tower, int n0, int max_t_index,
                                           int horizon) {
    return StoppingStructure(std::move(tower), n0, max_t_index, horizon);
}

// ---------------------------------------------------------------------------
// Epsilon schedules
// ---------------------------------------------------------------------------

std::vector<double> v_profile_exponential(double v0, double theta, int steps) {
    std::vector<double> v(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) v[static_cast<std::size_t>(i)] = v0 * std::pow(theta, i);
    return v;
}

std::vector<double> v_profile_polynomial(double v0, double gamma, int steps) {
    std::vector<double> v(static_cast<std::size_t>(steps) + 1);
    v[0] = v0;
    for (int i = 1; i <= steps; ++i)
        v[static_cast<std::size_t>(i)] = v0 * std::pow(static_cast<double>(i), -gamma);
    return v;
}

std::vector<double> v_profile_stretched(double v0, double gamma, int steps) {
    std::vector<double> v(static_cast<std::size_t>(steps) + 1);
    v[0] = v0;
    for (int i = 1; i <= steps; ++i)
        v[static_cast<std::size_t>(i)] = v0 * std::exp(-std::pow(static_cast<double>(i), gamma));
    return v;
}

std::vector<double> v_profile_log_poly(double v0, double gamma, int steps) {
    std::vector<double> v(static_cast<std::size_t>(steps) + 1);
    v[0] = v0;
    for (int i = 1; i <= steps; ++i)
        v[static_cast<std::size_t>(i)] =
            v0 * std::exp(-std::pow(std::log(static_cast<double>(i) + 1.0), gamma));
    return v;
}

EpsilonSchedule choose_epsilon_schedule(const std::vector<double>& v_phi, double beta,
                                        double delta_bar, double c_param, int steps) {
    if (steps < 1) throw invalid_input_error("schedule: steps must be >= 1");
    if (v_phi.empty()) throw invalid_input_error("schedule: empty variation profile");
    if (!(delta_bar > 0.0 && delta_bar < 1.0))
        throw invalid_input_error("schedule: delta_bar must lie in (0,1)");
    const double c_lo = std::exp(-std::min(0.5, 1.0 / beta - 1.0));
    if (!(c_param > c_lo && c_param < 1.0))
        throw invalid_input_error("schedule: c must lie in (exp{-min(1/2,1/beta-1)}, 1)");
    for (std::size_t i = 1; i < v_phi.size(); ++i)
        if (v_phi[i] > v_phi[i - 1] + 1e-15)
            throw invalid_input_error("schedule: variation profile must be nonincreasing");

    EpsilonSchedule sched;
    sched.delta_bar = delta_bar;
    sched.c_param = c_param;

    auto v_at = [&](int i) {
        return i < static_cast<int>(v_phi.size()) ? v_phi[static_cast<std::size_t>(i)]
                                                  : v_phi.back();
    };

    if (!(v_at(0) > 0.0)) {
        // trivial case: constant densities, nothing to regularize
        sched.trivial = true;
        sched.v_star.assign(static_cast<std::size_t>(steps) + 1, 0.0);
        sched.eps_prime.assign(static_cast<std::size_t>(steps), 0.0);
        sched.eps.assign(static_cast<std::size_t>(steps), 0.0);
        sched.K0 = 0.0;
        return sched;
    }

    sched.v_star.resize(static_cast<std::size_t>(steps) + 1);
    sched.eps_prime.resize(static_cast<std::size_t>(steps));
    sched.eps.resize(static_cast<std::size_t>(steps));
    sched.v_star[0] = v_at(0);
    double prod = 1.0;   // prod (1 + eps'_j)
    double e2 = 0.0;     // recursive E2 sum
    for (int i = 1; i <= steps; ++i) {
        sched.v_star[static_cast<std::size_t>(i)] =
            std::max(v_at(i), c_param * sched.v_star[static_cast<std::size_t>(i - 1)]);
        const double ep = std::log(sched.v_star[static_cast<std::size_t>(i - 1)] /
                                   sched.v_star[static_cast<std::size_t>(i)]);
        sched.eps_prime[static_cast<std::size_t>(i - 1)] = ep;
        sched.eps[static_cast<std::size_t>(i - 1)] = delta_bar * ep;
        prod *= 1.0 + ep;
        e2 = (1.0 + ep) * beta * (e2 + 1.0);
        sched.e1_max = std::max(sched.e1_max, v_at(i) * prod);
        sched.e2_max = std::max(sched.e2_max, e2);
    }
    sched.K0 = std::max({v_at(0), sched.e1_max, sched.e2_max});
    return sched;
}

std::string EpsilonSchedule::to_json_text() const {
    nlohmann::json j;
    j["v_star"] = v_star;
    j["eps_prime"] = eps_prime;
    j["eps"] = eps;
    j["delta_bar"] = delta_bar;
    j["c_param"] = c_param;
    j["K0"] = K0;
    j["e1_max"] = e1_max;
    j["e2_max"] = e2_max;
    j["trivial"] = trivial;
    return j.dump(2);
}

EpsilonSchedule EpsilonSchedule::from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    EpsilonSchedule s;
    s.v_star = j.at("v_star").get<std::vector<double>>();
    s.eps_prime = j.at("eps_prime").get<std::vector<double>>();
    s.eps = j.at("eps").get<std::vector<double>>();
    s.delta_bar = j.at("delta_bar").get<double>();
    s.c_param = j.at("c_param").get<double>();
    s.K0 = j.at("K0").get<double>();
    s.e1_max = j.value("e1_max", 0.0);
    s.e2_max = j.value("e2_max", 0.0);
    s.trivial = j.value("trivial", false);
    return s;
}

// ---------------------------------------------------------------------------
// run_coupling
// ---------------------------------------------------------------------------

namespace {

// exact v_n of a cylinder density: sup oscillation over same-level cells
// agreeing on the first n symbols
std::vector<double> density_variation(const CylinderDensity& dens) {
    const auto& tw = *dens.tower();
    const int D = dens.depth();
    std::vector<double> v(static_cast<std::size_t>(D) + 1, 0.0);
    for (int n = 0; n <= D; ++n) {
        const long block = tw.word_count(D - n);
        double worst = 0.0;
        for (int l = 0; l < dens.levels(); ++l)
            for (long g = 0; g < tw.word_count(n); ++g) {
                double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                for (long e = g * block; e < (g + 1) * block; ++e) {
                    if (!dens.cell_valid(l, e)) continue;
                    lo = std::min(lo, dens.at(l, e));
                    hi = std::max(hi, dens.at(l, e));
                }
                if (hi >= lo) worst = std::max(worst, hi - lo);
            }
        // n = 0 compares across levels and first symbols too
        if (n == 0) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (int l = 0; l < dens.levels(); ++l)
                for (long e = 0; e < dens.words(); ++e) {
                    if (!dens.cell_valid(l, e)) continue;
                    lo = std::min(lo, dens.at(l, e));
                    hi = std::max(hi, dens.at(l, e));
                }
            worst = hi - lo;
        }
        v[static_cast<std::size_t>(n)] = worst;
    }
    return v;
}

double weighted_quantile(const std::vector<double>& law, double q) {
    double total = 0.0;
    for (double w : law) total += w;
    if (total <= 0.0) return 0.0;
    double cum = 0.0;
    for (std::size_t t = 0; t < law.size(); ++t) {
        cum += law[t];
        if (cum >= q * total) return static_cast<double>(t);
    }
    return static_cast<double>(law.size() - 1);
}

} // namespace

CouplingTrace run_coupling(const StoppingStructure& structure, const CylinderDensity& lambda,
                           const CylinderDensity& lambda_prime,
                           const EpsilonSchedule& schedule, int steps) {
    const auto& tower = *structure.tower();
    if (steps < 1) throw invalid_input_error("run_coupling: steps must be >= 1");
    if (schedule.steps() < steps)
        throw invalid_input_error("run_coupling: schedule shorter than requested steps");
    if (lambda.depth() > 2 || lambda_prime.depth() > 2)
        throw depth_error("run_coupling: exact chain aggregation supports density depth <= 2");
    if (!lambda.is_probability() || !lambda_prime.is_probability())
        throw precondition_error("run_coupling: inputs must be probability densities");
    if (!(lambda.min_value() > 0.0) || !(lambda_prime.min_value() > 0.0))
        throw precondition_error("run_coupling: densities must be bounded away from zero");

    const int D = std::max(lambda.depth(), lambda_prime.depth());
    const CylinderDensity lam = lambda.depth() == D ? lambda : lambda.refined(D);
    const CylinderDensity lamp =
        lambda_prime.depth() == D ? lambda_prime : lambda_prime.refined(D);

    ChainConfig cfg;
    cfg.tower = &tower;
    cfg.n0 = structure.n0();
    cfg.horizon = structure.horizon();
    cfg.steps = steps;
    cfg.lam = &lam;
    cfg.lamp = &lamp;

    // plain run: the stopping-time laws under P do not see the matching
    auto plain = run_chain(cfg);
    // coupled run
    std::vector<double> eps(schedule.eps.begin(), schedule.eps.begin() + steps);
    std::vector<double> epsp(schedule.eps_prime.begin(), schedule.eps_prime.begin() + steps);
    cfg.eps = &eps;
    cfg.eps_prime = &epsp;
    auto coupled = run_chain(cfg);

    CouplingTrace trace;
    trace.horizon = structure.horizon();
    trace.delta_bar = schedule.delta_bar;
    trace.K0 = schedule.K0;
    trace.t_law = std::move(plain.law);
    trace.unresolved.assign(static_cast<std::size_t>(steps), 0.0);
    double cum_unres = 0.0;
    for (int i = 0; i < steps; ++i) {
        cum_unres += plain.end_mass_by_step[static_cast<std::size_t>(i)];
        trace.unresolved[static_cast<std::size_t>(i)] = cum_unres;
    }

    // variation profile of Phi and the inf-based regularity constants
    const auto v1 = density_variation(lam);
    const auto v2 = density_variation(lamp);
    trace.v_phi.resize(std::max(v1.size(), v2.size()), 0.0);
    for (std::size_t n = 0; n < trace.v_phi.size(); ++n)
        trace.v_phi[n] = std::max(n < v1.size() ? v1[n] : 0.0, n < v2.size() ? v2[n] : 0.0);
    trace.C_phi = 1.0 / lam.min_value() + 1.0 / lamp.min_value();
    trace.C_fhat = coupled.c_fhat;
    trace.Cbar_measured = coupled.cbar_entry;
    for (double x : coupled.log_ratio_max) trace.Cbar_measured = std::max(trace.Cbar_measured, x);
    trace.Cbar_theoretical =
        (trace.C_phi + trace.C_fhat / tower.distortion().beta) * std::max(trace.K0, trace.v_phi[0]);
    trace.K_emp = std::exp(trace.Cbar_measured + trace.C_fhat);
    trace.zeta = trace.delta_bar / trace.K_emp;

    trace.steps.resize(static_cast<std::size_t>(steps));
    double prev_mass = 1.0;
    double worst_delta = -std::numeric_limits<double>::infinity();
    for (int i = 1; i <= steps; ++i) {
        auto& row = trace.steps[static_cast<std::size_t>(i - 1)];
        row.index = i;
        row.eps = eps[static_cast<std::size_t>(i - 1)];
        row.eps_prime = epsp[static_cast<std::size_t>(i - 1)];
        row.mass_before = coupled.mass_before[static_cast<std::size_t>(i - 1)];
        row.mass = coupled.mass_after[static_cast<std::size_t>(i - 1)];
        row.contraction = prev_mass > 0.0 ? row.mass / prev_mass : 0.0;
        row.guaranteed = 1.0 - row.eps / trace.K_emp;
        row.log_ratio_max = coupled.log_ratio_max[static_cast<std::size_t>(i - 1)];
        const auto& law = trace.t_law[static_cast<std::size_t>(i - 1)];
        row.t_q25 = weighted_quantile(law, 0.25);
        row.t_q50 = weighted_quantile(law, 0.50);
        row.t_q75 = weighted_quantile(law, 0.75);
        // symmetric-subtraction residual: the two marginal densities agree
        double resid = 0.0;
        for (int p = 0; p < tower.alphabet_size(); ++p) {
            const double dx =
                coupled.sub_x[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(p)] /
                tower.weight(p);
            const double dy =
                coupled.sub_y[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(p)] /
                tower.weight(p);
            resid = std::max(resid, std::abs(dx - dy));
        }
        row.symmetry_residual = resid;
        worst_delta = std::max(worst_delta, coupled.delta_margin[static_cast<std::size_t>(i - 1)]);
        prev_mass = row.mass;
    }
    trace.delta_check_margin = worst_delta;
    return trace;
}

double correlation_bound(const CouplingTrace& trace, const StoppingStructure& structure,
                         int n) {
    if (n > trace.horizon || n > structure.horizon())
        throw horizon_error("correlation_bound: n beyond resolved horizon");
    const int S = static_cast<int>(trace.t_law.size());
    auto cum = [&](int i) {  // P{T_i <= n}, 1-based; beyond resolved steps: 0
        if (i > S) return 0.0;
        double c = 0.0;
        for (int t = 0; t <= n; ++t)
            c += trace.t_law[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(t)];
        return c;
    };
    double bound = 2.0 * (1.0 - cum(1));
    double prod = 1.0;
    for (int i = 1; i <= std::min(S, n); ++i) {
        prod *= 1.0 - trace.steps[static_cast<std::size_t>(i - 1)].eps / trace.K_emp;
        bound += 2.0 * prod * std::max(cum(i) - cum(i + 1), 0.0);
    }
    return bound;
}

std::vector<IncrementTailRow> increment_tail_check(const StoppingStructure& structure,
                                                   const CouplingTrace& trace) {
    const auto& tw = *structure.tower();
    const int s = tw.alphabet_size();
    std::vector<IncrementTailRow> rows;

    // base tail P{T > n} under normalized m0 x m0
    std::vector<double> base_tail(static_cast<std::size_t>(structure.horizon()) + 1);
    {
        double cumv = 0.0;
        for (int t = 0; t <= structure.horizon(); ++t) {
            cumv += structure.base_t_law()[0][static_cast<std::size_t>(t)];
            base_tail[static_cast<std::size_t>(t)] = 1.0 - cumv;
        }
    }

    // every class of xi-hat elements beyond the first step is a context pair:
    // the conditional increment law starts the chain with the first draws
    // tilted by the image density 1/(JxJy), which is exactly the conditional
    // transition law from the contexts
    for (int cx = 0; cx < s; ++cx)
        for (int cy = 0; cy < s; ++cy) {
            // start the one-step chain from the conditional first-symbol law
            ChainConfig cfg;
            cfg.tower = &tw;
            cfg.n0 = structure.n0();
            cfg.horizon = structure.horizon();
            cfg.steps = 1;
            // build initial flows by hand: use a depth-1 density with the
            // conditional weights so the generic machinery applies
            CylinderDensity mu_x(structure.tower(), 1, 0.0);
            CylinderDensity mu_y(structure.tower(), 1, 0.0);
            for (int p = 0; p < s; ++p) {
                const double wx = tw.transition({cx}, p);
                const double wy = tw.transition({cy}, p);
                mu_x.set(0, p, wx / tw.weight(p));
                mu_y.set(0, p, wy / tw.weight(p));
            }
            cfg.lam = &mu_x;
            cfg.lamp = &mu_y;
            auto res = run_chain(cfg);
            double worst = 0.0;
            double cumv = 0.0;
            const double unresolved = res.end_mass_by_step[0];
            for (int t = 0; t <= structure.horizon(); ++t) {
                cumv += res.law[0][static_cast<std::size_t>(t)];
                const double tail = 1.0 - cumv;
                if (base_tail[static_cast<std::size_t>(t)] > 1e-13 && tail > unresolved + 1e-13)
                    worst = std::max(worst, tail / base_tail[static_cast<std::size_t>(t)]);
            }
            IncrementTailRow row;
            row.class_id = tw.id(cx) + "|" + tw.id(cy);
            row.worst_ratio = worst;
            // beyond the first step the density profile is pure Jacobian:
            // v_i(Phi) = 0 there, so the constant is e^{C_Fhat}; quote the
            // step-one constant too via v_1(Phi)
            const double v1 = trace.v_phi.size() > 1 ? trace.v_phi[1] : 0.0;
            row.kbar = std::exp(trace.C_phi * v1 + trace.C_fhat);
            row.holds = worst <= row.kbar * (1.0 + 1e-9);
            rows.push_back(std::move(row));
        }
    return rows;
}

double calibrate_delta_bar(const SymbolicTower& tower, const std::vector<double>& eps_prime) {
    const int s = tower.alphabet_size();
    const int d = tower.jacobian_depth();
    // generic class profiles: pure Jacobian shape over the draw window
    std::vector<std::vector<double>> profs;
    for (int cx = 0; cx < s; ++cx)
        for (int cy = 0; cy < s; ++cy) {
            std::vector<double> prof(static_cast<std::size_t>(s) * s);
            for (int p = 0; p < s; ++p)
                for (int q = 0; q < s; ++q)
                    prof[static_cast<std::size_t>(p) * s + q] =
                        1.0 / (tower.jacobian_by_rank(cx, d == 1 ? p : 0) *
                               tower.jacobian_by_rank(cy, d == 1 ? q : 0));
            profs.push_back(std::move(prof));
        }

    auto ok = [&](double delta) {
        for (double ep : eps_prime) {
            const double e = delta * ep;
            for (const auto& prof : profs) {
                const double inf = *std::min_element(prof.begin(), prof.end());
                for (std::size_t u = 0; u < prof.size(); ++u)
                    for (std::size_t v = 0; v < prof.size(); ++v) {
                        if (u == v) continue;
                        const double gu = prof[u] - e * inf, gv = prof[v] - e * inf;
                        if (!(gu > 0.0) || !(gv > 0.0)) return false;
                        const double lhs = std::abs(std::log(gu / gv));
                        const double rhs = std::abs(std::log(prof[u] / prof[v]));
                        if (lhs > (1.0 + ep) * rhs + 1e-12) return false;
                    }
            }
        }
        return true;
    };

    if (ok(0.999)) return 0.999;
    double lo = 0.0, hi = 0.999;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ok(mid))
            lo = mid;
        else
            hi = mid;
    }
    return lo > 0.0 ? lo : 0.5;
}

// ---------------------------------------------------------------------------
// Trace output
// ---------------------------------------------------------------------------

void CouplingTrace::write_csv(std::ostream& os) const {
    os << "step,t_q25,t_q50,t_q75,mass,contraction,log_ratio_max,eps_i\n";
    char buf[256];
    for (const auto& row : steps) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                      row.index, row.t_q25, row.t_q50, row.t_q75, row.mass, row.contraction,
                      row.log_ratio_max, row.eps);
        os << buf << '\n';
    }
}

std::string CouplingTrace::constants_json() const {
    nlohmann::json j;
    j["C_phi"] = C_phi;
    j["C_fhat"] = C_fhat;
    j["Cbar_measured"] = Cbar_measured;
    j["Cbar_theoretical"] = Cbar_theoretical;
    j["K0"] = K0;
    j["K_emp"] = K_emp;
    j["zeta"] = zeta;
    j["delta_bar"] = delta_bar;
    j["delta_check_margin"] = delta_check_margin;
    j["horizon"] = horizon;
    j["v_phi"] = v_phi;
    j["unresolved"] = unresolved;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// predicted_rate
// ---------------------------------------------------------------------------

RateDescriptor predicted_rate(TailKind tail, double tail_param, VClass v_class,
                              double v_gamma, double zeta) {
    if (!(zeta > 0.0 && zeta < 1.0))
        throw invalid_input_error("predicted_rate: zeta must lie in (0,1)");
    RateDescriptor r;
    char buf[128];
    if (tail == TailKind::exponential) {
        if (!(tail_param > 0.0 && tail_param < 1.0))
            throw invalid_input_error("predicted_rate: exponential tail needs theta in (0,1)");
        switch (v_class) {
            case VClass::V1:
                r.family = RateDescriptor::Family::exponential;
                r.exponent = 0.0;
                r.sub_case = "exp-tail (V1)";
                r.text = "O(theta'^n), some theta' < 1";
                return r;
            case VClass::V2:
                r.family = RateDescriptor::Family::stretched_exp;
                r.exponent = v_gamma;
                r.strict = true;
                r.sub_case = "exp-tail (V2)";
                std::snprintf(buf, sizeof(buf), "O(e^{-n^gamma'}), every gamma' < %g", v_gamma);
                r.text = buf;
                return r;
            case VClass::V3:
                r.family = RateDescriptor::Family::log_poly_exp;
                r.exponent = v_gamma;
                r.strict = true;
                r.sub_case = "exp-tail (V3)";
                std::snprintf(buf, sizeof(buf), "O(e^{-(log n)^gamma'}), every gamma' < %g",
                              v_gamma);
                r.text = buf;
                return r;
            case VClass::V4:
                if (!(v_gamma > 1.0 / zeta))
                    throw class_error("predicted_rate: (V4) needs gamma > 1/zeta in case 1");
                r.family = RateDescriptor::Family::polynomial;
                r.exponent = zeta * v_gamma - 1.0;
                r.sub_case = "exp-tail (V4)";
                std::snprintf(buf, sizeof(buf), "O(n^{-%g})", r.exponent);
                r.text = buf;
                return r;
        }
    }
    // polynomial tail, exponent alpha
    const double alpha = tail_param;
    if (!(alpha > 1.0)) throw invalid_input_error("predicted_rate: polynomial tail needs alpha > 1");
    if (v_class != VClass::V4) {
        // stronger classes sit inside (V4,gamma) for every gamma, so the tail
        // term governs
        r.family = RateDescriptor::Family::polynomial;
        r.exponent = alpha - 1.0;
        r.sub_case = "poly-tail via (V4, every gamma)";
        std::snprintf(buf, sizeof(buf), "O(n^{-%g})", r.exponent);
        r.text = buf;
        return r;
    }
    if (!(v_gamma > 2.0 / zeta))
        throw class_error("predicted_rate: (V4) needs gamma > 2/zeta in case 2");
    const double zg = zeta * v_gamma;
    if (std::abs(zg - (alpha + 1.0)) <= 1e-9 * (alpha + 1.0)) {
        r.family = RateDescriptor::Family::polynomial_log;
        r.exponent = alpha - 1.0;
        r.sub_case = "poly-tail boundary gamma = (alpha+1)/zeta";
        std::snprintf(buf, sizeof(buf), "O(n^{-%g} log n)", r.exponent);
        r.text = buf;
        return r;
    }
    if (zg > alpha + 1.0) {
        r.family = RateDescriptor::Family::polynomial;
        r.exponent = alpha - 1.0;
        r.sub_case = "poly-tail, tail-dominated";
    } else {
        r.family = RateDescriptor::Family::polynomial;
        r.exponent = zg - 2.0;
        r.sub_case = "poly-tail, regularity-dominated";
    }
    std::snprintf(buf, sizeof(buf), "O(n^{-%g})", r.exponent);
    r.text = buf;
    return r;
}

// ---------------------------------------------------------------------------
// observable_to_measures, clt_check
// ---------------------------------------------------------------------------

MeasurePair observable_to_measures(const CylinderDensity& psi, const CylinderDensity& rho) {
    const int D = std::max(psi.depth(), rho.depth());
    CylinderDensity p = psi.depth() == D ? psi : psi.refined(D);
    CylinderDensity r = rho.depth() == D ? rho : rho.refined(D);
    for (int l = 0; l < p.levels(); ++l)
        for (long w = 0; w < p.words(); ++w)
            if (p.cell_valid(l, w) && !std::isfinite(p.at(l, w)))
                throw precondition_error("observable_to_measures: psi must be bounded");

    MeasurePair out{CylinderDensity(p.tower(), D), r, 0.0, 1.0};
    out.a = 1.0 - p.min_value();
    double denom = 0.0;
    for (int l = 0; l < p.levels(); ++l)
        for (long w = 0; w < p.words(); ++w)
            if (p.cell_valid(l, w))
                denom += (p.at(l, w) + out.a) * r.at(l, w) * p.cell_mass(w);
    out.b = 1.0 / denom;
    for (int l = 0; l < p.levels(); ++l)
        for (long w = 0; w < p.words(); ++w)
            if (p.cell_valid(l, w))
                out.lambda.set(l, w, out.b * (p.at(l, w) + out.a) * r.at(l, w));
    return out;
}

CltReport clt_check(TowerPtr tower, const CylinderDensity& phi, int n_max) {
    InvariantDensityOptions opts;
    opts.depth = std::max(phi.depth(), tower->jacobian_depth() + 1);
    auto inv = invariant_density(tower, opts);
    const CylinderDensity rho = inv.density;
    const int D = rho.depth();
    CylinderDensity f = phi.depth() == D ? phi : phi.refined(D);

    CltReport report;
    double mean = 0.0;
    for (int l = 0; l < f.levels(); ++l)
        for (long w = 0; w < f.words(); ++w)
            if (f.cell_valid(l, w)) mean += f.at(l, w) * rho.at(l, w) * f.cell_mass(w);
    if (std::abs(mean) > 1e-12) {
        report.centered_notice = true;
        for (int l = 0; l < f.levels(); ++l)
            for (long w = 0; w < f.words(); ++w)
                if (f.cell_valid(l, w)) f.set(l, w, f.at(l, w) - mean);
    }

    // signed density phi * rho pushed forward n times
    CylinderDensity g(rho.tower(), D);
    double c0 = 0.0;
    for (int l = 0; l < f.levels(); ++l)
        for (long w = 0; w < f.words(); ++w)
            if (f.cell_valid(l, w)) {
                g.set(l, w, f.at(l, w) * rho.at(l, w));
                c0 += f.at(l, w) * f.at(l, w) * rho.at(l, w) * f.cell_mass(w);
            }

    report.autocorrelation.push_back(c0);
    report.autocorr_partial.push_back(c0);
    report.dual_sup.push_back(0.0);
    report.dual_partial.push_back(0.0);
    double signed_sum = 0.0;
    for (int n = 1; n <= n_max; ++n) {
        g = transfer_push(g);
        double cn = 0.0, sup = 0.0;
        for (int l = 0; l < f.levels(); ++l)
            for (long w = 0; w < f.words(); ++w)
                if (f.cell_valid(l, w)) {
                    cn += f.at(l, w) * g.at(l, w) * f.cell_mass(w);
                    sup = std::max(sup, std::abs(g.at(l, w)) / rho.at(l, w));
                }
        signed_sum += cn;
        report.autocorrelation.push_back(std::abs(cn));
        report.autocorr_partial.push_back(report.autocorr_partial.back() + std::abs(cn));
        report.dual_sup.push_back(sup);
        report.dual_partial.push_back(report.dual_partial.back() + sup);
    }
    report.sigma2 = c0 + 2.0 * signed_sum;
    report.coboundary_suspect = report.sigma2 < 0.01 * c0 || c0 == 0.0;

    // verdicts: geometric-style tails make the last-quarter contribution small
    auto tail_fraction = [](const std::vector<double>& partial) {
        const double total = partial.back();
        if (total <= 0.0) return 0.0;
        const std::size_t cut = partial.size() - partial.size() / 4;
        return (partial.back() - partial[cut - 1]) / total;
    };
    report.summable = tail_fraction(report.autocorr_partial) < 0.05;
    report.dual_bounded = tail_fraction(report.dual_partial) < 0.05;

    // positive split phi = b^{-1}(lambda - lambda') with a large enough shift
    const double fmin = f.min_value();
    report.a = 1.0 + 2.0 * std::max(0.0, -fmin);
    report.b = 1.0 / report.a;
    double lmin = std::numeric_limits<double>::infinity();
    for (int l = 0; l < f.levels(); ++l)
        for (long w = 0; w < f.words(); ++w)
            if (f.cell_valid(l, w)) {
                lmin = std::min(lmin, report.b * (2.0 * f.at(l, w) + report.a) * rho.at(l, w));
                lmin = std::min(lmin, report.b * (f.at(l, w) + report.a) * rho.at(l, w));
            }
    report.lambda_min = lmin;
    return report;
}

} // namespace towerlab
