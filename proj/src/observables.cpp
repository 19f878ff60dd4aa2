#include "towerlab/observables.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "towerlab/rng.hpp"

namespace towerlab {

const char* to_string(RClass c) {
    switch (c) {
        case RClass::R1: return "R1";
        case RClass::R2: return "R2";
        case RClass::R3: return "R3";
        case RClass::R4: return "R4";
    }
    return "?";
}

const char* to_string(VClass c) {
    switch (c) {
        case VClass::V1: return "V1";
        case VClass::V2: return "V2";
        case VClass::V3: return "V3";
        case VClass::V4: return "V4";
    }
    return "?";
}

std::string ObservableSpec::to_json_text() const {
    nlohmann::json j;
    j["class"] = has_class ? to_string(r_class) : "none";
    j["gamma"] = gamma;
    j["anchor"] = anchor;
    j["floor"] = floor_distance;
    j["label"] = label;
    j["sup_modulus"] = sup_modulus;
    return j.dump(2);
}

namespace {

double measure_sup_modulus(const std::function<double(double)>& f) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = 0; i <= 10000; ++i) {
        const double v = f(i / 10000.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return hi - lo;
}

// Flatten the R3 exemplar beyond the distance where its radial profile stops
// being concave; with the cap in place the worst oscillation over any
// eps-pair sits at the anchor and R_eps(psi) = psi(eps) exactly.
double r3_concavity_cap(double gamma) {
    auto increasing_from = [gamma](double L0) {
        double prev = -std::numeric_limits<double>::infinity();
        for (double L = L0; L <= 500.0; L *= 1.01) {
            const double logpsi_prime =
                -std::pow(std::log(L), gamma) + (gamma - 1.0) * std::log(std::log(L)) -
                std::log(L) + L;
            if (logpsi_prime < prev) return false;
            prev = logpsi_prime;
        }
        return true;
    };
    for (double L0 = std::exp(1.0); L0 <= 64.0; L0 *= 1.05)
        if (increasing_from(L0)) return std::exp(-L0);
    return std::exp(-64.0);
}

} // namespace

ObservableSpec make_observable(RClass cls, double gamma, double anchor, double floor) {
    switch (cls) {
        case RClass::R1:
            if (!(gamma > 0.0 && gamma <= 1.0))
                throw class_error("make_observable: (R1,gamma) needs gamma in (0,1]");
            break;
        case RClass::R2:
            if (!(gamma > 0.0 && gamma < 1.0))
                throw class_error("make_observable: (R2,gamma) needs gamma in (0,1)");
            break;
        case RClass::R3:
        case RClass::R4:
            if (!(gamma > 1.0))
                throw class_error("make_observable: (R3)/(R4) need gamma > 1");
            break;
    }

    ObservableSpec spec;
    spec.has_class = true;
    spec.r_class = cls;
    spec.gamma = gamma;
    spec.anchor = anchor;
    spec.floor_distance = floor;
    spec.label = std::string(to_string(cls)) + ":" + std::to_string(gamma);

    const double c = anchor;
    switch (cls) {
        case RClass::R1:
            spec.evaluator = [c, gamma](double x) { return std::pow(std::abs(x - c), gamma); };
            break;
        case RClass::R2:
            // radial profile is concave for d <= 1/e; flat beyond, so the
            // worst eps-pair sits at the anchor and R_eps = psi(eps)
            spec.evaluator = [c, gamma, floor](double x) {
                const double d = std::min(std::max(std::abs(x - c), floor), std::exp(-1.0));
                if (std::abs(x - c) == 0.0) return 0.0;
                return std::exp(-std::pow(-std::log(d), gamma));
            };
            break;
        case RClass::R3: {
            const double cap = r3_concavity_cap(gamma);
            spec.evaluator = [c, gamma, floor, cap](double x) {
                const double d = std::min(std::max(std::abs(x - c), floor), cap);
                if (std::abs(x - c) == 0.0) return 0.0;
                return std::exp(-std::pow(std::log(-std::log(d)), gamma));
            };
            break;
        }
        case RClass::R4:
            // concave for d <= e^{-(gamma+1)}; flat beyond
            spec.evaluator = [c, gamma, floor](double x) {
                const double d =
                    std::min(std::max(std::abs(x - c), floor), std::exp(-(gamma + 1.0)));
                if (std::abs(x - c) == 0.0) return 0.0;
                return std::pow(-std::log(d), -gamma);
            };
            break;
    }
    spec.sup_modulus = measure_sup_modulus(spec.evaluator);
    return spec;
}

ObservableSpec make_fourier_observable(int k) {
    ObservableSpec spec;
    spec.label = "fourier:" + std::to_string(k);
    spec.evaluator = [k](double x) { return std::cos(2.0 * M_PI * k * x); };
    spec.has_class = true;
    spec.r_class = RClass::R1;
    spec.gamma = 1.0;
    spec.sup_modulus = measure_sup_modulus(spec.evaluator);
    return spec;
}

ObservableSpec make_custom_observable(std::function<double(double)> f, std::string label) {
    ObservableSpec spec;
    spec.evaluator = std::move(f);
    spec.label = std::move(label);
    spec.sup_modulus = measure_sup_modulus(spec.evaluator);
    return spec;
}

std::vector<ModulusEstimate> estimate_modulus(const ObservableSpec& psi,
                                              std::vector<double> eps_grid, int samples,
                                              std::uint64_t seed) {
    for (std::size_t i = 1; i < eps_grid.size(); ++i)
        if (eps_grid[i] >= eps_grid[i - 1])
            throw invalid_input_error("estimate_modulus: eps grid must be decreasing");

    CounterRng rng(seed);
    std::vector<ModulusEstimate> out;
    out.reserve(eps_grid.size());
    for (double eps : eps_grid) {
        double worst = 0.0;
        for (int s = 0; s < samples; ++s) {
            const double x = rng.next_uniform();
            const double y = std::clamp(x + eps * (2.0 * rng.next_uniform() - 1.0), 0.0, 1.0);
            worst = std::max(worst, std::abs(psi(x) - psi(y)));
        }
        // deterministic worst-pair probes at the anchor
        const double c = psi.anchor;
        for (double y : {c + eps, c - eps}) {
            if (y < 0.0 || y > 1.0) continue;
            worst = std::max(worst, std::abs(psi(c) - psi(y)));
        }
        out.push_back({eps, worst});
    }
    // isotonic pass: R_eps is nondecreasing in eps
    for (std::size_t i = out.size(); i-- > 1;)
        out[i - 1].value = std::max(out[i - 1].value, out[i].value);
    return out;
}

ProjectionModulus ProjectionModulus::holder_rate(double beta) {
    if (!(beta > 0.0 && beta < 1.0))
        throw invalid_input_error("projection: holder rate beta must lie in (0,1)");
    ProjectionModulus p;
    p.kind = Kind::holder;
    p.beta = beta;
    return p;
}

ProjectionModulus ProjectionModulus::log_poly(double alpha) {
    if (!(alpha > 1.0)) throw invalid_input_error("projection: log-poly alpha must be > 1");
    ProjectionModulus p;
    p.kind = Kind::log_polynomial;
    p.alpha = alpha;
    return p;
}

VClassDescriptor project_class(RClass cls, double gamma, const ProjectionModulus& pi) {
    VClassDescriptor d;
    if (pi.kind == ProjectionModulus::Kind::holder) {
        switch (cls) {
            case RClass::R1:
                d.v_class = VClass::V1;
                d.gamma = std::pow(pi.beta, gamma);  // v_n = O((beta^gamma)^n)
                d.note = "v_n = O(beta^{gamma n})";
                return d;
            case RClass::R2:
                d.v_class = VClass::V2;
                d.gamma = gamma;
                d.gamma_strict = true;
                d.note = "every gamma' < gamma";
                return d;
            case RClass::R3:
                d.v_class = VClass::V3;
                d.gamma = gamma;
                d.gamma_strict = true;
                d.note = "every gamma' < gamma";
                return d;
            case RClass::R4:
                d.v_class = VClass::V4;
                d.gamma = gamma;
                d.note = "v_n = O(n^{-gamma})";
                return d;
        }
    }
    // log-polynomial projection: oscillation over depth-s cylinders ~ s^{-alpha}
    if (cls == RClass::R1) {
        d.v_class = VClass::V4;
        d.gamma = pi.alpha * gamma;
        d.note = "v_n = O(n^{-alpha gamma})";
        return d;
    }
    throw class_error(
        "project_class: log-polynomial projection only maps (R1,gamma) into the class table");
}

VariationProfile variation_profile(const ObservableSpec& psi, const ReturnPartition& part,
                                   int n_max, int samples_per_cell, int branch_cap) {
    if (n_max < 1) throw depth_error("variation_profile: n_max must be >= 1");
    // Enumerated cylinders beyond this budget would not fit desk scale.
    const std::size_t fanout = std::min<std::size_t>(part.branches.size(),
                                                     static_cast<std::size_t>(branch_cap));
    double budget = 1.0;
    for (int k = 0; k < n_max; ++k) budget *= static_cast<double>(fanout);
    if (budget > 2e6) throw depth_error("variation_profile: n_max beyond resolvable depth");

    struct Cyl {
        std::vector<std::size_t> word;  // branch itinerary; word[0] fixes the level range
        double left, right;
    };

    // composed return map along the cylinder's itinerary (monotone increasing
    // on the cylinder, each branch being increasing)
    auto word_map = [&](const Cyl& c, double x) {
        for (std::size_t step = 0; step < c.word.size(); ++step) {
            const int R = part.branches[c.word[step]].return_time;
            for (int i = 0; i < R; ++i) x = eval_map(part.map, x);
        }
        return x;
    };

    auto osc_at = [&](const Cyl& c) {
        const int R = part.branches[c.word[0]].return_time;
        double worst = 0.0;
        for (int l = 0; l < R; ++l) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (int s = 0; s < samples_per_cell; ++s) {
                const double pad = 1e-12 * (c.right - c.left);
                double x = c.left + pad +
                           (c.right - c.left - 2 * pad) * s / std::max(1, samples_per_cell - 1);
                for (int i = 0; i < l; ++i) x = eval_map(part.map, x);
                const double v = psi(x);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            worst = std::max(worst, hi - lo);
        }
        return worst;
    };

    auto bisect_in = [&](const Cyl& c, double lo, double hi, double target) {
        for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (word_map(c, mid) < target)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    };

    VariationProfile profile;
    profile.values.assign(static_cast<std::size_t>(n_max) + 1, 0.0);

    std::vector<Cyl> level;
    for (std::size_t i = 0; i < std::min(part.branches.size(), fanout); ++i) {
        const double pad = 1e-13 * (part.branches[i].right - part.branches[i].left);
        level.push_back({{i}, part.branches[i].left + pad, part.branches[i].right - pad});
    }
    // v_0: oscillation across everything enumerated (cells at depth 1 differ
    // already at separation 0)
    double lo0 = std::numeric_limits<double>::infinity(), hi0 = -lo0;
    for (const auto& c : level)
        for (int l = 0; l < part.branches[c.word[0]].return_time; ++l) {
            double x = 0.5 * (c.left + c.right);
            for (int i = 0; i < l; ++i) x = eval_map(part.map, x);
            const double v = psi(x);
            lo0 = std::min(lo0, v);
            hi0 = std::max(hi0, v);
        }
    profile.values[0] = std::max(hi0 - lo0, 0.0);

    for (int depth = 1; depth <= n_max; ++depth) {
        double worst = 0.0;
        for (const auto& c : level) worst = std::max(worst, osc_at(c));
        profile.values[static_cast<std::size_t>(depth)] = worst;
        if (depth == n_max) break;
        std::vector<Cyl> next;
        next.reserve(level.size() * fanout);
        for (const auto& c : level)
            for (std::size_t k = 0; k < fanout; ++k) {
                const double cl = bisect_in(c, c.left, c.right, part.branches[k].left);
                const double cr = bisect_in(c, c.left, c.right, part.branches[k].right);
                if (cr - cl > 1e-13) {
                    Cyl kid{c.word, cl, cr};
                    kid.word.push_back(k);
                    next.push_back(std::move(kid));
                }
            }
        level.swap(next);
    }
    // v_0 includes at least v_1
    profile.values[0] = std::max(profile.values[0], profile.values[1]);
    // monotone by construction, but guard against sampling slack
    for (std::size_t i = 1; i < profile.values.size(); ++i)
        profile.values[i] = std::min(profile.values[i], profile.values[i - 1]);
    return profile;
}

} // namespace towerlab
