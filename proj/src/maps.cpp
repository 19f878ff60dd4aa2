#include "towerlab/maps.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace towerlab {

namespace {

// bisection on a monotone increasing function, bracketing guaranteed by the
// caller; robust near the MP neutral fixed point where Newton stalls
template <class F>
double bisect(F&& f, double lo, double hi, double target, double tol) {
    double flo = f(lo) - target;
    if (flo > 0.0) return lo;
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) - target < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

double mp_branch(double x, double alpha) { return x + std::pow(x, 1.0 + alpha); }

} // namespace

MapSpec MapSpec::manneville_pomeau(double alpha) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw invalid_input_error("manneville_pomeau: alpha must lie in (0,1]");
    MapSpec s;
    s.family = MapFamily::manneville_pomeau;
    s.alpha = alpha;
    return s;
}

MapSpec MapSpec::log_singular(double a, double b, double alpha) {
    if (!(0.0 < a && a < b && b < 1.0))
        throw invalid_input_error("log_singular: need 0 < a < b < 1");
    if (!(alpha > 1.0)) throw invalid_input_error("log_singular: alpha must be > 1");
    MapSpec s;
    s.family = MapFamily::log_singular;
    s.a = a;
    s.b = b;
    s.alpha = alpha;
    return s;
}

std::string MapSpec::name() const {
    char buf[96];
    switch (family) {
        case MapFamily::doubling:
            return "doubling";
        case MapFamily::manneville_pomeau:
            std::snprintf(buf, sizeof(buf), "manneville_pomeau(alpha=%g)", alpha);
            return buf;
        case MapFamily::log_singular:
            std::snprintf(buf, sizeof(buf), "log_singular(a=%g,b=%g,alpha=%g)", a, b, alpha);
            return buf;
    }
    return "?";
}

double eval_map(const MapSpec& spec, double x, double margin) {
    if (x < 0.0 || x > 1.0) throw domain_error("eval_map: x outside [0,1]");
    switch (spec.family) {
        case MapFamily::doubling:
            return x < 0.5 ? 2.0 * x : 2.0 * x - 1.0;
        case MapFamily::manneville_pomeau: {
            const double y = mp_branch(x, spec.alpha);
            return y < 1.0 ? y : y - 1.0;
        }
        case MapFamily::log_singular: {
            const double a = spec.a, b = spec.b, al = spec.alpha;
            if (std::abs(x - a) <= margin || x >= 1.0 - margin)
                throw domain_error("eval_map: x at a singular endpoint of the log-singular map");
            if (x <= a)
                return 1.0 - (1.0 - b) * std::pow(-std::log(a), al) *
                                 std::pow(-std::log(a - x), -al);
            if (x < b) return b / (b - a) * (x - a);
            return b - (b / a) * std::exp(std::pow(1.0 - b, 1.0 / al) * std::log(a) *
                                          std::pow(1.0 - x, -1.0 / al));
        }
    }
    throw domain_error("eval_map: bad family");
}

double eval_derivative(const MapSpec& spec, double x, double margin) {
    if (x < 0.0 || x > 1.0) throw domain_error("eval_derivative: x outside [0,1]");
    switch (spec.family) {
        case MapFamily::doubling:
            return 2.0;
        case MapFamily::manneville_pomeau:
            return 1.0 + (1.0 + spec.alpha) * std::pow(x, spec.alpha);
        case MapFamily::log_singular: {
            const double a = spec.a, b = spec.b, al = spec.alpha;
            if (std::abs(x - a) <= margin || x >= 1.0 - margin)
                throw domain_error(
                    "eval_derivative: x at a singular endpoint of the log-singular map");
            if (x <= a)
                return al * (1.0 - b) * std::pow(-std::log(a), al) / (a - x) *
                       std::pow(-std::log(a - x), -(al + 1.0));
            if (x < b) return b / (b - a);
            const double u = std::pow(1.0 - x, -1.0 / al);
            return -(b / a) / al * std::pow(1.0 - b, 1.0 / al) * std::log(a) *
                   std::pow(1.0 - x, -(1.0 / al + 1.0)) *
                   std::exp(std::pow(1.0 - b, 1.0 / al) * std::log(a) * u);
        }
    }
    throw domain_error("eval_derivative: bad family");
}

namespace {

ReturnPartition induce_doubling() {
    ReturnPartition part;
    part.map = MapSpec::doubling();
    part.base_left = 0.0;
    part.base_right = 1.0;
    part.branches = {{0.0, 0.5, 1}, {0.5, 1.0, 1}};
    part.tail = {1.0, 0.0};
    part.unresolved = 0.0;
    part.kac_sum = 1.0;
    part.markov_residual = 0.0;
    return part;
}

ReturnPartition induce_mp(const MapSpec& spec, int max_R, double tol) {
    const double alpha = spec.alpha;
    auto L = [alpha](double x) { return mp_branch(x, alpha); };
    const double xhat = bisect(L, 0.0, 1.0, 1.0, tol);

    // q_k: left-branch preimages of the base boundary, q_1 = xhat, L(q_{k+1}) = q_k
    std::vector<double> q(static_cast<std::size_t>(max_R) + 1);
    q[0] = 1.0;
    q[1] = xhat;
    for (int k = 2; k <= max_R; ++k)
        q[static_cast<std::size_t>(k)] =
            bisect(L, 0.0, q[static_cast<std::size_t>(k - 1)], q[static_cast<std::size_t>(k - 1)], tol);

    // r_n: right-branch preimages, f(r_n) = q_n with f = L - 1 on [xhat, 1]
    auto Rb = [alpha](double x) { return mp_branch(x, alpha) - 1.0; };
    ReturnPartition part;
    part.map = spec;
    part.base_left = xhat;
    part.base_right = 1.0;
    part.tail.assign(static_cast<std::size_t>(max_R) + 1, 0.0);
    part.tail[0] = 1.0 - xhat;
    double r_prev = 1.0;
    double kac = 0.0;
    double r_n = 1.0;
    for (int n = 1; n <= max_R; ++n) {
        r_n = bisect(Rb, xhat, r_prev, q[static_cast<std::size_t>(n)], tol);
        part.branches.push_back({r_n, r_prev, n});
        kac += n * (r_prev - r_n);
        part.tail[static_cast<std::size_t>(n)] = r_n - xhat;
        r_prev = r_n;
    }
    part.unresolved = r_n - xhat;
    part.kac_sum = kac;

    // Markov check, link by link: f(r_n) = q_n and L(q_{k+1}) = q_k. The full
    // composition f^R(omega_n) = Delta0 follows transitively; iterating f
    // forward instead would amplify the bisection error by (f^{R-1})'.
    double worst = 0.0;
    for (const auto& br : part.branches)
        worst = std::max(worst,
                         std::abs(eval_map(spec, br.left) - q[static_cast<std::size_t>(br.return_time)]));
    for (int k = 1; k < max_R; ++k)
        worst = std::max(worst, std::abs(L(q[static_cast<std::size_t>(k + 1)]) -
                                         q[static_cast<std::size_t>(k)]));
    part.markov_residual = worst;
    if (worst > 1e-9)
        throw structure_error("induce: MP return branches are not full (residual " +
                              std::to_string(worst) + ")");
    return part;
}

ReturnPartition induce_log_singular(const MapSpec& spec, double tol) {
    ReturnPartition part;
    part.map = spec;
    part.base_left = 0.0;
    part.base_right = spec.b;
    part.branches = {{0.0, spec.a, 2}, {spec.a, spec.b, 1}};
    part.tail = {spec.b, spec.a, 0.0};
    part.unresolved = 0.0;
    part.kac_sum = 2.0 * spec.a + (spec.b - spec.a);

    // f^2 = (b/a) x on [0,a]; check on an interior grid
    double worst = 0.0;
    for (int i = 1; i < 64; ++i) {
        const double x = spec.a * i / 64.0;
        const double y = eval_map(spec, eval_map(spec, x));
        worst = std::max(worst, std::abs(y - spec.b / spec.a * x));
    }
    // middle branch reaches the base right endpoint
    worst = std::max(worst, std::abs(eval_map(spec, spec.b - tol) - spec.b));
    part.markov_residual = worst;
    if (worst > 1e-9)
        throw structure_error("induce: log-singular Markov residual " + std::to_string(worst));
    return part;
}

} // namespace

ReturnPartition induce_return_partition(const MapSpec& spec, int max_R, double tol) {
    if (max_R < 1) throw invalid_input_error("induce: max_R must be >= 1");
    switch (spec.family) {
        case MapFamily::doubling:
            return induce_doubling();
        case MapFamily::manneville_pomeau:
            return induce_mp(spec, max_R, tol);
        case MapFamily::log_singular:
            return induce_log_singular(spec, tol);
    }
    throw invalid_input_error("induce: bad family");
}

ReturnPartition induce_return_partition(const MapSpec& spec, double base_lo, double base_hi,
                                        int max_R, double tol) {
    auto part = induce_return_partition(spec, max_R, tol);
    if (std::abs(base_lo - part.base_left) > 1e-6 || std::abs(base_hi - part.base_right) > 1e-6)
        throw structure_error("induce: first-return map is full-branch only on [" +
                              std::to_string(part.base_left) + ", " +
                              std::to_string(part.base_right) + "]");
    return part;
}

double return_map(const ReturnPartition& part, std::size_t branch, double x) {
    const auto& br = part.branches.at(branch);
    if (x < br.left || x > br.right) throw domain_error("return_map: x outside branch");
    double y = x;
    for (int s = 0; s < br.return_time; ++s) y = eval_map(part.map, y);
    return y;
}

double return_map_derivative(const ReturnPartition& part, std::size_t branch, double x) {
    const auto& br = part.branches.at(branch);
    if (x < br.left || x > br.right) throw domain_error("return_map_derivative: x outside branch");
    double y = x, deriv = 1.0;
    for (int s = 0; s < br.return_time; ++s) {
        deriv *= eval_derivative(part.map, y);
        y = eval_map(part.map, y);
    }
    return deriv;
}

void ReturnPartition::write_csv(std::ostream& os) const {
    os << "left,right,R\n";
    char buf[96];
    for (const auto& br : branches) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d", br.left, br.right, br.return_time);
        os << buf << '\n';
    }
}

std::string ReturnPartition::tower_json(const DistortionFit& fit) const {
    nlohmann::json j;
    j["elements"] = nlohmann::json::array();
    for (std::size_t i = 0; i < branches.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "w%zu", i);
        j["elements"].push_back({{"id", id},
                                 {"weight", branches[i].right - branches[i].left},
                                 {"R", branches[i].return_time}});
    }
    j["jacobian_depth"] = 0;
    j["distortion"] = {{"C", fit.C}, {"beta", fit.beta}};
    j["truncation"] = {{"unresolved_mass", unresolved}, {"kac_sum", kac_sum}};
    j["map"] = map.name();
    return j.dump(2);
}

DistortionFit fit_distortion(const ReturnPartition& part, int max_depth) {
    // refine a few branches into cylinders of the induced map by nested
    // bisection and record the worst same-element log-Jacobian oscillation at
    // each separation depth
    const std::size_t nb = std::min<std::size_t>(part.branches.size(), 12);
    std::vector<double> worst(static_cast<std::size_t>(max_depth) + 1, 0.0);

    struct Cyl {
        std::size_t root;
        double left, right;
        int depth;
    };
    std::vector<Cyl> frontier;
    for (std::size_t i = 0; i < nb; ++i) {
        // branch endpoints can sit on singular points of the map; probe
        // strictly inside
        const double pad = 1e-13 * (part.branches[i].right - part.branches[i].left);
        frontier.push_back({i, part.branches[i].left + pad, part.branches[i].right - pad, 1});
    }

    auto osc_at = [&](const Cyl& c) {
        const double pad = 1e-12 * (c.right - c.left);
        const double xs[3] = {c.left + pad, 0.5 * (c.left + c.right), c.right - pad};
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (double x : xs) {
            const double j = return_map_derivative(part, c.root, x);
            lo = std::min(lo, j);
            hi = std::max(hi, j);
        }
        return std::log(hi / lo);
    };

    int pairs = 0;
    while (!frontier.empty()) {
        const Cyl c = frontier.back();
        frontier.pop_back();
        worst[static_cast<std::size_t>(c.depth)] =
            std::max(worst[static_cast<std::size_t>(c.depth)], osc_at(c));
        ++pairs;
        if (c.depth >= max_depth) continue;
        const std::size_t kids = std::min<std::size_t>(part.branches.size(), 6);
        // stay strictly inside the branch: its right endpoint may be a
        // singular point of the underlying map
        const double hi = c.right - 1e-13 * (c.right - c.left);
        for (std::size_t k = 0; k < kids; ++k) {
            const double tl = part.branches[k].left, tr = part.branches[k].right;
            auto F = [&](double x) { return return_map(part, c.root, x); };
            const double cl = bisect(F, c.left, hi, tl, 1e-13);
            const double cr = bisect(F, c.left, hi, tr, 1e-13);
            if (cr - cl > 1e-11) frontier.push_back({c.root, cl, cr, c.depth + 1});
        }
    }

    // distortion below numerical noise: report it as zero with a neutral base
    if (*std::max_element(worst.begin(), worst.end()) < 1e-10) {
        DistortionFit flat;
        flat.C = *std::max_element(worst.begin(), worst.end()) * 2.0;
        flat.beta = 0.5;
        flat.pairs = pairs;
        return flat;
    }

    // fit log worst(k) = log C + k log beta over depths with data
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (int k = 1; k <= max_depth; ++k) {
        if (worst[static_cast<std::size_t>(k)] <= 0.0) continue;
        const double y = std::log(worst[static_cast<std::size_t>(k)]);
        sx += k;
        sy += y;
        sxx += static_cast<double>(k) * k;
        sxy += k * y;
        ++n;
    }
    DistortionFit fit;
    fit.pairs = pairs;
    if (n >= 2) {
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        fit.beta = std::clamp(std::exp(slope), 1e-3, 0.999);
        fit.C = std::exp(sy / n - slope * sx / n);
    } else {
        fit.beta = 0.5;
        fit.C = worst[1] * 2.0;
    }
    // inflate C so the sampled bound holds at every probed depth
    for (int k = 1; k <= max_depth; ++k)
        if (worst[static_cast<std::size_t>(k)] > 0.0)
            fit.C = std::max(fit.C,
                             worst[static_cast<std::size_t>(k)] / std::pow(fit.beta, k) *
                                 1.0000001);
    return fit;
}

TailFit tail_exponent(const ReturnPartition& part) {
    const int N = static_cast<int>(part.tail.size()) - 1;
    std::vector<int> ns;
    for (int n = 1; n <= N; ++n)
        if (part.tail[static_cast<std::size_t>(n)] > 0.0) ns.push_back(n);
    if (ns.size() < 20) throw data_error("tail_exponent: need >= 20 nonzero tail points");

    // stable window: drop the first few small-n points and the final decade
    // where truncation bites
    const int n_lo = std::max(5, N / 50);
    const int n_hi = std::max(n_lo + 10, N / 2);

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double ex = 0, exy = 0, exx = 0;
    int cnt = 0;
    for (int n : ns) {
        if (n < n_lo || n > n_hi) continue;
        const double lx = std::log(static_cast<double>(n));
        const double ly = std::log(part.tail[static_cast<std::size_t>(n)]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ex += n;
        exy += n * ly;
        exx += static_cast<double>(n) * n;
        ++cnt;
    }
    if (cnt < 10) throw data_error("tail_exponent: window too small");

    TailFit fit;
    fit.n_lo = n_lo;
    fit.n_hi = n_hi;
    fit.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / cnt;
    fit.exp_rate = (cnt * exy - ex * sy) / (cnt * exx - ex * ex);

    // residual comparison in log space decides polynomial vs exponential
    double rss_poly = 0.0, rss_exp = 0.0;
    const double exp_icpt = (sy - fit.exp_rate * ex) / cnt;
    const double mean_y = sy / cnt;
    double tss = 0.0;
    for (int n : ns) {
        if (n < n_lo || n > n_hi) continue;
        const double lx = std::log(static_cast<double>(n));
        const double ly = std::log(part.tail[static_cast<std::size_t>(n)]);
        const double rp = ly - (fit.intercept + fit.slope * lx);
        const double re = ly - (exp_icpt + fit.exp_rate * n);
        rss_poly += rp * rp;
        rss_exp += re * re;
        tss += (ly - mean_y) * (ly - mean_y);
    }
    fit.polynomial = rss_poly <= rss_exp;
    fit.r2 = tss > 0.0 ? 1.0 - (fit.polynomial ? rss_poly : rss_exp) / tss : 1.0;
    return fit;
}

std::vector<ModulusPoint> projection_modulus_probe(const MapSpec& spec, int k_max) {
    if (spec.family != MapFamily::log_singular)
        throw invalid_input_error("projection_modulus_probe: spec must be the log-singular family");
    if (k_max < 3) throw data_error("projection_modulus_probe: k_max too small");
    const double a = spec.a, b = spec.b;

    std::vector<ModulusPoint> out;
    out.push_back({0, 1.0, b});  // full image diameter

    // rightmost depth-k cylinder of the induced map inside [0,a] is (c_k, a)
    // with a - c_k = (a/b)(b-a) ((b-a)/b)^{k-2}, so the oscillation of f over
    // it has the closed form below (evaluating a - c_k directly avoids the
    // cancellation that floors c_k at a in floating point); leftmost cylinder
    // diameter is a (a/b)^{k-1}
    const double L = std::log(b / (b - a));
    const double C0 = -std::log(a * (b - a) / b);
    const double amp = (1.0 - b) * std::pow(-std::log(a), spec.alpha);
    for (int k = 1; k <= k_max; ++k) {
        const double osc =
            k == 1 ? 1.0 - b : amp * std::pow(L * (k - 2) + C0, -spec.alpha);
        const double diam_left = a * std::pow(a / b, k - 1);
        out.push_back({k, osc, diam_left});
    }
    return out;
}

} // namespace towerlab
