// Command-line front end: induce return partitions, run couplings on
// symbolic towers, estimate correlation decay, and check the CLT, all with
// reproducible seeded outputs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "towerlab/coupling.hpp"
#include "towerlab/maps.hpp"
#include "towerlab/observables.hpp"
#include "towerlab/stats.hpp"
#include "towerlab/tower.hpp"

namespace fs = std::filesystem;
using namespace towerlab;
using nlohmann::json;

namespace {

struct MapFlags {
    std::string name = "mp";
    double alpha = 0.5;
    double a = 0.3, b = 0.6;
};

void add_map_flags(CLI::App* cmd, MapFlags& mf) {
    cmd->add_option("--map", mf.name, "builtin map: doubling | mp | log-singular")->required();
    cmd->add_option("--alpha", mf.alpha, "MP contact exponent / log-singular exponent");
    cmd->add_option("--a", mf.a, "log-singular branch point");
    cmd->add_option("--b", mf.b, "log-singular base right endpoint");
}

MapSpec resolve_map(const MapFlags& mf) {
    if (mf.name == "doubling") return MapSpec::doubling();
    if (mf.name == "mp") return MapSpec::manneville_pomeau(mf.alpha);
    if (mf.name == "log-singular") return MapSpec::log_singular(mf.a, mf.b, mf.alpha);
    throw CLI::ValidationError("--map", "unknown map: " + mf.name);
}

json map_config(const MapFlags& mf) {
    return {{"map", mf.name}, {"alpha", mf.alpha}, {"a", mf.a}, {"b", mf.b}};
}

// observable spec strings: class:gamma[:anchor] with class in
// {r1,r2,r3,r4,fourier}
ObservableSpec parse_observable(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.empty()) throw CLI::ValidationError("observable", "empty spec");
    if (parts[0] == "fourier") {
        const int k = parts.size() > 1 ? std::stoi(parts[1]) : 1;
        return make_fourier_observable(k);
    }
    const double gamma = parts.size() > 1 ? std::stod(parts[1]) : 1.0;
    const double anchor = parts.size() > 2 ? std::stod(parts[2]) : 0.0;
    RClass cls;
    if (parts[0] == "r1")
        cls = RClass::R1;
    else if (parts[0] == "r2")
        cls = RClass::R2;
    else if (parts[0] == "r3")
        cls = RClass::R3;
    else if (parts[0] == "r4")
        cls = RClass::R4;
    else
        throw CLI::ValidationError("observable", "unknown class: " + parts[0]);
    return make_observable(cls, gamma, anchor);
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

// CSV outputs carry the resolved run configuration as a leading comment line
void write_csv_with_config(const fs::path& path, const json& config,
                           const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# config " << config.dump() << "\n";
    body(out);
}

int run_induce(const MapFlags& mf, int max_r, double tol, const std::string& out_dir) {
    const auto spec = resolve_map(mf);
    auto part = induce_return_partition(spec, max_r, tol);
    const auto dist = fit_distortion(part);

    fs::create_directories(out_dir);
    json config = map_config(mf);
    config["max_r"] = max_r;
    config["tol"] = tol;

    write_csv_with_config(fs::path(out_dir) / "partition.csv", config,
                          [&](std::ostream& os) { part.write_csv(os); });
    write_csv_with_config(fs::path(out_dir) / "tail.csv", config, [&](std::ostream& os) {
        os << "n,tail\n";
        char buf[64];
        for (std::size_t n = 0; n < part.tail.size(); ++n) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g", n, part.tail[n]);
            os << buf << '\n';
        }
    });
    write_file(fs::path(out_dir) / "tower.json", part.tower_json(dist));

    json report;
    report["config"] = config;
    report["base"] = {part.base_left, part.base_right};
    report["branches"] = part.branches.size();
    report["kac_sum"] = part.kac_sum;
    report["unresolved_mass"] = part.unresolved;
    report["markov_residual"] = part.markov_residual;
    report["distortion_fit"] = {{"C", dist.C}, {"beta", dist.beta}};
    if (part.tail.size() > 40) {
        const auto fit = tail_exponent(part);
        report["tail_fit"] = {{"slope", fit.slope},
                              {"polynomial", fit.polynomial},
                              {"window", {fit.n_lo, fit.n_hi}}};
        std::cout << "tail slope " << fit.slope << " over [" << fit.n_lo << "," << fit.n_hi
                  << "]\n";
    }
    write_file(fs::path(out_dir) / "induce_report.json", report.dump(2));
    std::cout << part.branches.size() << " branches, unresolved mass " << part.unresolved
              << ", outputs in " << out_dir << "\n";
    return 0;
}

// cylinder exemplar on the tower whose variation profile follows the declared
// class: psi = sum_m a_m chi(symbol_m) with a_m = (v_m - v_{m+1})/2 and
// chi = +-1 by symbol parity, truncated at depth 2
CylinderDensity tower_observable(TowerPtr tower, const std::vector<double>& v_profile) {
    CylinderDensity psi(tower, 2, 0.0);
    const double a0 = (v_profile[0] - v_profile[1]) / 2.0;
    const double a1 = (v_profile[1] - (v_profile.size() > 2 ? v_profile[2] : 0.0)) / 2.0;
    for (int l = 0; l < psi.levels(); ++l)
        for (long r = 0; r < psi.words(); ++r) {
            if (!psi.cell_valid(l, r)) continue;
            const Word w = tower->unrank_word(r, 2);
            const double s0 = (w[0] % 2 == 0) ? 1.0 : -1.0;
            const double s1 = (w[1] % 2 == 0) ? 1.0 : -1.0;
            psi.set(l, r, a0 * s0 + a1 * s1);
        }
    return psi;
}

int run_couple(const std::string& tower_file, const std::string& psi_class, double gamma,
               double delta_bar, double c_param, int n0_flag, int steps, int horizon,
               bool eps_zero, int bound_max, bool exact, const std::string& out_dir) {
    std::ifstream in(tower_file);
    if (!in) {
        std::cerr << "couple: cannot read --tower file " << tower_file << "\n";
        return 1;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    auto tower = std::make_shared<SymbolicTower>(SymbolicTower::from_json_text(ss.str()));

    json config{{"tower", tower_file},        {"psi_class", psi_class},
                {"gamma", gamma},             {"delta_bar", delta_bar},
                {"c_param", c_param},         {"steps", steps},
                {"horizon", horizon},         {"eps_zero", eps_zero},
                {"bound_max", bound_max}};

    const int n0 = n0_flag >= 0
                       ? n0_flag
                       : compute_n0(*tower, default_n0_constant(*tower),
                                    std::max(horizon, 10 * tower->max_return_time()))
                             .n0;
    config["n0"] = n0;

    auto structure = build_stopping_structure(tower, n0, steps, horizon);
    auto rho = invariant_density(tower).density;
    if (rho.depth() < 2) rho = rho.refined(2);

    // declared variation profile drives both the exemplar and the schedule
    std::vector<double> v_profile;
    const double v0 = 1.0;
    if (psi_class == "v1")
        v_profile = v_profile_exponential(v0, std::max(0.05, std::min(0.95, gamma)), steps);
    else if (psi_class == "v2")
        v_profile = v_profile_stretched(v0, gamma, steps);
    else if (psi_class == "v3")
        v_profile = v_profile_log_poly(v0, gamma, steps);
    else if (psi_class == "v4")
        v_profile = v_profile_polynomial(v0, gamma, steps);
    else {
        std::cerr << "couple: unknown --psi-class " << psi_class << "\n";
        return 1;
    }

    auto psi = tower_observable(tower, v_profile);
    auto pair = observable_to_measures(psi, rho);

    EpsilonSchedule schedule;
    if (eps_zero) {
        schedule.eps.assign(static_cast<std::size_t>(steps), 0.0);
        schedule.eps_prime.assign(static_cast<std::size_t>(steps), 0.0);
        schedule.v_star.assign(static_cast<std::size_t>(steps) + 1, v0);
        schedule.trivial = true;
    } else {
        double db = delta_bar;
        if (db <= 0.0) {
            auto probe = choose_epsilon_schedule(v_profile, tower->distortion().beta, 0.5,
                                                 c_param, steps);
            db = calibrate_delta_bar(*tower, probe.eps_prime);
        }
        schedule =
            choose_epsilon_schedule(v_profile, tower->distortion().beta, db, c_param, steps);
        config["delta_bar_resolved"] = db;
    }

    auto trace = run_coupling(structure, pair.lambda, pair.lambda_prime, schedule, steps);

    fs::create_directories(out_dir);
    write_csv_with_config(fs::path(out_dir) / "trace.csv", config,
                          [&](std::ostream& os) { trace.write_csv(os); });
    json constants = json::parse(trace.constants_json());
    constants["config"] = config;
    constants["b"] = pair.b;
    constants["a"] = pair.a;
    write_file(fs::path(out_dir) / "constants.json", constants.dump(2));
    json sj = json::parse(schedule.to_json_text());
    sj["config"] = config;
    write_file(fs::path(out_dir) / "schedule.json", sj.dump(2));

    const int nmax = std::min(bound_max, horizon);
    CylinderDensity push_l = pair.lambda, push_r = pair.lambda_prime;
    write_csv_with_config(fs::path(out_dir) / "bound.csv", config, [&](std::ostream& os) {
        os << (exact ? "n,bound,exact\n" : "n,bound\n");
        char buf[128];
        for (int n = 1; n <= nmax; ++n) {
            const double bound = correlation_bound(trace, structure, n);
            if (exact) {
                push_l = transfer_push(push_l);
                push_r = transfer_push(push_r);
                std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g", n, bound,
                              CylinderDensity::variation_distance(push_l, push_r));
            } else {
                std::snprintf(buf, sizeof(buf), "%d,%.17g", n, bound);
            }
            os << buf << '\n';
        }
    });
    std::cout << "K_emp " << trace.K_emp << ", zeta " << trace.zeta << ", bound(" << nmax
              << ") = " << correlation_bound(trace, structure, nmax) << ", outputs in "
              << out_dir << "\n";
    return 0;
}

int run_decay(const MapFlags& mf, const std::string& phi_spec, const std::string& psi_spec,
              int n_max, long orbit_n, long burn_in, std::uint64_t seed,
              const std::string& predicted, double zeta, double tol,
              const std::string& out_dir) {
    const auto spec = resolve_map(mf);
    const auto phi = parse_observable(phi_spec);
    const auto psi = parse_observable(psi_spec);

    CorrelationOptions opts;
    opts.n_max = n_max;
    opts.orbit_length = orbit_n;
    opts.burn_in = burn_in;
    opts.seed = seed;
    auto series = estimate_correlation(spec, phi, psi, opts);

    json config = map_config(mf);
    config["phi"] = phi_spec;
    config["psi"] = psi_spec;
    config["n_max"] = n_max;
    config["orbit_n"] = orbit_n;
    config["burn_in"] = burn_in;
    config["seed"] = seed;
    config["rng"] = series.rng_name;
    config["predicted"] = predicted;
    config["tol"] = tol;

    // predicted envelope
    RateDescriptor envelope;
    bool have_envelope = true;
    if (predicted == "none") {
        have_envelope = false;
    } else if (predicted == "exp" || (predicted == "auto" && spec.family == MapFamily::doubling)) {
        envelope.family = RateDescriptor::Family::exponential;
    } else if (predicted == "auto" && spec.family == MapFamily::manneville_pomeau) {
        envelope.family = RateDescriptor::Family::polynomial;
        envelope.exponent = 1.0 / spec.alpha - 1.0;  // the sharp (R1) envelope
    } else if (predicted == "auto" && spec.family == MapFamily::log_singular) {
        // (R1,g) projects to (V4, alpha g); the realized zeta comes from a
        // coupling run, so it is a flag here
        envelope.family = RateDescriptor::Family::polynomial;
        envelope.exponent = std::max(0.0, zeta * spec.alpha * phi.gamma - 1.0);
    } else if (predicted.rfind("poly:", 0) == 0) {
        envelope.family = RateDescriptor::Family::polynomial;
        envelope.exponent = std::stod(predicted.substr(5));
    } else {
        std::cerr << "decay: bad --predicted value " << predicted << "\n";
        return 1;
    }

    RateFit fit = have_envelope ? fit_rate(series, envelope, tol) : fit_rate(series);

    fs::create_directories(out_dir);
    write_csv_with_config(fs::path(out_dir) / "correlation.csv", config,
                          [&](std::ostream& os) { series.write_csv(os); });
    json fj = json::parse(fit.to_json_text());
    fj["config"] = config;
    if (have_envelope)
        fj["envelope"] = {{"family", static_cast<int>(envelope.family)},
                          {"exponent", envelope.exponent}};
    write_file(fs::path(out_dir) / "fit.json", fj.dump(2));

    std::cout << fit.to_json_text() << "\n";
    if (!have_envelope) return 0;
    switch (fit.verdict) {
        case RateFit::Verdict::consistent: return 0;
        case RateFit::Verdict::inconsistent: return 2;
        default: return 3;
    }
}

int run_clt(const MapFlags& mf, const std::string& phi_spec, int n, int trials, long burn_in,
            std::uint64_t seed, double ks_threshold, const std::string& out_dir) {
    const auto spec = resolve_map(mf);
    const auto phi = parse_observable(phi_spec);
    CltOptions opts;
    opts.n = n;
    opts.trials = trials;
    opts.burn_in = burn_in;
    opts.seed = seed;
    if (spec.family == MapFamily::manneville_pomeau) opts.sigma_burn_in = 100'000;
    auto rep = clt_empirical(spec, phi, opts);

    json config = map_config(mf);
    config["phi"] = phi_spec;
    config["n"] = n;
    config["trials"] = trials;
    config["burn_in"] = burn_in;
    config["seed"] = seed;
    config["ks_threshold"] = ks_threshold;
    json rj = json::parse(rep.to_json_text());
    rj["config"] = config;

    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "clt.json", rj.dump(2));
    std::cout << rj.dump(2) << "\n";
    if (rep.coboundary_suspect) return 3;
    return rep.ks < ks_threshold ? 0 : 2;
}

int run_schedule(const std::string& v_class, double gamma, double v0, double beta,
                 double delta_bar, double c_param, int steps, const std::string& out_file) {
    std::vector<double> v;
    if (v_class == "const")
        v.assign(static_cast<std::size_t>(steps) + 1, v0);
    else if (v_class == "v1")
        v = v_profile_exponential(v0, gamma, steps);
    else if (v_class == "v2")
        v = v_profile_stretched(v0, gamma, steps);
    else if (v_class == "v3")
        v = v_profile_log_poly(v0, gamma, steps);
    else if (v_class == "v4")
        v = v_profile_polynomial(v0, gamma, steps);
    else {
        std::cerr << "schedule: unknown --v-class " << v_class << "\n";
        return 1;
    }
    auto sched = choose_epsilon_schedule(v, beta, delta_bar, c_param, steps);
    json sj = json::parse(sched.to_json_text());
    sj["config"] = {{"v_class", v_class}, {"gamma", gamma},         {"v0", v0},
                    {"beta", beta},       {"delta_bar", delta_bar}, {"c_param", c_param},
                    {"steps", steps}};
    write_file(out_file, sj.dump(2));
    std::cout << "schedule with " << steps << " steps, K0 = " << sched.K0 << ", written to "
              << out_file << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Young-tower coupling and correlation-decay toolkit"};
    app.require_subcommand(1);

    // induce
    auto* induce = app.add_subcommand("induce", "build a first-return partition and tower");
    MapFlags imf;
    add_map_flags(induce, imf);
    int max_r = 2000;
    double tol = 1e-12;
    std::string induce_out = "out-induce";
    induce->add_option("--max-r", max_r, "return-time truncation");
    induce->add_option("--tol", tol, "bisection tolerance");
    induce->add_option("--out", induce_out, "output directory");

    // couple
    auto* couple = app.add_subcommand("couple", "run the coupling on a tower");
    std::string tower_file, psi_class = "v1";
    double gamma = 0.5, delta_bar = -1.0, c_param = 0.9;
    int n0_flag = -1, steps = 16, horizon = 200, bound_max = 60;
    bool eps_zero = false, exact = true;
    couple->add_option("--tower", tower_file, "tower JSON file")->required();
    couple->add_option("--psi-class", psi_class, "declared class: v1|v2|v3|v4");
    couple->add_option("--gamma", gamma, "class parameter");
    couple->add_option("--delta-bar", delta_bar, "delta-bar (<=0: calibrate by bisection)");
    couple->add_option("--c-param", c_param, "schedule constant c");
    couple->add_option("--n0", n0_flag, "coupling offset n0 (<0: from compute_n0)");
    couple->add_option("--steps", steps, "simultaneous returns to resolve");
    couple->add_option("--horizon", horizon, "time horizon");
    couple->add_option("--bound-max", bound_max, "largest n in the bound table");
    couple->add_flag("--eps-zero", eps_zero, "subtract nothing (flat bound)");
    couple->add_flag("--exact,!--no-exact", exact, "tabulate the exact distance too");
    std::string couple_out = "out-couple";
    couple->add_option("--out", couple_out, "output directory");

    // decay
    auto* decay = app.add_subcommand("decay", "Monte-Carlo correlation decay");
    MapFlags dmf;
    add_map_flags(decay, dmf);
    std::string phi_spec = "r1:1.0", psi_spec = "r1:1.0", predicted = "auto";
    int n_max = 1000;
    long orbit_n = 100'000'000, dburn = 100'000;
    std::uint64_t dseed = 1;
    double dzeta = 0.5, dtol = 0.3;
    std::string decay_out = "out-decay";
    decay->add_option("--phi", phi_spec, "observable spec class:gamma[:anchor] or fourier:k");
    decay->add_option("--psi", psi_spec, "observable spec");
    decay->add_option("--n-max", n_max, "largest lag");
    decay->add_option("--orbit-n", orbit_n, "products per lag");
    decay->add_option("--burn-in", dburn, "orbit burn-in");
    decay->add_option("--seed", dseed, "rng seed (the only randomness source)");
    decay->add_option("--predicted", predicted, "envelope: auto|exp|poly:P|none");
    decay->add_option("--zeta", dzeta, "zeta for the log-singular envelope");
    decay->add_option("--tol", dtol, "envelope tolerance");
    decay->add_option("--out", decay_out, "output directory");

    // clt
    auto* clt = app.add_subcommand("clt", "empirical central limit theorem");
    MapFlags cmf;
    add_map_flags(clt, cmf);
    std::string cphi = "r1:1.0", clt_out = "out-clt";
    int cn = 2000, ctrials = 10000;
    long cburn = 10000;
    std::uint64_t cseed = 1;
    double ks_threshold = 0.05;
    clt->add_option("--phi", cphi, "observable spec");
    clt->add_option("--n", cn, "Birkhoff sum length");
    clt->add_option("--trials", ctrials, "independent starts");
    clt->add_option("--burn-in", cburn, "per-trial burn-in");
    clt->add_option("--seed", cseed, "rng seed");
    clt->add_option("--ks-threshold", ks_threshold, "pass threshold");
    clt->add_option("--out", clt_out, "output directory");

    // schedule
    auto* sched = app.add_subcommand("schedule", "emit an epsilon schedule");
    std::string v_class = "v4", sched_out = "schedule.json";
    double sgamma = 4.0, sv0 = 1.0, sbeta = 0.5, sdelta = 0.5, sc = 0.9;
    int ssteps = 200;
    sched->add_option("--v-class", v_class, "profile class: const|v1|v2|v3|v4");
    sched->add_option("--gamma", sgamma, "profile parameter");
    sched->add_option("--v0", sv0, "v_0(Phi)");
    sched->add_option("--beta", sbeta, "tower distortion base");
    sched->add_option("--delta-bar", sdelta, "delta-bar");
    sched->add_option("--c-param", sc, "schedule constant c");
    sched->add_option("--steps", ssteps, "schedule length");
    sched->add_option("--out", sched_out, "output file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*induce) return run_induce(imf, max_r, tol, induce_out);
        if (*couple)
            return run_couple(tower_file, psi_class, gamma, delta_bar, c_param, n0_flag, steps,
                              horizon, eps_zero, bound_max, exact, couple_out);
        if (*decay)
            return run_decay(dmf, phi_spec, psi_spec, n_max, orbit_n, dburn, dseed, predicted,
                             dzeta, dtol, decay_out);
        if (*clt) return run_clt(cmf, cphi, cn, ctrials, cburn, cseed, ks_threshold, clt_out);
        if (*sched)
            return run_schedule(v_class, sgamma, sv0, sbeta, sdelta, sc, ssteps, sched_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
