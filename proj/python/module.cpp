#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "towerlab/coupling.hpp"
#include "towerlab/maps.hpp"
#include "towerlab/observables.hpp"
#include "towerlab/stats.hpp"
#include "towerlab/tower.hpp"

namespace py = pybind11;
using namespace towerlab;

namespace {

std::string density_csv(const CylinderDensity& d) {
    std::ostringstream os;
    d.write_csv(os);
    return os.str();
}

RClass rclass_of(const std::string& s) {
    if (s == "R1" || s == "r1") return RClass::R1;
    if (s == "R2" || s == "r2") return RClass::R2;
    if (s == "R3" || s == "r3") return RClass::R3;
    if (s == "R4" || s == "r4") return RClass::R4;
    throw invalid_input_error("unknown R class: " + s);
}

VClass vclass_of(const std::string& s) {
    if (s == "V1" || s == "v1") return VClass::V1;
    if (s == "V2" || s == "v2") return VClass::V2;
    if (s == "V3" || s == "v3") return VClass::V3;
    if (s == "V4" || s == "v4") return VClass::V4;
    throw invalid_input_error("unknown V class: " + s);
}

} // namespace

PYBIND11_MODULE(_towerlab, m) {
    m.doc() = "Young-tower coupling and correlation-decay toolkit";

    // ---- tower core ----
    py::class_<SymbolicTower, std::shared_ptr<SymbolicTower>>(m, "SymbolicTower")
        .def_static(
            "from_json",
            [](const std::string& text) {
                return std::make_shared<SymbolicTower>(SymbolicTower::from_json_text(text));
            },
            py::arg("text"))
        .def_static(
            "zero_distortion",
            [](const std::vector<std::tuple<std::string, double, int>>& elements) {
                std::vector<TowerElement> es;
                for (const auto& [id, w, r] : elements) es.push_back({id, w, r});
                return std::make_shared<SymbolicTower>(SymbolicTower::zero_distortion(es));
            },
            py::arg("elements"))
        .def("to_json", &SymbolicTower::to_json_text)
        .def_property_readonly("alphabet_size", &SymbolicTower::alphabet_size)
        .def_property_readonly("jacobian_depth", &SymbolicTower::jacobian_depth)
        .def_property_readonly("base_mass", &SymbolicTower::base_mass)
        .def_property_readonly("tower_mass", &SymbolicTower::tower_mass)
        .def("weight", &SymbolicTower::weight)
        .def("return_time", &SymbolicTower::return_time)
        .def("distortion_certificate",
             py::overload_cast<>(&SymbolicTower::distortion_certificate, py::const_));

    py::class_<CylinderDensity>(m, "CylinderDensity")
        .def(py::init<TowerPtr, int, double>(), py::arg("tower"), py::arg("depth"),
             py::arg("fill") = 0.0)
        .def_property_readonly("depth", &CylinderDensity::depth)
        .def("cell_valid", &CylinderDensity::cell_valid)
        .def("at", &CylinderDensity::at)
        .def("set", &CylinderDensity::set)
        .def("mass", &CylinderDensity::mass)
        .def("min_value", &CylinderDensity::min_value)
        .def("max_value", &CylinderDensity::max_value)
        .def("normalize", &CylinderDensity::normalize)
        .def("refined", &CylinderDensity::refined)
        .def("coarsened", &CylinderDensity::coarsened)
        .def("csv", &density_csv)
        .def_static("variation_distance", &CylinderDensity::variation_distance)
        .def_static("sup_distance", &CylinderDensity::sup_distance);

    m.def("transfer_push", &transfer_push, py::arg("density"));
    m.def(
        "invariant_density",
        [](TowerPtr tower, int depth) {
            InvariantDensityOptions opts;
            opts.depth = depth;
            auto res = invariant_density(std::move(tower), opts);
            return py::make_tuple(res.density, res.residual, res.iterations);
        },
        py::arg("tower"), py::arg("depth") = -1);
    m.def("renewal_sequence", &renewal_sequence, py::arg("tower"), py::arg("horizon"));
    m.def(
        "compute_n0",
        [](const SymbolicTower& tower, double c, int horizon) {
            auto cert = compute_n0(tower, c, horizon);
            return py::make_tuple(cert.n0, cert.threshold, cert.renewal_limit, cert.margin);
        },
        py::arg("tower"), py::arg("c"), py::arg("horizon"));
    m.def("default_n0_constant", &default_n0_constant);
    m.def(
        "separation_time",
        [](const SymbolicTower& tower, int level_x, const Word& wx, int level_y,
           const Word& wy) {
            auto s = separation_time(tower, {level_x, wx}, {level_y, wy});
            return py::make_tuple(s.value, s.lower_bound);
        },
        py::arg("tower"), py::arg("level_x"), py::arg("word_x"), py::arg("level_y"),
        py::arg("word_y"));

    // ---- maps ----
    py::class_<MapSpec>(m, "MapSpec")
        .def_static("doubling", &MapSpec::doubling)
        .def_static("manneville_pomeau", &MapSpec::manneville_pomeau, py::arg("alpha"))
        .def_static("log_singular", &MapSpec::log_singular, py::arg("a"), py::arg("b"),
                    py::arg("alpha"))
        .def_property_readonly("name", &MapSpec::name);

    m.def("eval_map", &eval_map, py::arg("spec"), py::arg("x"), py::arg("margin") = 0.0);
    m.def("eval_derivative", &eval_derivative, py::arg("spec"), py::arg("x"),
          py::arg("margin") = 0.0);

    py::class_<ReturnBranch>(m, "ReturnBranch")
        .def_readonly("left", &ReturnBranch::left)
        .def_readonly("right", &ReturnBranch::right)
        .def_readonly("return_time", &ReturnBranch::return_time);

    py::class_<ReturnPartition>(m, "ReturnPartition")
        .def_readonly("base_left", &ReturnPartition::base_left)
        .def_readonly("base_right", &ReturnPartition::base_right)
        .def_readonly("branches", &ReturnPartition::branches)
        .def_readonly("tail", &ReturnPartition::tail)
        .def_readonly("unresolved", &ReturnPartition::unresolved)
        .def_readonly("kac_sum", &ReturnPartition::kac_sum)
        .def_readonly("markov_residual", &ReturnPartition::markov_residual)
        .def("tower_json", [](const ReturnPartition& p) { return p.tower_json(fit_distortion(p)); });

    m.def("induce_return_partition",
          py::overload_cast<const MapSpec&, int, double>(&induce_return_partition),
          py::arg("spec"), py::arg("max_R"), py::arg("tol") = 1e-12);
    m.def(
        "tail_exponent",
        [](const ReturnPartition& p) {
            auto f = tail_exponent(p);
            return py::make_tuple(f.slope, f.polynomial, f.n_lo, f.n_hi);
        },
        py::arg("partition"));
    m.def(
        "projection_modulus_probe",
        [](const MapSpec& spec, int k_max) {
            std::vector<std::tuple<int, double, double>> out;
            for (const auto& p : projection_modulus_probe(spec, k_max))
                out.emplace_back(p.k, p.oscillation, p.cylinder_diameter);
            return out;
        },
        py::arg("spec"), py::arg("k_max"));

    // ---- observables ----
    py::class_<ObservableSpec>(m, "Observable")
        .def("__call__", [](const ObservableSpec& o, double x) { return o(x); })
        .def_readonly("gamma", &ObservableSpec::gamma)
        .def_readonly("anchor", &ObservableSpec::anchor)
        .def_readonly("sup_modulus", &ObservableSpec::sup_modulus)
        .def_readonly("label", &ObservableSpec::label)
        .def("to_json", &ObservableSpec::to_json_text);

    m.def(
        "make_observable",
        [](const std::string& cls, double gamma, double anchor, double floor) {
            return make_observable(rclass_of(cls), gamma, anchor, floor);
        },
        py::arg("cls"), py::arg("gamma"), py::arg("anchor") = 0.0, py::arg("floor") = 1e-300);
    m.def("make_fourier_observable", &make_fourier_observable, py::arg("k"));
    m.def("make_custom_observable", &make_custom_observable, py::arg("f"), py::arg("label"));
    m.def(
        "estimate_modulus",
        [](const ObservableSpec& psi, std::vector<double> grid, int samples,
           std::uint64_t seed) {
            std::vector<std::pair<double, double>> out;
            for (const auto& e : estimate_modulus(psi, std::move(grid), samples, seed))
                out.emplace_back(e.epsilon, e.value);
            return out;
        },
        py::arg("psi"), py::arg("eps_grid"), py::arg("samples") = 1000, py::arg("seed") = 1);
    m.def(
        "project_class",
        [](const std::string& cls, double gamma, const std::string& projection, double param) {
            const auto pi = projection == "holder" ? ProjectionModulus::holder_rate(param)
                                                   : ProjectionModulus::log_poly(param);
            auto d = project_class(rclass_of(cls), gamma, pi);
            return py::make_tuple(std::string(to_string(d.v_class)), d.gamma, d.gamma_strict,
                                  d.note);
        },
        py::arg("cls"), py::arg("gamma"), py::arg("projection") = "holder",
        py::arg("param") = 0.5);
    m.def(
        "variation_profile",
        [](const ObservableSpec& psi, const ReturnPartition& part, int n_max) {
            return variation_profile(psi, part, n_max).values;
        },
        py::arg("psi"), py::arg("partition"), py::arg("n_max"));

    // ---- coupling ----
    py::class_<StoppingStructure>(m, "StoppingStructure")
        .def_property_readonly("n0", &StoppingStructure::n0)
        .def_property_readonly("horizon", &StoppingStructure::horizon)
        .def_property_readonly("base_t_law", &StoppingStructure::base_t_law)
        .def_property_readonly("base_unresolved", &StoppingStructure::base_unresolved)
        .def("base_tail", &StoppingStructure::base_tail);

    m.def("build_stopping_structure", &build_stopping_structure, py::arg("tower"),
          py::arg("n0"), py::arg("max_t_index"), py::arg("horizon"));

    py::class_<EpsilonSchedule>(m, "EpsilonSchedule")
        .def_readonly("v_star", &EpsilonSchedule::v_star)
        .def_readonly("eps_prime", &EpsilonSchedule::eps_prime)
        .def_readonly("eps", &EpsilonSchedule::eps)
        .def_readonly("delta_bar", &EpsilonSchedule::delta_bar)
        .def_readonly("c_param", &EpsilonSchedule::c_param)
        .def_readonly("K0", &EpsilonSchedule::K0)
        .def_readonly("trivial", &EpsilonSchedule::trivial)
        .def("to_json", &EpsilonSchedule::to_json_text)
        .def_static("from_json", &EpsilonSchedule::from_json_text);

    m.def("choose_epsilon_schedule", &choose_epsilon_schedule, py::arg("v_phi"),
          py::arg("beta"), py::arg("delta_bar"), py::arg("c_param"), py::arg("steps"));
    m.def("v_profile_exponential", &v_profile_exponential);
    m.def("v_profile_polynomial", &v_profile_polynomial);
    m.def("v_profile_stretched", &v_profile_stretched);
    m.def("v_profile_log_poly", &v_profile_log_poly);

    py::class_<CouplingStepStats>(m, "CouplingStepStats")
        .def_readonly("index", &CouplingStepStats::index)
        .def_readonly("eps", &CouplingStepStats::eps)
        .def_readonly("mass", &CouplingStepStats::mass)
        .def_readonly("contraction", &CouplingStepStats::contraction)
        .def_readonly("guaranteed", &CouplingStepStats::guaranteed)
        .def_readonly("log_ratio_max", &CouplingStepStats::log_ratio_max)
        .def_readonly("symmetry_residual", &CouplingStepStats::symmetry_residual)
        .def_readonly("t_q50", &CouplingStepStats::t_q50);

    py::class_<CouplingTrace>(m, "CouplingTrace")
        .def_readonly("steps", &CouplingTrace::steps)
        .def_readonly("t_law", &CouplingTrace::t_law)
        .def_readonly("unresolved", &CouplingTrace::unresolved)
        .def_readonly("v_phi", &CouplingTrace::v_phi)
        .def_readonly("C_phi", &CouplingTrace::C_phi)
        .def_readonly("C_fhat", &CouplingTrace::C_fhat)
        .def_readonly("Cbar_measured", &CouplingTrace::Cbar_measured)
        .def_readonly("Cbar_theoretical", &CouplingTrace::Cbar_theoretical)
        .def_readonly("K_emp", &CouplingTrace::K_emp)
        .def_readonly("zeta", &CouplingTrace::zeta)
        .def("constants_json", &CouplingTrace::constants_json)
        .def("csv", [](const CouplingTrace& t) {
            std::ostringstream os;
            t.write_csv(os);
            return os.str();
        });

    m.def("run_coupling", &run_coupling, py::arg("structure"), py::arg("lam"),
          py::arg("lam_prime"), py::arg("schedule"), py::arg("steps"));
    m.def("correlation_bound", &correlation_bound, py::arg("trace"), py::arg("structure"),
          py::arg("n"));
    m.def("calibrate_delta_bar", &calibrate_delta_bar, py::arg("tower"), py::arg("eps_prime"));
    m.def(
        "predicted_rate",
        [](const std::string& tail, double tail_param, const std::string& v_class,
           double v_gamma, double zeta) {
            const auto kind =
                tail == "exponential" ? TailKind::exponential : TailKind::polynomial;
            auto r = predicted_rate(kind, tail_param, vclass_of(v_class), v_gamma, zeta);
            return py::make_tuple(static_cast<int>(r.family), r.exponent, r.strict, r.sub_case,
                                  r.text);
        },
        py::arg("tail"), py::arg("tail_param"), py::arg("v_class"), py::arg("v_gamma"),
        py::arg("zeta"));
    m.def(
        "observable_to_measures",
        [](const CylinderDensity& psi, const CylinderDensity& rho) {
            auto p = observable_to_measures(psi, rho);
            return py::make_tuple(p.lambda, p.lambda_prime, p.a, p.b);
        },
        py::arg("psi"), py::arg("rho"));

    py::class_<CltReport>(m, "CltReport")
        .def_readonly("autocorrelation", &CltReport::autocorrelation)
        .def_readonly("autocorr_partial", &CltReport::autocorr_partial)
        .def_readonly("summable", &CltReport::summable)
        .def_readonly("dual_sup", &CltReport::dual_sup)
        .def_readonly("dual_bounded", &CltReport::dual_bounded)
        .def_readonly("a", &CltReport::a)
        .def_readonly("b", &CltReport::b)
        .def_readonly("sigma2", &CltReport::sigma2)
        .def_readonly("coboundary_suspect", &CltReport::coboundary_suspect)
        .def_readonly("centered_notice", &CltReport::centered_notice);

    m.def("clt_check", &clt_check, py::arg("tower"), py::arg("phi"), py::arg("n_max"));

    // ---- stats ----
    py::class_<CorrelationSeries>(m, "CorrelationSeries")
        .def_readonly("lags", &CorrelationSeries::lags)
        .def_readonly("c", &CorrelationSeries::c)
        .def_readonly("c_signed", &CorrelationSeries::c_signed)
        .def_readonly("se", &CorrelationSeries::se)
        .def_readonly("seed", &CorrelationSeries::seed)
        .def_readonly("rng_name", &CorrelationSeries::rng_name)
        .def("csv", [](const CorrelationSeries& s) {
            std::ostringstream os;
            s.write_csv(os);
            return os.str();
        });

    m.def(
        "estimate_correlation",
        [](const MapSpec& map, const ObservableSpec& phi, const ObservableSpec& psi, int n_max,
           long orbit_length, long burn_in, std::uint64_t seed) {
            CorrelationOptions opts;
            opts.n_max = n_max;
            opts.orbit_length = orbit_length;
            opts.burn_in = burn_in;
            opts.seed = seed;
            return estimate_correlation(map, phi, psi, opts);
        },
        py::arg("map"), py::arg("phi"), py::arg("psi"), py::arg("n_max") = 100,
        py::arg("orbit_length") = 1'000'000, py::arg("burn_in") = 100'000, py::arg("seed") = 1);

    py::class_<RateFit>(m, "RateFit")
        .def_readonly("param", &RateFit::param)
        .def_readonly("tau", &RateFit::tau)
        .def_readonly("theta", &RateFit::theta)
        .def_readonly("points", &RateFit::points)
        .def("to_json", &RateFit::to_json_text);

    m.def("fit_rate", py::overload_cast<const CorrelationSeries&>(&fit_rate),
          py::arg("series"));

    m.def(
        "clt_empirical",
        [](const MapSpec& map, const ObservableSpec& phi, int n, int trials, long burn_in,
           std::uint64_t seed) {
            CltOptions opts;
            opts.n = n;
            opts.trials = trials;
            opts.burn_in = burn_in;
            opts.seed = seed;
            auto rep = clt_empirical(map, phi, opts);
            return rep.to_json_text();
        },
        py::arg("map"), py::arg("phi"), py::arg("n") = 2000, py::arg("trials") = 10000,
        py::arg("burn_in") = 10000, py::arg("seed") = 1);

    // exceptions map onto ValueError-style python errors
    py::register_exception<invalid_input_error>(m, "InvalidInputError");
    py::register_exception<depth_error>(m, "DepthError");
    py::register_exception<horizon_error>(m, "HorizonError");
    py::register_exception<infeasible_error>(m, "InfeasibleError");
    py::register_exception<class_error>(m, "ClassError");
    py::register_exception<precondition_error>(m, "PreconditionError");
}
