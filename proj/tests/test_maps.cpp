#include <doctest.h>

#include <cmath>
#include <sstream>

#include "towerlab/maps.hpp"
#include "towerlab/tower.hpp"

using namespace towerlab;

TEST_CASE("map evaluation basics") {
    auto dbl = MapSpec::doubling();
    CHECK(eval_map(dbl, 0.3) == doctest::Approx(0.6));
    CHECK(eval_derivative(dbl, 0.3) == 2.0);

    auto mp = MapSpec::manneville_pomeau(0.5);
    CHECK(eval_map(mp, 0.0) == 0.0);
    CHECK(eval_derivative(mp, 0.0) == doctest::Approx(1.0));  // indifferent fixed point

    auto ls = MapSpec::log_singular(0.3, 0.6, 2.0);
    CHECK(eval_map(ls, 0.0) == doctest::Approx(0.6));                 // f(0) = b
    CHECK(eval_map(ls, 0.6) == doctest::Approx(0.0).epsilon(1e-12));  // f(b) = 0
    CHECK_THROWS_AS(eval_map(ls, 0.3, 1e-9), domain_error);
    CHECK_THROWS_AS(eval_derivative(ls, 1.0, 1e-9), domain_error);
}

TEST_CASE("derivatives match central finite differences") {
    const double h = 2e-6;
    auto check = [&](const MapSpec& spec, double x) {
        const double fd = (eval_map(spec, x + h) - eval_map(spec, x - h)) / (2.0 * h);
        const double an = eval_derivative(spec, x);
        CHECK(std::abs(fd - an) / std::abs(an) < 1e-6);
    };
    auto mp = MapSpec::manneville_pomeau(0.7);
    for (double x : {0.1, 0.3, 0.55, 0.9}) check(mp, x);
    auto ls = MapSpec::log_singular(0.3, 0.6, 2.0);
    for (double x : {0.05, 0.2, 0.4, 0.55, 0.7, 0.9}) check(ls, x);
}

TEST_CASE("log-singular identities on a grid") {
    auto ls = MapSpec::log_singular(0.3, 0.6, 2.0);
    const double a = 0.3, b = 0.6;
    double worst_f2 = 0.0, worst_chain = 0.0;
    for (int i = 1; i < 10000; ++i) {
        const double x = a * i / 10000.0;
        // (f^2)'(x) = b/a via the chain rule on evaluated derivatives
        const double chain = eval_derivative(ls, x) * eval_derivative(ls, eval_map(ls, x));
        worst_chain = std::max(worst_chain, std::abs(chain - b / a));
        // f^2 is the linear map (b/a) x on [0,a]
        worst_f2 = std::max(worst_f2, std::abs(eval_map(ls, eval_map(ls, x)) - b / a * x));
    }
    CHECK(worst_chain < 1e-6);
    CHECK(worst_f2 < 1e-9);
}

TEST_CASE("MP induced partition") {
    // alpha = 1: the base boundary solves x + x^2 = 1, the golden ratio conjugate
    auto part1 = induce_return_partition(MapSpec::manneville_pomeau(1.0), 50);
    CHECK(part1.base_left == doctest::Approx(0.6180339887498949).epsilon(1e-10));

    auto part = induce_return_partition(MapSpec::manneville_pomeau(0.5), 400);
    CHECK(part.markov_residual < 1e-9);
    CHECK(part.branches.front().return_time == 1);
    // branches tile the base
    double covered = 0.0;
    for (const auto& br : part.branches) covered += br.right - br.left;
    CHECK(covered + part.unresolved == doctest::Approx(part.base_length()).epsilon(1e-10));
    // tail decays like n^{-1/alpha} = n^{-2}
    auto fit = tail_exponent(part);
    CHECK(fit.polynomial);
    CHECK(fit.slope == doctest::Approx(-2.0).epsilon(0.075));

    CHECK(part.kac_sum > 0.0);

    // explicit base must match the full-branch base
    CHECK_THROWS_AS(
        induce_return_partition(MapSpec::manneville_pomeau(0.5), 0.5, 1.0, 100, 1e-12),
        structure_error);
}

TEST_CASE("MP tail exponent for alpha = 1") {
    auto part = induce_return_partition(MapSpec::manneville_pomeau(1.0), 600);
    auto fit = tail_exponent(part);
    CHECK(fit.polynomial);
    CHECK(fit.slope == doctest::Approx(-1.0).epsilon(0.15));
}

TEST_CASE("synthetic geometric tail selects the exponential model") {
    ReturnPartition part;
    part.map = MapSpec::doubling();
    part.base_left = 0.0;
    part.base_right = 1.0;
    part.tail.resize(201);
    for (int n = 0; n <= 200; ++n) part.tail[static_cast<std::size_t>(n)] = std::pow(0.5, n);
    auto fit = tail_exponent(part);
    CHECK_FALSE(fit.polynomial);
    CHECK(fit.exp_rate == doctest::Approx(std::log(0.5)).epsilon(1e-6));
}

TEST_CASE("log-singular induced partition and tower export") {
    auto ls = MapSpec::log_singular(0.3, 0.6, 2.0);
    auto part = induce_return_partition(ls, 10);
    REQUIRE(part.branches.size() == 2);
    CHECK(part.branches[0].return_time == 2);
    CHECK(part.branches[1].return_time == 1);
    CHECK(part.markov_residual < 1e-9);

    auto fit = fit_distortion(part, 3);
    // the induced map is piecewise linear, so the fitted distortion is tiny
    CHECK(fit.C < 1e-6);

    auto tower = SymbolicTower::from_json_text(part.tower_json(fit));
    CHECK(tower.alphabet_size() == 2);
    CHECK(tower.return_time(0) == 2);
    CHECK(tower.return_time(1) == 1);
    CHECK(tower.base_mass() == doctest::Approx(0.6));
}

TEST_CASE("doubling induced partition is the trivial R=1 tower") {
    auto part = induce_return_partition(MapSpec::doubling(), 10);
    for (const auto& br : part.branches) CHECK(br.return_time == 1);
    CHECK(part.unresolved == 0.0);
    std::ostringstream csv;
    part.write_csv(csv);
    CHECK(csv.str().rfind("left,right,R", 0) == 0);
}

TEST_CASE("projection modulus probe") {
    auto ls = MapSpec::log_singular(0.3, 0.6, 2.0);
    const int kmax = 200;
    auto probe = projection_modulus_probe(ls, kmax);
    REQUIRE(static_cast<int>(probe.size()) == kmax + 1);
    CHECK(probe[0].oscillation <= 1.0);

    // log-log slope of the oscillation vs k is about -alpha over [10, k_max]
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& p : probe) {
        if (p.k < 10) continue;
        const double lx = std::log(static_cast<double>(p.k));
        const double ly = std::log(p.oscillation);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(std::abs(slope - (-2.0)) / 2.0 < 0.10);

    // cylinder diameters shrink like (b/a)^{-k}
    const double ratio = probe[5].cylinder_diameter / probe[6].cylinder_diameter;
    CHECK(ratio == doctest::Approx(0.6 / 0.3).epsilon(1e-12));

    CHECK_THROWS_AS(projection_modulus_probe(MapSpec::doubling(), 50), invalid_input_error);
    CHECK_THROWS_AS(projection_modulus_probe(ls, 1), data_error);
}
