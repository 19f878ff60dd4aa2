#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "towerlab/tower.hpp"

using namespace towerlab;
using namespace towerlab::testing;

TEST_CASE("tower construction rejects bad input") {
    CHECK_THROWS_AS(SymbolicTower::zero_distortion({{"a", 0.5, 2}, {"b", 0.25, 4}}),
                    invalid_input_error);  // gcd 2
    CHECK_THROWS_AS(SymbolicTower::zero_distortion({{"a", 0.5, 0}}), invalid_input_error);
    CHECK_THROWS_AS(SymbolicTower::zero_distortion({{"a", -0.5, 1}, {"b", 0.7, 2}}),
                    invalid_input_error);
}

TEST_CASE("separation time") {
    auto tw = std::make_shared<SymbolicTower>(
        SymbolicTower::zero_distortion({{"a", 0.4, 1}, {"b", 0.6, 2}}));
    const Symbol a = 0, b = 1;

    auto s = separation_time(*tw, {0, {a, b, a}}, {0, {a, b, b}});
    CHECK(s.value == 2);
    CHECK_FALSE(s.lower_bound);

    s = separation_time(*tw, {0, {a}}, {0, {a}});
    CHECK(s.value == 1);
    CHECK(s.lower_bound);

    s = separation_time(*tw, {0, {b, a}}, {0, {a, b}});
    CHECK(s.value == 0);

    CHECK_THROWS_AS(separation_time(*tw, {0, {a}}, {1, {b}}), invalid_input_error);
    // level 1 is inconsistent with R(a) = 1
    CHECK_THROWS_AS(separation_time(*tw, {1, {a}}, {1, {a}}), invalid_input_error);
}

TEST_CASE("word masses and transitions, depth 1") {
    auto tw = perturbed_two_element(0.3, 11);
    // refinement consistency: sum over extensions equals the word mass
    for (long r = 0; r < tw->word_count(2); ++r) {
        const Word w = tw->unrank_word(r, 2);
        double acc = 0.0;
        for (Symbol j = 0; j < tw->alphabet_size(); ++j) {
            Word wj = w;
            wj.push_back(j);
            acc += tw->word_mass(wj);
        }
        CHECK(tw->word_mass(w) == doctest::Approx(acc).epsilon(1e-12));
    }
    // transitions sum to one
    for (Symbol i = 0; i < tw->alphabet_size(); ++i) {
        double acc = 0.0;
        for (Symbol j = 0; j < tw->alphabet_size(); ++j) acc += tw->transition({i}, j);
        CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("distortion certificate: zero for canonical table, validated otherwise") {
    CHECK(two_element_tower()->distortion_certificate() == 0.0);
    auto tw = perturbed_two_element(0.3, 3);
    CHECK(tw->distortion_certificate() <= tw->distortion().C);
    CHECK(tw->distortion_certificate() > 0.0);
}

TEST_CASE("transfer_push conserves mass and fixes the invariant density") {
    auto check_tower = [](TowerPtr tw, int depth) {
        CounterRng rng(42);
        CylinderDensity dens(tw, depth);
        for (int l = 0; l < dens.levels(); ++l)
            for (long r = 0; r < dens.words(); ++r)
                if (dens.cell_valid(l, r)) dens.set(l, r, 0.1 + rng.next_uniform());
        const double m0 = dens.mass();
        auto pushed = transfer_push(dens);
        CHECK(std::abs(pushed.mass() - m0) < 1e-12);

        auto inv = invariant_density(tw);
        CHECK(inv.residual < 1e-10);
        auto again = transfer_push(inv.density.refined(depth));
        CHECK(CylinderDensity::sup_distance(again, inv.density.refined(depth)) < 1e-10);
    };
    check_tower(two_element_tower(), 2);
    check_tower(perturbed_two_element(), 2);
    check_tower(perturbed_tower({{"a", 0.3, 1}, {"b", 0.3, 2}, {"c", 0.4, 3}}, 0.15, 5), 3);
}

TEST_CASE("transfer_push requires depth > jacobian_depth") {
    auto tw = perturbed_two_element();
    CylinderDensity dens(tw, 1, 1.0);
    CHECK_THROWS_AS(transfer_push(dens), depth_error);
}

TEST_CASE("point mass pushes forward through preimage branches") {
    auto tw = perturbed_two_element(0.25, 9);
    // unit point mass on the level-0 cylinder [a a]
    CylinderDensity dens(tw, 2);
    dens.set(0, tw->rank_word({0, 0}), 1.0);
    auto pushed = transfer_push(dens);
    // level-0 output over w: only branch a (R=1) contributes, from cell (0, prefix(a.w))
    for (long r = 0; r < pushed.words(); ++r) {
        const Word w = tw->unrank_word(r, 2);
        double expect = 0.0;
        // source cell (level R_a-1=0, word prefix_2(a.w)) must be [a a]
        if (w[0] == 0) {
            const double src = (0 == w[0]) ? dens.at(0, tw->rank_word({0, w[0]})) : 0.0;
            expect = src / tw->jacobian(0, {w[0]});
        }
        CHECK(pushed.at(0, r) == doctest::Approx(expect).epsilon(1e-14));
    }
    // mass on level 1 comes from the shifted copy of level 0 of element b: zero here
    for (long r = 0; r < pushed.words(); ++r)
        if (pushed.cell_valid(1, r)) CHECK(pushed.at(1, r) == 0.0);
    CHECK(pushed.mass() == doctest::Approx(dens.mass()).epsilon(1e-13));
}

TEST_CASE("invariant density closed forms") {
    // two-element zero-distortion tower: rho = 1/m(Delta) = 2/3 everywhere
    auto tw = two_element_tower();
    auto inv = invariant_density(tw);
    for (int l = 0; l < inv.density.levels(); ++l)
        for (long r = 0; r < inv.density.words(); ++r)
            if (inv.density.cell_valid(l, r))
                CHECK(inv.density.at(l, r) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    // single element, R = 1: rho = 1
    auto one = single_element_tower();
    auto inv1 = invariant_density(one);
    CHECK(inv1.density.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    // Kac identity (depth-0 Jacobian): nu(Delta0) * mean_return = 1
    double nu0 = 0.0;
    for (long r = 0; r < inv.density.words(); ++r)
        nu0 += inv.density.at(0, r) * inv.density.cell_mass(r);
    CHECK(nu0 * tw->mean_return() == doctest::Approx(1.0).epsilon(1e-10));

    // depth-1 perturbed tower: generalized Kac with the F^R-invariant base
    // restriction mu0 = rho|level 0
    auto ptw = perturbed_two_element(0.3, 21);
    auto pinv = invariant_density(ptw);
    double mu0 = 0.0, mu0_R = 0.0;
    for (long r = 0; r < pinv.density.words(); ++r) {
        const Word w = ptw->unrank_word(r, pinv.density.depth());
        mu0 += pinv.density.at(0, r) * pinv.density.cell_mass(r);
        mu0_R += pinv.density.at(0, r) * pinv.density.cell_mass(r) * ptw->return_time(w[0]);
    }
    CHECK(mu0_R == doctest::Approx(1.0).epsilon(1e-10));  // int R dmu0 = nu(Delta) = 1
    CHECK(mu0 > 0.0);
}

TEST_CASE("renewal sequence") {
    auto tw = two_element_tower();  // p1 = p2 = 1/2
    auto u = renewal_sequence(*tw, 8);
    CHECK(u[0] == 1.0);
    CHECK(u[1] == doctest::Approx(0.5));
    CHECK(u[2] == doctest::Approx(0.75));
    CHECK(u[3] == doctest::Approx(0.625));
    CHECK(u[4] == doctest::Approx(0.6875));
    // limit 2/3 within 5% at 10 * max R
    auto ulong = renewal_sequence(*tw, 20);
    const double limit = tw->base_mass() / tw->mean_return();
    CHECK(limit == doctest::Approx(2.0 / 3.0));
    CHECK(std::abs(ulong.back() - limit) / limit < 0.05);

    // R == 1: u identically 1
    auto one = single_element_tower();
    for (double v : renewal_sequence(*one, 5)) CHECK(v == doctest::Approx(1.0));

    // gcd 2 rejected at construction
    CHECK_THROWS_AS(SymbolicTower::zero_distortion({{"a", 1.0, 2}}), invalid_input_error);
}

TEST_CASE("compute_n0") {
    auto tw = two_element_tower();
    // c = 0.5 * m0(Delta0): threshold 0.5, attained from n = 1 on
    auto cert = compute_n0(*tw, 0.5 * tw->base_mass(), 40);
    CHECK(cert.n0 == 1);
    CHECK(cert.margin > 0.0);

    auto one = single_element_tower();
    CHECK(compute_n0(*one, 0.5 * one->base_mass(), 10).n0 == 0);

    // infeasible c
    CHECK_THROWS_AS(compute_n0(*tw, 0.7, 40), infeasible_error);

    // monotone in c
    int prev = 0;
    for (double f : {0.3, 0.6, 0.9, 0.99}) {
        auto c = compute_n0(*tw, f * tw->base_mass() * tw->base_mass() / tw->tower_mass(), 400);
        CHECK(c.n0 >= prev);
        prev = c.n0;
    }
}

TEST_CASE("density refine/coarsen round trip and csv") {
    auto tw = perturbed_two_element(0.2, 13);
    CylinderDensity dens(tw, 2);
    CounterRng rng(5);
    for (int l = 0; l < dens.levels(); ++l)
        for (long r = 0; r < dens.words(); ++r)
            if (dens.cell_valid(l, r)) dens.set(l, r, rng.next_uniform());

    auto fine = dens.refined(4);
    CHECK(fine.mass() == doctest::Approx(dens.mass()).epsilon(1e-13));
    auto back = fine.coarsened(2);
    CHECK(CylinderDensity::sup_distance(back, dens) < 1e-13);

    // coarsening a genuinely finer density preserves mass
    CylinderDensity deep(tw, 3);
    for (int l = 0; l < deep.levels(); ++l)
        for (long r = 0; r < deep.words(); ++r)
            if (deep.cell_valid(l, r)) deep.set(l, r, rng.next_uniform());
    CHECK(deep.coarsened(1).mass() == doctest::Approx(deep.mass()).epsilon(1e-13));

    std::ostringstream csv;
    dens.write_csv(csv);
    CHECK(csv.str().rfind("level,word,value,cylinder_mass", 0) == 0);
}

TEST_CASE("tower json round trip") {
    auto tw = perturbed_two_element(0.3, 17);
    auto text = tw->to_json_text();
    auto back = SymbolicTower::from_json_text(text);
    CHECK(back.alphabet_size() == tw->alphabet_size());
    CHECK(back.jacobian_depth() == 1);
    for (Symbol i = 0; i < 2; ++i)
        for (Symbol j = 0; j < 2; ++j)
            CHECK(back.jacobian(i, {j}) == doctest::Approx(tw->jacobian(i, {j})).epsilon(1e-15));
    CHECK(back.word_mass({0, 1}) == doctest::Approx(tw->word_mass({0, 1})).epsilon(1e-15));
}
