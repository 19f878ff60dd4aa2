"""Smoke tests for the python bindings.

Run after `pip install .` (scikit-build-core), or straight from a CMake build
tree configured with -DTOWERLAB_PYTHON=ON, in which case the extension is
picked up from ../../build.
"""

import math
import pathlib
import sys

import pytest

try:
    import towerlab as tl
except ImportError:  # build-tree fallback
    build = pathlib.Path(__file__).resolve().parents[2] / "build"
    if not list(build.glob("_towerlab*.so")):
        pytest.skip("towerlab not installed and no build tree found", allow_module_level=True)
    sys.path.insert(0, str(build))
    import _towerlab as tl


@pytest.fixture(scope="module")
def two_element_tower():
    return tl.SymbolicTower.zero_distortion([("a", 0.5, 1), ("b", 0.5, 2)])


def test_renewal_and_kac(two_element_tower):
    u = tl.renewal_sequence(two_element_tower, 40)
    assert u[:5] == [1.0, 0.5, 0.75, 0.625, 0.6875]
    limit = two_element_tower.base_mass / two_element_tower.tower_mass
    assert abs(u[-1] - limit) / limit < 0.05

    n0, threshold, renewal_limit, margin = tl.compute_n0(two_element_tower, 0.5, 40)
    assert n0 == 1
    assert margin > 0


def test_invariant_density_fixed_point(two_element_tower):
    rho, residual, _ = tl.invariant_density(two_element_tower)
    assert residual < 1e-10
    assert abs(rho.mass() - 1.0) < 1e-12
    pushed = tl.transfer_push(rho)
    assert tl.CylinderDensity.sup_distance(pushed, rho) < 1e-10


def test_separation_time(two_element_tower):
    value, lower = tl.separation_time(two_element_tower, 0, [0, 1, 0], 0, [0, 1, 1])
    assert value == 2 and not lower
    value, lower = tl.separation_time(two_element_tower, 0, [0], 0, [0])
    assert value == 1 and lower


def test_schedule_recursion():
    v = tl.v_profile_exponential(1.0, 0.5, 30)
    sched = tl.choose_epsilon_schedule(v, 0.5, 0.5, 0.8, 30)
    for e in sched.eps_prime:
        assert abs(e - math.log(1 / 0.8)) < 1e-12
    assert not sched.trivial
    round_trip = tl.EpsilonSchedule.from_json(sched.to_json())
    assert round_trip.eps == sched.eps


def test_coupling_bound_majorizes_exact(two_element_tower):
    tw = two_element_tower
    structure = tl.build_stopping_structure(tw, 1, 13, 60)
    rho, _, _ = tl.invariant_density(tw)
    rho = rho.refined(2)
    lam = tl.CylinderDensity(tw, 2, 0.0)
    for level in range(2):
        for rank in range(4):
            if lam.cell_valid(level, rank):
                lam.set(level, rank, rho.at(level, rank) * (1.0 + 0.2 * ((rank + level) % 2)))
    lam.normalize()

    v = tl.v_profile_polynomial(1.0, 4.0, 13)
    sched = tl.choose_epsilon_schedule(v, 0.5, 0.5, 0.8, 13)
    trace = tl.run_coupling(structure, lam, rho, sched, 13)

    push_l, push_r = lam, rho
    for n in range(1, 13):
        push_l = tl.transfer_push(push_l)
        push_r = tl.transfer_push(push_r)
        exact = tl.CylinderDensity.variation_distance(push_l, push_r)
        assert tl.correlation_bound(trace, structure, n) >= exact - 1e-12

    for step in trace.steps:
        assert step.symmetry_residual < 1e-12


def test_predicted_rate_table():
    family, exponent, strict, sub_case, text = tl.predicted_rate(
        "polynomial", 3.0, "v4", 8.0, 0.5
    )
    assert "log n" in text and abs(exponent - 2.0) < 1e-12
    family, exponent, *_ = tl.predicted_rate("exponential", 0.5, "v4", 4.0, 0.5)
    assert abs(exponent - 1.0) < 1e-12
    with pytest.raises(tl.ClassError):
        tl.predicted_rate("exponential", 0.5, "v4", 1.5, 0.5)


def test_maps_and_observables():
    mp = tl.MapSpec.manneville_pomeau(1.0)
    part = tl.induce_return_partition(mp, 100)
    assert abs(part.base_left - 0.6180339887498949) < 1e-9

    ls = tl.MapSpec.log_singular(0.3, 0.6, 2.0)
    assert abs(tl.eval_map(ls, 0.0) - 0.6) < 1e-12
    probe = tl.projection_modulus_probe(ls, 50)
    assert probe[1][1] == pytest.approx(0.4)

    r4 = tl.make_observable("r4", 2.0, 0.0)
    assert r4(0.0) == 0.0
    est = tl.estimate_modulus(r4, [1e-4], samples=500, seed=3)
    assert est[0][1] == pytest.approx(r4(1e-4), rel=1e-9)

    vclass, gamma, strict, note = tl.project_class("r1", 0.5, "log_poly", 2.0)
    assert vclass == "V4" and gamma == pytest.approx(1.0)


def test_correlation_estimator_determinism():
    dbl = tl.MapSpec.doubling()
    phi = tl.make_fourier_observable(1)
    s1 = tl.estimate_correlation(dbl, phi, phi, n_max=10, orbit_length=200_000, burn_in=100,
                                 seed=12)
    s2 = tl.estimate_correlation(dbl, phi, phi, n_max=10, orbit_length=200_000, burn_in=100,
                                 seed=12)
    assert s1.c == s2.c
    assert s1.c[0] == pytest.approx(0.5, rel=0.05)
    assert s1.rng_name == "splitmix64-counter"
