import jax.numpy as jnp
import numpy as np
import pytest

from krstab import geomkernel as gk
from krstab import nustab as ns
from krstab import spectra as sp
from krstab.errors import DimensionError, DomainError
from oracles import ZonalSphereNu


def zonal_family(metric):
    return lambda x, P: jnp.polyval(P, x[0]) * metric(x)


# --- W functional --------------------------------------------------------------


@pytest.mark.parametrize("name", ["round-sphere-2", "koiso-cao"])
def test_w_scaling_identity(name):
    from krstab.soliton import fixture

    t = fixture(name)
    lhs = ns.w_functional(t)
    rhs = ns.w_functional(t, tau=1.0, metric_scale=1.0 / t.tau)
    assert abs(lhs - rhs) < 1e-8


@pytest.mark.parametrize("name", ["round-sphere-2", "fubini-study-2", "koiso-cao"])
def test_w_at_soliton_equals_nu(name):
    from krstab.soliton import fixture

    t = fixture(name)
    assert ns.w_functional(t) == pytest.approx(t.nu, abs=1e-8)
    assert ns.compatibility(t) == pytest.approx(1.0, abs=1e-8)


def test_sphere_nu_closed_form(sphere):
    # round S^2 with R = 2: nu = log 2 - 1, independent nested-minimisation oracle
    assert sphere.nu == pytest.approx(np.log(2.0) - 1.0, abs=1e-9)
    assert ZonalSphereNu([0.0]).nu(0.0)[0] == pytest.approx(np.log(2.0) - 1.0, abs=1e-9)


def test_w_is_minimised_by_potential(kc):
    # shifting f away from the soliton potential (renormalised) raises W
    bumped = lambda x: kc.f(x) + 0.05 * jnp.cos(3.0 * x[0])
    c = np.log(kc.integrate("bump-mass", lambda x: jnp.exp(-0.05 * jnp.cos(3.0 * x[0]))) * ns.prefactor(kc))
    shifted = lambda x: bumped(x) + c
    assert ns.w_functional(kc, f=shifted, f_key="bumped") > kc.nu


# --- first variation -----------------------------------------------------------


def test_first_variation_of_metric_direction(sphere):
    h = ns.metric_perturbation(sphere)
    assert abs(ns.first_variation(sphere, h)) < 1e-8 * np.sqrt(ns.weighted_norm2(sphere, h))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_first_variation_vanishes_on_koiso_cao(kc, seed):
    h = ns.seeded_perturbation(kc, seed)
    assert abs(ns.first_variation(kc, h)) < 1e-5 * np.sqrt(ns.weighted_norm2(kc, h))


def test_sphere_soliton_tensor_vanishes(sphere):
    sol = sphere.soliton_tensor()
    vals = sphere.evaluate("soliton", sol, sphere.sample(20, 0))
    assert np.max(np.abs(vals)) < 1e-10


def test_euler_lagrange_residual(kc, fs2):
    assert ns.euler_lagrange_residual(kc) < 1e-6
    assert ns.euler_lagrange_residual(fs2) < 1e-8


# --- v_h and C -----------------------------------------------------------------


def test_vh_vanishes_for_metric_direction(sphere):
    vh = ns.solve_vh(sphere, ns.metric_perturbation(sphere, 0.7))
    assert vh.norm < 1e-10 and vh.rhs_norm < 1e-10


def test_vh_dense_solve_oracle(sphere):
    # h = P2(z) g on S^2: div div h = Delta P2 = -6 P2, so v solves Delta v + v = -6 P2, v = (6/5) P2
    h = ns.PerturbationField(zonal_family(sphere.metric), np.array([1.5, 0.0, -0.5]), "zonal")
    vh = ns.solve_vh(sphere, h)
    z = np.linspace(-0.9, 0.9, 7)
    p2 = 1.5 * z**2 - 0.5
    np.testing.assert_allclose(vh.series.eval(z), 1.2 * p2, atol=1e-9)
    assert vh.residual < 1e-8 and vh.kernel_component < 1e-10


def test_vh_rejects_non_invariant(sphere):
    h = ns.PerturbationField(zonal_family(sphere.metric), np.array([1.0]), "zonal", symmetry_class="generic")
    with pytest.raises(DomainError):
        ns.solve_vh(sphere, h)


def test_c_constant(sphere):
    assert ns.c_constant(sphere, ns.metric_perturbation(sphere)) == pytest.approx(1.0, abs=1e-10)
    h = ns.PerturbationField(zonal_family(sphere.metric), np.array([1.5, 0.0, -0.5]), "zonal")
    assert abs(ns.c_constant(sphere, h)) < 1e-10


def test_induced_variation_normalisation(kc):
    r = ns.induced_variation_check(kc, ns.seeded_perturbation(kc, 4))
    assert r["e1_residual"] < 1e-6
    assert r["vh_difference"] < 1e-6
    assert abs(r["normalisation_integral"]) < 1e-6


# --- N operator ----------------------------------------------------------------


def test_n_operator_symmetric(kc):
    h1, h2 = ns.seeded_perturbation(kc, 0), ns.seeded_perturbation(kc, 1)
    a = ns.second_variation_form(kc, h1, h2)
    b = ns.second_variation_form(kc, h2, h1)
    assert abs(a - b) < 1e-7 * max(abs(a), 1.0)


def test_second_variation_zero_direction(kc):
    h = ns.seeded_perturbation(kc, 0)
    assert ns.second_variation_form(kc, h, h.scaled(0.0)) == 0.0


def test_einstein_specialisation_matches_general(sphere):
    h = ns.PerturbationField(zonal_family(sphere.metric), np.array([0.3, 1.5, 0.2, -0.5]), "zonal3")
    pts = sphere.sample(8, 3)
    general = ns.n_operator(sphere, h).evaluate(pts)
    special = ns.einstein_n_operator(sphere, h)(pts)
    assert np.max(np.abs(general - special)) < 1e-10 * max(np.max(np.abs(general)), 1.0)


def test_einstein_specialisation_requires_einstein(kc):
    with pytest.raises(DomainError):
        ns.einstein_n_operator(kc, ns.seeded_perturbation(kc, 0))


def test_ricci_is_eigentensor(sphere, fs2, kc):
    assert ns.lhat_check(sphere)["ric_eigen"] < 1e-8
    assert ns.lhat_check(fs2)["ric_eigen"] < 1e-8
    r = ns.lhat_check(kc)
    assert r["ric_eigen"] < 1e-5 and r["rho_twisted"] < 1e-5


def test_second_variation_matches_nested_minimisation(sphere):
    """d^2/ds^2 nu(g + s h) from an independent minimiser vs the N-operator form."""
    h = ns.PerturbationField(zonal_family(sphere.metric), np.array([1.5, 0.0, -0.5]), "zonal")
    analytic = ns.second_variation_form(sphere, h, h)
    numeric = ZonalSphereNu([0.0, 0.0, 1.0]).second_derivative()
    assert analytic == pytest.approx(numeric, rel=1e-3)


# --- certificate ---------------------------------------------------------------


@pytest.fixture(scope="module")
def kc_certificate(kc):
    return ns.instability_certificate(kc)


def test_certificate_koiso_cao(kc, kc_certificate):
    rep = kc_certificate
    assert rep.pairing > 0
    assert abs(rep.pairing / rep.expected_pairing - 1.0) < 1e-2
    assert rep.verdict == "unstable-direction-found"
    assert rep.rho_orthogonality < 1e-8
    assert rep.second_variation > 0
    assert rep.provenance["basis_tags"] == ["exceptional-curve", "line-at-infinity"]
    print("Koiso-Cao: v_sigmaJ norm", rep.vh_norm, "eigentensor residual", rep.eigentensor_residual)


def test_certificate_json_roundtrip(kc_certificate):
    import json

    d = json.loads(kc_certificate.to_json())
    assert d["expected_pairing"] == pytest.approx(kc_certificate.expected_pairing)
    assert len(d["sigma_coefficients"]) == 2


def test_certificate_product_eigentensor(cp1cp1):
    rep = ns.instability_certificate(cp1cp1)
    assert rep.eigentensor_residual < 1e-6
    assert rep.vh_norm < 1e-8
    assert abs(rep.pairing / rep.expected_pairing - 1.0) < 1e-8


def test_certificate_needs_two_classes(fs2):
    with pytest.raises(DimensionError):
        ns.instability_certificate(fs2)


def test_verdicts():
    assert ns.verdict_for(1.0, 1.0) == "unstable-direction-found"
    assert ns.verdict_for(-1.0, 1.0) == "nonpositive-on-basis"
    assert ns.verdict_for(1e-12, 1.0) == "indefinite-unknown"


# --- internal consistency ------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1])
def test_div_adjointness(kc, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2, 5)) / (1 + np.arange(5))
    h = ns.seeded_perturbation(kc, seed)
    assert abs(ns.adjointness_defect(kc, A, h)) < 1e-7


def test_weighted_integration_identities(kc, sphere):
    rng = np.random.default_rng(5)
    for t in (kc, sphere):
        A = rng.standard_normal((2, 5)) / (1 + np.arange(5))
        F = rng.standard_normal(6)
        assert abs(ns.divergence_integral(t, A)) < 1e-8
        assert abs(ns.laplacian_integral(t, F)) < 1e-8


def test_potential_eigenfunction(kc):
    r = ns.potential_eigen_residual(kc)
    assert r["relative"] < 1e-6 and r["norm"] > 1e-3
