import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krstab import geomkernel as gk
from krstab import fixtures as fx
from krstab.errors import DegenerateMetricError, JetOrderError, NotOneOneError, TensorKindError

from oracles import (curvature_from_symbolic, naive_two_form_op, symbolic_fubini_study,
                     symbolic_stereographic_sphere)


def _pack(spec, point, order=2):
    return gk.curvature(gk.metric_jet(spec.metric, point, order))


def _random_metric(n, seed):
    """Seeded smooth metric: Id + small polynomial perturbation, positive definite near the origin."""
    rng = np.random.default_rng(seed)
    A, B = 0.2 * rng.standard_normal((2, n, n, n))
    A, B = jnp.asarray(A + np.swapaxes(A, 0, 1)), jnp.asarray(B + np.swapaxes(B, 0, 1))
    return lambda x: jnp.eye(n) + jnp.tensordot(A, jnp.sin(x), axes=([2], [0])) + \
        jnp.tensordot(B, x * x, axes=([2], [0]))


# --- curvature ---------------------------------------------------------------


def test_flat_torus_curvature_vanishes():
    c = _pack(fx.flat_torus(4), [0.2, 0.4, 0.6, 0.8])
    assert np.all(c.riemann == 0) and np.all(c.ricci == 0) and c.scalar == 0


def test_stereographic_sphere_matches_symbolic_oracle():
    p = [0.3, -0.4]
    c = _pack(fx.round_sphere(2), p)
    ref = curvature_from_symbolic(*symbolic_stereographic_sphere(2), p)
    np.testing.assert_allclose(c.riemann, ref["Rm"], atol=1e-12)
    np.testing.assert_allclose(c.ricci, c.g, atol=1e-12)
    assert c.scalar == pytest.approx(2.0, abs=1e-12)


def test_round_sphere_3_is_einstein():
    c = _pack(fx.round_sphere(3), [0.1, 0.5, -0.3])
    np.testing.assert_allclose(c.ricci, 2.0 * c.g, atol=1e-12)


def test_fubini_study_matches_symbolic_oracle():
    p = [0.3, -0.2, 0.1, 0.5]
    c = _pack(fx.fubini_study(2), p)
    ref = curvature_from_symbolic(*symbolic_fubini_study(2), p)
    np.testing.assert_allclose(c.riemann, ref["Rm"], atol=1e-12)
    assert np.max(np.abs(c.ricci - 6.0 * c.g)) < 1e-9


def test_sectional_curvature_sign_convention():
    c = _pack(fx.round_sphere(2), [0.0, 0.0])
    # at the origin g = 4 Id, so Rm(e1, e2, e1, e2) = K |e1|^2 |e2|^2 = 16
    assert c.riemann[0, 1, 0, 1] == pytest.approx(16.0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.sampled_from([2, 3, 4]))
def test_curvature_symmetries_random_metric(seed, n):
    metric = _random_metric(n, seed)
    x = np.random.default_rng(seed).uniform(-0.3, 0.3, n)
    c = gk.curvature(gk.metric_jet(metric, x, 2))
    rm = c.riemann
    scale = max(np.max(np.abs(rm)), 1.0)
    assert np.max(np.abs(rm + np.swapaxes(rm, 0, 1))) < 1e-10 * scale
    assert np.max(np.abs(rm + np.swapaxes(rm, 2, 3))) < 1e-10 * scale
    assert np.max(np.abs(rm - np.transpose(rm, (2, 3, 0, 1)))) < 1e-10 * scale
    bianchi = rm + np.einsum("ijkl->jkil", rm) + np.einsum("ijkl->kijl", rm)
    assert np.max(np.abs(bianchi)) < 1e-10 * scale
    assert c.scalar == pytest.approx(np.einsum("ij,ij->", c.ginv, c.ricci), abs=1e-12 * scale)


@pytest.mark.parametrize("name", ["round-sphere-2", "fubini-study-2", "cp1xcp1", "koiso-cao"])
def test_fixture_curvature_symmetries(name):
    spec = fx.metric_spec(name)
    for x in spec.sample(3, 5):
        rm = np.asarray(gk.riemann(spec.metric)(jnp.asarray(x)))
        scale = max(np.max(np.abs(rm)), 1.0)
        bianchi = rm + np.einsum("ijkl->jkil", rm) + np.einsum("ijkl->kijl", rm)
        assert np.max(np.abs(bianchi)) < 1e-10 * scale
        assert np.max(np.abs(rm - np.transpose(rm, (2, 3, 0, 1)))) < 1e-10 * scale


def test_nabla_rm_requires_order_three():
    spec = fx.round_sphere(2)
    with pytest.raises(JetOrderError):
        gk.curvature(gk.metric_jet(spec.metric, [0.1, 0.2], 2), with_nabla_rm=True)
    c = gk.curvature(gk.metric_jet(spec.metric, [0.1, 0.2], 3), with_nabla_rm=True)
    # constant curvature: nabla Rm = 0
    assert np.max(np.abs(c.nabla_riemann)) < 1e-10


def test_degenerate_metric_rejected():
    jet = gk.GeometryJet(gk.ChartPoint(np.zeros(2)), np.diag([1.0, -1.0]), (np.zeros((2, 2, 2)),) * 2)
    with pytest.raises(DegenerateMetricError):
        gk.curvature(jet)


def test_jet_order_bounds():
    with pytest.raises(JetOrderError):
        gk.metric_jet(fx.flat_metric(2), [0.0, 0.0], 5)
    jet = gk.metric_jet(fx.flat_metric(2), [0.0, 0.0], 1)
    with pytest.raises(JetOrderError):
        gk.curvature(jet)


def test_metric_jet_partials_symmetric():
    jet = gk.metric_jet(_random_metric(3, 1), [0.1, 0.2, 0.3], 3)
    d2, d3 = jet.partials[1], jet.partials[2]
    assert np.max(np.abs(d2 - np.swapaxes(d2, 2, 3))) < 1e-13
    assert np.max(np.abs(d3 - np.swapaxes(d3, 3, 4))) < 1e-13


# --- scalar operators ----------------------------------------------------------


def test_scalar_ops_constant_function():
    spec = fx.round_sphere(2)
    p = [0.2, 0.1]
    out = gk.scalar_ops(gk.metric_jet(spec.metric, p, 1), gk.scalar_jet(lambda x: 3.0 + 0.0 * x[0], p))
    assert np.all(out["grad"] == 0) and np.all(out["hess"] == 0) and out["laplacian"] == 0


def test_scalar_ops_flat_quadratic():
    p = [0.3, 0.7, 0.1]
    out = gk.scalar_ops(gk.metric_jet(fx.flat_metric(3), p, 1), gk.scalar_jet(lambda x: x[0] ** 2, p))
    np.testing.assert_allclose(out["hess"], np.diag([2.0, 0.0, 0.0]), atol=1e-14)
    assert out["laplacian"] == pytest.approx(2.0)
    assert out["grad_norm2"] == pytest.approx(4 * 0.09)


def test_scalar_ops_height_function_on_sphere():
    spec = fx.round_sphere(2)
    height = lambda x: (x @ x - 1.0) / (x @ x + 1.0)
    for p in spec.sample(5, 3):
        out = gk.scalar_ops(gk.metric_jet(spec.metric, p, 1), gk.scalar_jet(height, p))
        z = float(height(jnp.asarray(p)))
        assert abs(out["laplacian"] + 2.0 * z) < 1e-9
        assert out["laplacian"] == np.einsum("ij,ij->", np.linalg.inv(spec.metric(jnp.asarray(p))), out["hess"])


def test_scalar_ops_needs_second_jet():
    p = [0.0, 0.0]
    with pytest.raises(JetOrderError):
        gk.scalar_ops(gk.metric_jet(fx.flat_metric(2), p, 1), gk.scalar_jet(lambda x: x[0], p, 1))


# --- weighted tensor operators -------------------------------------------------


def test_weighted_ops_reduce_for_constant_f():
    spec = fx.round_sphere(2)
    h = lambda x: jnp.outer(x, x) + jnp.eye(2)
    out = gk.weighted_tensor_ops(spec.metric, lambda x: 2.0 + 0.0 * x[0], h, [0.3, 0.2])
    np.testing.assert_array_equal(out["div_f"], out["div"])
    np.testing.assert_array_equal(out["laplacian_f"], out["laplacian"])
    np.testing.assert_array_equal(out["rough"], -out["laplacian"])


def test_weighted_ops_flat_df_squared():
    f = lambda x: x[0]
    h = lambda x: jnp.outer(jnp.eye(3)[0], jnp.eye(3)[0]) + 0.0 * x[0]
    out = gk.weighted_tensor_ops(fx.flat_metric(3), f, h, [0.1, 0.2, 0.3])
    np.testing.assert_allclose(out["div"], 0.0, atol=1e-15)
    np.testing.assert_allclose(out["div_f"], -np.eye(3)[0], atol=1e-15)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_weighted_divergence_two_routes(seed):
    metric = _random_metric(4, seed)
    rng = np.random.default_rng(seed + 1)
    a, S = rng.standard_normal(4), rng.standard_normal((4, 4, 4))
    S = S + np.swapaxes(S, 0, 1)
    f = lambda x: jnp.sin(x @ a)
    h = lambda x: jnp.tensordot(S, jnp.cos(x), axes=([2], [0]))
    x = jnp.asarray(rng.uniform(-0.3, 0.3, 4))
    direct = np.exp(f(x)) * np.asarray(gk.divergence(metric, lambda y: jnp.exp(-f(y)) * h(y))(x))
    expanded = gk.weighted_tensor_ops(metric, f, h, x)["div_f"]
    assert np.max(np.abs(direct - expanded)) < 1e-10 * max(1.0, np.max(np.abs(expanded)))


# --- curvature actions ---------------------------------------------------------


def test_rm_action_flat_and_trace():
    c = _pack(fx.flat_torus(3), [0.5, 0.5, 0.5])
    assert np.all(gk.rm_action(c, np.eye(3)).components == 0)
    for name, p in [("round-sphere-2", [0.3, 0.1]), ("fubini-study-2", [0.1, 0.2, -0.3, 0.4])]:
        c = _pack(fx.metric_spec(name), p)
        np.testing.assert_allclose(gk.rm_action(c, c.g).components, c.ricci, atol=1e-12)
    c = _pack(fx.round_sphere(2), [0.3, 0.1])
    np.testing.assert_allclose(gk.rm_action(c, c.g).components, c.g, atol=1e-12)


def test_rm_action_linear_and_kind_checked():
    c = _pack(fx.fubini_study(2), [0.1, 0.2, -0.3, 0.4])
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((2, 4, 4))
    A, B = A + A.T, B + B.T
    lin = gk.rm_action(c, 2 * A - B).components - 2 * gk.rm_action(c, A).components + gk.rm_action(c, B).components
    assert np.max(np.abs(lin)) < 1e-12
    with pytest.raises(TensorKindError):
        gk.rm_action(c, gk.TensorValue("form2", A - A.T))


def test_two_form_op_against_loop_oracle():
    for name, p in [("round-sphere-2", [0.3, 0.1]), ("fubini-study-2", [0.1, 0.2, -0.3, 0.4])]:
        c = _pack(fx.metric_spec(name), p)
        n = c.g.shape[0]
        A = np.random.default_rng(3).standard_normal((n, n))
        sigma = A - A.T
        ref = naive_two_form_op(c.riemann, c.ginv, sigma)
        np.testing.assert_allclose(gk.two_form_curvature_op(c, sigma).components, ref, atol=1e-12)
    c = _pack(fx.flat_torus(2), [0.5, 0.5])
    assert np.all(gk.two_form_curvature_op(c, np.array([[0.0, 1.0], [-1.0, 0.0]])).components == 0)


def test_two_form_op_on_kahler_form_is_proportional():
    spec = fx.fubini_study(2)
    p = jnp.asarray([0.1, 0.2, -0.3, 0.4])
    c = _pack(spec, p)
    omega = gk.kahler_form(c.g, np.asarray(spec.complex_structure(p)))
    out = gk.two_form_curvature_op(c, omega).components
    k = np.sum(out * omega) / np.sum(omega * omega)
    assert np.max(np.abs(out - k * omega)) < 1e-9


# --- J twist and the sigma_J curvature identity -----------------------------------------------------


def test_kahler_form_twists_to_plus_g():
    spec = fx.fubini_study(2)
    p = jnp.asarray([0.1, 0.2, -0.3, 0.4])
    g, J = np.asarray(spec.metric(p)), np.asarray(spec.complex_structure(p))
    omega = gk.kahler_form(g, J)
    np.testing.assert_allclose(omega, -omega.T, atol=1e-15)
    np.testing.assert_allclose(gk.j_twist(omega, gk.KahlerStructure(J)).components, g, atol=1e-14)
    assert np.all(gk.j_twist(np.zeros((4, 4)), gk.KahlerStructure(J)).components == 0)


def _one_one(n, J, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    A = A - A.T
    return 0.5 * (A + J.T @ A @ J)


@pytest.mark.parametrize("name", ["fubini-study-2", "cp1xcp1"])
def test_j_twist_preserves_norm(name):
    spec = fx.metric_spec(name)
    for seed, x in enumerate(spec.sample(5, 9)):
        x = jnp.asarray(x)
        g, J = np.asarray(spec.metric(x)), np.asarray(spec.complex_structure(x))
        sigma = _one_one(4, J, seed)
        sj = gk.j_twist(sigma, gk.KahlerStructure(J)).components
        gi = np.linalg.inv(g)
        assert abs(gk.inner(gi, sj, sj) - gk.inner(gi, sigma, sigma)) < 1e-12 * gk.inner(gi, sigma, sigma)


def test_j_twist_rejects_non_one_one():
    J = np.asarray(fx.standard_complex_structure(2)(jnp.zeros(4)))
    # Re(dz1 ^ dz2) is of type (2,0) + (0,2)
    sigma = np.zeros((4, 4))
    sigma[0, 2], sigma[2, 0] = 1.0, -1.0
    sigma[1, 3], sigma[3, 1] = -1.0, 1.0
    with pytest.raises(NotOneOneError) as err:
        gk.j_twist(sigma, gk.KahlerStructure(J))
    assert err.value.defect > 0


def test_kahler_structure_invariants():
    for name in ["fubini-study-2", "cp1xcp1", "koiso-cao"]:
        spec = fx.metric_spec(name)
        for x in spec.sample(4, 2):
            x = jnp.asarray(x)
            gk.KahlerStructure(np.asarray(spec.complex_structure(x))).check(np.asarray(spec.metric(x)))
            # g is parallel, so nabla J = 0 iff the Kahler form is parallel
            omega = lambda y: gk.kahler_form(spec.metric(y), spec.complex_structure(y))
            assert np.max(np.abs(np.asarray(gk.nabla(spec.metric, omega)(x)))) < 1e-8


def test_kahler_structure_check_rejects_bad_J():
    with pytest.raises(TensorKindError):
        gk.KahlerStructure(np.eye(2)).check(np.eye(2))


def test_sigma_twist_identity_flat_and_fubini_study():
    spec = fx.flat_torus(4)
    J = np.asarray(spec.complex_structure(jnp.zeros(4)))
    c = _pack(spec, [0.5] * 4)
    assert gk.sigma_twist_check(c, _one_one(4, J, 1), gk.KahlerStructure(J)) == 0.0
    spec = fx.fubini_study(2)
    p = jnp.asarray([0.1, 0.2, -0.3, 0.4])
    c = _pack(spec, p)
    J = np.asarray(spec.complex_structure(p))
    assert gk.sigma_twist_check(c, gk.kahler_form(c.g, J), gk.KahlerStructure(J)) < 1e-9


def test_tensor_value_kind_validation():
    with pytest.raises(TensorKindError):
        gk.TensorValue("symmetric2", np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(TensorKindError):
        gk.TensorValue("form2", np.eye(2))
    with pytest.raises(TensorKindError):
        gk.TensorValue("spinor", np.eye(2))


def test_weitzenbock_on_einstein_fixtures():
    """-Delta_H sigma = nabla* nabla sigma - R(sigma) + sigma / tau on Einstein metrics."""
    for name, tau in [("fubini-study-2", 1.0 / 12.0), ("round-sphere-2", 0.5)]:
        spec = fx.metric_spec(name)
        n = spec.dim
        rng = np.random.default_rng(4)
        A = rng.standard_normal((n + 1, n, n))
        A = jnp.asarray(A - np.swapaxes(A, 1, 2))
        sigma = lambda x: A[0] * jnp.sin(x[0]) + jnp.tensordot(x, A[1:], axes=([0], [0]))
        hodge = gk.hodge_laplacian(spec.metric, sigma)
        rough = gk.rough_laplacian(spec.metric, sigma)
        rm = gk.riemann(spec.metric)
        for x in spec.sample(3, 8):
            x = jnp.asarray(x)
            ginv = jnp.linalg.inv(spec.metric(x))
            lhs = -hodge(x)
            rhs = -rough(x) - gk.rm_on_forms(rm(x), ginv, sigma(x)) + sigma(x) / tau
            assert np.max(np.abs(np.asarray(lhs - rhs))) < 1e-8 * max(1.0, float(np.max(np.abs(lhs))))
