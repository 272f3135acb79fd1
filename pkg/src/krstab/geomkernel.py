"""Pointwise differential geometry from closed-form metric functions.

Tensor fields are plain callables ``x -> array`` on chart coordinates and all
tensors are stored fully covariant. Derivatives come from nested forward-mode
differentiation (``jax.jacfwd``), so every identity check sees exact
derivatives of the supplied closed forms.

Conventions::

    R(X,Y)Z = nabla_Y nabla_X Z - nabla_X nabla_Y Z + nabla_[X,Y] Z
    Rm_ijkl = g(R(d_i, d_j) d_k, d_l)      (round sphere: Rm(X,Y,X,Y) > 0)
    Ric_ij  = g^kl Rm_kilj
    div(T)  = tr_12(nabla T),  delta = -div on forms
    Delta f = tr Hess f        (non-positive spectrum)
    omega(X,Y) = g(JX, Y),   sigma_J(X,Y) = sigma(X, JY)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

from .errors import DegenerateMetricError, JetOrderError, NotOneOneError, TensorKindError

Field = Callable[[jnp.ndarray], jnp.ndarray]

# ---------------------------------------------------------------------------
# field calculus


def _value_and_jac(T: Field, x):
    def both(y):
        v = T(y)
        return v, v

    jac, val = jax.jacfwd(both, has_aux=True)(x)
    return val, jnp.moveaxis(jac, -1, 0)


def inverse_metric(metric: Field) -> Field:
    return lambda x: jnp.linalg.inv(metric(x))


def christoffel(metric: Field) -> Field:
    """Gamma[m, i, j] = Gamma^m_ij of the Levi-Civita connection."""

    def gamma(x):
        g, dg = _value_and_jac(metric, x)  # dg[k, i, j] = d_k g_ij
        first = 0.5 * (
            jnp.einsum("ijk->kij", dg) + jnp.einsum("jik->kij", dg) - jnp.einsum("kij->kij", dg)
        )
        return jnp.einsum("mk,kij->mij", jnp.linalg.inv(g), first)

    return gamma


def riemann(metric: Field) -> Field:
    gamma = christoffel(metric)

    def rm(x):
        G, dG = _value_and_jac(gamma, x)  # dG[i, l, j, k] = d_i Gamma^l_jk
        usual = (
            jnp.einsum("iljk->lijk", dG)
            - jnp.einsum("jlik->lijk", dG)
            + jnp.einsum("lim,mjk->lijk", G, G)
            - jnp.einsum("ljm,mik->lijk", G, G)
        )
        return -jnp.einsum("lm,mijk->ijkl", metric(x), usual)

    return rm


def ricci(metric: Field) -> Field:
    rm = riemann(metric)
    return lambda x: jnp.einsum("kl,kilj->ij", jnp.linalg.inv(metric(x)), rm(x))


def scalar_curvature(metric: Field) -> Field:
    ric = ricci(metric)
    return lambda x: jnp.einsum("ij,ij->", jnp.linalg.inv(metric(x)), ric(x))


def nabla(metric: Field, T: Field) -> Field:
    """Covariant derivative; the new index is placed first."""
    gamma = christoffel(metric)

    def out(x):
        t, dt = _value_and_jac(T, x)
        G = gamma(x)
        for slot in range(t.ndim):
            corr = jnp.tensordot(G, jnp.moveaxis(t, slot, 0), axes=([0], [0]))
            dt = dt - jnp.moveaxis(corr, 1, slot + 1)
        return dt

    return out


def gradient(metric: Field, f: Field) -> Field:
    return lambda x: jnp.linalg.solve(metric(x), jax.grad(f)(x))


def hessian(metric: Field, f: Field) -> Field:
    return nabla(metric, nabla(metric, f))


def laplacian(metric: Field, f: Field) -> Field:
    H = hessian(metric, f)
    return lambda x: jnp.einsum("ab,ab->", jnp.linalg.inv(metric(x)), H(x))


def divergence(metric: Field, T: Field) -> Field:
    DT = nabla(metric, T)
    return lambda x: jnp.tensordot(jnp.linalg.inv(metric(x)), DT(x), axes=([0, 1], [0, 1]))


def rough_laplacian(metric: Field, T: Field) -> Field:
    DDT = nabla(metric, nabla(metric, T))
    return lambda x: jnp.tensordot(jnp.linalg.inv(metric(x)), DDT(x), axes=([0, 1], [0, 1]))


def directional(metric: Field, T: Field, X: Field) -> Field:
    """nabla_X T for a vector field X."""
    DT = nabla(metric, T)
    return lambda x: jnp.tensordot(X(x), DT(x), axes=([0], [0]))


def interior(X: Field, T: Field) -> Field:
    return lambda x: jnp.tensordot(X(x), T(x), axes=([0], [0]))


def weighted_divergence(metric: Field, f: Field, T: Field) -> Field:
    """div_f T = div T - T(grad f, ...)."""
    div = divergence(metric, T)
    ins = interior(gradient(metric, f), T)
    return lambda x: div(x) - ins(x)


def weighted_laplacian(metric: Field, f: Field, T: Field) -> Field:
    """Delta_f T = Delta T - nabla_{grad f} T (tensors or functions)."""
    lap = rough_laplacian(metric, T)
    drift = directional(metric, T, gradient(metric, f))
    return lambda x: lap(x) - drift(x)


def div_star(metric: Field, alpha: Field) -> Field:
    """Formal adjoint of div on 1-forms: minus the symmetrised covariant derivative."""
    D = nabla(metric, alpha)
    return lambda x: -0.5 * (D(x) + D(x).T)


def exterior_derivative(form: Field) -> Field:
    def d(x):
        val, D = _value_and_jac(form, x)
        if val.ndim == 0:
            return D
        if val.ndim == 1:
            return D - D.T
        if val.ndim == 2:
            return D + jnp.einsum("jki->ijk", D) + jnp.einsum("kij->ijk", D)
        raise TensorKindError("exterior derivative implemented up to 2-forms")

    return d


def codifferential(metric: Field, form: Field) -> Field:
    div = divergence(metric, form)
    return lambda x: -div(x)


def twisted_codifferential(metric: Field, f: Field, form: Field) -> Field:
    """delta_f = e^f delta e^{-f} = delta + iota_{grad f}."""
    delta = codifferential(metric, form)
    ins = interior(gradient(metric, f), form)
    return lambda x: delta(x) + ins(x)


def hodge_laplacian(metric: Field, form: Field) -> Field:
    """Delta_H = -(d delta + delta d), negative semi-definite."""
    a = exterior_derivative(codifferential(metric, form))
    b = codifferential(metric, exterior_derivative(form))
    return lambda x: -(a(x) + b(x))


def twisted_hodge_laplacian(metric: Field, f: Field, form: Field) -> Field:
    a = exterior_derivative(twisted_codifferential(metric, f, form))
    b = twisted_codifferential(metric, f, exterior_derivative(form))
    return lambda x: -(a(x) + b(x))


def lie_derivative(X: Field, T: Field) -> Field:
    """Lie derivative of a covariant tensor field along a vector field."""

    def out(x):
        t, dt = _value_and_jac(T, x)
        _, dX = _value_and_jac(X, x)  # dX[i, m] = d_i X^m
        res = jnp.tensordot(X(x), dt, axes=([0], [0]))
        for slot in range(t.ndim):
            corr = jnp.tensordot(dX, jnp.moveaxis(t, slot, 0), axes=([1], [0]))
            res = res + jnp.moveaxis(corr, 0, slot)
        return res

    return out


# ---------------------------------------------------------------------------
# pointwise algebra on arrays


def raise_two(ginv, h):
    return ginv @ h @ ginv


def inner(ginv, a, b):
    """Full tensor inner product of two covariant 2-tensors."""
    return jnp.einsum("ij,kl,ik,jl->", a, b, ginv, ginv)


def compose(a, ginv, b):
    """(A.B)_ij = A_ik g^kl B_lj."""
    return a @ ginv @ b


def rm_on_symmetric(rm, ginv, h):
    return jnp.einsum("kilj,kl->ij", rm, raise_two(ginv, h))


def rm_on_forms(rm, ginv, sigma):
    return jnp.einsum("ijkl,kl->ij", rm, raise_two(ginv, sigma))


def twist(sigma, J):
    """sigma_J(X, Y) = sigma(X, JY); J acts on vectors, J[b, c] = (J e_c)^b."""
    return sigma @ J


def kahler_form(g, J):
    return J.T @ g


def one_one_defect(sigma, J):
    return J.T @ sigma @ J - sigma


# ---------------------------------------------------------------------------
# jets and the point-level API


@dataclass(frozen=True)
class ChartPoint:
    coords: np.ndarray
    chart_id: str = "chart"


@dataclass(frozen=True)
class GeometryJet:
    """Metric value and coordinate partials up to ``order`` at a point.

    ``partials[k-1]`` has shape (n, n) + (n,)*k with derivative indices last.
    """

    point: ChartPoint
    g: np.ndarray
    partials: tuple

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def order(self) -> int:
        return len(self.partials)


@dataclass(frozen=True)
class ScalarJet:
    point: ChartPoint
    value: float
    partials: tuple

    @property
    def order(self) -> int:
        return len(self.partials)


_KINDS = {"symmetric2", "form2", "form1", "vector", "scalar"}


@dataclass(frozen=True)
class TensorValue:
    kind: str
    components: np.ndarray
    point: Optional[ChartPoint] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise TensorKindError(f"unknown tensor kind {self.kind!r}")
        c = np.asarray(self.components)
        if self.kind == "symmetric2" and not np.array_equal(c, c.T):
            raise TensorKindError("symmetric2 value is not symmetric")
        if self.kind == "form2" and not np.array_equal(c, -c.T):
            raise TensorKindError("form2 value is not antisymmetric")


@dataclass(frozen=True)
class CurvaturePack:
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    g: np.ndarray
    nabla_riemann: Optional[np.ndarray] = None

    @property
    def ginv(self):
        return np.linalg.inv(self.g)


@dataclass(frozen=True)
class KahlerStructure:
    J: np.ndarray
    point: Optional[ChartPoint] = None

    def check(self, g, tol: float = 1e-12) -> None:
        n = self.J.shape[0]
        if np.max(np.abs(self.J @ self.J + np.eye(n))) > tol:
            raise TensorKindError("J^2 != -Id")
        if np.max(np.abs(self.J.T @ g @ self.J - g)) > tol * max(1.0, np.max(np.abs(g))):
            raise TensorKindError("g is not J-invariant")


def _point(x) -> ChartPoint:
    return x if isinstance(x, ChartPoint) else ChartPoint(np.asarray(x, dtype=float))


def _jets(fn: Field, x, order: int):
    out = []
    d = fn
    for _ in range(order):
        d = jax.jacfwd(d)
        out.append(np.asarray(d(x)))
    return tuple(out)


def metric_jet(metric: Field, point, order: int = 2) -> GeometryJet:
    if not 0 <= order <= 4:
        raise JetOrderError("jet order must lie in 0..4")
    p = _point(point)
    x = jnp.asarray(p.coords)
    return GeometryJet(p, np.asarray(metric(x)), _jets(metric, x, order))


def scalar_jet(f: Field, point, order: int = 2) -> ScalarJet:
    if not 0 <= order <= 4:
        raise JetOrderError("jet order must lie in 0..4")
    p = _point(point)
    x = jnp.asarray(p.coords)
    return ScalarJet(p, float(f(x)), _jets(f, x, order))


def taylor_field(value, partials, center) -> Field:
    """Taylor polynomial of a jet; reproduces every stored derivative at ``center``."""
    value = jnp.asarray(value)
    partials = [jnp.asarray(p) for p in partials]
    c = jnp.asarray(center)

    def fn(x):
        dx = x - c
        out = value
        for k, p in enumerate(partials, start=1):
            term = p
            for _ in range(k):
                term = term @ dx
            out = out + term / factorial(k)
        return out

    return fn


def _check_metric(g) -> None:
    if not np.allclose(g, g.T, rtol=0, atol=1e-14 * max(1.0, np.abs(g).max())):
        raise DegenerateMetricError("metric is not symmetric")
    if np.any(np.linalg.eigvalsh(0.5 * (g + g.T)) <= 0):
        raise DegenerateMetricError("metric is not positive definite")


def curvature(jet: GeometryJet, with_nabla_rm: bool = False) -> CurvaturePack:
    need = 3 if with_nabla_rm else 2
    if jet.order < need:
        raise JetOrderError(f"curvature needs a metric jet of order >= {need}, got {jet.order}")
    _check_metric(jet.g)
    metric = taylor_field(jet.g, jet.partials, jet.point.coords)
    x = jnp.asarray(jet.point.coords)
    gam = np.asarray(christoffel(metric)(x))
    rm = np.asarray(riemann(metric)(x))
    ginv = np.linalg.inv(jet.g)
    ric = np.einsum("kl,kilj->ij", ginv, rm)
    drm = np.asarray(nabla(metric, riemann(metric))(x)) if with_nabla_rm else None
    return CurvaturePack(gam, rm, ric, float(np.einsum("ij,ij->", ginv, ric)), np.asarray(jet.g), drm)


def scalar_ops(jet: GeometryJet, fj: ScalarJet) -> dict:
    """Gradient, Hessian, Laplacian and |grad f|^2 from jets."""
    if fj.order < 2:
        raise JetOrderError("scalar_ops needs a function jet of order >= 2")
    if jet.order < 1:
        raise JetOrderError("scalar_ops needs a metric jet of order >= 1")
    _check_metric(jet.g)
    metric = taylor_field(jet.g, jet.partials, jet.point.coords)
    x = jnp.asarray(jet.point.coords)
    gam = np.asarray(christoffel(metric)(x))
    df, ddf = np.asarray(fj.partials[0]), np.asarray(fj.partials[1])
    ginv = np.linalg.inv(jet.g)
    hess = ddf - np.einsum("mij,m->ij", gam, df)
    hess = 0.5 * (hess + hess.T)
    return {
        "grad": ginv @ df,
        "hess": hess,
        "laplacian": float(np.einsum("ij,ij->", ginv, hess)),
        "grad_norm2": float(df @ ginv @ df),
    }


def weighted_tensor_ops(metric: Field, f: Field, h: Field, point) -> dict:
    """nabla h, div h, div_f h, Delta h, Delta_f h and nabla*nabla h at a point.

    Jets of ``metric``, ``f`` and ``h`` are produced internally by forward-mode
    differentiation; ``h`` may be a symmetric 2-tensor or a form.
    """
    x = jnp.asarray(_point(point).coords)
    g = np.asarray(metric(x))
    _check_metric(g)
    grad_f = gradient(metric, f)
    nh = np.asarray(nabla(metric, h)(x))
    lap = np.asarray(rough_laplacian(metric, h)(x))
    drift = np.asarray(directional(metric, h, grad_f)(x))
    div = np.asarray(divergence(metric, h)(x))
    div_f = div - np.tensordot(np.asarray(grad_f(x)), np.asarray(h(x)), axes=([0], [0]))
    return {
        "nabla": nh,
        "div": div,
        "div_f": div_f,
        "laplacian": lap,
        "laplacian_f": lap - drift,
        "rough": -lap,
    }


def _components(t, kind: str) -> np.ndarray:
    if isinstance(t, TensorValue):
        if t.kind != kind:
            raise TensorKindError(f"expected {kind}, got {t.kind}")
        return np.asarray(t.components)
    return np.asarray(t)


def rm_action(curv: CurvaturePack, h) -> TensorValue:
    """Rm(h, .)_ij = R_kilj h^kl."""
    c = _components(h, "symmetric2")
    if not np.allclose(c, c.T, rtol=0, atol=1e-13 * max(1.0, np.abs(c).max())):
        raise TensorKindError("rm_action expects a symmetric 2-tensor")
    out = np.asarray(rm_on_symmetric(curv.riemann, curv.ginv, c))
    return TensorValue("symmetric2", 0.5 * (out + out.T))


def two_form_curvature_op(curv: CurvaturePack, sigma) -> TensorValue:
    """Curvature operator on 2-forms, R(sigma)_ij = Rm_ijkl sigma^kl."""
    c = _components(sigma, "form2")
    if not np.allclose(c, -c.T, rtol=0, atol=1e-13 * max(1.0, np.abs(c).max())):
        raise TensorKindError("two_form_curvature_op expects a 2-form")
    out = np.asarray(rm_on_forms(curv.riemann, curv.ginv, c))
    return TensorValue("form2", 0.5 * (out - out.T))


def j_twist(sigma, J: KahlerStructure, tol: float = 1e-10) -> TensorValue:
    c = _components(sigma, "form2")
    defect = float(np.linalg.norm(one_one_defect(c, J.J)))
    if defect > tol * max(1.0, np.linalg.norm(c)):
        raise NotOneOneError(defect)
    out = twist(c, J.J)
    return TensorValue("symmetric2", 0.5 * (out + out.T))


def sigma_twist_check(curv: CurvaturePack, sigma, J: KahlerStructure) -> float:
    """Norm of 2 Rm(sigma_J, .) - R(sigma)_J, measured with g."""
    sj = j_twist(sigma, J)
    lhs = 2.0 * rm_action(curv, sj).components
    rhs = twist(two_form_curvature_op(curv, sigma).components, J.J)
    diff = lhs - rhs
    return float(np.sqrt(max(inner(curv.ginv, diff, diff), 0.0)))
