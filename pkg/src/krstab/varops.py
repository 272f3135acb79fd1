"""First variations of curvature and function quantities along g + s h.

Each analytic formula is paired with :func:`fd_oracle`, which differentiates the
nonlinear quantity itself by centred differences with Richardson
extrapolation. Perturbations come as parameterised families ``fam(x, params)``
so that one compiled kernel serves every seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from . import geomkernel as gk
from .errors import OracleError
from .quadrature import chunked

STEPS = (1e-3, 5e-4, 2.5e-4)
RICHARDSON_ORDER = 4
REL_FLOOR = 1e-14


# ---------------------------------------------------------------------------
# seeded perturbation families


def _features(x):
    n = x.shape[0]
    cross = x * jnp.roll(x, 1) if n > 1 else x * x
    return jnp.concatenate([jnp.ones(1), x, x * x, cross, jnp.sin(x)])


def n_features(n: int) -> int:
    return 1 + 4 * n


def tensor_family(x, P):
    """Symmetric 2-tensor field sum_k feature_k(x) P_k with P of shape (K, n, n)."""
    S = 0.5 * (P + jnp.swapaxes(P, 1, 2))
    return jnp.tensordot(_features(x), S, axes=([0], [0]))


def scalar_family(x, p):
    return _features(x) @ p


def seeded_params(n: int, seed: int, kind: str, scale: float = 0.3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    k = n_features(n)
    if kind == "tensor":
        return scale * rng.standard_normal((k, n, n))
    return scale * rng.standard_normal(k)


@dataclass
class VariationInput:
    """Base metric, perturbation h, potential f and its variation fdot.

    ``h``, ``f`` and ``fdot`` are families called as ``fam(x, params)``.
    """

    metric: Callable
    h_params: np.ndarray
    f_params: np.ndarray
    fdot_params: np.ndarray
    points: np.ndarray
    h: Callable = tensor_family
    f: Callable = scalar_family
    fdot: Callable = scalar_family

    def args(self):
        return (jnp.asarray(self.h_params), jnp.asarray(self.f_params), jnp.asarray(self.fdot_params))


@dataclass
class FDReport:
    analytic: np.ndarray
    numeric: np.ndarray
    step_schedule: tuple
    richardson_order: int
    rel_error: float
    name: str = ""


# ---------------------------------------------------------------------------
# analytic formulas as fields


def _trace(metric, h):
    return lambda x: jnp.einsum("ij,ij->", jnp.linalg.inv(metric(x)), h(x))


def delta_ricci_field(metric, h, f=None, fdot=None):
    lap = gk.rough_laplacian(metric, h)
    rm = gk.riemann(metric)
    ric = gk.ricci(metric)
    dsd = gk.div_star(metric, gk.divergence(metric, h))
    hess_tr = gk.hessian(metric, _trace(metric, h))

    def out(x):
        ginv = jnp.linalg.inv(metric(x))
        R, H = ric(x), h(x)
        return (
            -0.5 * lap(x)
            - gk.rm_on_symmetric(rm(x), ginv, H)
            + 0.5 * (R @ ginv @ H + H @ ginv @ R)
            - dsd(x)
            - 0.5 * hess_tr(x)
        )

    return out


def delta_scalar_field(metric, h, f=None, fdot=None):
    ric = gk.ricci(metric)
    divdiv = gk.divergence(metric, gk.divergence(metric, h))
    lap_tr = gk.laplacian(metric, _trace(metric, h))

    def out(x):
        ginv = jnp.linalg.inv(metric(x))
        return -gk.inner(ginv, h(x), ric(x)) + divdiv(x) - lap_tr(x)

    return out


def delta_function_ops_field(metric, h, f, fdot):
    """Fields for the variations of Delta f and |grad f|^2, stacked as a pair.

    The trace term enters as +1/2 <d tr h, df>; this is the sign for which the
    linearised Euler-Lagrange equation collapses to Delta_f acting on
    tr h - 2 fdot, and the one the finite-difference oracle confirms.
    """
    lap_fd = gk.laplacian(metric, fdot)
    hess = gk.hessian(metric, f)
    div_h = gk.divergence(metric, h)
    dtr = jax.grad(_trace(metric, h))

    def out(x):
        ginv = jnp.linalg.inv(metric(x))
        df, dfd = jax.grad(f)(x), jax.grad(fdot)(x)
        gf = ginv @ df
        d_lap = lap_fd(x) + 0.5 * dtr(x) @ gf - gk.inner(ginv, h(x), hess(x)) - div_h(x) @ gf
        d_norm = -gf @ h(x) @ gf + 2.0 * gf @ dfd
        return jnp.array([d_lap, d_norm])

    return out


def delta_hessian_field(metric, h, f, fdot):
    hess_fd = gk.hessian(metric, fdot)
    hess = gk.hessian(metric, f)
    grad_f = gk.gradient(metric, f)
    drift = gk.directional(metric, h, grad_f)
    h_grad = lambda x: h(x) @ grad_f(x)
    ds = gk.div_star(metric, h_grad)

    def out(x):
        ginv = jnp.linalg.inv(metric(x))
        Hf, H = hess(x), h(x)
        return hess_fd(x) + 0.5 * (Hf @ ginv @ H + H @ ginv @ Hf) + 0.5 * drift(x) + ds(x)

    return out


def divf_divf_field(metric, f, h):
    """Expanded weighted double divergence of a symmetric 2-tensor."""
    divdiv = gk.divergence(metric, gk.divergence(metric, h))
    div_h = gk.divergence(metric, h)
    hess = gk.hessian(metric, f)
    grad_f = gk.gradient(metric, f)

    def out(x):
        ginv = jnp.linalg.inv(metric(x))
        gf = grad_f(x)
        return divdiv(x) + gf @ h(x) @ gf - 2.0 * div_h(x) @ gf - gk.inner(ginv, h(x), hess(x))

    return out


def divf_divf_iterated(metric, f, h):
    return gk.weighted_divergence(metric, f, gk.weighted_divergence(metric, f, h))


# ---------------------------------------------------------------------------
# nonlinear functionals for the oracle

def _quantity_ric(metric, f):
    return gk.ricci(metric)


def _quantity_scalar(metric, f):
    return gk.scalar_curvature(metric)


def _quantity_function_ops(metric, f):
    lap = gk.laplacian(metric, f)
    grad = gk.gradient(metric, f)
    return lambda x: jnp.array([lap(x), jax.grad(f)(x) @ grad(x)])


def _quantity_hessian(metric, f):
    return gk.hessian(metric, f)


def _quantity_nu_integrand(metric, f, tau=0.5):
    """[tau (R + |grad f|^2) + f - n] e^{-f} sqrt(det g), the W density."""
    R = gk.scalar_curvature(metric)
    grad = gk.gradient(metric, f)

    def out(x):
        n = x.shape[0]
        val = tau * (R(x) + jax.grad(f)(x) @ grad(x)) + f(x) - n
        return val * jnp.exp(-f(x)) * jnp.sqrt(jnp.linalg.det(metric(x)))

    return out


def delta_nu_integrand_field(metric, h, f, fdot, tau=0.5):
    dR = delta_scalar_field(metric, h)
    dfo = delta_function_ops_field(metric, h, f, fdot)
    R = gk.scalar_curvature(metric)
    grad = gk.gradient(metric, f)

    def out(x):
        n = x.shape[0]
        ginv = jnp.linalg.inv(metric(x))
        vol = jnp.sqrt(jnp.linalg.det(metric(x)))
        val = tau * (R(x) + jax.grad(f)(x) @ grad(x)) + f(x) - n
        dval = tau * (dR(x) + dfo(x)[1]) + fdot(x)
        dvol = -fdot(x) + 0.5 * jnp.einsum("ij,ij->", ginv, h(x))
        return (dval + val * dvol) * jnp.exp(-f(x)) * vol

    return out


FUNCTIONALS = {
    "Ric": (_quantity_ric, delta_ricci_field),
    "R": (_quantity_scalar, delta_scalar_field),
    "function_ops": (_quantity_function_ops, delta_function_ops_field),
    "Hess": (_quantity_hessian, delta_hessian_field),
    "nu_integrand": (_quantity_nu_integrand, delta_nu_integrand_field),
}
FUNCTIONALS["Delta f"] = FUNCTIONALS["function_ops"]
FUNCTIONALS["|grad f|^2"] = FUNCTIONALS["function_ops"]

_COMPILED: dict = {}


def _compiled(kind, name, metric, hfam, ffam, fdfam):
    key = (kind, name, id(metric), id(hfam), id(ffam), id(fdfam))
    if key in _COMPILED:
        return _COMPILED[key][0]
    quantity, analytic = FUNCTIONALS[name]
    if kind == "analytic":
        def at(x, ph, pf, pfd):
            h = lambda y: hfam(y, ph)
            f = lambda y: ffam(y, pf)
            fd = lambda y: fdfam(y, pfd)
            return analytic(metric, h, f, fd)(x)

        fn = chunked(jax.jit(jax.vmap(at, in_axes=(0, None, None, None))))
    else:
        def at(x, s, ph, pf, pfd):
            gs = lambda y: metric(y) + s * hfam(y, ph)
            fs = lambda y: ffam(y, pf) + s * fdfam(y, pfd)
            return quantity(gs, fs)(x)

        fn = chunked(jax.jit(jax.vmap(at, in_axes=(0, None, None, None, None))))
    # keep the closures alive so ids stay unique
    _COMPILED[key] = (fn, metric, hfam, ffam, fdfam)
    return fn


def _analytic(name, v: VariationInput) -> np.ndarray:
    fn = _compiled("analytic", name, v.metric, v.h, v.f, v.fdot)
    return np.asarray(fn(jnp.asarray(v.points), *v.args()))


def delta_ricci(v: VariationInput) -> np.ndarray:
    out = _analytic("Ric", v)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def delta_scalar(v: VariationInput) -> np.ndarray:
    return _analytic("R", v)


def delta_function_ops(v: VariationInput) -> dict:
    out = _analytic("function_ops", v)
    return {"delta_laplacian": out[..., 0], "delta_grad_norm2": out[..., 1]}


def delta_hessian(v: VariationInput) -> np.ndarray:
    out = _analytic("Hess", v)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def divf_divf(metric, f, h, points, route: str = "expanded") -> np.ndarray:
    """Weighted double divergence at points; ``route`` selects expanded or iterated."""
    build = divf_divf_field if route == "expanded" else divf_divf_iterated
    fn = jax.jit(jax.vmap(build(metric, f, h)))
    return np.asarray(fn(jnp.asarray(points)))


def richardson(values, steps) -> np.ndarray:
    """Eliminate the s^2 and s^4 terms from centred differences at halving steps."""
    d = [np.asarray(v) for v in values]
    if not np.allclose(np.array(steps[1:]) * 2, steps[:-1]):
        raise ValueError("Richardson schedule must halve the step")
    r1 = [(4.0 * d[i + 1] - d[i]) / 3.0 for i in range(len(d) - 1)]
    r2 = [(16.0 * r1[i + 1] - r1[i]) / 15.0 for i in range(len(r1) - 1)]
    return r2[-1]


def _perturbation_size(v: VariationInput) -> float:
    """max over the points of |h|_g and |fdot|."""
    key = ("size", id(v.metric), id(v.h), id(v.fdot))
    if key not in _COMPILED:
        metric, hfam, fdfam = v.metric, v.h, v.fdot

        def at(x, ph, pfd):
            h = hfam(x, ph)
            gi = jnp.linalg.inv(metric(x))
            return jnp.maximum(jnp.sqrt(jnp.einsum("ij,kl,ik,jl->", gi, gi, h, h)), jnp.abs(fdfam(x, pfd)))

        _COMPILED[key] = (jax.jit(jax.vmap(at, in_axes=(0, None, None))), metric, hfam, fdfam)
    fn = _COMPILED[key][0]
    ph, _, pfd = v.args()
    return float(np.max(np.asarray(fn(jnp.asarray(v.points), ph, pfd))))


def fd_oracle(functional: str, v: VariationInput, steps=STEPS) -> FDReport:
    """Centred-difference derivative of a nonlinear quantity, checked against its formula.

    The step schedule is divided by max(1, |h|_g, |fdot|) over the points so
    that g + s h stays a small relative perturbation where g is nearly
    degenerate; the schedule actually used is reported.
    """
    if functional not in FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}")
    fn = _compiled("fd", functional, v.metric, v.h, v.f, v.fdot)
    pts = jnp.asarray(v.points)
    steps = tuple(s / max(1.0, _perturbation_size(v)) for s in steps)
    diffs = []
    for s in steps:
        plus = np.asarray(fn(pts, s, *v.args()))
        minus = np.asarray(fn(pts, -s, *v.args()))
        if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
            raise OracleError(f"non-finite evaluation of {functional} at s = +/-{s}")
        diffs.append((plus - minus) / (2.0 * s))
    numeric = richardson(diffs, steps)
    analytic = _analytic(functional, v)
    if functional in ("Ric", "Hess"):
        analytic = 0.5 * (analytic + np.swapaxes(analytic, -1, -2))
    if functional == "Delta f":
        analytic, numeric = analytic[..., 0], numeric[..., 0]
    elif functional == "|grad f|^2":
        analytic, numeric = analytic[..., 1], numeric[..., 1]
    err = float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), REL_FLOOR))
    return FDReport(analytic, numeric, tuple(steps), RICHARDSON_ORDER, err, functional)
