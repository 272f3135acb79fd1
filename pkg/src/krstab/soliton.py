"""Soliton triples (g, f, tau) on reducible fixtures and their invariant 2-form families."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

from . import fixtures as fx
from . import geomkernel as gk
from .errors import UnknownFixtureError
from .quadrature import Reduction, chunked, weighted_quadrature


def wedge(a, b):
    return jnp.outer(a, b) - jnp.outer(b, a)


@dataclass(frozen=True)
class FormFamily:
    """Invariant closed (1,1)-forms: class representatives plus exact parts d(H(s) theta)."""

    theta: Callable
    classes: tuple
    labels: tuple

    def potential_parts(self):
        """Fields (ds ^ theta, d theta) multiplying H'(s) and H(s) in d(H theta)."""
        theta = self.theta
        dtheta = gk.exterior_derivative(theta)

        def ds_theta(x):
            e0 = jnp.zeros_like(x).at[0].set(1.0)
            return wedge(e0, theta(x))

        return ds_theta, dtheta


def calabi_family(a: float, b: float, nut_at_a: bool) -> FormFamily:
    def rep(F, dF):
        def sigma(x):
            e0 = jnp.zeros(4).at[0].set(1.0)
            return F(x[0]) * fx.calabi_base_form(x) + dF(x[0]) * wedge(e0, fx.calabi_theta(x))

        return sigma

    classes, labels = [], []
    if not nut_at_a:
        classes.append(rep(lambda m: (b - m) / (b - a), lambda m: -1.0 / (b - a) + 0.0 * m))
        labels.append("exceptional-curve")
    classes.append(rep(lambda m: (m - a) / (b - a), lambda m: 1.0 / (b - a) + 0.0 * m))
    labels.append("line-at-infinity")
    return FormFamily(fx.calabi_theta, tuple(classes), tuple(labels))


def _area_form(n: int, i: int, j: int):
    def sigma(x):
        return jnp.zeros((n, n)).at[i, j].set(1.0).at[j, i].set(-1.0) + 0.0 * x[0]

    return sigma


def _unit(n: int, i: int):
    return lambda x: jnp.zeros(n).at[i].set(1.0) + 0.0 * x[0]


@dataclass
class SolitonTriple:
    """Metric chart, potential, tau and nu of a shrinking gradient soliton.

    ``f_profile`` is the potential as a function of the orbit parameter; the
    chart potential is ``f(x) = f_profile(x[0])``.
    """

    key: str
    spec: fx.MetricSpec
    f_profile: Callable
    tau: float
    nu: float
    reduction: Reduction
    forms: Optional[FormFamily] = None
    h11: Optional[int] = None
    einstein: bool = False
    profile: object = None
    info: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.spec.dim

    @property
    def metric(self):
        return self.spec.metric

    @property
    def J(self):
        return self.spec.complex_structure

    def f(self, x):
        return self.f_profile(x[0])

    @property
    def lam(self) -> float:
        return 1.0 / (2.0 * self.tau)

    def batched(self, name: str, fn: Callable):
        """jit(vmap(fn)) cached on the triple under ``name``."""
        if name not in self._cache:
            self._cache[name] = chunked(jax.jit(jax.vmap(fn)))
        return self._cache[name]

    def evaluate(self, name: str, fn: Callable, pts) -> np.ndarray:
        return np.asarray(self.batched(name, fn)(jnp.asarray(np.atleast_2d(pts))))

    def integrate(self, name: str, fn: Callable, weighted: bool = True, **kw) -> float:
        """int fn e^{-f} dV (or int fn dV) over the reduction."""
        f = self.f
        if weighted:
            def full(x):
                return fn(x) * jnp.exp(-f(x))
        else:
            full = fn
        batched = self.batched("int:" + name + (":w" if weighted else ""), full)
        return weighted_quadrature(self.reduction, lambda p: batched(jnp.asarray(p)), **kw)

    def soliton_tensor(self):
        """Field Ric + Hess f - g / (2 tau)."""
        ric = gk.ricci(self.metric)
        hess = gk.hessian(self.metric, self.f)
        lam = self.lam
        return lambda x: ric(x) + hess(x) - lam * self.metric(x)

    def sample(self, count: int, seed: int, margin: float = 0.1) -> np.ndarray:
        return self.spec.sample(count, seed, margin)


def normalise(key, spec, reduction, f_shape: Callable, tau: float, **kw) -> SolitonTriple:
    """Fix the additive constant of f by compatibility and nu by the f e^{-f} identity."""
    n = spec.dim
    tmp = SolitonTriple(key, spec, f_shape, tau, 0.0, reduction)
    mass = tmp.integrate("one", lambda x: 1.0 + 0.0 * x[0])
    f0 = float(np.log(mass / (4.0 * np.pi * tau) ** (n / 2)))
    f_prof = lambda s: f_shape(s) + f0
    triple = SolitonTriple(key, spec, f_prof, tau, 0.0, reduction, **kw)
    mean_f = triple.integrate("f", triple.f) / (4.0 * np.pi * tau) ** (n / 2)
    triple.nu = float(mean_f - n / 2)
    triple.info["f_shift"] = f0
    return triple


def sphere_triple() -> SolitonTriple:
    spec = fx.sphere_momentum("round-sphere-2")
    red = Reduction(spec, -1.0, 1.0, np.zeros(2), 2.0 * np.pi)
    forms = FormFamily(_unit(2, 1), (_area_form(2, 0, 1),), ("area",))
    t = normalise("round-sphere-2", spec, red, lambda s: 0.0 * s, 0.5, forms=forms, h11=1, einstein=True)
    w0 = 2.0 * np.pi * np.exp(-t.info["f_shift"])
    red.sl_weight = lambda s: w0 + 0.0 * s
    red.sl_flux = lambda s: w0 * (1.0 - s * s)
    return t


def cp1xcp1_triple() -> SolitonTriple:
    spec = fx.cp1xcp1()
    red = Reduction(spec, -1.0, 1.0, np.zeros(4), 8.0 * np.pi**2)
    forms = FormFamily(_unit(4, 1), (_area_form(4, 0, 1), _area_form(4, 2, 3)), ("first", "second"))
    t = normalise("cp1xcp1", spec, red, lambda s: 0.0 * s, 0.5, forms=forms, h11=2, einstein=True)
    w0 = 8.0 * np.pi**2 * np.exp(-t.info["f_shift"])
    red.sl_weight = lambda s: w0 + 0.0 * s
    red.sl_flux = lambda s: w0 * (1.0 - s * s)
    return t


def fubini_study_triple(lam: float = 6.0) -> SolitonTriple:
    spec = fx.fubini_study_momentum(lam)
    b = 3.0 / lam
    red = Reduction(spec, 0.0, b, np.zeros(4), 2.0 * np.pi**2, nut_ends=("a",))
    forms = calabi_family(0.0, b, nut_at_a=True)
    t = normalise("fubini-study-2", spec, red, lambda s: 0.0 * s, 1.0 / (2.0 * lam), forms=forms, h11=1,
                  einstein=True)
    w0 = 4.0 * np.pi**2 * np.exp(-t.info["f_shift"])
    phi = fx.fubini_study_profile(lam)
    red.sl_weight = lambda s: w0 * s
    red.sl_flux = lambda s: w0 * s * 2.0 * phi(s)
    return t


_TRIPLES = {}


def fixture(name: str):
    """Registered fixture by name: a SolitonTriple for shrinkers, else a MetricSpec."""
    if name in _TRIPLES:
        return _TRIPLES[name]
    if name == "round-sphere-2":
        out = sphere_triple()
    elif name == "cp1xcp1":
        out = cp1xcp1_triple()
    elif name == "fubini-study-2":
        out = fubini_study_triple()
    elif name == "koiso-cao":
        from .koiso_cao import build_koiso_cao

        out = build_koiso_cao()
    else:
        return fx.metric_spec(name)
    _TRIPLES[name] = out
    return out


SOLITON_FIXTURES = ("round-sphere-2", "cp1xcp1", "fubini-study-2", "koiso-cao")


def flat_torus_triple(n: int = 4, tau: float = 1.0) -> SolitonTriple:
    """Flat unit torus with constant f normalised by compatibility (not a shrinker)."""
    spec = fx.flat_torus(n)
    red = Reduction(spec, 0.0, 1.0, np.zeros(n), 1.0)
    t = normalise(spec.key, spec, red, lambda s: 0.0 * s, tau)
    w0 = np.exp(-t.info["f_shift"])
    red.sl_weight = lambda s: w0 + 0.0 * s
    red.sl_flux = lambda s: w0 + 0.0 * s
    return t
