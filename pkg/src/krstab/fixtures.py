"""Closed-form metric charts used as fixtures.

Every chart is a jax-traceable callable ``x -> g(x)``; a complex structure,
when present, is a callable ``x -> J(x)`` acting on tangent vectors.

The U(2)-invariant Kahler metrics (Fubini-Study on CP^2, Koiso-Cao on
CP^2 # -CP^2) share one chart with coordinates ``(mu, psi, u, v)``: ``mu`` is
the moment map of the Hopf circle action, ``psi`` the fibre angle and
``w = u + iv`` an affine coordinate on the base CP^1. For a profile ``phi``::

    g = dmu^2 / (2 phi) + 2 phi (dpsi + A)^2 + mu * 2 |dw|^2 / (1 + |w|^2)^2
    A = (u dv - v du) / (1 + |w|^2),     omega = mu * omega_base + dmu ^ (dpsi + A)
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import jax.numpy as jnp
import numpy as np

from .errors import UnknownFixtureError


@dataclass(frozen=True)
class MetricSpec:
    key: str
    dim: int
    metric: Callable
    lower: np.ndarray
    upper: np.ndarray
    complex_structure: Optional[Callable] = None
    einstein_constant: Optional[float] = None
    periodic: tuple = ()
    notes: str = ""

    def sample(self, count: int, seed: int, margin: float = 0.1) -> np.ndarray:
        """Seeded uniform points at least ``margin`` (relative) inside the chart box."""
        rng = np.random.default_rng(seed)
        width = self.upper - self.lower
        lo = self.lower + margin * width
        hi = self.upper - margin * width
        return rng.uniform(lo, hi, size=(count, self.dim))

    @property
    def is_kahler(self) -> bool:
        return self.complex_structure is not None


# ---------------------------------------------------------------------------
# charts


def flat_metric(n: int):
    eye = jnp.eye(n)
    return lambda x: eye + 0.0 * x[0]


def stereographic_sphere(n: int, radius: float = 1.0):
    def g(x):
        return (4.0 * radius**2 / (1.0 + x @ x) ** 2) * jnp.eye(n)

    return g


def standard_complex_structure(m: int):
    J = np.zeros((2 * m, 2 * m))
    for j in range(m):
        J[2 * j + 1, 2 * j] = 1.0
        J[2 * j, 2 * j + 1] = -1.0
    Jj = jnp.asarray(J)
    return lambda x: Jj + 0.0 * x[0]


def fubini_study_affine(m: int, scale: float = 0.5):
    """Affine chart of CP^m, Hermitian form scale * i dd-bar log(1 + |z|^2).

    With the default scale 1/2 the metric satisfies Ric = 2(m+1) g.
    """
    Z = np.zeros((m, 2 * m), dtype=complex)
    for j in range(m):
        Z[j, 2 * j] = 1.0
        Z[j, 2 * j + 1] = 1.0j
    Zj = jnp.asarray(Z)

    def g(x):
        z = Zj @ x.astype(complex)
        s = 1.0 + jnp.real(jnp.vdot(z, z))
        H = scale * (jnp.eye(m) / s - jnp.outer(jnp.conj(z), z) / s**2)
        return 2.0 * jnp.real(Zj.T @ H @ jnp.conj(Zj))

    return g


def sphere_momentum_metric(radius: float = 1.0):
    """Round 2-sphere in height/angle coordinates (z, psi), z in (-radius, radius)."""

    def g(x):
        P = radius**2 - x[0] ** 2
        return jnp.diag(jnp.array([radius**2 / P, P / radius**2]))

    return g


def sphere_momentum_J(radius: float = 1.0):
    def J(x):
        P = (radius**2 - x[0] ** 2) / radius**2
        return jnp.array([[0.0, -P], [1.0 / P, 0.0]])

    return J


def product_momentum_metric():
    one = sphere_momentum_metric()

    def g(x):
        out = jnp.zeros((4, 4))
        out = out.at[:2, :2].set(one(x[:2]))
        return out.at[2:, 2:].set(one(x[2:]))

    return g


def product_momentum_J():
    one = sphere_momentum_J()

    def J(x):
        out = jnp.zeros((4, 4))
        out = out.at[:2, :2].set(one(x[:2]))
        return out.at[2:, 2:].set(one(x[2:]))

    return J


def calabi_metric(phi: Callable):
    def g(x):
        mu, _, u, v = x
        q = 1.0 + u * u + v * v
        theta = jnp.array([0.0, 1.0, -v / q, u / q])
        base = 2.0 * mu / q**2
        P = phi(mu)
        return jnp.diag(jnp.array([1.0 / (2.0 * P), 0.0, base, base])) + 2.0 * P * jnp.outer(theta, theta)

    return g


def calabi_J(phi: Callable):
    def J(x):
        mu, _, u, v = x
        q = 1.0 + u * u + v * v
        P = phi(mu)
        return jnp.array(
            [
                [0.0, -2.0 * P, 2.0 * P * v / q, -2.0 * P * u / q],
                [1.0 / (2.0 * P), 0.0, -u / q, -v / q],
                [0.0, 0.0, 0.0, -1.0],
                [0.0, 0.0, 1.0, 0.0],
            ]
        )

    return J


def calabi_theta(x):
    """Connection form dpsi + A on the (mu, psi, u, v) chart."""
    q = 1.0 + x[2] ** 2 + x[3] ** 2
    return jnp.array([0.0, 1.0, -x[3] / q, x[2] / q])


def calabi_base_form(x):
    """Kahler form of the base CP^1, 2 du^dv / (1+|w|^2)^2."""
    q = 1.0 + x[2] ** 2 + x[3] ** 2
    a = 2.0 / q**2
    return jnp.zeros((4, 4)).at[2, 3].set(a).at[3, 2].set(-a)


def fubini_study_profile(lam: float):
    """Momentum profile of Fubini-Study on CP^2 with Ric = lam * g."""
    return lambda mu: mu * (1.0 - lam * mu / 3.0)


# ---------------------------------------------------------------------------
# registry

_BOX = 2.0


def flat_torus(n: int) -> MetricSpec:
    return MetricSpec(
        f"flat-torus-{n}", n, flat_metric(n), np.zeros(n), np.ones(n),
        einstein_constant=0.0, periodic=tuple(range(n)),
        complex_structure=standard_complex_structure(n // 2) if n % 2 == 0 else None,
    )


def round_sphere(n: int) -> MetricSpec:
    return MetricSpec(
        f"round-sphere-{n}", n, stereographic_sphere(n), -_BOX * np.ones(n), _BOX * np.ones(n),
        complex_structure=standard_complex_structure(1) if n == 2 else None,
        einstein_constant=float(n - 1), notes="stereographic chart",
    )


def fubini_study(m: int) -> MetricSpec:
    return MetricSpec(
        f"fubini-study-{m}", 2 * m, fubini_study_affine(m), -1.5 * np.ones(2 * m), 1.5 * np.ones(2 * m),
        complex_structure=standard_complex_structure(m), einstein_constant=2.0 * (m + 1),
        notes="affine chart, Ric = 2(m+1) g",
    )


def sphere_momentum(key: str = "round-sphere-2/momentum") -> MetricSpec:
    return MetricSpec(
        key, 2, sphere_momentum_metric(), np.array([-1.0, -np.pi]), np.array([1.0, np.pi]),
        complex_structure=sphere_momentum_J(), einstein_constant=1.0, periodic=(1,),
    )


def cp1xcp1() -> MetricSpec:
    lo = np.array([-1.0, -np.pi, -1.0, -np.pi])
    return MetricSpec(
        "cp1xcp1", 4, product_momentum_metric(), lo, -lo,
        complex_structure=product_momentum_J(), einstein_constant=1.0, periodic=(1, 3),
        notes="product of unit spheres in height/angle coordinates",
    )


def calabi_chart(key: str, phi: Callable, a: float, b: float, einstein=None) -> MetricSpec:
    return MetricSpec(
        key, 4, calabi_metric(phi), np.array([a, -np.pi, -_BOX, -_BOX]), np.array([b, np.pi, _BOX, _BOX]),
        complex_structure=calabi_J(phi), einstein_constant=einstein, periodic=(1,),
    )


def fubini_study_momentum(lam: float = 6.0) -> MetricSpec:
    return calabi_chart("fubini-study-2/momentum", fubini_study_profile(lam), 0.0, 3.0 / lam, einstein=lam)


_PATTERNS = {
    r"flat-torus-(\d+)": lambda n: flat_torus(int(n)),
    r"round-sphere-(\d+)": lambda n: round_sphere(int(n)),
    r"fubini-study-(\d+)": lambda m: fubini_study(int(m)),
}


@functools.lru_cache(maxsize=None)
def metric_spec(name: str) -> MetricSpec:
    """Pointwise chart for a registered fixture name (cached, so compiled kernels are reused)."""
    if name == "cp1xcp1":
        return cp1xcp1()
    if name == "koiso-cao":
        from .soliton import fixture

        return fixture("koiso-cao").spec
    for pat, make in _PATTERNS.items():
        m = re.fullmatch(pat, name)
        if m and int(m.group(1)) >= 1:
            return make(m.group(1))
    raise UnknownFixtureError(name)


FIXTURE_NAMES = ("flat-torus-n", "round-sphere-n", "fubini-study-n", "cp1xcp1", "koiso-cao")
