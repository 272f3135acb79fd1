"""One-dimensional weighted quadrature over cohomogeneity-one reductions.

Every fixture integral reduces to an integral over the orbit parameter ``s``
(the first chart coordinate). A :class:`Reduction` records the representative
chart point for each ``s`` and the orbit volume factor, so that::

    int_M F dV = int_a^b F(x(s)) sqrt(det g)(x(s)) * orbit_factor ds

for any integrand invariant under the symmetry group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

from .basis import gauss_nodes
from .errors import QuadratureError
from .fixtures import MetricSpec

DEFAULT_ORDER = 24
DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-13
MAX_LEVEL = 7
CHUNK = 64


def chunked(fn: Callable) -> Callable:
    """Feed a jit(vmap(...)) function fixed-size batches so it compiles once.

    Points are padded by repeating the last one and split into CHUNK rows;
    extra positional arguments are passed through unchanged.
    """

    def call(pts, *args):
        pts = jnp.asarray(pts)
        m = pts.shape[0]
        pad = (-m) % CHUNK
        if pad:
            pts = jnp.concatenate([pts, jnp.repeat(pts[-1:], pad, axis=0)])
        outs = [fn(pts[i:i + CHUNK], *args) for i in range(0, pts.shape[0], CHUNK)]
        return jnp.concatenate(outs)[:m]

    return call


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    a: float
    b: float
    level: int = 0

    @classmethod
    def gauss_legendre(cls, a, b, order=DEFAULT_ORDER, level=0):
        x, w = gauss_nodes(a, b, order, 2**level)
        return cls(x, w, a, b, level)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@dataclass
class Reduction:
    """Orbit-parameter reduction of a chart with a symmetry group.

    ``sl_weight`` and ``sl_flux`` are closed forms of the Sturm-Liouville data
    ``w = density e^{-f}`` and ``p = w g^{ss}``; they are only used for
    endpoint asymptotics and are cross-checked against the kernel in tests.
    """

    spec: MetricSpec
    a: float
    b: float
    base_point: np.ndarray
    orbit_factor: float
    sl_weight: Optional[Callable] = None
    sl_flux: Optional[Callable] = None
    nut_ends: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False)

    def points(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        pts = np.tile(self.base_point, (len(s), 1))
        pts[:, 0] = s
        return pts

    def _batched(self, name, fn):
        if name not in self._cache:
            self._cache[name] = chunked(jax.jit(jax.vmap(fn)))
        return self._cache[name]

    def density(self, pts, metric_scale: float = 1.0) -> np.ndarray:
        if "sqrtdet" not in self._cache:
            dens = lambda x, c: jnp.sqrt(jnp.linalg.det(c * self.spec.metric(x)))
            self._cache["sqrtdet"] = chunked(jax.jit(jax.vmap(dens, in_axes=(0, None))))
        fn = self._cache["sqrtdet"]
        return np.asarray(fn(jnp.asarray(pts), jnp.asarray(float(metric_scale)))) * self.orbit_factor

    def inverse_metric_ss(self, pts) -> np.ndarray:
        fn = self._batched("ginv00", lambda x: jnp.linalg.inv(self.spec.metric(x))[0, 0])
        return np.asarray(fn(jnp.asarray(pts)))

    def rule(self, order=DEFAULT_ORDER, level=0) -> QuadratureRule:
        return QuadratureRule.gauss_legendre(self.a, self.b, order, level)


def weighted_quadrature(
    reduction: Reduction,
    integrand: Callable,
    weight: Optional[Callable] = None,
    rtol: float = DEFAULT_RTOL,
    order: int = DEFAULT_ORDER,
    max_level: int = MAX_LEVEL,
    metric_scale: float = 1.0,
    atol: float = DEFAULT_ATOL,
    full_output: bool = False,
):
    """Integrate ``integrand(points) * weight(points) dV`` with dyadic refinement.

    ``integrand`` maps an (N, dim) array of chart points to N values. Refinement
    doubles the panel count until the relative change drops below ``rtol``;
    the change is measured against the larger of |I| and the L1 mass, plus an
    absolute floor ``atol`` for integrands that are pure rounding noise.
    """
    prev = None
    for level in range(max_level + 1):
        rule = reduction.rule(order, level)
        pts = reduction.points(rule.nodes)
        vals = np.asarray(integrand(pts), dtype=float)
        if weight is not None:
            vals = vals * np.asarray(weight(pts), dtype=float)
        dens = reduction.density(pts, metric_scale)
        if not np.all(np.isfinite(vals)):
            raise QuadratureError(f"non-finite integrand at level {level}")
        value = rule.integrate(vals * dens)
        mass = rule.integrate(np.abs(vals) * dens)
        if prev is not None and abs(value - prev) <= rtol * max(abs(value), mass) + atol:
            info = {"level": level, "nodes": len(rule.nodes), "change": abs(value - prev)}
            return (value, info) if full_output else value
        prev = value
    raise QuadratureError(f"quadrature did not converge within {max_level} refinements")
