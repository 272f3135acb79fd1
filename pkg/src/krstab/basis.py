"""Legendre series on an interval, evaluable both in numpy and inside jax traces."""

from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np
from numpy.polynomial import legendre as npleg


def to_unit(s, a, b):
    return (2.0 * s - a - b) / (b - a)


def clenshaw(coeffs, t):
    """Sum_k c_k P_k(t) by the three-term recurrence; traceable by jax.

    The recurrence runs as a ``lax.scan`` so traced graphs stay small under
    nested differentiation.
    """
    coeffs = jnp.asarray(coeffs)
    m = coeffs.shape[0]
    if m == 1:
        return coeffs[0] + 0.0 * t
    k = jnp.arange(m - 1, 0, -1, dtype=coeffs.dtype)
    alpha = (2.0 * k + 1.0) / (k + 1.0)
    beta = -(k + 1.0) / (k + 2.0)

    def step(carry, item):
        b1, b2 = carry
        c, al, be = item
        return (c + al * t * b1 + be * b2, b1), None

    zero = jnp.zeros_like(t * coeffs[0])
    (b1, b2), _ = jax.lax.scan(step, (zero, zero), (coeffs[:0:-1], alpha, beta))
    return coeffs[0] + t * b1 - 0.5 * b2


@dataclass(frozen=True)
class LegendreSeries:
    coeffs: np.ndarray
    a: float
    b: float

    def __call__(self, s):
        """jax-traceable evaluation."""
        return clenshaw(jnp.asarray(self.coeffs), to_unit(s, self.a, self.b))

    def eval(self, s) -> np.ndarray:
        return npleg.legval(to_unit(np.asarray(s, dtype=float), self.a, self.b), self.coeffs)

    def deriv(self, m: int = 1) -> "LegendreSeries":
        c = npleg.legder(self.coeffs, m) * (2.0 / (self.b - self.a)) ** m
        return LegendreSeries(c, self.a, self.b)

    def __mul__(self, k: float) -> "LegendreSeries":
        return LegendreSeries(np.asarray(self.coeffs) * k, self.a, self.b)

    __rmul__ = __mul__


def vander(s, a: float, b: float, degree: int, derivs: int = 1):
    """Values (and derivatives) of P_0..P_degree mapped to [a, b]; list of (len(s), degree+1)."""
    t = to_unit(np.asarray(s, dtype=float), a, b)
    scale = 2.0 / (b - a)
    out = [npleg.legvander(t, degree)]
    eye = np.eye(degree + 1)
    for m in range(1, derivs + 1):
        cols = [npleg.legval(t, npleg.legder(eye[k], m)) for k in range(degree + 1)]
        out.append(np.stack(cols, axis=1) * scale**m)
    return out


def gauss_nodes(a: float, b: float, count: int, panels: int = 1):
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    x, w = npleg.leggauss(count)
    edges = np.linspace(a, b, panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)
