"""Construction of the Koiso-Cao Kahler-Ricci soliton on CP^2 # -CP^2.

On the U(2)-invariant momentum chart (see :mod:`krstab.fixtures`) a gradient
Kahler-Ricci soliton with ``Ric + Hess f = lam g`` has potential affine in the
moment map, ``f = c mu + const``, and the profile obeys the linear ODE::

    phi' + (1/mu - c) phi = 2 - lam mu,     phi(a) = 0

Smooth closure forces ``a = 1/lam`` and ``b = 3/lam`` (slopes +1 and -1 at the
ends with our normalisation of the fibre angle), and the remaining constant
``c`` is fixed by ``phi(b) = 0``, i.e. ``int_a^b (2 - lam s) s e^{-c s} ds = 0``.
The construction is only trusted after the kernel confirms the soliton
equation on the assembled four-dimensional metric.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np
from numpy.polynomial import legendre as npleg

from . import fixtures as fx
from . import geomkernel as gk
from .errors import ConstructionError
from .quadrature import Reduction
from .soliton import SolitonTriple, calabi_family, normalise

_GL_X, _GL_W = npleg.leggauss(48)
RESIDUAL_TOL = 1e-6


def _closure(c: float, lam: float, a: float, b: float) -> float:
    s = 0.5 * (b - a) * _GL_X + 0.5 * (b + a)
    return float(0.5 * (b - a) * np.sum(_GL_W * (2.0 - lam * s) * s * np.exp(-c * s)))


def shoot(lam: float, shoot_tol: float = 1e-12, max_expand: int = 40):
    """Bisection for the closure constant c; returns (c, trace)."""
    a, b = 1.0 / lam, 3.0 / lam
    lo, hi = 0.0, lam
    f_lo, f_hi = _closure(lo, lam, a, b), _closure(hi, lam, a, b)
    trace = [(lo, hi, f_lo, f_hi)]
    for _ in range(max_expand):
        if np.sign(f_lo) != np.sign(f_hi):
            break
        hi *= 2.0
        f_hi = _closure(hi, lam, a, b)
        trace.append((lo, hi, f_lo, f_hi))
    else:
        raise ConstructionError("shooting bracket exhausted", trace)
    while hi - lo > shoot_tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        f_mid = _closure(mid, lam, a, b)
        trace.append((lo, hi, f_lo, f_hi))
        if f_mid == 0.0:
            lo = hi = mid
            break
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi), trace


@dataclass(frozen=True)
class ProfileCurve:
    """Momentum profile phi on [a, b] in closed integral form."""

    lam: float
    c: float
    shoot_tol: float = 1e-12

    @property
    def a(self) -> float:
        return 1.0 / self.lam

    @property
    def b(self) -> float:
        return 3.0 / self.lam

    def _q(self, s):
        return (2.0 - self.lam * s) * s * jnp.exp(-self.c * s)

    def phi(self, mu):
        # integrate from the nearer endpoint so that phi keeps full relative
        # precision as it vanishes
        a, b = self.a, self.b
        x, w = jnp.asarray(_GL_X), jnp.asarray(_GL_W)
        left = 0.5 * (mu - a) * jnp.sum(w * self._q(a + 0.5 * (mu - a) * (x + 1.0)))
        right = -0.5 * (b - mu) * jnp.sum(w * self._q(mu + 0.5 * (b - mu) * (x + 1.0)))
        integral = jnp.where(mu < 0.5 * (a + b), left, right)
        return jnp.exp(self.c * mu) * integral / mu

    def phi_np(self, mu) -> np.ndarray:
        return np.array([float(self.phi(float(m))) for m in np.atleast_1d(mu)])

    def ode_residual(self, mu) -> np.ndarray:
        import jax

        out = []
        for m in np.atleast_1d(mu):
            p, dp = jax.value_and_grad(self.phi)(float(m))
            out.append(float(dp + (1.0 / m - self.c) * p - (2.0 - self.lam * m)))
        return np.array(out)


def build_koiso_cao(tau: float = 0.5, shoot_tol: float = 1e-12, verify: bool = True,
                    points: int = 200, seed: int = 0) -> SolitonTriple:
    """Build the Koiso-Cao triple normalised by Ric + Hess f = g / (2 tau)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    lam = 1.0 / (2.0 * tau)
    c, trace = shoot(lam, shoot_tol)
    prof = ProfileCurve(lam, c, shoot_tol)
    a, b = prof.a, prof.b
    spec = fx.calabi_chart("koiso-cao", prof.phi, a, b)
    red = Reduction(spec, a, b, np.zeros(4), 2.0 * np.pi**2)
    triple = normalise("koiso-cao", spec, red, lambda s: c * s, tau,
                       forms=calabi_family(a, b, nut_at_a=False), h11=2, profile=prof)
    w0 = 4.0 * np.pi**2 * np.exp(-triple.info["f_shift"])
    red.sl_weight = lambda s: w0 * s * jnp.exp(-c * s)
    red.sl_flux = lambda s: w0 * s * jnp.exp(-c * s) * 2.0 * prof.phi(s)
    red.base_point = np.array([0.0, 0.0, 0.0, 0.0])
    triple.info.update(c=c, shoot_steps=len(trace), a=a, b=b)
    if verify:
        pts = triple.sample(points, seed)
        res = triple.evaluate("soliton", triple.soliton_tensor(), pts)
        sup = float(np.max(np.abs(res)))
        triple.info["soliton_residual_sup"] = sup
        if not sup < RESIDUAL_TOL:
            raise ConstructionError(f"soliton residual {sup:.3e} exceeds {RESIDUAL_TOL}", trace)
    return triple


def export_profile(triple: SolitonTriple, nodes: int = 65) -> str:
    """Plain-text table (mu, phi, phi', f) with a header of constants."""
    import jax

    prof = triple.profile
    mu = 0.5 * (prof.a + prof.b) + 0.5 * (prof.b - prof.a) * np.cos(np.pi * np.arange(nodes) / (nodes - 1))[::-1]
    buf = io.StringIO()
    r = lambda v: repr(float(v))
    buf.write(f"# tau = {r(triple.tau)}\n# nu = {r(triple.nu)}\n# lam = {r(prof.lam)}\n")
    buf.write(f"# c = {r(prof.c)}\n# shoot_tol = {r(prof.shoot_tol)}\n")
    buf.write(f"# f_shift = {r(triple.info['f_shift'])}\n# columns = mu phi dphi f\n")
    dphi = jax.grad(prof.phi)
    for m in mu:
        buf.write(f"{r(m)} {r(prof.phi(m))} {r(dphi(m))} {r(triple.f_profile(m))}\n")
    return buf.getvalue()


def import_profile(text: str) -> dict:
    """Parse an exported profile table into its header constants and columns."""
    header, rows = {}, []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            key = key.strip()
            header[key] = val.strip() if key == "columns" else float(val)
        else:
            rows.append([float(v) for v in line.split()])
    table = np.array(rows)
    return {"header": header, "mu": table[:, 0], "phi": table[:, 1], "dphi": table[:, 2], "f": table[:, 3]}
