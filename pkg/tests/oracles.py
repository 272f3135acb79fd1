"""Independent oracles shared by the test modules.

Nothing here imports krstab geometry: every quantity is rebuilt from closed
forms so agreement with the package is a genuine cross-check.
"""

from __future__ import annotations

import jax
import jax.numpy as jnp
import numpy as np
import sympy as sp
from numpy.polynomial import legendre as L
from scipy.optimize import minimize

jax.config.update("jax_enable_x64", True)


# ---------------------------------------------------------------------------
# symbolic curvature


def symbolic_stereographic_sphere(n: int):
    x = sp.symbols(f"x0:{n}", real=True)
    r2 = sum(xi**2 for xi in x)
    return x, (4 / (1 + r2) ** 2) * sp.eye(n)


def symbolic_fubini_study(m: int, scale=sp.Rational(1, 2)):
    """Real form of scale * i dd-bar log(1 + |z|^2) with z_j = x_{2j} + i x_{2j+1}."""
    x = sp.symbols(f"x0:{2 * m}", real=True)
    z = [x[2 * j] + sp.I * x[2 * j + 1] for j in range(m)]
    s = 1 + sum(x_**2 for x_ in x)
    Z = sp.zeros(m, 2 * m)
    for j in range(m):
        Z[j, 2 * j], Z[j, 2 * j + 1] = 1, sp.I
    H = sp.Matrix(m, m, lambda j, k: scale * ((1 if j == k else 0) / s - sp.conjugate(z[j]) * z[k] / s**2))
    g = 2 * (Z.T * H * Z.conjugate())
    g = g.applyfunc(lambda e: sp.re(sp.expand(e)))
    return x, g


def curvature_from_symbolic(x, g, point):
    """Rm_ijkl with Rm(X,Y,X,Y) = sectional curvature, from exact jets of g.

    Only the metric derivatives are symbolic; connection and curvature are
    assembled numerically from the textbook coordinate formulas.
    """
    n = len(x)
    subs = dict(zip(x, point))
    ev = lambda e: float(sp.N(e.subs(subs), 30))
    G = np.array([[ev(g[i, j]) for j in range(n)] for i in range(n)])
    dG = np.array([[[ev(sp.diff(g[i, j], x[k])) for k in range(n)] for j in range(n)] for i in range(n)])
    ddG = np.array([[[[ev(sp.diff(g[i, j], x[k], x[l])) for l in range(n)] for k in range(n)]
                     for j in range(n)] for i in range(n)])
    Gi = np.linalg.inv(G)
    # Gamma_{kij} (first kind) and its derivatives; dG[i, j, k] = d_k g_ij
    # first[i, j, k] = Gamma_{k; ij} = 1/2 (d_i g_jk + d_j g_ik - d_k g_ij)
    first = 0.5 * (np.einsum("jki->ijk", dG) + np.einsum("ikj->ijk", dG) - np.einsum("ijk->ijk", dG))
    Gam = np.einsum("mk,ijk->mij", Gi, first)
    dfirst = 0.5 * (np.einsum("jkil->lijk", ddG) + np.einsum("ikjl->lijk", ddG) - np.einsum("ijkl->lijk", ddG))
    dGi = -np.einsum("ma,abl,bk->lmk", Gi, dG, Gi)
    dGam = np.einsum("lmk,ijk->lmij", dGi, first) + np.einsum("mk,lijk->lmij", Gi, dfirst)
    # standard R^l_{ijk} = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik
    Rstd = (np.einsum("iljk->lijk", dGam) - np.einsum("jlik->lijk", dGam)
            + np.einsum("lim,mjk->lijk", Gam, Gam) - np.einsum("ljm,mik->lijk", Gam, Gam))
    Rm = -np.einsum("lm,mijk->ijkl", G, Rstd)
    Ric = np.einsum("kl,kilj->ij", Gi, Rm)
    return {"g": G, "Rm": Rm, "Ric": Ric, "R": float(np.einsum("ij,ij->", Gi, Ric)), "Gamma": Gam}


def naive_two_form_op(Rm, ginv, sigma):
    """R(sigma)_ij = Rm_ijkl sigma^kl by explicit loops."""
    n = sigma.shape[0]
    up = np.zeros((n, n))
    for k in range(n):
        for l in range(n):
            up[k, l] = sum(ginv[k, a] * ginv[l, b] * sigma[a, b] for a in range(n) for b in range(n))
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = sum(Rm[i, j, k, l] * up[k, l] for k in range(n) for l in range(n))
    return out


# ---------------------------------------------------------------------------
# nested-minimisation nu


class ZonalSphereNu:
    """nu of the conformal metric (1 + s phi(z)) g_round on S^2, phi zonal.

    Coordinates (z, theta) with g_round = dz^2/(1-z^2) + (1-z^2) dtheta^2.
    f ranges over Legendre series in z of degree ``degree``; the additive
    constant is fixed by compatibility, leaving an unconstrained minimisation
    over the remaining coefficients and log tau.
    """

    def __init__(self, phi_coeffs, degree: int = 24, nodes: int = 160):
        self.phi = np.asarray(phi_coeffs, float)
        self.degree = degree
        z, w = L.leggauss(nodes)
        self.z, self.w = jnp.asarray(z), jnp.asarray(w)
        V = L.legvander(z, degree)[:, 1:]
        D = np.stack([L.legval(z, L.legder(np.eye(degree + 1)[k])) for k in range(1, degree + 1)], axis=1)
        self.V, self.D = jnp.asarray(V), jnp.asarray(D)
        self.phi_v = jnp.asarray(L.legval(z, self.phi))
        dphi = L.legder(self.phi)
        self.dphi_v = jnp.asarray(L.legval(z, dphi))
        # (1 - z^2) phi'' - 2 z phi' = d/dz((1 - z^2) phi')
        self.lap_phi_v = jnp.asarray(L.legval(z, L.legder(dphi)) * (1 - z * z) - 2 * z * L.legval(z, dphi))
        self._w = jax.jit(self._functional)
        self._g = jax.jit(jax.grad(self._functional))
        self._h = jax.jit(jax.hessian(self._functional))

    def _functional(self, x, s):
        z = self.z
        a, log_tau = x[:-1], x[-1]
        tau = jnp.exp(log_tau)
        conf = 1.0 + s * self.phi_v
        # u = log(conf)/2; Delta_0 u = d/dz((1-z^2) u')
        lap_u = 0.5 * s * self.lap_phi_v / conf - 0.5 * (1 - z * z) * (s * self.dphi_v / conf) ** 2
        R = 2.0 * (1.0 - lap_u) / conf
        ft = self.V @ a
        dft = self.D @ a
        dvol = 2.0 * jnp.pi * conf * self.w
        mass = jnp.sum(jnp.exp(-ft) * dvol)
        c = jnp.log(mass / (4.0 * jnp.pi * tau))
        f = ft + c
        grad2 = (1 - z * z) * dft**2 / conf
        integrand = (tau * (R + grad2) + f - 2.0) * jnp.exp(-f)
        return jnp.sum(integrand * dvol) / (4.0 * jnp.pi * tau)

    def nu(self, s: float, x0=None):
        x0 = np.zeros(self.degree + 1) if x0 is None else x0
        if x0[-1] == 0.0:
            x0 = x0.copy()
            x0[-1] = np.log(0.5)
        fun = lambda x: float(self._w(jnp.asarray(x), s))
        jac = lambda x: np.asarray(self._g(jnp.asarray(x), s))
        hess = lambda x: np.asarray(self._h(jnp.asarray(x), s))
        res = minimize(fun, x0, jac=jac, hess=hess, method="trust-exact", options={"gtol": 1e-13})
        return res.fun, res.x

    def second_derivative(self, step: float = 0.04) -> float:
        """Richardson-extrapolated centred second difference of s -> nu(s) at 0."""
        n0, x0 = self.nu(0.0)

        def d2(hh):
            return (self.nu(hh, x0)[0] - 2.0 * n0 + self.nu(-hh, x0)[0]) / hh**2

        a, b = d2(step), d2(step / 2)
        return (4.0 * b - a) / 3.0
