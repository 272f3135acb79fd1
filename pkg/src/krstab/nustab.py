"""The nu-functional at a shrinking soliton: W, its first and second variations, and the
instability certificate built from twisted harmonic (1,1)-forms.

Perturbations are parametrised families ``family(x, P)`` so that every
compiled quantity can be reused across seeds; only the parameter array
changes between calls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

from . import geomkernel as gk
from . import spectra as sp
from .basis import LegendreSeries, clenshaw, to_unit
from .errors import DimensionError, DomainError
from .quadrature import chunked, weighted_quadrature
from .soliton import SolitonTriple
from .varops import divf_divf_field

KERNEL_TOL = 1e-8
PAIRING_TOL = 1e-8
FAMILY_DEGREE = 4


# ---------------------------------------------------------------------------
# perturbation families


@dataclass(frozen=True)
class PerturbationField:
    """Symmetric 2-tensor field ``family(x, params)``; ``key`` names the family for caching."""

    family: Callable
    params: np.ndarray
    key: str
    label: str = ""
    symmetry_class: str = "invariant"

    def __call__(self, x):
        return self.family(x, jnp.asarray(self.params))

    def scaled(self, c: float) -> "PerturbationField":
        return PerturbationField(self.family, c * np.asarray(self.params), self.key, self.label, self.symmetry_class)


def _chart(triple: SolitonTriple) -> str:
    if triple.key in ("koiso-cao", "fubini-study-2"):
        return "calabi"
    if triple.key == "cp1xcp1":
        return "product"
    if triple.key.startswith("flat-torus"):
        return "flat"
    return "sphere"


def _second_block(triple: SolitonTriple):
    kind, metric, n = _chart(triple), triple.metric, triple.n
    if kind == "calabi":
        def base(x):  # mu times the pulled-back base metric
            c = 2.0 * x[0] / (1.0 + x[2] ** 2 + x[3] ** 2) ** 2
            return jnp.zeros((4, 4)).at[2, 2].set(c).at[3, 3].set(c)

        return base
    if kind == "product":
        return lambda x: jnp.zeros((4, 4)).at[2:, 2:].set(metric(x)[2:, 2:])
    return lambda x: jnp.zeros((n, n))


def invariant_tensor_family(triple: SolitonTriple) -> Callable:
    """h = a g + c G2 + e ds.ds + k sym(ds . (ds o J)), coefficients Legendre in s.

    G2 is the part of g tangent to the second factor (the base on Calabi
    charts); every term is a smooth invariant tensor on the closed manifold.
    """
    a, b, n, metric = triple.reduction.a, triple.reduction.b, triple.n, triple.metric
    G2 = _second_block(triple)
    Jf = triple.J

    def family(x, P):
        t = to_unit(x[0], a, b)
        ca, cc, ce, ck = (clenshaw(P[i], t) for i in range(4))
        ds = jnp.zeros(n).at[0].set(1.0)
        out = ca * metric(x) + cc * G2(x) + ce * jnp.outer(ds, ds)
        if Jf is not None:
            dsJ = Jf(x)[0, :]
            out = out + 0.5 * ck * (jnp.outer(ds, dsJ) + jnp.outer(dsJ, ds))
        return out

    return family


def invariant_scalar_family(triple: SolitonTriple) -> Callable:
    a, b = triple.reduction.a, triple.reduction.b
    return lambda x, p: clenshaw(p, to_unit(x[0], a, b))


def invariant_oneform_family(triple: SolitonTriple) -> Callable:
    """alpha = a(s) ds + k(s) ds o J."""
    a, b, n = triple.reduction.a, triple.reduction.b, triple.n
    Jf = triple.J

    def family(x, P):
        t = to_unit(x[0], a, b)
        out = clenshaw(P[0], t) * jnp.zeros(n).at[0].set(1.0)
        if Jf is not None:
            out = out + clenshaw(P[1], t) * Jf(x)[0, :]
        return out

    return family


def seeded_perturbation(triple: SolitonTriple, seed: int, degree: int = FAMILY_DEGREE,
                        scale: float = 0.5) -> PerturbationField:
    rng = np.random.default_rng(seed)
    P = scale * rng.standard_normal((4, degree + 1)) / (1.0 + np.arange(degree + 1))
    return PerturbationField(invariant_tensor_family(triple), P, "inv-tensor", f"seed {seed}")


def metric_perturbation(triple: SolitonTriple, c: float = 1.0) -> PerturbationField:
    P = np.zeros((4, FAMILY_DEGREE + 1))
    P[0, 0] = c
    return PerturbationField(invariant_tensor_family(triple), P, "inv-tensor", "g")


# ---------------------------------------------------------------------------
# compiled helpers


def _batched(triple: SolitonTriple, name: str, fn: Callable, nargs: int):
    key = ("nustab", name)
    if key not in triple._cache:
        triple._cache[key] = chunked(jax.jit(jax.vmap(fn, in_axes=(0,) + (None,) * nargs)))
    return triple._cache[key]


def _integrate(triple: SolitonTriple, name: str, fn: Callable, args: tuple, weighted: bool = True,
               **kw) -> float:
    f = triple.f
    full = (lambda x, *a: fn(x, *a) * jnp.exp(-f(x))) if weighted else fn
    batched = _batched(triple, name + (":w" if weighted else ":u"), full, len(args))
    jargs = tuple(jnp.asarray(a) for a in args)
    return weighted_quadrature(triple.reduction, lambda pts: batched(jnp.asarray(pts), *jargs), **kw)


def _ginv(metric, x):
    return jnp.linalg.inv(metric(x))


def weighted_norm2(triple: SolitonTriple, h: PerturbationField) -> float:
    metric, fam = triple.metric, h.family
    fn = lambda x, P: gk.inner(_ginv(metric, x), fam(x, P), fam(x, P))
    return _integrate(triple, "norm2:" + h.key, fn, (h.params,))


def prefactor(triple: SolitonTriple) -> float:
    return (4.0 * np.pi * triple.tau) ** (-triple.n / 2)


# ---------------------------------------------------------------------------
# W functional and its first variation


def _w_density(metric, f, tau):
    R = gk.scalar_curvature(metric)
    grad = gk.gradient(metric, f)

    def out(x):
        n = x.shape[0]
        return tau * (R(x) + jax.grad(f)(x) @ grad(x)) + f(x) - n

    return out


def w_functional(triple: SolitonTriple, f: Optional[Callable] = None, tau: Optional[float] = None,
                 metric_scale: float = 1.0, f_key: str = "triple", **kw) -> float:
    """W(c g, f, tau) = int [tau (R + |grad f|^2) + f - n] (4 pi tau)^{-n/2} e^{-f} dV.

    ``f`` is a scalar field ``f(x)``; pass a distinct ``f_key`` per field to
    keep compiled functions apart.
    """
    tau = triple.tau if tau is None else float(tau)
    f = triple.f if f is None else f
    metric, n = triple.metric, triple.n

    def dens(x, c, t):
        scaled = lambda y: c * metric(y)
        return _w_density(scaled, f, t)(x) * jnp.exp(-f(x))

    batched = _batched(triple, "W:" + f_key, dens, 2)
    c, t = jnp.asarray(metric_scale), jnp.asarray(tau)
    val = weighted_quadrature(triple.reduction, lambda pts: batched(jnp.asarray(pts), c, t),
                              metric_scale=metric_scale, **kw)
    return val * (4.0 * np.pi * tau) ** (-n / 2)


def first_variation(triple: SolitonTriple, h: PerturbationField) -> float:
    """-(4 pi tau)^{-n/2} int <tau (Ric + Hess f) - g/2, h> e^{-f} dV."""
    metric, tau, fam = triple.metric, triple.tau, h.family
    sol = triple.soliton_tensor()

    def fn(x, P):
        return gk.inner(_ginv(metric, x), tau * sol(x), fam(x, P))

    return -prefactor(triple) * _integrate(triple, "firstvar:" + h.key, fn, (h.params,))


def euler_lagrange_residual(triple: SolitonTriple, points: int = 200, seed: int = 0) -> float:
    """sup |tau (-2 Delta f + |grad f|^2 - R) - f + n + nu| over samples."""
    metric, f, tau, nu = triple.metric, triple.f, triple.tau, triple.nu
    R = gk.scalar_curvature(metric)
    lap = gk.laplacian(metric, f)
    grad = gk.gradient(metric, f)

    def fn(x):
        n = x.shape[0]
        return tau * (-2.0 * lap(x) + jax.grad(f)(x) @ grad(x) - R(x)) - f(x) + n + nu

    return float(np.max(np.abs(triple.evaluate("el-residual", fn, triple.sample(points, seed)))))


def compatibility(triple: SolitonTriple) -> float:
    return prefactor(triple) * triple.integrate("one", lambda x: 1.0 + 0.0 * x[0])


# ---------------------------------------------------------------------------
# v_h, C(h, g) and N


@dataclass
class VhSolution:
    series: LegendreSeries
    norm: float
    kernel_component: float
    residual: float
    rhs_norm: float

    def __call__(self, x):
        return self.series(x[0])


def _solve_shifted(disc: sp.SLDiscretisation, rhs_values, shift: float):
    """Solve (Delta_f + shift) v = rhs on the complement of the resonant eigenspace."""
    b = disc.load(rhs_values)
    proj = disc.evecs.T @ b
    denom = disc.evals + shift
    mask = np.abs(denom) < KERNEL_TOL
    kernel = float(np.linalg.norm(proj[mask]))
    alpha = np.where(mask, 0.0, proj / np.where(mask, 1.0, denom))
    projected = rhs_values - disc.V @ (disc.evecs[:, mask] @ proj[mask]) if mask.any() else rhs_values
    return disc.evecs @ alpha, kernel, projected


def solve_vh(triple: SolitonTriple, h: PerturbationField, degree: int = sp.DEFAULT_DEGREE) -> VhSolution:
    """Solve Delta_f v + v/(2 tau) = div_f div_f h on invariant functions."""
    if h.symmetry_class != "invariant":
        raise DomainError("solve_vh supports invariant perturbations only")
    disc = sp.discretise(triple, degree)
    pts = triple.reduction.points(disc.nodes)
    fam = h.family
    rhs_fn = lambda x, P: divf_divf_field(triple.metric, triple.f, lambda y: fam(y, P))(x)
    rhs = np.asarray(_batched(triple, "divfdivf:" + h.key, rhs_fn, 1)(jnp.asarray(pts), jnp.asarray(h.params)))
    coeffs, kernel, projected = _solve_shifted(disc, rhs, triple.lam)
    series = disc.series(coeffs)
    vals = series.eval(disc.nodes)
    lhs = sp.apply_weighted_laplacian(triple, series, pts) + triple.lam * vals
    residual = disc.weighted_norm(lhs - projected)
    return VhSolution(series, disc.weighted_norm(vals), kernel, residual, disc.weighted_norm(rhs))


def c_constant(triple: SolitonTriple, h: PerturbationField) -> float:
    """C(h, g) = int <Ric, h> e^{-f} / int R e^{-f}."""
    metric, fam = triple.metric, h.family
    ric = gk.ricci(metric)
    R = gk.scalar_curvature(metric)
    den = triple.integrate("scalar", R)
    if abs(den) < 1e-12:
        raise DomainError("int R e^{-f} dV vanishes")
    num = _integrate(triple, "ric-h:" + h.key, lambda x, P: gk.inner(_ginv(metric, x), ric(x), fam(x, P)),
                     (h.params,))
    return num / den


def _n_family(triple: SolitonTriple, fam: Callable):
    """N(h)(x) as a function of (x, P, v coefficients, C)."""
    metric, f = triple.metric, triple.f
    a, b = triple.reduction.a, triple.reduction.b
    rm = gk.riemann(metric)
    ric = gk.ricci(metric)

    def N(x, P, c, C):
        h = lambda y: fam(y, P)
        v = lambda y: clenshaw(c, to_unit(y[0], a, b))
        ginv = _ginv(metric, x)
        lapf = gk.weighted_laplacian(metric, f, h)(x)
        rmh = gk.rm_on_symmetric(rm(x), ginv, h(x))
        dd = gk.div_star(metric, gk.weighted_divergence(metric, f, h))(x)
        hv = gk.hessian(metric, v)(x)
        return 0.5 * lapf + rmh + dd + 0.5 * hv - C * ric(x)

    return N


@dataclass
class NOperator:
    """N(h) assembled for one perturbation; callable as a tensor field."""

    triple: SolitonTriple
    h: PerturbationField
    vh: VhSolution
    C: float

    def __call__(self, x):
        N = _n_family(self.triple, self.h.family)
        return N(x, jnp.asarray(self.h.params), jnp.asarray(self.vh.series.coeffs), self.C)

    def args(self):
        return (self.h.params, self.vh.series.coeffs, self.C)

    def evaluate(self, pts) -> np.ndarray:
        fn = _batched(self.triple, "N:" + self.h.key, _n_family(self.triple, self.h.family), 3)
        return np.asarray(fn(jnp.asarray(pts), *(jnp.asarray(a) for a in self.args())))


def n_operator(triple: SolitonTriple, h: PerturbationField, vh: Optional[VhSolution] = None) -> NOperator:
    vh = solve_vh(triple, h) if vh is None else vh
    return NOperator(triple, h, vh, c_constant(triple, h))


def n_pairing(triple: SolitonTriple, N: NOperator, h2: PerturbationField) -> float:
    """<N(h1), h2>_f = int <N h1, h2> e^{-f} dV."""
    metric = triple.metric
    Nf = _n_family(triple, N.h.family)
    fam2 = h2.family

    def fn(x, P, c, C, P2):
        return gk.inner(_ginv(metric, x), Nf(x, P, c, C), fam2(x, P2))

    name = "Npair:" + N.h.key + "|" + h2.key
    return _integrate(triple, name, fn, N.args() + (h2.params,))


def n_residual(triple: SolitonTriple, N: NOperator, eigenvalue: float) -> float:
    """|| N(h) - eigenvalue h ||_f."""
    metric = triple.metric
    Nf = _n_family(triple, N.h.family)
    fam = N.h.family

    def fn(x, P, c, C, lam):
        D = Nf(x, P, c, C) - lam * fam(x, P)
        return gk.inner(_ginv(metric, x), D, D)

    val = _integrate(triple, "Nres:" + N.h.key, fn, N.args() + (eigenvalue,))
    return float(np.sqrt(max(val, 0.0)))


def second_variation_form(triple: SolitonTriple, h1: PerturbationField, h2: PerturbationField) -> float:
    """tau (4 pi tau)^{-n/2} int <h2, N h1> e^{-f} dV."""
    if not np.any(np.asarray(h2.params)):
        return 0.0
    N = n_operator(triple, h1)
    return triple.tau * prefactor(triple) * n_pairing(triple, N, h2)


def einstein_n_operator(triple: SolitonTriple, h: PerturbationField, degree: int = sp.DEFAULT_DEGREE):
    """Einstein specialisation assembled from unweighted operators.

    v solves Delta v + v/(2 tau) = div div h by a direct dense solve, and the
    constant term is g/(2 n tau vol) int tr h dV.
    """
    if not triple.einstein:
        raise DomainError(f"{triple.key} is not an Einstein fixture")
    metric, tau, n = triple.metric, triple.tau, triple.n
    red = triple.reduction
    disc = sp.discretise(triple, degree)
    pts = red.points(disc.nodes)
    fam = h.family
    divdiv = lambda x, P: gk.divergence(metric, gk.divergence(metric, lambda y: fam(y, P)))(x)
    rhs = np.asarray(_batched(triple, "divdiv:" + h.key, divdiv, 1)(jnp.asarray(pts), jnp.asarray(h.params)))
    dens = red.density(pts)
    ginv_ss = red.inverse_metric_ss(pts)
    qw = disc.qweights
    A = -(disc.D.T * (qw * dens * ginv_ss)) @ disc.D
    B = (disc.V.T * (qw * dens)) @ disc.V
    coeffs = np.linalg.lstsq(A + B / (2.0 * tau), disc.V.T @ (qw * dens * rhs), rcond=None)[0]
    vol = triple.integrate("vol", lambda x: 1.0 + 0.0 * x[0], weighted=False)
    tr_int = _integrate(triple, "trh:" + h.key, lambda x, P: jnp.trace(_ginv(metric, x) @ fam(x, P)),
                        (h.params,), weighted=False)
    const = tr_int / (2.0 * n * tau * vol)
    a, b = red.a, red.b
    rm = gk.riemann(metric)

    def N(x, P, c, k):
        hh = lambda y: fam(y, P)
        v = lambda y: clenshaw(c, to_unit(y[0], a, b))
        ginv = _ginv(metric, x)
        rough = gk.rough_laplacian(metric, hh)(x)
        dd = gk.div_star(metric, gk.divergence(metric, hh))(x)
        return 0.5 * rough + gk.rm_on_symmetric(rm(x), ginv, hh(x)) + dd \
            + 0.5 * gk.hessian(metric, v)(x) - k * metric(x)

    batched = _batched(triple, "NE:" + h.key, N, 3)
    return lambda p: np.asarray(batched(jnp.asarray(np.atleast_2d(p)), jnp.asarray(h.params),
                                        jnp.asarray(coeffs), jnp.asarray(const)))


# ---------------------------------------------------------------------------
# the certificate


@dataclass
class StabilityReport:
    fixture: str
    pairing: float
    h_norm2: float
    vh_norm: float
    C_value: float
    eigentensor_residual: float
    second_variation: float
    verdict: str
    sigma_coefficients: list
    rho_orthogonality: float
    kernel_component: float
    tolerance: float = PAIRING_TOL
    provenance: dict = field(default_factory=dict)

    @property
    def expected_pairing(self) -> float:
        return self.h_norm2 / (2.0 * self.provenance["tau"])

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "fixture", "pairing", "h_norm2", "vh_norm", "C_value", "eigentensor_residual",
            "second_variation", "verdict", "rho_orthogonality", "kernel_component", "tolerance")}
        out["sigma_coefficients"] = [float(c) for c in self.sigma_coefficients]
        out["expected_pairing"] = self.expected_pairing
        out["provenance"] = self.provenance
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def verdict_for(pairing: float, h_norm2: float, tol: float = PAIRING_TOL) -> str:
    if pairing > tol * h_norm2:
        return "unstable-direction-found"
    if pairing < -tol * h_norm2:
        return "nonpositive-on-basis"
    return "indefinite-unknown"


def _form_inner(triple: SolitonTriple, name: str, s1: Callable, s2: Callable) -> float:
    metric = triple.metric
    return triple.integrate(name, lambda x: 0.5 * gk.inner(_ginv(metric, x), s1(x), s2(x)))


def twisted_perturbation(triple: SolitonTriple, nclasses: int) -> Callable:
    """Family P -> sigma_J with sigma = form_family(x, P[:nclasses], P[nclasses:])."""
    Jf = triple.J
    forms = sp.form_family(triple)

    def family(x, P):
        return gk.twist(forms(x, P[:nclasses], P[nclasses:]), Jf(x))

    return family


def instability_certificate(triple: SolitonTriple, basis: Optional[list] = None) -> StabilityReport:
    """Build sigma in the twisted harmonic span orthogonal to rho and pair N(sigma_J) with sigma_J."""
    if triple.J is None:
        raise DimensionError(f"{triple.key} is not Kahler")
    if basis is None:
        basis = sp.twisted_harmonic_basis(triple)
    if len(basis) < 2:
        raise DimensionError(f"twisted harmonic space has dimension {len(basis)} < 2")
    th1, th2 = basis[0].sigma, basis[1].sigma
    rho = sp.ricci_form(triple)
    m1 = _form_inner(triple, "cert-rho1", th1, rho)
    m2 = _form_inner(triple, "cert-rho2", th2, rho)
    lam, mu = m2, -m1
    if lam == 0.0 and mu == 0.0:
        lam = 1.0
    g11 = _form_inner(triple, "cert-11", th1, th1)
    g12 = _form_inner(triple, "cert-12", th1, th2)
    g22 = _form_inner(triple, "cert-22", th2, th2)
    norm = np.sqrt(lam * lam * g11 + 2 * lam * mu * g12 + mu * mu * g22)
    coeffs = np.array([lam, mu]) / norm
    w1, c1 = basis[0].args()
    w2, c2 = basis[1].args()
    params = np.concatenate([coeffs[0] * np.asarray(w1) + coeffs[1] * np.asarray(w2),
                             coeffs[0] * np.asarray(c1) + coeffs[1] * np.asarray(c2)])
    h = PerturbationField(twisted_perturbation(triple, len(w1)), params, "sigmaJ", "sigma_J")
    hn2 = weighted_norm2(triple, h)
    vh = solve_vh(triple, h)
    N = n_operator(triple, h, vh)
    pairing = n_pairing(triple, N, h)
    resid = n_residual(triple, N, triple.lam)
    orth = abs(coeffs[0] * m1 + coeffs[1] * m2)
    prov = {"fixture": triple.key, "tau": triple.tau, "nu": triple.nu,
            "basis_tags": [b.cohomology_tag for b in basis[:2]],
            "vh_degree": vh.series.coeffs.size - 1, "pairing_tol": PAIRING_TOL}
    return StabilityReport(triple.key, pairing, hn2, vh.norm, N.C, resid,
                           triple.tau * prefactor(triple) * pairing,
                           verdict_for(pairing, hn2), list(coeffs), orth, vh.kernel_component,
                           provenance=prov)


def lhat_check(triple: SolitonTriple) -> dict:
    """||Delta_{f,H} rho||_f and ||(1/2) Delta_f Ric + Rm(Ric) - Ric/(2 tau)||_f."""
    metric, f = triple.metric, triple.f
    ric = gk.ricci(metric)
    rm = gk.riemann(metric)
    lapf = gk.weighted_laplacian(metric, f, ric)
    lam = triple.lam
    out = {}
    if triple.J is not None:
        rho = sp.ricci_form(triple)
        tw = gk.twisted_hodge_laplacian(metric, f, rho)
        out["rho_twisted"] = np.sqrt(max(triple.integrate(
            "lhat-rho", lambda x: 0.5 * gk.inner(_ginv(metric, x), tw(x), tw(x))), 0.0))

    def eig(x):
        ginv = _ginv(metric, x)
        D = 0.5 * lapf(x) + gk.rm_on_symmetric(rm(x), ginv, ric(x)) - lam * ric(x)
        return gk.inner(ginv, D, D)

    out["ric_eigen"] = np.sqrt(max(triple.integrate("lhat-ric", eig), 0.0))
    return {k: float(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# consistency checks


def adjointness_defect(triple: SolitonTriple, alpha_params, h: PerturbationField) -> float:
    """<div* alpha, h>_f - <alpha, div_f h>_f for an invariant 1-form alpha."""
    metric, f = triple.metric, triple.f
    afam, hfam = invariant_oneform_family(triple), h.family

    def fn(x, A, P):
        ginv = _ginv(metric, x)
        al = lambda y: afam(y, A)
        hh = lambda y: hfam(y, P)
        lhs = gk.inner(ginv, gk.div_star(metric, al)(x), hh(x))
        rhs = al(x) @ ginv @ gk.weighted_divergence(metric, f, hh)(x)
        return lhs - rhs

    return _integrate(triple, "adjoint:" + h.key, fn, (alpha_params, h.params))


def divergence_integral(triple: SolitonTriple, alpha_params) -> float:
    """int div_f(alpha) e^{-f} dV for an invariant 1-form."""
    metric, f = triple.metric, triple.f
    afam = invariant_oneform_family(triple)
    fn = lambda x, A: gk.weighted_divergence(metric, f, lambda y: afam(y, A))(x)
    return _integrate(triple, "divf-int", fn, (alpha_params,))


def laplacian_integral(triple: SolitonTriple, F_params) -> float:
    """int Delta_f(F) e^{-f} dV for an invariant function."""
    metric, f = triple.metric, triple.f
    ffam = invariant_scalar_family(triple)
    fn = lambda x, p: gk.weighted_laplacian(metric, f, lambda y: ffam(y, p))(x)
    return _integrate(triple, "lapf-int", fn, (F_params,))


def potential_eigen_residual(triple: SolitonTriple) -> dict:
    """Delta_f f~ + f~/tau for f~ = f - nu - n/2, weighted L2 over the Galerkin nodes."""
    disc = sp.discretise(triple)
    pts = triple.reduction.points(disc.nodes)
    metric, f, tau, n, nu = triple.metric, triple.f, triple.tau, triple.n, triple.nu
    shift = nu + n / 2.0
    ft = lambda x: f(x) - shift
    lap = gk.weighted_laplacian(metric, f, ft)
    vals = triple.evaluate("ftilde", ft, pts)
    r = triple.evaluate("ftilde-lapf", lap, pts) + vals / tau
    res, norm = disc.weighted_norm(r), disc.weighted_norm(vals)
    return {"residual": res, "norm": norm, "relative": res / norm if norm > 1e-12 else res}


def induced_variation_check(triple: SolitonTriple, h: PerturbationField) -> dict:
    """Induced variations with delta tau / tau = C(h, g).

    Linearising the Euler-Lagrange equation gives, for w = tr h - 2 delta f,
    Delta_f w + w/(2 tau) = div_f div_f h + C (Delta_f f + n/(2 tau)).
    Then v = w - 2 C (f - nu) must solve the v_h equation, and the variation of
    the nu normalisation integral must vanish.
    """
    disc = sp.discretise(triple)
    red = triple.reduction
    pts = red.points(disc.nodes)
    metric, f, tau, n, nu = triple.metric, triple.f, triple.tau, triple.n, triple.nu
    C = c_constant(triple, h)
    fam = h.family
    dd = lambda x, P: divf_divf_field(metric, f, lambda y: fam(y, P))(x)
    ddv = np.asarray(_batched(triple, "divfdivf:" + h.key, dd, 1)(jnp.asarray(pts), jnp.asarray(h.params)))
    lapf_f = triple.evaluate("lapf-f", gk.weighted_laplacian(metric, f, f), pts)
    rhs = ddv + C * (lapf_f + n / (2.0 * tau))
    coeffs, kernel, _ = _solve_shifted(disc, rhs, triple.lam)
    w = disc.series(coeffs)
    fvals = triple.evaluate("f", f, pts)
    v = w.eval(disc.nodes) - 2.0 * C * (fvals - nu)
    lap_v = sp.apply_weighted_laplacian(triple, w, pts) - 2.0 * C * lapf_f
    e1 = disc.weighted_norm(lap_v + v / (2.0 * tau) - ddv)
    direct = solve_vh(triple, h)
    diff = disc.weighted_norm(direct.series.eval(disc.nodes) - v)
    trh = np.asarray(_batched(triple, "trh-pt:" + h.key, lambda x, P: jnp.trace(_ginv(metric, x) @ fam(x, P)), 1)(
        jnp.asarray(pts), jnp.asarray(h.params)))
    df = 0.5 * (trh - w.eval(disc.nodes))
    integrand = -n * C / 2.0 * fvals + df * (1.0 - fvals) + 0.5 * fvals * trh
    integral = float(np.sum(disc.qweights * disc.weight * integrand))
    return {"C": C, "e1_residual": e1, "vh_difference": diff, "normalisation_integral": integral,
            "kernel_component": kernel}
