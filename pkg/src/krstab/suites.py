"""Verification suites run by the ``stab`` command.

Each suite returns a :class:`SuiteResult` of named checks (value, tolerance,
verdict) plus free-form data. A suite that does not apply to a fixture (for
example the spectrum of a flat torus) is reported as skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from . import geomkernel as gk
from . import nustab as ns
from . import spectra as sp
from . import varops as vo
from .config import RunConfig
from .errors import StabError
from .soliton import SOLITON_FIXTURES, SolitonTriple, fixture


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "passed": self.passed, "detail": self.detail}


@dataclass
class SuiteResult:
    name: str
    checks: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    skipped: str = ""

    @property
    def status(self) -> str:
        if self.skipped:
            return "skipped"
        return "passed" if all(c.passed for c in self.checks) else "failed"

    def below(self, name: str, value: float, tol: float, detail: str = "") -> None:
        value = float(value)
        self.checks.append(Check(name, value, tol, bool(value < tol), detail))

    def above(self, name: str, value: float, tol: float, detail: str = "") -> None:
        value = float(value)
        self.checks.append(Check(name, value, tol, bool(value > tol), detail))

    def fail(self, name: str, detail: str) -> None:
        self.checks.append(Check(name, float("nan"), float("nan"), False, detail))

    def to_dict(self) -> dict:
        out = {"name": self.name, "status": self.status, "checks": [c.to_dict() for c in self.checks],
               "data": self.data}
        if self.skipped:
            out["skipped"] = self.skipped
        return out


def _spec(name: str):
    obj = fixture(name)
    return obj.spec if isinstance(obj, SolitonTriple) else obj


def _triple(name: str):
    return fixture(name) if name in SOLITON_FIXTURES else None


_JIT = {}


def _batched(key, fn):
    if key not in _JIT:
        _JIT[key] = jax.jit(jax.vmap(fn, in_axes=(0, None)))
    return _JIT[key]


def _seeded_one_one(n: int, seed: int) -> np.ndarray:
    A = np.random.default_rng(seed).standard_normal((n, n))
    return A - A.T


# ---------------------------------------------------------------------------


def run_identities(cfg: RunConfig) -> SuiteResult:
    res = SuiteResult("identities")
    spec = _spec(cfg.fixture)
    metric, Jf, n = spec.metric, spec.complex_structure, spec.dim
    rmf = gk.riemann(metric)

    def symmetry(x, _):
        rm = rmf(x)
        bianchi = rm + jnp.einsum("ijkl->jkil", rm) + jnp.einsum("ijkl->kijl", rm)
        worst = jnp.max(jnp.array([
            jnp.max(jnp.abs(rm + jnp.swapaxes(rm, 0, 1))),
            jnp.max(jnp.abs(rm + jnp.swapaxes(rm, 2, 3))),
            jnp.max(jnp.abs(rm - jnp.transpose(rm, (2, 3, 0, 1)))),
            jnp.max(jnp.abs(bianchi)),
        ]))
        return worst / jnp.maximum(jnp.max(jnp.abs(rm)), 1.0)

    def sigma_twist(x, A):
        J = Jf(x)
        sigma = 0.5 * (A + J.T @ A @ J)
        ginv = jnp.linalg.inv(metric(x))
        rm = rmf(x)
        D = 2.0 * gk.rm_on_symmetric(rm, ginv, gk.twist(sigma, J)) - gk.twist(gk.rm_on_forms(rm, ginv, sigma), J)
        return jnp.sqrt(jnp.sum(D * D))

    def two_route(x, P):
        h = lambda y: vo.tensor_family(y, P[0])
        f = lambda y: vo.scalar_family(y, P[1][:, 0, 0])
        direct = jnp.exp(f(x)) * gk.divergence(metric, lambda y: jnp.exp(-f(y)) * h(y))(x)
        expanded = gk.weighted_divergence(metric, f, h)(x)
        return jnp.max(jnp.abs(direct - expanded)) / jnp.maximum(jnp.max(jnp.abs(expanded)), 1.0)

    npts = int(cfg.tol("points"))
    sym_all, twist_all, div_all = [], [], []
    for seed in cfg.seeds:
        pts = jnp.asarray(spec.sample(npts, seed))
        sym_all.append(float(np.max(_batched((spec.key, "sym"), symmetry)(pts, 0.0))))
        if Jf is not None:
            A = jnp.asarray(_seeded_one_one(n, seed))
            twist_all.append(float(np.max(_batched((spec.key, "l41"), sigma_twist)(pts, A))))
        k = vo.n_features(n)
        Ph = vo.seeded_params(n, seed, "tensor")
        pf = np.zeros((k, n, n))
        pf[:, 0, 0] = vo.seeded_params(n, seed + 1000, "scalar")
        P = jnp.asarray(np.stack([Ph, pf]))
        div_all.append(float(np.max(_batched((spec.key, "div2"), two_route)(pts, P))))
    res.below("curvature_symmetry", max(sym_all), cfg.tol("curvature_symmetry"))
    if twist_all:
        res.below("sigma_twist", max(twist_all), cfg.tol("sigma_twist"))
    res.below("divf_two_route", max(div_all), cfg.tol("divf_two_route"))
    res.data = {"curvature_symmetry": sym_all, "sigma_twist": twist_all, "divf_two_route": div_all}
    return res


def run_variations(cfg: RunConfig) -> SuiteResult:
    res = SuiteResult("variations")
    spec = _spec(cfg.fixture)
    n = spec.dim
    table = {}
    npts = min(int(cfg.tol("points")), 8)
    for seed in cfg.seeds:
        v = vo.VariationInput(spec.metric, vo.seeded_params(n, seed, "tensor"),
                              vo.seeded_params(n, seed + 1000, "scalar"),
                              vo.seeded_params(n, seed + 2000, "scalar"), spec.sample(npts, seed))
        for name in ("Ric", "R", "function_ops", "Hess", "nu_integrand"):
            rep = vo.fd_oracle(name, v)
            table[f"{name}/seed{seed}"] = rep.rel_error
            res.below(f"fd:{name}:seed{seed}", rep.rel_error, cfg.tol("fd_rel_error"))
        f = lambda y, p=v.f_params: vo.scalar_family(y, jnp.asarray(p))
        h = lambda y, P=v.h_params: vo.tensor_family(y, jnp.asarray(P))
        a = vo.divf_divf(spec.metric, f, h, v.points, "expanded")
        b = vo.divf_divf(spec.metric, f, h, v.points, "iterated")
        err = float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1.0))
        table[f"divf_divf/seed{seed}"] = err
        res.below(f"divf_divf:seed{seed}", err, cfg.tol("divf_two_route"))
    res.data = {"rel_errors": table}
    return res


def run_soliton(cfg: RunConfig) -> SuiteResult:
    res = SuiteResult("soliton")
    t = _triple(cfg.fixture)
    if t is None:
        res.skipped = f"{cfg.fixture} is not a shrinking soliton fixture"
        return res
    res.below("compatibility", abs(ns.compatibility(t) - 1.0), cfg.tol("compatibility"))
    sol = t.soliton_tensor()
    sups = []
    for seed in cfg.seeds:
        vals = t.evaluate("soliton", sol, t.sample(200, seed))
        sups.append(float(np.max(np.abs(vals))))
        res.below(f"euler_lagrange:seed{seed}", ns.euler_lagrange_residual(t, 200, seed), cfg.tol("euler_lagrange"))
    res.below("soliton_residual", max(sups), cfg.tol("soliton_residual"))
    ratios = []
    for seed in cfg.seeds:
        h = ns.seeded_perturbation(t, seed)
        ratios.append(abs(ns.first_variation(t, h)) / np.sqrt(ns.weighted_norm2(t, h)))
        res.below(f"first_variation:seed{seed}", ratios[-1], cfg.tol("first_variation"))
    hess = gk.hessian(t.metric, t.f)
    hnorm = np.sqrt(t.integrate("hess-norm", lambda x: gk.inner(jnp.linalg.inv(t.metric(x)), hess(x), hess(x))))
    if not t.einstein:
        res.above("non_einstein", hnorm, cfg.tol("non_einstein"))
    res.data = {"tau": t.tau, "nu": t.nu, "f_shift": t.info["f_shift"], "soliton_residual": sups,
                "first_variation_ratio": ratios, "hess_f_norm": float(hnorm)}
    if "c" in t.info:
        res.data["c"] = t.info["c"]
    return res


def run_spectrum(cfg: RunConfig) -> SuiteResult:
    res = SuiteResult("spectrum")
    t = _triple(cfg.fixture)
    if t is None:
        res.skipped = f"{cfg.fixture} has no reduced Bakry-Emery spectrum"
        return res
    rep = sp.bakry_emery_spectrum(t, k=int(cfg.tol("eigenvalues")))
    res.below("max_residual", float(np.max(rep.residuals)), cfg.tol("spectrum_residual"))
    res.below("trivial_eigenvalue", abs(rep.eigenvalues[0]), cfg.tol("spectrum_residual"))
    rel = np.abs(rep.shooting - rep.eigenvalues) / np.maximum(1.0, np.abs(rep.eigenvalues))
    res.below("shooting_agreement", float(np.max(rel)), cfg.tol("shooting_agreement"))
    bounds = sp.bound_checks(t, rep)
    res.checks.append(Check("ma_futaki_sano", bounds["ma_futaki_sano_margin"], 1e-9,
                            bounds["ma_futaki_sano_ok"]))
    if "lichnerowicz_ok" in bounds:
        res.checks.append(Check("lichnerowicz", bounds["lichnerowicz_margin"], 1e-9, bounds["lichnerowicz_ok"]))
    res.data = {"spectrum": rep.to_dict(), "gap_scan": sp.gap_scan(rep, t.tau), "bounds": bounds}
    res.data["_csv"] = rep.to_csv()
    return res


def run_certificate(cfg: RunConfig) -> SuiteResult:
    res = SuiteResult("certificate")
    t = _triple(cfg.fixture)
    if t is None or t.J is None:
        res.skipped = f"{cfg.fixture} is not a Kahler shrinking soliton fixture"
        return res
    basis = sp.twisted_harmonic_basis(t)
    res.data["basis"] = [{"tag": b.cohomology_tag, "twisted_residual": b.twisted_residual,
                          "closed_residual": b.closed_residual, "coclosed_residual": b.coclosed_residual}
                         for b in basis]
    for b in basis:
        res.below(f"twisted_residual:{b.cohomology_tag}", b.twisted_residual, 1e-6)
    if len(basis) < 2:
        res.above("dimension", len(basis), 1.5, "needs two independent (1,1) classes")
        return res
    rep = ns.instability_certificate(t, basis)
    res.data["report"] = rep.to_dict()
    rel = abs(rep.pairing / rep.expected_pairing - 1.0)
    res.above("pairing_positive", rep.pairing, cfg.tol("pairing") * rep.h_norm2)
    res.below("pairing_vs_expected", rel, cfg.tol("certificate_rel"))
    if t.einstein:
        res.below("eigentensor_residual", rep.eigentensor_residual, 1e-6)
    return res


RUNNERS = {
    "identities": run_identities,
    "variations": run_variations,
    "soliton": run_soliton,
    "spectrum": run_spectrum,
    "certificate": run_certificate,
}


def run_suite(name: str, cfg: RunConfig) -> SuiteResult:
    try:
        return RUNNERS[name](cfg)
    except StabError as exc:
        res = SuiteResult(name)
        res.fail("error", f"{type(exc).__name__}: {exc}")
        return res
