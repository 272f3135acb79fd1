"""Run configuration for the ``stab`` command.

Configs are INI files::

    [run]
    fixture = koiso-cao
    suite = certificate
    seeds = 0, 1, 2
    output = reports/kc.json
    format = json

    [tolerances]
    certificate_rel = 0.01

Every numeric default lives in :data:`DEFAULTS`.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field

from .errors import SchemaError, UnknownFixtureError

SUITES = ("identities", "variations", "soliton", "spectrum", "certificate")
SUITE_ORDER = {name: i for i, name in enumerate(SUITES)}
FORMATS = ("json", "csv")

# name -> (value, meaning)
DEFAULTS = {
    "curvature_symmetry": (1e-10, "relative residual of Rm symmetries and first Bianchi"),
    "sigma_twist": (1e-7, "2 Rm(sigma_J) - R(sigma)_J at sampled points"),
    "divf_two_route": (1e-10, "div_f by definition vs expansion"),
    "fd_rel_error": (1e-6, "variation formula vs Richardson finite differences"),
    "soliton_residual": (1e-6, "sup |Ric + Hess f - g/(2 tau)|"),
    "euler_lagrange": (1e-6, "sup of the scalar soliton equation residual"),
    "compatibility": (1e-8, "|(4 pi tau)^{-n/2} int e^{-f} dV - 1|"),
    "first_variation": (1e-5, "|first variation| / ||h||_f"),
    "non_einstein": (1e-3, "lower bound on ||Hess f||_f for non-Einstein shrinkers"),
    "spectrum_residual": (1e-8, "weighted L2 residual per eigenpair"),
    "shooting_agreement": (1e-6, "Galerkin vs shooting, relative"),
    "certificate_rel": (1e-2, "|pairing / (||h||^2 / 2 tau) - 1|"),
    "pairing": (1e-8, "pairing > tol ||h||^2 means an unstable direction"),
    "eigenvalues": (12.0, "number of Bakry-Emery eigenvalues"),
    "points": (20.0, "sample points per seed for pointwise suites"),
}


def _fixture_known(name: str) -> bool:
    from .fixtures import metric_spec
    from .soliton import SOLITON_FIXTURES

    if name in SOLITON_FIXTURES:
        return True
    try:
        metric_spec(name)
    except UnknownFixtureError:
        return False
    return True


@dataclass(frozen=True)
class RunConfig:
    fixture: str
    suite: str
    seeds: tuple = (0,)
    tolerances: dict = field(default_factory=dict)
    output_path: str = "stab-report.json"
    format: str = "json"

    def __post_init__(self):
        if self.suite not in SUITES + ("all",):
            raise SchemaError(f"unknown suite {self.suite!r}")
        if self.format not in FORMATS:
            raise SchemaError(f"unknown format {self.format!r}")
        if not _fixture_known(self.fixture):
            raise UnknownFixtureError(self.fixture)
        for k, v in self.tolerances.items():
            if k not in DEFAULTS:
                raise SchemaError(f"unknown tolerance {k!r}")
            if not v >= 2.2e-16:
                raise SchemaError(f"tolerance {k} = {v} is below machine epsilon")

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULTS[name][0]))

    @property
    def suites(self) -> tuple:
        return SUITES if self.suite == "all" else (self.suite,)

    def canonical(self) -> dict:
        """Everything that affects results; output location excluded."""
        return {"fixture": self.fixture, "suite": self.suite, "seeds": list(self.seeds),
                "tolerances": {k: self.tol(k) for k in sorted(DEFAULTS)}, "format": self.format}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def parse_seeds(text: str) -> tuple:
    items = [s for s in re.split(r"[,\s]+", text.strip()) if s]
    return tuple(int(s) for s in items)


def load_config(path: str) -> RunConfig:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise SchemaError(f"cannot read config {path}")
    if "run" not in cp:
        raise SchemaError("config needs a [run] section")
    run = cp["run"]
    tols = {k: float(v) for k, v in cp["tolerances"].items()} if "tolerances" in cp else {}
    return RunConfig(
        fixture=run.get("fixture", "").strip(),
        suite=run.get("suite", "all").strip(),
        seeds=parse_seeds(run.get("seeds", "0")),
        tolerances=tols,
        output_path=run.get("output", "stab-report.json").strip(),
        format=run.get("format", "json").strip(),
    )
