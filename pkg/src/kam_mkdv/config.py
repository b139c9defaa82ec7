"""Configuration settings for the KAM toolkit.

Numerical defaults are module constants that can be overridden from the
environment (or a .env file):
- KAM_MKDV_N_X: spatial truncation (default: 32)
- KAM_MKDV_N_PHI: angle truncation (default: 16)
- KAM_MKDV_LIP_SAMPLES: omega samples per dimension for Lipschitz norms (default: 8)
- KAM_MKDV_FLOW_TOL: Birkhoff flow tolerance (default: 1e-12)
- KAM_MKDV_TRANSPORT_TOL: transport flow tolerance in the reduction (default: 1e-11)
- KAM_MKDV_SERIES_TOL: cutoff for exponential series (default: 1e-16)
- KAM_MKDV_C1: stand-in constant for the Nash-Moser exponent rho (default: 20)
- KAM_MKDV_CHI: scale growth exponent (default: 1.5)
- KAM_MKDV_SMALLNESS: reducibility smallness threshold (default: 1.0)
- KAM_MKDV_LOG_LEVEL: default log level for the CLI (default: INFO)

A run configuration is a JSON document with sections ``model``, ``params``
and ``run``. ``load_run_config`` validates it and rejects unknown keys.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from .errors import ConfigValidationError

load_dotenv()

logger = logging.getLogger(__name__)

# Truncation defaults (desk scale)
DEFAULT_N_X = int(os.environ.get("KAM_MKDV_N_X", "32"))
DEFAULT_N_PHI = int(os.environ.get("KAM_MKDV_N_PHI", "16"))

# Lipschitz sampling
LIP_SAMPLES_PER_DIM = int(os.environ.get("KAM_MKDV_LIP_SAMPLES", "8"))

# Tolerances
FLOW_TOL = float(os.environ.get("KAM_MKDV_FLOW_TOL", "1e-12"))
TRANSPORT_TOL = float(os.environ.get("KAM_MKDV_TRANSPORT_TOL", "1e-11"))
SERIES_TOL = float(os.environ.get("KAM_MKDV_SERIES_TOL", "1e-16"))
REALITY_TOL = float(os.environ.get("KAM_MKDV_REALITY_TOL", "1e-10"))
COND_LIMIT = float(os.environ.get("KAM_MKDV_COND_LIMIT", "1e12"))

# Nash-Moser and reducibility constants
C1_STANDIN = float(os.environ.get("KAM_MKDV_C1", "20"))
CHI = float(os.environ.get("KAM_MKDV_CHI", "1.5"))
SMALLNESS_THRESHOLD = float(os.environ.get("KAM_MKDV_SMALLNESS", "1.0"))

LOG_LEVEL = os.environ.get("KAM_MKDV_LOG_LEVEL", "INFO")


def s0_for(nu: int) -> float:
    """Base Sobolev index s0 = (nu + 2) / 2."""
    return (nu + 2) / 2.0


@dataclass
class MonomialSpec:
    c: float
    kind: str = "const"
    m: int = 0
    p: int = 5
    q: int = 0


@dataclass
class ModelSection:
    sites: List[int] = field(default_factory=lambda: [1])
    sign: int = 1
    lambda_variant: bool = False
    density: List[MonomialSpec] = field(default_factory=list)


@dataclass
class ParamsSection:
    eps: float = 0.05
    a: float = 0.1
    tau: Optional[float] = None
    n_phi: int = DEFAULT_N_PHI
    n_x: int = DEFAULT_N_X
    xi: Optional[List[float]] = None
    omega: Optional[List[float]] = None


@dataclass
class RunSection:
    max_steps: int = 6
    seed: int = 0
    tol_scale: float = 1.0
    linear_solver: str = "reduced"
    out_dir: str = "runs"
    t_final: float = 10.0
    dt: float = 1e-3
    scheme: str = "exponential"
    gamma_sweep: List[float] = field(default_factory=lambda: [1.0, 0.5, 0.25])
    grid_points: int = 1000
    eigen_source: str = "analytic"
    plots: bool = False
    threads: int = 1


@dataclass
class RunConfig:
    """Validated run configuration."""
    model: ModelSection = field(default_factory=ModelSection)
    params: ParamsSection = field(default_factory=ParamsSection)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_SECTIONS = {"model": ModelSection, "params": ParamsSection, "run": RunSection}
_MONOMIAL_KINDS = ("cos", "sin", "const")
_SOLVERS = ("reduced", "direct")
_SCHEMES = ("exponential", "midpoint")
_EIGEN_SOURCES = ("analytic", "final")


def _check_keys(data: Dict[str, Any], allowed: Tuple[str, ...], path: str) -> None:
    if not isinstance(data, dict):
        raise ConfigValidationError(path or "<root>", "expected an object")
    for key in data:
        if key not in allowed:
            raise ConfigValidationError(f"{path}.{key}" if path else key, "unknown key")


def _build_section(name: str, data: Dict[str, Any]):
    cls = _SECTIONS[name]
    allowed = tuple(cls.__dataclass_fields__.keys())
    _check_keys(data, allowed, name)
    values = dict(data)
    if name == "model" and "density" in values:
        monomials = []
        for idx, item in enumerate(values["density"] or []):
            path = f"model.density[{idx}]"
            _check_keys(item, tuple(MonomialSpec.__dataclass_fields__.keys()), path)
            if "c" not in item:
                raise ConfigValidationError(f"{path}.c", "coefficient is required")
            monomials.append(MonomialSpec(**item))
        values["density"] = monomials
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigValidationError(name, str(e))


def validate_run_config(config: RunConfig) -> RunConfig:
    """Cross-field checks; raises ConfigValidationError with the field path."""
    model, params, run = config.model, config.params, config.run

    sites = model.sites
    if not sites:
        raise ConfigValidationError("model.sites", "at least one tangential site is required")
    if any((not isinstance(s, int)) or s <= 0 for s in sites):
        raise ConfigValidationError("model.sites", "sites must be positive integers")
    if len(set(sites)) != len(sites):
        raise ConfigValidationError("model.sites", "sites must be distinct")
    if model.sign not in (1, -1):
        raise ConfigValidationError("model.sign", "sign must be +1 or -1")

    for idx, mono in enumerate(model.density):
        path = f"model.density[{idx}]"
        if mono.kind not in _MONOMIAL_KINDS:
            raise ConfigValidationError(f"{path}.kind", f"kind must be one of {_MONOMIAL_KINDS}")
        if mono.p < 0 or mono.q < 0:
            raise ConfigValidationError(path, "powers must be non-negative")
        if mono.p + mono.q < 5:
            raise ConfigValidationError(path, f"p + q = {mono.p + mono.q} < 5 (density must vanish to order five)")
        if mono.kind == "const" and mono.m != 0:
            raise ConfigValidationError(f"{path}.m", "const monomials carry no harmonic")

    if not (0.0 < params.a < 1.0 / 6.0):
        raise ConfigValidationError("params.a", "a must lie in the open interval (0, 1/6)")
    if params.eps <= 0:
        raise ConfigValidationError("params.eps", "eps must be positive")
    nu = len(sites)
    if params.tau is not None and params.tau < nu + 2:
        raise ConfigValidationError("params.tau", f"tau must be at least nu + 2 = {nu + 2}")
    if params.n_x <= 3 * max(sites):
        raise ConfigValidationError("params.n_x", "n_x must exceed 3 * max(sites)")
    if params.n_phi < 1:
        raise ConfigValidationError("params.n_phi", "n_phi must be positive")
    if params.xi is not None and (len(params.xi) != nu or any(x <= 0 for x in params.xi)):
        raise ConfigValidationError("params.xi", "xi must hold nu positive amplitudes")
    if params.omega is not None and len(params.omega) != nu:
        raise ConfigValidationError("params.omega", "omega must have nu components")

    if run.linear_solver not in _SOLVERS:
        raise ConfigValidationError("run.linear_solver", f"must be one of {_SOLVERS}")
    if run.scheme not in _SCHEMES:
        raise ConfigValidationError("run.scheme", f"must be one of {_SCHEMES}")
    if run.eigen_source not in _EIGEN_SOURCES:
        raise ConfigValidationError("run.eigen_source", f"must be one of {_EIGEN_SOURCES}")
    if run.dt <= 0 or run.t_final <= 0:
        raise ConfigValidationError("run.dt", "dt and t_final must be positive")
    if run.tol_scale <= 0:
        raise ConfigValidationError("run.tol_scale", "tol_scale must be positive")
    if run.grid_points < 1:
        raise ConfigValidationError("run.grid_points", "grid must be non-empty")
    return config


def run_config_from_dict(data: Dict[str, Any]) -> RunConfig:
    _check_keys(data, tuple(_SECTIONS.keys()), "")
    sections = {name: _build_section(name, data.get(name, {}) or {}) for name in _SECTIONS}
    return validate_run_config(RunConfig(**sections))


def load_run_config(path: Optional[str]) -> RunConfig:
    """Load and validate a JSON run configuration (defaults when path is None)."""
    if path is None:
        return validate_run_config(RunConfig())
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigValidationError("<config>", f"file not found: {path}")
    try:
        data = json.loads(config_path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigValidationError("<config>", f"invalid JSON: {e}")
    logger.debug(f"Loaded configuration from {path}")
    return run_config_from_dict(data)
