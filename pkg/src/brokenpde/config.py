"""YAML experiment configuration with a closed schema.

A config has five sections::

    grid:          {bounds: [[-1, 1], [-1, 1]], n: 129}
    coefficients:  {s: 0, a_plus: "2", a_minus: "1", f_x: "0", f_y: "0",
                    lambda: 0.4, alpha: 0.5, omega0: 1.0}
    boundary:      "x"
    solver:        {tol_picard: 1.0e-10, max_picard: 200, theta: 1.0,
                    tol_cg: 1.0e-12, max_cg: null}
    analysis:      {z: [0, 0], r_fit: 0.25, r_max: 0.25, levels: 5, degree: 2,
                    rmin: 0.08, rmax: 0.4, steps: 12, ball_radius: 0.5}

Every section except ``grid`` and ``coefficients`` is optional.  Unknown keys
raise :class:`ConfigError` naming the key.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .coefficients import CoefficientModel
from .errors import ConfigError, ExprError
from .grid import GridSpec
from .solver import BrokenProblem

_GRID_KEYS = {"bounds", "n"}
_COEFF_KEYS = {"s", "a_plus", "a_minus", "a", "b", "f_x", "f_y", "lambda", "alpha", "omega0"}
_SOLVER_KEYS = {"tol_picard", "max_picard", "theta", "tol_cg", "max_cg"}
_ANALYSIS_KEYS = {"z", "r_fit", "r_max", "levels", "degree", "rmin", "rmax", "steps", "ball_radius"}
_TOP_KEYS = {"grid", "coefficients", "boundary", "solver", "analysis"}


@dataclass
class AnalysisParams:
    z: tuple[float, ...] = (0.0, 0.0)
    r_fit: float = 0.25
    r_max: float = 0.25
    levels: int = 5
    degree: int = 2
    rmin: float = 0.08
    rmax: float = 0.4
    steps: int = 12
    ball_radius: float = 0.5


@dataclass
class ExperimentConfig:
    grid: dict
    coefficients: dict
    boundary: str = "0"
    solver: dict = field(default_factory=dict)
    analysis: AnalysisParams = field(default_factory=AnalysisParams)

    def grid_spec(self) -> GridSpec:
        try:
            return GridSpec(tuple(tuple(b) for b in self.grid["bounds"]), int(self.grid["n"]))
        except (TypeError, ValueError) as err:
            raise ConfigError(f"grid: {err}") from err

    def model(self) -> CoefficientModel:
        kw = dict(self.coefficients)
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        for key in ("a_plus", "a_minus", "a", "b", "f_x", "f_y"):
            if key in kw and kw[key] is not None:
                kw[key] = str(kw[key])
        try:
            return CoefficientModel(**kw)
        except (ValueError, ExprError) as err:
            raise ConfigError(f"coefficients: {err}") from err

    def problem(self) -> BrokenProblem:
        try:
            return BrokenProblem(self.grid_spec(), self.model(), str(self.boundary), **self.solver)
        except (ValueError, ExprError) as err:
            raise ConfigError(f"solver/boundary: {err}") from err

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "coefficients": self.coefficients,
            "boundary": self.boundary,
            "solver": self.solver,
            "analysis": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.analysis).items()},
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _check_keys(section: str, data, allowed: set[str]):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key '{section}.{key}'" if section else f"unknown key '{key}'")


def config_from_dict(data: dict) -> ExperimentConfig:
    _check_keys("", data, _TOP_KEYS)
    for required in ("grid", "coefficients"):
        if required not in data:
            raise ConfigError(f"missing section '{required}'")
    grid = dict(data["grid"] or {})
    _check_keys("grid", grid, _GRID_KEYS)
    if "n" not in grid:
        raise ConfigError("missing key 'grid.n'")
    grid.setdefault("bounds", [[-1.0, 1.0], [-1.0, 1.0]])
    coeffs = dict(data["coefficients"] or {})
    _check_keys("coefficients", coeffs, _COEFF_KEYS)
    solver = dict(data.get("solver") or {})
    _check_keys("solver", solver, _SOLVER_KEYS)
    analysis = dict(data.get("analysis") or {})
    _check_keys("analysis", analysis, _ANALYSIS_KEYS)
    if "z" in analysis:
        analysis["z"] = tuple(float(c) for c in analysis["z"])
    cfg = ExperimentConfig(grid, coeffs, str(data.get("boundary", "0")), solver, AnalysisParams(**analysis))
    cfg.problem()  # validate expressions and ranges eagerly
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"malformed YAML in {path}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} is not a mapping")
    return config_from_dict(data)
