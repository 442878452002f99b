"""Flat ``key = value`` experiment configuration.

Lines hold one assignment each; ``#`` starts a comment.  Numeric values may be
arithmetic expressions in ``pi`` (``pi/3``, ``60/4``); list values are
comma-separated.  Unknown keys are rejected.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ValidationError
from .operators import AtomEnsembleSpec, BatterySpec

SCENARIOS = ("trajectory", "scan_theta_tau", "sweep_na", "figure2", "figure3", "figure4", "figure5")

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"pi": math.pi}


def eval_number(text: str) -> float:
    """Evaluate a restricted arithmetic expression (numbers, ``pi``, + - * / **)."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return node.value
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ValidationError(f"unsupported expression {text!r}")

    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse number {text!r}") from exc
    try:
        return ev(tree)
    except ZeroDivisionError as exc:
        raise ValidationError(f"division by zero in {text!r}") from exc


def _int(text: str) -> int:
    v = eval_number(text)
    if float(v) != int(v):
        raise ValidationError(f"expected an integer, got {text!r}")
    return int(v)


def _float(text: str) -> float:
    return float(eval_number(text))


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValidationError(f"expected a boolean, got {text!r}")


def _steps(text: str):
    return "k_est" if text.strip() == "k_est" else _int(text)


def _scenario(text: str) -> str:
    t = text.strip()
    if t not in SCENARIOS:
        raise ValidationError(f"unknown scenario {t!r}; expected one of {', '.join(SCENARIOS)}")
    return t


def _list(conv):
    def parse(text):
        items = [t for t in text.split(",") if t.strip()]
        if not items:
            raise ValidationError("empty list")
        return tuple(conv(t) for t in items)
    return parse


_PARSERS = {
    "scenario": _scenario,
    "n_levels_top": _int,
    "energy_spacing": _float,
    "n_atoms": _int,
    "polar_angle": _float,
    "azimuthal_angle": _float,
    "coherence_factor": _float,
    "tau": _float,
    "steps": _steps,
    "k_tau_budget": _float,
    "record_every": _int,
    "initial_level": _int,
    "spectral": _bool,
    "theta_min": _float,
    "theta_max": _float,
    "theta_count": _int,
    "tau_min": _float,
    "tau_max": _float,
    "tau_count": _int,
    "n_atoms_list": _list(_int),
    "tau_list": _list(_float),
    "output_path": str.strip,
    "numeric_tolerance": _float,
    "threads": _int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment parameters.

    ``None`` means "use the scenario's default" (the caption values of the
    corresponding figure where there is one).
    """

    scenario: str = "trajectory"
    n_levels_top: int = 200
    energy_spacing: float = 1.0
    n_atoms: int = 10
    polar_angle: float = math.pi / 3
    azimuthal_angle: float = 0.0
    coherence_factor: float = 1.0
    tau: float = 0.01
    steps: object = None            # int, "k_est" or None
    k_tau_budget: float | None = None
    record_every: int = 1
    initial_level: int = 0
    spectral: bool = True
    theta_min: float = 0.0
    theta_max: float = math.pi / 2
    theta_count: int = 7
    tau_min: float = 0.05
    tau_max: float = 1.5
    tau_count: int = 8
    n_atoms_list: tuple | None = None
    tau_list: tuple | None = None
    output_path: str = "results"
    numeric_tolerance: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}")
        if self.k_tau_budget is not None and not self.k_tau_budget > 0:
            raise ValidationError("k_tau_budget must be > 0")
        if not self.tau > 0:
            raise ValidationError("tau must be > 0")
        if self.steps is not None and self.k_tau_budget is not None:
            raise ValidationError("give either steps or k_tau_budget, not both")
        if self.steps is not None and self.steps != "k_est" and self.steps < 0:
            raise ValidationError("steps must be >= 0")
        if self.theta_count < 2 or self.tau_count < 2:
            raise ValidationError("grid counts must be >= 2")
        if self.theta_min > self.theta_max or self.tau_min > self.tau_max:
            raise ValidationError("grid ranges must satisfy min <= max")
        if not self.tau_min > 0:
            raise ValidationError("tau_min must be > 0")
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1")
        if not self.numeric_tolerance > 0:
            raise ValidationError("numeric_tolerance must be > 0")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.n_atoms_list is not None and min(self.n_atoms_list) < 1:
            raise ValidationError("n_atoms_list entries must be >= 1")
        if self.tau_list is not None and min(self.tau_list) <= 0:
            raise ValidationError("tau_list entries must be > 0")
        # the specs validate the physical parameters
        self.battery
        self.atoms

    @property
    def battery(self) -> BatterySpec:
        return BatterySpec(self.n_levels_top, self.energy_spacing)

    @property
    def atoms(self) -> AtomEnsembleSpec:
        return AtomEnsembleSpec(self.n_atoms, self.polar_angle, self.azimuthal_angle,
                                self.coherence_factor)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def parse_config_text(text: str) -> dict:
    """Parse config text into a dict of typed values (unknown keys rejected)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in _PARSERS:
            raise ValidationError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ValidationError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ValidationError(f"line {lineno}: missing value for {key!r}")
        try:
            out[key] = _PARSERS[key](value)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {key}: {exc}") from exc
    return out


def parse_assignment(text: str) -> tuple[str, object]:
    """Parse one ``key=value`` override given on the command line."""
    parsed = parse_config_text(text)
    if len(parsed) != 1:
        raise ValidationError(f"expected one key=value, got {text!r}")
    return next(iter(parsed.items()))


def load_config(path: str | Path | None = None, overrides: dict | None = None,
                **defaults) -> ExperimentConfig:
    values = dict(defaults)
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config_text(text))
    values.update(overrides or {})
    return ExperimentConfig(**values)
