"""TOML run configurations for batch runs and parameter sweeps.

A configuration has five sections::

    [problem]     kind = "two_level" | "ladder" | "box1d" | "custom", plus its parameters
    [scheme]      alpha / delta / eta (number or list -> sweep), rule, eps0
    [stopping]    max_iters, j_gain_tol, field_delta_tol
    [outputs]     directory, tail_window, workers
    [checks]      enabled = [...], plus optional tolerances

Parsing is strict: unknown sections or keys are errors, so a misspelt
parameter can never silently fall back to a default.  See
``demos/configs/`` for a commented example per built-in problem.
"""

from __future__ import annotations

import itertools
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import ControlField, SchemeParams, TimeGrid
from .problems import ProblemSpec
from .propagator import RULES
from .scheme import StoppingPolicy

CHECKS = (
    "monotonicity",
    "bound",
    "gain_identity",
    "summability",
    "gronwall",
    "residual",
    "limit_set",
    "alpha_threshold",
)

_PROBLEM_KEYS = {
    "two_level": {"theta", "T", "n_steps"},
    "ladder": {"n", "T", "n_steps"},
    "box1d": {"L", "n_x", "T", "n_steps"},
    "custom": {
        "H", "H_imag", "mu", "mu_imag", "O", "O_imag", "psi0", "psi0_imag", "T", "n_steps",
    },
}
_SCHEME_KEYS = {
    "alpha", "alpha_threshold_factor", "threshold_M", "delta", "eta", "rule", "eps0", "eps0_file",
}
_STOPPING_KEYS = {"max_iters", "j_gain_tol", "field_delta_tol"}
_OUTPUT_KEYS = {"directory", "tail_window", "workers"}
_CHECK_KEYS = {
    "enabled",
    "monotonicity_rtol",
    "gain_identity_atol",
    "summability_atol",
    "residual_tol",
    "singleton_threshold",
    "gronwall_pairs",
    "gronwall_seed",
}
_SECTIONS = {
    "problem": None,
    "scheme": _SCHEME_KEYS,
    "stopping": _STOPPING_KEYS,
    "outputs": _OUTPUT_KEYS,
    "checks": _CHECK_KEYS,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialGuess:
    kind: str = "zero"
    value: float = 0.0
    path: Optional[str] = None

    def field(self, grid: TimeGrid) -> ControlField:
        if self.kind == "zero":
            return ControlField.zeros(grid)
        if self.kind == "constant":
            return ControlField.constant(grid, self.value)
        values = read_field_csv(self.path)
        if values.shape != (grid.n_steps,):
            raise ConfigError(
                f"initial field file {self.path} has {values.size} samples, grid needs {grid.n_steps}"
            )
        return ControlField(grid, values)

    def describe(self) -> Dict[str, Any]:
        if self.kind == "file":
            return {"kind": "file", "path": self.path}
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class CheckSettings:
    enabled: Tuple[str, ...] = ()
    monotonicity_rtol: float = 1e-8
    gain_identity_atol: float = 1e-6
    summability_atol: float = 1e-6
    residual_tol: float = 1e-6
    singleton_threshold: float = 1e-8
    gronwall_pairs: int = 50
    gronwall_seed: int = 12345


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    alphas: Tuple[float, ...]
    deltas: Tuple[float, ...]
    etas: Tuple[float, ...]
    policy: StoppingPolicy
    eps0: InitialGuess = InitialGuess()
    rule: str = "midpoint"
    alpha_threshold_factors: Tuple[float, ...] = ()
    threshold_M: Optional[float] = None
    output_dir: str = "results"
    tail_window: int = 20
    workers: int = 1
    checks: CheckSettings = CheckSettings()
    source: Optional[str] = None

    def points(self, problem=None) -> List[Tuple[str, SchemeParams]]:
        """Sweep points in a fixed order: alpha outermost, then delta, then eta."""
        alphas = self.alphas
        if self.alpha_threshold_factors:
            from .analysis import alpha_threshold
            from .core import operator_norm

            problem = problem or self.problem.build()
            base = alpha_threshold(
                operator_norm(problem.O), operator_norm(problem.mu), problem.grid.T, self.threshold_M
            )
            alphas = tuple(f * base for f in self.alpha_threshold_factors)
        out = []
        for a, d, e in itertools.product(alphas, self.deltas, self.etas):
            out.append((point_name(d, e, a), SchemeParams(a, d, e)))
        return out

    def echo(self) -> Dict[str, Any]:
        return {
            "problem": {"kind": self.problem.kind, **_jsonable(self.problem.parameters)},
            "scheme": {
                "alpha": list(self.alphas),
                "alpha_threshold_factor": list(self.alpha_threshold_factors),
                "threshold_M": self.threshold_M,
                "delta": list(self.deltas),
                "eta": list(self.etas),
                "rule": self.rule,
                "eps0": self.eps0.describe(),
            },
            "stopping": {
                "max_iters": self.policy.max_iters,
                "j_gain_tol": self.policy.j_gain_tol,
                "field_delta_tol": self.policy.field_delta_tol,
            },
            "outputs": {"directory": self.output_dir, "tail_window": self.tail_window},
            "checks": {
                "enabled": list(self.checks.enabled),
                "monotonicity_rtol": self.checks.monotonicity_rtol,
                "gain_identity_atol": self.checks.gain_identity_atol,
                "summability_atol": self.checks.summability_atol,
                "residual_tol": self.checks.residual_tol,
                "singleton_threshold": self.checks.singleton_threshold,
                "gronwall_pairs": self.checks.gronwall_pairs,
                "gronwall_seed": self.checks.gronwall_seed,
            },
        }


def point_name(delta: float, eta: float, alpha: float) -> str:
    return f"d{delta:.6g}_e{eta:.6g}_a{alpha:.6g}"


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            if np.iscomplexobj(v):
                out[k + "_imag"] = v.imag.tolist()
                v = v.real
            v = v.tolist()
        out[k] = v
    return out


def _locate(text: str, section: str, key: Optional[str]) -> Optional[int]:
    """1-based line of ``key`` inside ``[section]`` (or of the header)."""
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*=", stripped):
            return lineno
    return None


class _Reader:
    def __init__(self, text: str, data: Dict[str, Any]):
        self.text = text
        self.data = data

    def fail(self, section: str, key: Optional[str], message: str):
        where = f"{section}.{key}" if key else section
        line = _locate(self.text, section, key)
        suffix = f" (line {line})" if line else ""
        raise ConfigError(f"{where}: {message}{suffix}")

    def section(self, name: str, required: bool = False) -> Dict[str, Any]:
        value = self.data.get(name)
        if value is None:
            if required:
                raise ConfigError(f"missing required section [{name}]")
            return {}
        if not isinstance(value, dict):
            raise ConfigError(f"{name} must be a section")
        return value

    def number(self, section, key, value, *, integer=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(section, key, f"expected a number, got {value!r}")
        if integer and int(value) != value:
            self.fail(section, key, f"expected an integer, got {value!r}")
        if not math.isfinite(value):
            self.fail(section, key, f"expected a finite number, got {value!r}")
        return int(value) if integer else float(value)

    def number_list(self, section, key, value) -> Tuple[float, ...]:
        values = value if isinstance(value, list) else [value]
        if not values:
            self.fail(section, key, "sweep grid must not be empty")
        return tuple(self.number(section, key, v) for v in values)


def parse_config(text: str, base_dir: Optional[Path] = None) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    r = _Reader(text, data)
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

    for name in data:
        if name not in _SECTIONS:
            raise ConfigError(
                f"unknown section [{name}]; expected one of {sorted(_SECTIONS)}"
                + (f" (line {_locate(text, name, None)})" if _locate(text, name, None) else "")
            )
    for name, allowed in _SECTIONS.items():
        if allowed is None:
            continue
        for key in r.section(name):
            if key not in allowed:
                r.fail(name, key, f"unknown key {key!r}; allowed keys are {sorted(allowed)}")

    problem = _parse_problem(r)
    scheme = r.section("scheme", required=True)
    stopping = r.section("stopping")
    outputs = r.section("outputs")
    checks = r.section("checks")

    alphas: Tuple[float, ...] = ()
    factors: Tuple[float, ...] = ()
    threshold_M = None
    if "alpha" in scheme and "alpha_threshold_factor" in scheme:
        r.fail("scheme", "alpha_threshold_factor", "give either alpha or alpha_threshold_factor, not both")
    if "alpha" in scheme:
        alphas = r.number_list("scheme", "alpha", scheme["alpha"])
        for a in alphas:
            if a <= 0:
                r.fail("scheme", "alpha", f"penalty must be positive, got {a!r}")
    elif "alpha_threshold_factor" in scheme:
        factors = r.number_list("scheme", "alpha_threshold_factor", scheme["alpha_threshold_factor"])
        if "threshold_M" not in scheme:
            r.fail("scheme", "threshold_M", "required together with alpha_threshold_factor")
        threshold_M = r.number("scheme", "threshold_M", scheme["threshold_M"])
        if threshold_M <= 0 or any(f <= 0 for f in factors):
            r.fail("scheme", "alpha_threshold_factor", "factors and threshold_M must be positive")
    else:
        r.fail("scheme", None, "needs alpha or alpha_threshold_factor")
    if "threshold_M" in scheme and not factors:
        r.fail("scheme", "threshold_M", "only meaningful with alpha_threshold_factor")

    deltas = r.number_list("scheme", "delta", scheme.get("delta", 1.0))
    etas = r.number_list("scheme", "eta", scheme.get("eta", 1.0))
    for key, values in (("delta", deltas), ("eta", etas)):
        for v in values:
            if not 0.0 <= v <= 2.0:
                r.fail(
                    "scheme", key,
                    f"{key} = {v!r} is outside [0, 2], the range where the scheme is monotone",
                )
    rule = scheme.get("rule", "midpoint")
    if rule not in RULES:
        r.fail("scheme", "rule", f"unknown rule {rule!r}; expected one of {sorted(RULES)}")
    eps0 = _parse_eps0(r, scheme, base_dir)

    try:
        policy = StoppingPolicy(
            max_iters=r.number("stopping", "max_iters", stopping.get("max_iters", 100), integer=True),
            j_gain_tol=r.number("stopping", "j_gain_tol", stopping.get("j_gain_tol", 0.0)),
            field_delta_tol=r.number("stopping", "field_delta_tol", stopping.get("field_delta_tol", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"stopping: {exc}") from None

    tail_window = r.number("outputs", "tail_window", outputs.get("tail_window", 20), integer=True)
    if tail_window < 2:
        r.fail("outputs", "tail_window", "must be at least 2")
    workers = r.number("outputs", "workers", outputs.get("workers", 1), integer=True)
    if workers < 1:
        r.fail("outputs", "workers", "must be at least 1")
    directory = outputs.get("directory", "results")
    if not isinstance(directory, str) or not directory:
        r.fail("outputs", "directory", "expected a non-empty path string")
    directory = str((base_dir / directory) if not Path(directory).is_absolute() else Path(directory))

    check_settings = _parse_checks(r, checks)

    return RunConfig(
        problem=problem,
        alphas=alphas,
        deltas=deltas,
        etas=etas,
        policy=policy,
        eps0=eps0,
        rule=rule,
        alpha_threshold_factors=factors,
        threshold_M=threshold_M,
        output_dir=directory,
        tail_window=tail_window,
        workers=workers,
        checks=check_settings,
        source=text,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def _matrix(r: _Reader, section, key, real, imag):
    try:
        m = np.asarray(real, dtype=float)
        if imag is not None:
            m = m + 1j * np.asarray(imag, dtype=float)
    except (TypeError, ValueError):
        r.fail(section, key, "expected a numeric array")
    return m


def _parse_problem(r: _Reader) -> ProblemSpec:
    section = r.section("problem", required=True)
    kind = section.get("kind")
    if kind not in _PROBLEM_KEYS:
        r.fail("problem", "kind", f"expected one of {sorted(_PROBLEM_KEYS)}, got {kind!r}")
    allowed = _PROBLEM_KEYS[kind]
    params: Dict[str, Any] = {}
    for key, value in section.items():
        if key == "kind":
            continue
        if key not in allowed:
            r.fail("problem", key, f"unknown key {key!r} for kind {kind!r}; allowed keys are {sorted(allowed)}")
        if key in ("n_steps", "n", "n_x"):
            params[key] = r.number("problem", key, value, integer=True)
        elif key in ("T", "theta", "L"):
            params[key] = r.number("problem", key, value)
    if kind == "custom":
        for name in ("H", "mu", "O", "psi0"):
            if name not in section:
                r.fail("problem", name, "required for a custom problem")
            params[name] = _matrix(r, "problem", name, section[name], section.get(name + "_imag"))
    spec = ProblemSpec(kind, params)
    try:
        spec.build()
    except ValueError as exc:
        r.fail("problem", None, str(exc))
    return spec


def _parse_eps0(r: _Reader, scheme, base_dir: Path) -> InitialGuess:
    if "eps0" in scheme and "eps0_file" in scheme:
        r.fail("scheme", "eps0_file", "give either eps0 or eps0_file, not both")
    if "eps0_file" in scheme:
        path = scheme["eps0_file"]
        if not isinstance(path, str):
            r.fail("scheme", "eps0_file", "expected a path string")
        full = Path(path) if Path(path).is_absolute() else base_dir / path
        if not full.is_file():
            r.fail("scheme", "eps0_file", f"file not found: {full}")
        return InitialGuess("file", path=str(full))
    value = scheme.get("eps0", "zero")
    if value == "zero":
        return InitialGuess("zero")
    return InitialGuess("constant", r.number("scheme", "eps0", value))


def _parse_checks(r: _Reader, checks) -> CheckSettings:
    enabled = checks.get("enabled", [])
    if not isinstance(enabled, list) or not all(isinstance(c, str) for c in enabled):
        r.fail("checks", "enabled", "expected a list of check names")
    for c in enabled:
        if c not in CHECKS:
            r.fail("checks", "enabled", f"unknown check {c!r}; expected names from {list(CHECKS)}")
    kwargs: Dict[str, Any] = {"enabled": tuple(dict.fromkeys(enabled))}
    for key in ("monotonicity_rtol", "gain_identity_atol", "summability_atol", "residual_tol", "singleton_threshold"):
        if key in checks:
            value = r.number("checks", key, checks[key])
            if value < 0:
                r.fail("checks", key, "must be non-negative")
            kwargs[key] = value
    for key in ("gronwall_pairs", "gronwall_seed"):
        if key in checks:
            value = r.number("checks", key, checks[key], integer=True)
            if value < 0:
                r.fail("checks", key, "must be non-negative")
            kwargs[key] = value
    return CheckSettings(**kwargs)


def read_field_csv(path) -> np.ndarray:
    """Read the ``t,eps`` field format written by the runner."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    if data.dtype.names != ("t", "eps"):
        raise ConfigError(f"{path}: expected header 't,eps', got {data.dtype.names}")
    return np.atleast_1d(data["eps"]).astype(float)
