"""Plain ``key = value`` run configuration with ``[section]`` headers.

Every key has a type and an explicit default. Parsing applies defaults,
rejects unknown keys (naming the nearest valid key) and checks ranges.
``serialize`` writes every key in schema order, so
``serialize(parse(text))`` is the normal form of ``text``.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .classification import ClassificationRule
from .errors import SfdError
from .extinction import PhaseProtocol
from .grid import BallSpec, Exterior, Topology, UniformGrid
from .nonlinearity import Nonlinearity, parse_nonlinearity
from .operators import OperatorKind, OperatorSpec

__all__ = ["ConfigError", "RunConfig", "SCHEMA", "parse_config", "serialize_config", "default_config"]


class ConfigError(SfdError, ValueError):
    """Syntax, type, range or unknown-key error in a config text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# --------------------------------------------------------------------------
# value types


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    return int(text)


def _float_list(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return tuple(float(p) for p in parts)


def _pair_list(text: str) -> tuple[tuple[float, float], ...]:
    """``s:n`` pairs separated by commas, e.g. ``0.75:0.2, 0.5:0``."""
    out = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        a, b = part.split(":")
        out.append((float(a), float(b)))
    return tuple(out)


def _nonlinearity(text: str) -> str:
    nl = parse_nonlinearity(text)
    return "log" if nl.kind == "log" else f"power:{nl.n!r}"


def _choice(*options: str) -> Callable[[str], str]:
    def conv(text: str) -> str:
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t

    conv.__name__ = "one of " + "|".join(options)
    return conv


def _format(value: Any) -> str:
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{a!r}:{b!r}" for a, b in value)
        return ", ".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class _Key:
    conv: Callable[[str], Any]
    default: Any
    type_name: str
    check: Callable[[Any], str | None] | None = None


def _positive(v):
    return None if v > 0 else "must be positive"


def _nonnegative(v):
    return None if v >= 0 else "must be nonnegative"


def _open_unit(v):
    return None if 0 < v < 1 else "s must lie in (0,1)"


def _grid_points(v):
    return None if v >= 8 else "must be at least 8"


def _decreasing(v):
    if not v or any(x <= 0 for x in v):
        return "must be a nonempty list of positive reals"
    if any(b >= a for a, b in zip(v, v[1:])):
        return "must be strictly decreasing"
    return None


def _s_list(v):
    return None if all(0 < x < 1 for x in v) else "s must lie in (0,1)"


def _n_list(v):
    return None if all(x >= 0 for x in v) else "exponents must be nonnegative"


def _pairs(v):
    for s, n in v:
        if not 0 < s < 1:
            return "s must lie in (0,1)"
        if n < 0:
            return "exponents must be nonnegative"
    return None


_FLOAT, _INT = "real", "integer"

SCHEMA: dict[str, dict[str, _Key]] = {
    "grid": {
        "dimension": _Key(_int, 1, _INT, lambda v: None if v in (1, 2) else "must be 1 or 2"),
        "half_width": _Key(_float, 8.0, _FLOAT, _positive),
        "points": _Key(_int, 256, _INT, _grid_points),
        "topology": _Key(_choice("truncated", "periodic"), "truncated", "one of truncated|periodic"),
    },
    "operator": {
        "s": _Key(_float, 0.5, _FLOAT, _open_unit),
        "kind": _Key(
            _choice("truncated_quadrature", "periodic_spectral", "dirichlet_restricted", "dirichlet_spectral"),
            "truncated_quadrature",
            "operator kind",
        ),
        "exterior": _Key(_choice("default", "power_tail"), "default", "one of default|power_tail"),
        "tail_exponent": _Key(_float, 0.0, _FLOAT, _nonnegative),
    },
    "model": {
        "nonlinearity": _Key(_nonlinearity, "power:1.0", "power:<n> or log"),
        "eps": _Key(_float, 1e-2, _FLOAT, _positive),
    },
    "initial": {
        "profile": _Key(_choice("gaussian", "log_half", "constant", "box"), "gaussian", "one of gaussian|log_half|constant|box"),
        "height": _Key(_float, 1.0, _FLOAT, _nonnegative),
        "width": _Key(_float, 1.0, _FLOAT, _positive),
    },
    "time": {
        "t_end": _Key(_float, 0.1, _FLOAT, _positive),
        "dt": _Key(_float, 0.1 / 32, _FLOAT, _positive),
        "samples": _Key(_float_list, (0.1,), "comma-separated reals"),
    },
    "solver": {
        "tol": _Key(_float, 0.0, _FLOAT, _nonnegative),
        "max_iter": _Key(_int, 60, _INT, _positive),
        "lambda": _Key(_float, 1.0, _FLOAT, _positive),
    },
    "sweep": {
        "eps_list": _Key(_float_list, (1e-1, 1e-2, 1e-3, 1e-4, 1e-5), "comma-separated reals", _decreasing),
        "tau": _Key(_float, 0.1, _FLOAT, _positive),
        "ball_center": _Key(_float, 0.0, _FLOAT),
        "ball_radius": _Key(_float, 1.0, _FLOAT, _positive),
    },
    "classification": {
        "theta": _Key(_float, 0.05, _FLOAT, _positive),
        "sigma": _Key(_float, 0.1, _FLOAT),
        "stabilization": _Key(_float, 0.05, _FLOAT, _positive),
        "persistent_floor": _Key(_float, 0.5, _FLOAT, _nonnegative),
    },
    "phase": {
        "s_values": _Key(_float_list, (0.3, 0.5, 0.75, 0.9), "comma-separated reals", _s_list),
        "n_values": _Key(_float_list, (0.0, 0.2, 0.5, 0.8, 0.9, 1.0), "comma-separated reals", _n_list),
        "points": _Key(_pair_list, (), "comma-separated s:n pairs", _pairs),
        "half_width": _Key(_float, 512.0, _FLOAT, _positive),
        "points_per_axis": _Key(_int, 2048, _INT, _grid_points),
        "dt": _Key(_float, 0.1 / 16, _FLOAT, _positive),
        "band": _Key(_float, 0.1, _FLOAT, _nonnegative),
        "workers": _Key(_int, 0, _INT, _nonnegative),
    },
    "verify": {
        "green_tau_star": _Key(_float, 0.005, _FLOAT, _nonnegative),
        "green_tau": _Key(_float, 0.01, _FLOAT, _positive),
        "green_snapshots": _Key(_int, 33, _INT, lambda v: None if v >= 2 else "must be at least 2"),
        "anchor_half_width": _Key(_float, 200.0, _FLOAT, _positive),
        "anchor_points": _Key(_int, 65536, _INT, _grid_points),
        "anchor_tolerance": _Key(_float, 0.01, _FLOAT, _positive),
        "anchor_tail_exponent": _Key(_float, 0.0, _FLOAT, _nonnegative),
        "explicit_half_width": _Key(_float, 200.0, _FLOAT, _positive),
        "explicit_points": _Key(_int, 4096, _INT, _grid_points),
        "explicit_dt": _Key(_float, 1.0 / 512, _FLOAT, _positive),
        "explicit_eps": _Key(_float, 1e-8, _FLOAT, _positive),
        "explicit_tail_exponent": _Key(_float, 2.0, _FLOAT, _nonnegative),
        "explicit_tolerance": _Key(_float, 0.02, _FLOAT, _positive),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Typed configuration; ``values`` maps ``(section, key)`` to a parsed value."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> Any:
        section, key = name.split(".", 1)
        return self.values[(section, key)]

    def flat(self) -> dict[str, Any]:
        """``section.key -> value`` in schema order, lists as JSON lists."""
        out = {}
        for section, keys in SCHEMA.items():
            for key in keys:
                v = self.values[(section, key)]
                if isinstance(v, tuple):
                    v = [list(x) if isinstance(x, tuple) else x for x in v]
                out[f"{section}.{key}"] = v
        return out

    # -- builders used by the command line

    def grid(self) -> UniformGrid:
        topo = Topology.PERIODIC if self["grid.topology"] == "periodic" else Topology.TRUNCATED
        return UniformGrid(self["grid.dimension"], self["grid.half_width"], self["grid.points"], topo)

    def op_spec(self, grid: UniformGrid | None = None) -> OperatorSpec:
        kind = OperatorKind(self["operator.kind"])
        return OperatorSpec(self["operator.s"], kind, grid or self.grid())

    def nonlinearity(self) -> Nonlinearity:
        return parse_nonlinearity(self["model.nonlinearity"])

    def exterior(self, grid: UniformGrid) -> Exterior:
        if self["operator.exterior"] == "power_tail":
            return Exterior.POWER_TAIL
        return grid.default_exterior()

    def initial(self, grid: UniformGrid | None = None):
        grid = grid or self.grid()
        h, w = self["initial.height"], self["initial.width"]
        profile = self["initial.profile"]

        def fn(*xs):
            r2 = sum(x * x for x in xs)
            if profile == "gaussian":
                return h * np.exp(-r2 / (w * w))
            if profile == "log_half":
                return 2.0 * h / (1.0 + r2 / (w * w))
            if profile == "constant":
                return h + 0.0 * r2
            return h * (r2 <= w * w).astype(float)

        ext = self.exterior(grid)
        return grid.sample(fn, ext, 0.0, self["operator.tail_exponent"] if ext is Exterior.POWER_TAIL else 0.0)

    def ball(self) -> BallSpec:
        return BallSpec((self["sweep.ball_center"],) * self["grid.dimension"], self["sweep.ball_radius"])

    def rule(self) -> ClassificationRule:
        return ClassificationRule(
            self["classification.theta"],
            self["classification.sigma"],
            self["classification.stabilization"],
            self["classification.persistent_floor"],
        )

    def phase_protocol(self) -> PhaseProtocol:
        return PhaseProtocol(
            half_width=self["phase.half_width"],
            points=self["phase.points_per_axis"],
            dt=self["phase.dt"],
            tau=self["sweep.tau"],
            eps_list=tuple(self["sweep.eps_list"]),
            ball_radius=self["sweep.ball_radius"],
            width=self["initial.width"],
            height=self["initial.height"],
            band=self["phase.band"],
            rule=self.rule(),
        )

    def tol(self) -> float | None:
        return self["solver.tol"] or None


def default_config() -> RunConfig:
    return RunConfig({(sec, key): spec.default for sec, keys in SCHEMA.items() for key, spec in keys.items()})


def _nearest(name: str, options) -> str:
    match = difflib.get_close_matches(name, list(options), n=1, cutoff=0.0)
    return match[0] if match else ""


def parse_config(text: str) -> RunConfig:
    """Parse config text; unset keys take their defaults."""
    values = dict(default_config().values)
    seen: set[tuple[str, str]] = set()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]; did you mean [{_nearest(section, SCHEMA)}]?", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if section is None:
            raise ConfigError(f"key {key!r} appears before any [section] header", lineno)
        if not key:
            raise ConfigError("empty key", lineno)
        spec = SCHEMA[section].get(key)
        if spec is None:
            raise ConfigError(
                f"unknown key {section}.{key}; nearest valid key is {section}.{_nearest(key, SCHEMA[section])}", lineno
            )
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {section}.{key}", lineno)
        seen.add((section, key))
        try:
            parsed = spec.conv(value)
        except (ValueError, SfdError) as exc:
            raise ConfigError(f"{section}.{key} expects {spec.type_name}, got {value!r} ({exc})", lineno) from None
        if spec.check is not None:
            problem = spec.check(parsed)
            if problem:
                msg = problem if problem.startswith("s must") else f"{section}.{key} {problem}"
                raise ConfigError(msg, lineno)
        values[(section, key)] = parsed
    return RunConfig(values)


def serialize_config(cfg: RunConfig) -> str:
    """Normal form: every section and key in schema order."""
    lines = []
    for section, keys in SCHEMA.items():
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {_format(cfg.values[(section, key)])}".rstrip())
    return "\n".join(lines) + "\n"
