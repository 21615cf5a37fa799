"""Eps-sweeps, extinction classification and the (s, n) phase diagram.

Also collects the identity checks built on trajectories: the Green-function
identity behind the non-existence argument, closed-form explicit solutions,
tail-exponent fits and the continuity of solutions in ``s`` at ``s = 1/2``.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classification import (
    Classification,
    ClassificationRule,
    SweepResult,
    classify_extinction,
    loglog_slope,
)
from .errors import (
    DomainError,
    InvalidInputError,
    InvalidParameterError,
    UnsupportedRegimeError,
)
from .grid import BallSpec, Field, UniformGrid, ball_mass
from .nonlinearity import Nonlinearity, RegularizedNonlinearity, phi_eps
from .operators import OperatorKind, OperatorSpec, green_constant_1d, riesz_potential
from .parabolic import ParabolicProblem, evolve

__all__ = [
    "Classification",
    "ClassificationRule",
    "SweepResult",
    "PhasePoint",
    "PhaseProtocol",
    "GreenRegime",
    "GreenIdentityReport",
    "LogHalf",
    "VerySingular",
    "TailFit",
    "ContinuityResult",
    "classify_extinction",
    "epsilon_sweep",
    "phase_diagram",
    "expected_phase",
    "verify_green_identity",
    "chebyshev_times",
    "explicit_solution",
    "tail_decay_probe",
    "s_continuity_probe",
    "holder_constant",
    "nonlinearity_for",
]


# --------------------------------------------------------------------------
# eps-sweeps


def epsilon_sweep(
    template: ParabolicProblem,
    eps_list,
    tau: float,
    ball: BallSpec,
    rule: ClassificationRule | None = None,
) -> SweepResult:
    """Ball mass of ``u_eps(., tau)`` for each eps, largest eps first.

    Every run restarts from ``u0 + eps``. The template's own eps is ignored.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidParameterError("eps_list must be strictly decreasing")
    if not 0 < tau <= template.t_end:
        raise InvalidParameterError("tau must lie in (0, t_end]")
    ball.check_inside(template.grid)
    u0_mass = ball_mass(template.initial, ball)
    masses, reports = [], []
    failed = False
    for eps in eps_list:
        p = template.replace(eps=eps, t_end=tau)
        tr = evolve(p, [tau])
        reports.append(tr)
        if tr.failed:
            failed = True
            break
        v = tr.snapshot(tau)
        masses.append(ball_mass(Field(v.grid, v.values + eps), ball))
    res = SweepResult(eps_list[: len(masses)], masses, tau, initial_ball_mass=u0_mass, reports=reports)
    if len(masses) >= 3:
        res.slope = loglog_slope(res.eps_values[-3:], masses[-3:])
    if failed or len(eps_list) < 4:
        res.classification = Classification.INCONCLUSIVE
    else:
        res.classification = classify_extinction(masses, eps_list, u0_mass, rule)
    return res


@dataclass(frozen=True)
class PhasePoint:
    s: float
    n: float
    classification: Classification
    margin: float
    final_mass: float = float("nan")
    slope: float = float("nan")
    masses: tuple = ()

    def row(self) -> dict:
        return {
            "s": self.s,
            "n": self.n,
            "classification": self.classification.value,
            "margin": self.margin,
            "final_mass": self.final_mass,
            "slope": self.slope,
        }


@dataclass(frozen=True)
class PhaseProtocol:
    """Everything a phase-diagram point needs besides ``(s, n)``.

    The initial datum is the Gaussian ``height * exp(-(x / width)^2)``. The
    box is wide because mass that reaches the truncation edge is lost, and
    that loss grows as eps shrinks; a small box makes persistent points look
    extinct.
    """

    half_width: float = 512.0
    points: int = 2048
    dt: float = 0.1 / 16
    tau: float = 0.1
    eps_list: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    ball_radius: float = 1.0
    width: float = 1.0
    height: float = 1.0
    band: float = 0.1
    rule: ClassificationRule = field(default_factory=ClassificationRule)

    def refined(self) -> "PhaseProtocol":
        """Twice the points per axis and half the time step."""
        return PhaseProtocol(
            self.half_width, 2 * self.points, self.dt / 2, self.tau, self.eps_list,
            self.ball_radius, self.width, self.height, self.band, self.rule,
        )

    def as_dict(self) -> dict:
        out = {
            "half_width": self.half_width,
            "points": self.points,
            "dt": self.dt,
            "tau": self.tau,
            "eps_list": list(self.eps_list),
            "ball_radius": self.ball_radius,
            "width": self.width,
            "height": self.height,
            "band": self.band,
        }
        out.update(self.rule.as_dict())
        return out


def expected_phase(s: float, n: float) -> Classification:
    """Limit behaviour in 1D: persistence only for ``1/2 < s < 1, n < 2s - 1`` or ``s = 1/2, n = 0``."""
    if 0.5 < s < 1.0 and n < 2 * s - 1:
        return Classification.PERSISTENT
    if s == 0.5 and n == 0.0:
        return Classification.PERSISTENT
    return Classification.EXTINCT


def nonlinearity_for(n: float) -> Nonlinearity:
    return Nonlinearity.log() if n == 0 else Nonlinearity.power(n)


def _phase_point(args) -> PhasePoint:
    s, n, proto = args
    grid = UniformGrid(1, proto.half_width, proto.points)
    u0 = grid.sample(lambda x: proto.height * np.exp(-((x / proto.width) ** 2)))
    margin = abs(n - (2 * s - 1))
    try:
        template = ParabolicProblem(
            OperatorSpec(s, OperatorKind.TRUNCATED_QUADRATURE, grid),
            nonlinearity_for(n), proto.eps_list[0], u0, proto.tau, proto.dt,
        )
        res = epsilon_sweep(template, proto.eps_list, proto.tau, BallSpec((0.0,), proto.ball_radius), proto.rule)
    except Exception:  # a failing point is recorded, never fatal to the scan
        return PhasePoint(s, n, Classification.INCONCLUSIVE, margin)
    final = res.ball_masses[-1] if res.ball_masses else float("nan")
    return PhasePoint(s, n, res.classification, margin, final, res.slope, tuple(res.ball_masses))


def _is_special_point(s: float, n: float) -> bool:
    return s == 0.5 and n == 0.0


def phase_diagram(
    s_grid,
    n_grid,
    protocol: PhaseProtocol | None = None,
    workers: int | None = None,
    include_band: bool = False,
    points=None,
) -> list[PhasePoint]:
    """Classify every ``(s, n)`` pair; points within ``band`` of ``n = 2s - 1`` are skipped.

    ``points`` replaces the product ``s_grid x n_grid`` by an explicit list of
    pairs. The point ``(1/2, 0)`` lies on the line ``n = 2s - 1`` but has its
    own limit behaviour, so the band filter never drops it.

    Points run in separate processes; the output order follows the input
    order regardless of completion order.
    """
    proto = protocol or PhaseProtocol()
    pairs = [(s, n) for s in s_grid for n in n_grid] if points is None else list(points)
    jobs = []
    for s, n in pairs:
        s, n = float(s), float(n)
        if not 0 < s < 1 or n < 0:
            raise InvalidParameterError(f"phase point ({s}, {n}) out of range")
        # the allowance keeps points at exactly ``band`` (e.g. 0.9 - 0.8) from rounding inside
        if not include_band and abs(n - (2 * s - 1)) < proto.band - 1e-12 and not _is_special_point(s, n):
            continue
        jobs.append((s, n, proto))
    workers = workers if workers is not None else (os.cpu_count() or 1)
    if workers <= 1 or len(jobs) <= 1:
        return [_phase_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_phase_point, jobs))


# --------------------------------------------------------------------------
# Green identity


class GreenRegime(enum.Enum):
    SUPERCRITICAL = "supercritical"
    ONE_D_SUP_HALF = "one_d_sup_half"


@dataclass(frozen=True)
class GreenIdentityReport:
    x: float
    lhs: float
    rhs: float
    residual: float
    regime: GreenRegime


def chebyshev_times(t0: float, t1: float, count: int = 33) -> list[float]:
    """Chebyshev-Lobatto points on ``[t0, t1]`` in increasing order."""
    k = np.arange(count)
    pts = 0.5 * (t0 + t1) - 0.5 * (t1 - t0) * np.cos(np.pi * k / (count - 1))
    pts[0], pts[-1] = t0, t1
    return [float(t) for t in pts]


def _green_regime(N: int, s: float) -> GreenRegime:
    if N > 2 * s:
        return GreenRegime.SUPERCRITICAL
    if N == 1 and s > 0.5:
        return GreenRegime.ONE_D_SUP_HALF
    raise UnsupportedRegimeError(f"no Green identity for N={N}, s={s}")


def _time_integral(tr, p, tau_star, tau, quadrature):
    if quadrature == "scheme":
        if not tr.phi_integrals:
            raise InvalidInputError("trajectory was evolved without accumulate_phi")
        a = tr.phi_integrals[min(tr.phi_integrals, key=lambda k: abs(k - tau_star))]
        b = tr.phi_integrals[min(tr.phi_integrals, key=lambda k: abs(k - tau))]
        return (b - a).reshape(p.grid.shape)
    if quadrature != "trapezoid":
        raise InvalidParameterError(f"unknown time quadrature {quadrature!r}")
    times = sorted(t for t in tr.snapshots if tau_star - 1e-12 <= t <= tau + 1e-12)
    if len(times) < 2:
        return np.zeros(p.grid.shape)
    vals = [phi_eps(p.rnl, tr.snapshots[t].values) for t in times]
    return np.trapezoid(np.array(vals), x=np.array(times), axis=0)


def verify_green_identity(
    tr,
    p: ParabolicProblem,
    x_nodes,
    tau_star: float,
    tau: float,
    quadrature: str = "scheme",
) -> list[GreenIdentityReport]:
    """Compare the time integral of ``phi_eps(v)`` with the potential of ``rho``.

    Supercritical: ``W(x) = int phi_eps(v) dt`` over ``[tau*, tau]`` against
    the Riesz potential of ``v(tau*) - v(tau)``.
    1D with ``s > 1/2``: ``W(x) - W(x0)`` against
    ``k_s int (v(tau) - v(tau*))(y) (|x - y|^(2s-1) - |x0 - y|^(2s-1)) dy``
    where ``x0`` is the node nearest the origin.

    ``quadrature = "scheme"`` uses the running integral stored by
    ``evolve(..., accumulate_phi=True)``; ``"trapezoid"`` integrates the
    stored snapshots.
    """
    grid = p.grid
    regime = _green_regime(grid.dimension, p.op_spec.s)
    if tau < tau_star:
        raise InvalidParameterError("tau must not precede tau_star")
    coords = np.asarray(x_nodes, dtype=float).reshape(-1, grid.dimension)
    flat_coords = np.stack([c.reshape(-1) for c in grid.coordinates()], axis=1)
    idx = [int(np.argmin(np.sum((flat_coords - c) ** 2, axis=1))) for c in coords]
    if tau == tau_star:
        return [GreenIdentityReport(float(flat_coords[i, 0]), 0.0, 0.0, 0.0, regime) for i in idx]
    w = _time_integral(tr, p, tau_star, tau, quadrature).reshape(-1)
    v_a = tr.snapshot(tau_star).values
    v_b = tr.snapshot(tau).values
    out = []
    if regime is GreenRegime.SUPERCRITICAL:
        pot = riesz_potential(Field(grid, v_a - v_b), p.op_spec.s).flat
        for i in idx:
            out.append(GreenIdentityReport(float(flat_coords[i, 0]), float(w[i]), float(pot[i]), float(abs(w[i] - pot[i])), regime))
        return out
    s = p.op_spec.s
    x = grid.axis()
    i0 = int(np.argmin(np.abs(x)))
    rho = (v_b - v_a).reshape(-1)
    k = green_constant_1d(s)
    base = np.abs(x[i0] - x) ** (2 * s - 1)
    for i in idx:
        rhs = k * grid.spacing * float(np.sum(rho * (np.abs(x[i] - x) ** (2 * s - 1) - base)))
        lhs = float(w[i] - w[i0])
        out.append(GreenIdentityReport(float(x[i]), lhs, rhs, abs(lhs - rhs), regime))
    return out


def holder_constant(reports: list[GreenIdentityReport], s: float, x0: float = 0.0) -> float:
    """Largest ``|W(x) - W(x0)| / |x - x0|^(2s-1)`` over the reported nodes."""
    vals = [abs(r.lhs) / abs(r.x - x0) ** (2 * s - 1) for r in reports if abs(r.x - x0) > 0]
    return max(vals, default=0.0)


# --------------------------------------------------------------------------
# explicit solutions


@dataclass(frozen=True)
class LogHalf:
    """``U = 2 (T - t) / (1 + |x|^2)`` for ``phi = log``, ``s = 1/2``, ``N = 1``."""

    T: float = 1.0


@dataclass(frozen=True)
class VerySingular:
    """``C (T - t)^(1/(1-m)) |x|^(-2s/(1-m))`` for ``phi(u) = u^m / m``-type scaling, ``m < 1``."""

    m: float
    s: float
    C: float
    T: float


def explicit_solution(kind, x, t):
    """Evaluate a closed-form solution; vectorised in ``x``."""
    xa = np.asarray(x, dtype=float)
    if isinstance(kind, LogHalf):
        if t > kind.T or t < 0:
            raise DomainError(f"log solution defined for 0 <= t <= T, got t={t}")
        out = 2.0 * (kind.T - t) / (1.0 + xa * xa)
    elif isinstance(kind, VerySingular):
        if not kind.m < 1:
            raise DomainError("very singular profile needs m < 1")
        if t > kind.T:
            raise DomainError("very singular profile defined for t <= T")
        if np.any(xa == 0):
            raise DomainError("very singular profile is singular at x = 0")
        q = 1.0 / (1.0 - kind.m)
        out = kind.C * (kind.T - t) ** q * np.abs(xa) ** (-2.0 * kind.s * q)
    else:
        raise InvalidParameterError(f"unknown explicit solution {kind!r}")
    return float(out) if np.ndim(x) == 0 else out


# --------------------------------------------------------------------------
# tails and continuity in s


@dataclass(frozen=True)
class TailFit:
    exponent: float
    power_like: bool
    curvature: float


def tail_decay_probe(f: Field, side: str = "both") -> TailFit:
    """Fit ``log f`` against ``log |x|`` over the outer third of a 1D field.

    ``power_like`` is false when the fit is steeper than ``-3`` with marked
    curvature in log-log coordinates (Gaussian-like decay).
    """
    if f.grid.dimension != 1:
        raise InvalidInputError("tail probe needs a 1D field")
    x = f.grid.axis()
    L = f.grid.half_width
    sel = np.abs(x) >= 2.0 * L / 3.0
    if side == "right":
        sel &= x > 0
    elif side == "left":
        sel &= x < 0
    vals = f.values[sel]
    if np.any(~(vals > 0)):
        raise InvalidInputError("tail values must be positive")
    lx = np.log(np.abs(x[sel]))
    ly = np.log(vals)
    quad = np.polyfit(lx, ly, 2)
    slope = float(np.polyfit(lx, ly, 1)[0])
    curvature = float(quad[0])
    power_like = not (slope <= -3.0 and abs(curvature) > 0.5)
    return TailFit(slope, power_like, curvature)


@dataclass
class ContinuityResult:
    deltas: list[float]
    distances: list[float]
    failed: bool = False


def s_continuity_probe(base: ParabolicProblem, deltas, t: float | None = None) -> ContinuityResult:
    """L1 distance at time ``t`` between the runs at ``s = 1/2 + delta`` and ``s = 1/2``."""
    if base.op_spec.s != 0.5:
        raise InvalidParameterError("continuity probe starts from s = 1/2")
    t = base.t_end if t is None else t
    ref_tr = evolve(base.replace(t_end=t), [t])
    if ref_tr.failed:
        return ContinuityResult([], [], True)
    ref = ref_tr.snapshot(t).values
    out = ContinuityResult([], [])
    for d in deltas:
        d = float(d)
        if d == 0.0:
            out.deltas.append(d)
            out.distances.append(0.0)
            continue
        spec = OperatorSpec(0.5 + d, base.op_spec.kind, base.grid)
        tr = evolve(base.replace(op_spec=spec, t_end=t), [t])
        if tr.failed:
            out.failed = True
            break
        out.deltas.append(d)
        out.distances.append(float(np.sum(np.abs(tr.snapshot(t).values - ref)) * base.grid.cell_volume))
    return out
