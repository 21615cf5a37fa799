"""Implicit Euler marching for ``v_t + A phi_eps(v) = 0`` and trajectory diagnostics.

Each step is one elliptic resolvent solve with ``lam = dt`` and the previous
state as source, so the scheme inherits order preservation, positivity and
the L1 contraction of the resolvent. A step whose Newton solve fails is
replaced by two half steps, at most six times deep.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .elliptic import EllipticProblem, SolveReport, solve_elliptic
from .errors import InconclusiveError, InvalidInputError, InvalidParameterError, StepFailure
from .grid import BallSpec, Exterior, Field, UniformGrid, ball_mass, integral
from .nonlinearity import Nonlinearity, RegularizedNonlinearity, phi_eps
from .operators import DiscreteOperator, OperatorKind, OperatorSpec, build_operator

__all__ = [
    "ParabolicProblem",
    "Trajectory",
    "DiagnosticsReport",
    "step",
    "evolve",
    "diagnostics",
    "ab_violation",
    "contraction_check",
    "dirichlet_chain_check",
    "MAX_HALVINGS",
]

MAX_HALVINGS = 6
SUMMARY_COLUMNS = ("t", "mass", "ball_mass", "linf", "min", "max")


@dataclass(frozen=True, eq=False)
class ParabolicProblem:
    """Regularised Cauchy or Dirichlet problem in v-form.

    ``initial`` holds ``u0``; the solver evolves ``v`` with ``v(0) = u0`` and
    ``u_eps = v + eps``. ``ball`` (optional) is the ball tracked in the
    per-step summaries.
    """

    op_spec: OperatorSpec
    nl: Nonlinearity
    eps: float
    initial: Field
    t_end: float
    dt: float
    ball: BallSpec | None = None
    tol: float | None = None

    def __post_init__(self):
        if self.initial.grid != self.op_spec.grid:
            raise InvalidInputError("initial data grid does not match operator grid")
        if np.any(self.initial.values < 0):
            raise InvalidInputError("initial data must be nonnegative")
        if not self.eps > 0:
            raise InvalidParameterError("eps must be positive")
        if not (self.t_end > 0 and self.dt > 0):
            raise InvalidParameterError("t_end and dt must be positive")
        if self.dt > self.t_end * (1 + 1e-12):
            raise InvalidParameterError("dt must not exceed t_end")
        if self.ball is not None:
            self.ball.check_inside(self.grid)

    @property
    def grid(self) -> UniformGrid:
        return self.op_spec.grid

    @functools.cached_property
    def op(self) -> DiscreteOperator:
        return build_operator(self.op_spec)

    @property
    def rnl(self) -> RegularizedNonlinearity:
        return RegularizedNonlinearity(self.nl, self.eps)

    def replace(self, **changes) -> "ParabolicProblem":
        keys = ("op_spec", "nl", "eps", "initial", "t_end", "dt", "ball", "tol")
        kw = {k: getattr(self, k) for k in keys}
        kw.update(changes)
        out = ParabolicProblem(**kw)
        if kw["op_spec"] == self.op_spec and "op" in self.__dict__:
            out.__dict__["op"] = self.op
        return out


@dataclass
class Trajectory:
    times: list[float]
    snapshots: dict[float, Field]
    summaries: np.ndarray
    reports: list[SolveReport] = field(default_factory=list)
    failed: bool = False
    failure: str = ""
    phi_integrals: dict[float, np.ndarray] = field(default_factory=dict)
    halvings: int = 0

    @property
    def step_count(self) -> int:
        return len(self.summaries) - 1

    def snapshot(self, t: float) -> Field:
        key = min(self.snapshots, key=lambda k: abs(k - t))
        return self.snapshots[key]

    def summary_rows(self) -> list[dict[str, float]]:
        return [dict(zip(SUMMARY_COLUMNS, map(float, row))) for row in self.summaries]


@dataclass
class DiagnosticsReport:
    mass_drift: float
    linf_monotone: bool
    ab_violation: float
    contraction_excess: float = float("nan")
    max_step_mass_change: float = float("nan")


def step(state: Field, p: ParabolicProblem, dt: float | None = None) -> tuple[Field, SolveReport]:
    """One implicit Euler step ``v_next + dt A phi_eps(v_next) = state``."""
    dt = p.dt if dt is None else dt
    if state.grid != p.grid:
        raise InvalidInputError("state grid does not match problem grid")
    if np.any(state.values < 0):
        raise InvalidInputError("state must be nonnegative")
    prob = EllipticProblem(p.op, p.rnl, state, dt)
    nxt, rep = solve_elliptic(prob, tol=p.tol, initial=state)
    if not rep.converged:
        raise StepFailure(f"Newton did not converge (residual {rep.final_residual:.3e})", rep)
    return nxt, rep


def _summary(t, v: Field, p: ParabolicProblem):
    vals = v.values
    bm = float("nan")
    if p.ball is not None:
        bm = ball_mass(Field(v.grid, vals + p.eps, v.exterior), p.ball)
    return (t, integral(v), bm, float(np.abs(vals).max()), float(vals.min()), float(vals.max()))


def _schedule(t_end: float, dt: float, sample_times) -> list[float]:
    n = max(1, int(round(t_end / dt)))
    base = [min(k * dt, t_end) for k in range(n + 1)]
    if base[-1] < t_end * (1 - 1e-12):
        base.append(t_end)
    base[-1] = t_end
    pts = sorted(set(base) | {float(t) for t in sample_times})
    merged = [pts[0]]
    for t in pts[1:]:
        if t - merged[-1] > 1e-12 * max(1.0, t_end):
            merged.append(t)
    return merged


def evolve(p: ParabolicProblem, sample_times=(), accumulate_phi: bool = False) -> Trajectory:
    """March from 0 to ``t_end``.

    Steps have size ``dt`` except that every requested sample time is hit
    exactly (a step is split there). With ``accumulate_phi`` the running
    integral of ``phi_eps(v)`` over time, in the same implicit (right-end)
    quadrature as the scheme, is stored at each sample time.
    """
    sample_times = sorted(float(t) for t in sample_times)
    if any(t < 0 or t > p.t_end * (1 + 1e-12) for t in sample_times):
        raise InvalidParameterError("sample times must lie in [0, t_end]")
    sched = _schedule(p.t_end, p.dt, sample_times)
    wanted = set()
    for t in sample_times:
        wanted.add(min(sched, key=lambda k: abs(k - t)))
    v = Field(p.grid, p.initial.values, p.initial.exterior, p.eps, p.initial.tail_exponent)
    acc = np.zeros(p.grid.size)
    tr = Trajectory([0.0], {}, np.empty((0, 6)))
    rows = [_summary(0.0, v, p)]
    if 0.0 in wanted:
        tr.snapshots[0.0] = v
        if accumulate_phi:
            tr.phi_integrals[0.0] = acc.copy()

    def advance(state, t0, h, depth):
        try:
            nxt, rep = step(state, p, h)
            return [(t0 + h, nxt, rep)]
        except StepFailure:
            if depth >= MAX_HALVINGS:
                raise
            tr.halvings += 1
            first = advance(state, t0, h / 2, depth + 1)
            return first + advance(first[-1][1], t0 + h / 2, h / 2, depth + 1)

    t = 0.0
    for t_next in sched[1:]:
        try:
            pieces = advance(v, t, t_next - t, 0)
        except StepFailure as exc:
            tr.failed = True
            tr.failure = f"step at t={t:.6g} failed after {MAX_HALVINGS} halvings: {exc}"
            tr.reports.append(exc.report)
            break
        t_prev = t
        for t_sub, nxt, rep in pieces:
            if accumulate_phi:
                acc += (t_sub - t_prev) * phi_eps(p.rnl, nxt.flat)
            t_prev = t_sub
            v = nxt
            tr.reports.append(rep)
            rows.append(_summary(t_sub, v, p))
        t = t_next
        if t in wanted:
            tr.snapshots[t] = v
            if accumulate_phi:
                tr.phi_integrals[t] = acc.copy()
    tr.summaries = np.array(rows, dtype=float)
    tr.times = [float(r[0]) for r in rows]
    return tr


def ab_violation(tr: Trajectory, n: float, eps: float) -> float:
    """Largest positive part of ``u(t2)/u(t1) - (t2/t1)^(1/(n+1))`` over consecutive snapshots.

    ``u = v + eps``; snapshots at ``t = 0`` are skipped.
    """
    times = sorted(t for t in tr.snapshots if t > 0)
    worst = 0.0
    for t1, t2 in zip(times, times[1:]):
        u1 = tr.snapshots[t1].values + eps
        u2 = tr.snapshots[t2].values + eps
        excess = u2 / u1 - (t2 / t1) ** (1.0 / (n + 1.0))
        worst = max(worst, float(excess.max(initial=0.0)))
    return worst


def diagnostics(tr: Trajectory, p: ParabolicProblem) -> DiagnosticsReport:
    s = tr.summaries
    m0 = s[0, 1]
    if m0 != 0:
        drift = float(np.max(np.abs(s[:, 1] - m0)) / abs(m0))
        per_step = float(np.max(np.abs(np.diff(s[:, 1])), initial=0.0) / abs(m0))
    else:
        drift = float(np.max(np.abs(s[:, 1])))
        per_step = float(np.max(np.abs(np.diff(s[:, 1])), initial=0.0))
    linf = s[:, 3]
    monotone = bool(np.all(np.diff(linf) <= 1e-10))
    return DiagnosticsReport(drift, monotone, ab_violation(tr, p.nl.exponent, p.eps), max_step_mass_change=per_step)


def _final_state(p: ParabolicProblem, t: float) -> Field:
    tr = evolve(p.replace(t_end=t), [t])
    if tr.failed:
        raise InconclusiveError(tr.failure)
    return tr.snapshot(t)


def _positive_l1(a: np.ndarray, b: np.ndarray, grid: UniformGrid) -> float:
    return float(np.sum(np.maximum(a - b, 0.0)) * grid.cell_volume)


def contraction_check(p1: ParabolicProblem, p2: ParabolicProblem, t: float) -> float:
    """``||(u1(t) - u2(t))_+||_1 - ||(u1(0) - u2(0))_+||_1``; nonpositive up to solver tolerance."""
    same = (
        p1.op_spec == p2.op_spec
        and p1.nl == p2.nl
        and p1.eps == p2.eps
        and p1.dt == p2.dt
    )
    if not same:
        raise InvalidInputError("contraction check needs identical operator, nonlinearity, eps and dt")
    a = _final_state(p1, t).values
    b = _final_state(p2, t).values
    return _positive_l1(a, b, p1.grid) - _positive_l1(p1.initial.values, p2.initial.values, p1.grid)


@dataclass
class ChainResult:
    holds: bool
    max_excess: float
    tolerance: float
    dirichlet: Field
    free: Field


def dirichlet_chain_check(
    u0: Field,
    mask: Field,
    s: float,
    nl: Nonlinearity,
    eps: float,
    t: float,
    dt: float | None = None,
    kind: OperatorKind = OperatorKind.DIRICHLET_RESTRICTED,
    detail: bool = False,
):
    """Check ``w_eps <= u_eps`` on the box.

    ``w_eps`` solves the Dirichlet problem on the box (``kind`` restricted or
    spectral) with data ``mask * u0``; ``u_eps`` solves the whole-space
    problem with data ``u0``, approximated on a box of twice the half-width
    and the same spacing with ``u0`` extended by zero. Both use the same eps,
    so the comparison is between the v-forms.
    """
    grid = u0.grid
    if grid.dimension != 1:
        raise InvalidInputError("the chain check runs in 1D")
    m = np.asarray(mask.values)
    if not np.all((m == 0) | (m == 1)):
        raise InvalidInputError("mask must be 0/1 valued")
    if kind not in (OperatorKind.DIRICHLET_RESTRICTED, OperatorKind.DIRICHLET_SPECTRAL):
        raise InvalidInputError("Dirichlet side of the chain must be restricted or spectral")
    dt = t / 64 if dt is None else dt
    data_d = Field(grid, m * u0.values)
    pd = ParabolicProblem(OperatorSpec(s, kind, grid), nl, eps, data_d, t, dt)
    big = grid.with_half_width(2 * grid.half_width)
    pad = (big.points_per_axis - grid.points_per_axis) // 2
    data_f = Field(big, np.pad(u0.values, pad))
    pf = ParabolicProblem(OperatorSpec(s, OperatorKind.TRUNCATED_QUADRATURE, big), nl, eps, data_f, t, dt)
    w = _final_state(pd, t)
    u_big = _final_state(pf, t)
    u = Field(grid, u_big.values[pad : pad + grid.points_per_axis])
    tol = 2.0 * max(pd.tol or 1e-10 * (1 + u0.values.max()), 1e-10 * (1 + u0.values.max()))
    excess = float(np.max(w.values - u.values))
    res = ChainResult(excess <= tol, excess, tol, w, u)
    return res if detail else res.holds
