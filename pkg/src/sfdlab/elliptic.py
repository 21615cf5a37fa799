"""Projected damped Newton for ``v + lam * A phi_eps(v) = g``.

The Jacobian ``I + lam * A * D`` with ``D = diag(phi_eps'(v))`` is not
symmetric, but the substitution ``delta = D^{-1} w`` turns the Newton system
into ``(D^{-1} + lam * A) w = -F``, which is symmetric positive definite for
every operator kind here. Small systems use a dense Cholesky factorisation,
large ones matrix-free conjugate gradients with Jacobi scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, cg

from .classification import Classification, SweepResult, classify_extinction, loglog_slope
from .errors import DomainError, InconclusiveError, InvalidInputError, InvalidParameterError
from .grid import BallSpec, Exterior, Field, ball_mass
from .nonlinearity import Nonlinearity, RegularizedNonlinearity, phi_eps, phi_eps_prime
from .operators import DiscreteOperator, OperatorSpec, build_operator

__all__ = [
    "EllipticProblem",
    "SolveReport",
    "residual",
    "jacobian_apply",
    "solve_elliptic",
    "default_tolerance",
    "elliptic_epsilon_sweep",
    "DENSE_LIMIT",
    "SweepResult",
]

DENSE_LIMIT = 512


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    op: DiscreteOperator
    rnl: RegularizedNonlinearity
    source: Field
    lam: float = 1.0

    def __post_init__(self):
        if self.source.grid != self.op.grid:
            raise InvalidInputError("source grid does not match operator grid")
        if np.any(self.source.values < 0):
            raise InvalidInputError("source must be nonnegative")
        if not self.lam > 0:
            raise InvalidParameterError(f"lambda must be positive, got {self.lam}")
        if self.tail is not None and self.op.grid.dimension != 1:
            raise InvalidInputError("power-tail exterior needs a 1D kernel operator")

    @property
    def tail(self):
        """Power-tail exterior model of the source field, if it has one."""
        if self.source.exterior is not Exterior.POWER_TAIL:
            return None
        return self.op.power_tail(self.source.tail_exponent)


@dataclass
class SolveReport:
    iterations: int = 0
    final_residual: float = float("inf")
    converged: bool = False
    damping_events: int = 0
    tolerance: float = 0.0
    linear_iterations: int = 0

    def line(self) -> str:
        return f"{self.iterations},{self.final_residual:.6e},{str(self.converged).lower()}"


def default_tolerance(g: Field) -> float:
    return 1e-10 * (1.0 + float(np.max(np.abs(g.values), initial=0.0)))


def _residual_flat(op, rnl, lam, g, v, tail=None):
    out = op.matvec(phi_eps(rnl, v))
    if tail is not None:
        r = tail.ratios
        out -= tail.exterior_term(phi_eps(rnl, v[0] * r), phi_eps(rnl, v[-1] * r))
    return v + lam * out - g


def _edge_coupling(tail, rnl, lam, v, inv_d):
    """Rank-two part of the Newton matrix in the ``w = D delta`` variables."""
    r = tail.ratios
    cl = tail.k_left @ (phi_eps_prime(rnl, v[0] * r) * r)
    cr = tail.k_right @ (phi_eps_prime(rnl, v[-1] * r) * r)
    idx = tail.edges
    return lam * np.column_stack([cl * inv_d[idx[0]], cr * inv_d[idx[1]]]), idx


def residual(p: EllipticProblem, v: Field) -> Field:
    """``v + lam * A phi_eps(v) - g`` nodewise."""
    if v.grid != p.op.grid:
        raise InvalidInputError("iterate grid does not match operator grid")
    if np.any(v.values < 0):
        raise DomainError("iterate has negative entries")
    r = _residual_flat(p.op, p.rnl, p.lam, p.source.flat, v.flat, p.tail)
    return Field(v.grid, r, p.source.exterior)


def jacobian_apply(p: EllipticProblem, v: Field, direction) -> np.ndarray:
    """Directional derivative of the residual at ``v``: ``d + lam A (phi_eps'(v) d)``."""
    d = np.asarray(direction, dtype=float).reshape(-1)
    vf = v.flat
    out = d + p.lam * p.op.matvec(phi_eps_prime(p.rnl, vf) * d)
    tail = p.tail
    if tail is not None:
        r = tail.ratios
        out -= p.lam * tail.exterior_term(
            phi_eps_prime(p.rnl, vf[0] * r) * r * d[0], phi_eps_prime(p.rnl, vf[-1] * r) * r * d[-1]
        )
    return out


def _dense(op: DiscreteOperator) -> np.ndarray:
    mat = getattr(op, "_dense_matrix", None)
    if mat is None:
        mat = op.dense()
        op._dense_matrix = mat
    return mat


class _NewtonLinearSolver:
    """Solves ``(diag(inv_d) + lam A - U E^T) w = rhs``; ``U E^T`` is an optional edge coupling."""

    def __init__(self, op: DiscreteOperator, lam: float):
        self.op = op
        self.lam = lam
        self.n = op.size
        self.dense = self.n <= DENSE_LIMIT
        if self.dense:
            self.lam_a = lam * _dense(op)
        else:
            self.diag = lam * op.diagonal()
        self.iterations = 0

    def solve(self, inv_d: np.ndarray, rhs: np.ndarray, rtol: float, coupling=None) -> np.ndarray:
        if self.dense:
            mat = self.lam_a.copy()
            mat[np.diag_indices_from(mat)] += inv_d
            if coupling is not None:
                u, idx = coupling
                mat[:, idx] -= u
                return sla.solve(mat, rhs, check_finite=False)
            try:
                return sla.cho_solve(sla.cho_factor(mat, check_finite=False), rhs, check_finite=False)
            except np.linalg.LinAlgError:
                return sla.solve(mat, rhs, assume_a="sym", check_finite=False)
        if coupling is None:
            return self._cg(inv_d, rhs, rtol)
        # Woodbury on top of the symmetric part
        u, idx = coupling
        z = self._cg(inv_d, rhs, rtol)
        # the correction only needs modest accuracy; Newton absorbs the rest
        y = np.column_stack([self._cg(inv_d, u[:, k], max(rtol, 1e-4)) for k in range(u.shape[1])])
        cap = np.eye(len(idx)) - y[idx, :]
        return z + y @ np.linalg.solve(cap, z[idx])

    def _cg(self, inv_d, rhs, rtol):
        lam, op = self.lam, self.op
        lin = LinearOperator((self.n, self.n), matvec=lambda w: inv_d * w + lam * op.matvec(w), dtype=float)
        pre = 1.0 / (inv_d + self.diag)
        prec = LinearOperator((self.n, self.n), matvec=lambda w: pre * w, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        w, _ = cg(lin, rhs, x0=pre * rhs, rtol=rtol, atol=0.0, maxiter=20 * self.n, M=prec, callback=cb)
        self.iterations += count[0]
        return w


def _newton(op, rnl, lam, g, v0, tol, max_iter, tail=None, min_fraction=0.05):
    report = SolveReport(tolerance=tol)
    lin = _NewtonLinearSolver(op, lam)
    v = np.maximum(np.asarray(v0, dtype=float), 0.0)
    F = _residual_flat(op, rnl, lam, g, v, tail)
    fnorm = np.linalg.norm(F)
    best = (np.abs(F).max(initial=0.0), v)
    for it in range(max_iter + 1):
        rinf = np.abs(F).max(initial=0.0)
        if rinf < best[0]:
            best = (rinf, v)
        report.final_residual = float(rinf)
        report.iterations = it
        if rinf <= tol:
            report.converged = True
            break
        if it == max_iter:
            break
        inv_d = 1.0 / phi_eps_prime(rnl, v)
        rtol = float(min(1e-2, max(1e-13, 1e-3 * rinf / (1.0 + np.abs(g).max(initial=0.0)))))
        coupling = None if tail is None else _edge_coupling(tail, rnl, lam, v, inv_d)
        w = lin.solve(inv_d, -F, rtol, coupling)
        delta = inv_d * w
        alpha = 1.0
        accepted = False
        for _ in range(40):
            cand = np.maximum(v + alpha * delta, min_fraction * v)
            Fc = _residual_flat(op, rnl, lam, g, cand, tail)
            nc = np.linalg.norm(Fc)
            if nc <= (1.0 - 1e-4 * alpha) * fnorm:
                accepted = True
                break
            alpha *= 0.5
        if alpha < 1.0:
            report.damping_events += 1
        if not accepted:
            # no decrease possible along the Newton direction: rounding floor reached
            break
        v, F, fnorm = cand, Fc, nc
    report.linear_iterations = lin.iterations
    rinf = np.abs(F).max(initial=0.0)
    if not report.converged and best[0] < rinf:
        v = best[1]
        report.final_residual = float(best[0])
    return v, report


def solve_elliptic(
    p: EllipticProblem,
    tol: float | None = None,
    max_iter: int = 60,
    initial: Field | None = None,
) -> tuple[Field, SolveReport]:
    """Solve the regularised elliptic problem; ``initial`` is the Newton warm start."""
    if tol is None:
        tol = default_tolerance(p.source)
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    g = p.source.flat
    v0 = g if initial is None else initial.flat
    v, report = _newton(p.op, p.rnl, p.lam, g, v0, tol, max_iter, p.tail)
    out = Field(p.source.grid, v.reshape(p.source.grid.shape), p.source.exterior, p.rnl.eps, p.source.tail_exponent)
    return out, report


def elliptic_epsilon_sweep(
    f: Field,
    op_spec: OperatorSpec,
    nl: Nonlinearity,
    eps_list,
    ball: BallSpec,
    rule=None,
) -> SweepResult:
    """Solve ``u_eps + A phi(u_eps) = f + eps`` for decreasing ``eps`` with warm starts."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidParameterError("eps_list must be strictly decreasing")
    ball.check_inside(f.grid)
    op = build_operator(op_spec)
    masses, reports = [], []
    warm = None
    ok = True
    for eps in eps_list:
        prob = EllipticProblem(op, RegularizedNonlinearity(nl, eps), f, 1.0)
        v, rep = solve_elliptic(prob, initial=warm)
        reports.append(rep)
        ok &= rep.converged
        warm = v
        u = Field(f.grid, v.values + eps, f.exterior)
        masses.append(ball_mass(u, ball))
    res = SweepResult(eps_list, masses, None, reports=reports, initial_ball_mass=ball_mass(f, ball))
    if len(masses) >= 3:
        res.slope = loglog_slope(eps_list[-3:], masses[-3:])
    if not ok:
        res.classification = Classification.INCONCLUSIVE
    else:
        try:
            res.classification = classify_extinction(masses, eps_list, res.initial_ball_mass, rule)
        except InconclusiveError:
            res.classification = Classification.INCONCLUSIVE
    return res
