"""Discrete fractional Laplacians on uniform grids and the Riesz potential.

Four realisations share one interface:

``PERIODIC_SPECTRAL``
    Fourier multiplier ``|xi|^(2s)`` on the torus ``[-L, L)^N``.
``TRUNCATED_QUADRATURE``
    Singular-integral quadrature with the field taken as zero outside the box.
    The exterior enters through an analytic tail so the operator equals
    ``d * I - W`` with a constant diagonal ``d`` and a Toeplitz matrix ``W``
    of nonnegative weights.
``DIRICHLET_RESTRICTED``
    The same matrix, read as the restricted operator on the box.
``DIRICHLET_SPECTRAL``
    ``lambda_k^s`` on the sine eigenbasis of the cell-centred Dirichlet
    Laplacian of the box.

In 1D the kernel weights integrate the kernel against piecewise-linear hats,
with a second-difference correction on ``|y - x| < h``. In 2D exact cell
integrals are used with the same style of self-cell correction.
Toeplitz products go through zero-padded FFTs (numpy's pocketfft runs
single-threaded, so results are reproducible bit for bit).
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import integrate
from scipy.linalg import toeplitz
from scipy.special import gamma

from .errors import (
    InvalidInputError,
    InvalidParameterError,
    InvalidSpecError,
    SubcriticalError,
    UnsupportedDimensionError,
)
from .grid import Exterior, Field, Topology, UniformGrid

__all__ = [
    "OperatorKind",
    "OperatorSpec",
    "DiscreteOperator",
    "normalization_constant",
    "riesz_constant",
    "green_constant_1d",
    "build_operator",
    "apply",
    "riesz_potential",
    "one_d_kernel",
    "PowerTailExterior",
    "stroock_varopoulos_pairing",
]


class OperatorKind(enum.Enum):
    PERIODIC_SPECTRAL = "periodic_spectral"
    TRUNCATED_QUADRATURE = "truncated_quadrature"
    DIRICHLET_RESTRICTED = "dirichlet_restricted"
    DIRICHLET_SPECTRAL = "dirichlet_spectral"

    @property
    def kernel_based(self) -> bool:
        return self in (OperatorKind.TRUNCATED_QUADRATURE, OperatorKind.DIRICHLET_RESTRICTED)


def _check_s(s: float) -> float:
    s = float(s)
    if not 0.0 < s < 1.0:
        raise InvalidParameterError(f"s must lie in (0,1), got {s}")
    return s


@dataclass(frozen=True)
class OperatorSpec:
    s: float
    kind: OperatorKind
    grid: UniformGrid

    def __post_init__(self):
        try:
            _check_s(self.s)
        except InvalidParameterError as exc:
            raise InvalidSpecError(str(exc)) from None
        if not isinstance(self.kind, OperatorKind):
            object.__setattr__(self, "kind", OperatorKind(self.kind))
        periodic = self.grid.topology is Topology.PERIODIC
        if (self.kind is OperatorKind.PERIODIC_SPECTRAL) != periodic:
            raise InvalidSpecError(f"{self.kind.value} is incompatible with a {self.grid.topology.value} grid")
        if self.grid.dimension > 2:
            raise InvalidSpecError("operators are capped at N <= 2")


def normalization_constant(N: int, s: float) -> float:
    """``c(N,s) = 4^s Gamma(N/2+s) / (pi^(N/2) |Gamma(-s)|)``."""
    s = _check_s(s)
    if N < 1:
        raise InvalidParameterError("N must be >= 1")
    return float(4.0**s * gamma(N / 2.0 + s) / (math.pi ** (N / 2.0) * abs(gamma(-s))))


def riesz_constant(N: int, s: float) -> float:
    """``Gamma(N/2-s) / (4^s pi^(N/2) Gamma(s))``; requires ``N > 2s``."""
    s = _check_s(s)
    if N <= 2 * s:
        raise SubcriticalError(f"Riesz potential needs N > 2s (N={N}, s={s})")
    return float(gamma(N / 2.0 - s) / (4.0**s * math.pi ** (N / 2.0) * gamma(s)))


def green_constant_1d(s: float) -> float:
    """``k_s > 0`` with ``(-Delta)^s (-k_s |x|^(2s-1)) = delta`` in 1D, ``1/2 < s < 1``."""
    s = _check_s(s)
    if s <= 0.5:
        raise InvalidParameterError("the growing 1D Green kernel needs s > 1/2")
    return float(-gamma(0.5 - s) / (4.0**s * math.sqrt(math.pi) * gamma(s)))


# --------------------------------------------------------------------------
# 1D weights (unit spacing; scale by c * h^(-2s))


def _pow_diff(a, b, p):
    """``(b^p - a^p) / p``, continuous through ``p = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = np.log1p((b - a) / a)
    if p == 0.0:
        return r
    return a**p * np.expm1(p * r) / p


def _int_k(a, b, s):
    # int_a^b z^(-1-2s) dz
    return _pow_diff(a, b, -2.0 * s)


def _int_zk(a, b, s):
    # int_a^b z^(-2s) dz
    return _pow_diff(a, b, 1.0 - 2.0 * s)


def _hat_series(k, s, terms=5):
    """int_{-1}^{1} (1-|t|) (k+t)^(-1-2s) dt by its even moment expansion."""
    a = 1.0 + 2.0 * s
    k = np.asarray(k, dtype=float)
    total = np.zeros_like(k)
    coef = 1.0
    for m in range(0, 2 * terms, 2):
        if m > 0:
            coef *= (a + m - 2) * (a + m - 1) / ((m - 1) * m)
        total += coef * 2.0 / ((m + 1) * (m + 2)) * k ** (-m)
    return k ** (-a) * total


def _unit_weights_1d(s: float, kmax: int) -> np.ndarray:
    """Weights ``w_1..w_kmax`` for unit spacing (index 0 unused)."""
    w = np.zeros(kmax + 1)
    if kmax < 1:
        return w
    # k = 1: falling half of the hat on [1,2] plus the near-origin quadratic term
    w[1] = 2.0 * _int_k(1.0, 2.0, s) - _int_zk(1.0, 2.0, s) + 1.0 / (2.0 - 2.0 * s)
    k = np.arange(2, kmax + 1, dtype=float)
    near = k < 24
    kn = k[near]
    rise = _int_zk(kn - 1, kn, s) - (kn - 1) * _int_k(kn - 1, kn, s)
    fall = (kn + 1) * _int_k(kn, kn + 1, s) - _int_zk(kn, kn + 1, s)
    w[2:][near] = rise + fall
    w[2:][~near] = _hat_series(k[~near], s)
    return w


def _unit_tail_1d(s: float, K):
    """``sum_{k >= K} w_k`` for unit spacing, ``K >= 2`` (closed form)."""
    K = np.asarray(K, dtype=float)
    rise = _int_zk(K - 1, K, s) - (K - 1) * _int_k(K - 1, K, s)
    return rise + K ** (-2.0 * s) / (2.0 * s)


# --------------------------------------------------------------------------
# 2D cell integrals (unit spacing)


def _square_boundary_integral(fn) -> float:
    # 8 * int_0^{pi/4} fn(r(theta)) dtheta with r(theta) = 1 / (2 cos theta)
    val, _ = integrate.quad(lambda t: fn(0.5 / math.cos(t)), 0.0, math.pi / 4, epsabs=1e-14, epsrel=1e-13)
    return 8.0 * val


@functools.lru_cache(maxsize=64)
def _gauss_nodes(n: int):
    return np.polynomial.legendre.leggauss(n)


def _cell_integrals_2d(power: float, kmax: int) -> np.ndarray:
    """``int_{cell k} |z|^power dz`` for offsets ``|k_i| <= kmax`` (cell 0 left at 0)."""
    k = np.arange(-kmax, kmax + 1, dtype=float)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    out = np.empty_like(k1)
    cheb = np.maximum(np.abs(k1), np.abs(k2))
    for n, sel in ((32, cheb <= 2), (8, (cheb > 2) & (cheb <= 8)), (3, cheb > 8)):
        if not np.any(sel):
            continue
        t, wt = _gauss_nodes(n)
        t = 0.5 * t
        wt = 0.5 * wt
        a = k1[sel][:, None, None] + t[None, :, None]
        b = k2[sel][:, None, None] + t[None, None, :]
        vals = (a * a + b * b) ** (power / 2.0)
        out[sel] = np.einsum("kij,i,j->k", vals, wt, wt)
    out[kmax, kmax] = 0.0
    return out


# --------------------------------------------------------------------------


class DiscreteOperator:
    """A discrete ``(-Delta)^s`` acting on fields of ``spec.grid``."""

    def __init__(self, spec: OperatorSpec):
        self.spec = spec
        self.grid = spec.grid
        self.s = spec.s
        self.normalization = normalization_constant(self.grid.dimension, spec.s)

    @property
    def kind(self) -> OperatorKind:
        return self.spec.kind

    @property
    def size(self) -> int:
        return self.grid.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply to a flat vector of node values (zero or periodic exterior)."""
        raise NotImplementedError

    def diagonal(self) -> np.ndarray:
        """Diagonal, or a constant surrogate suitable for Jacobi scaling."""
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        eye = np.eye(self.size)
        return np.column_stack([self.matvec(eye[:, j]) for j in range(self.size)])

    def apply(self, f: Field) -> Field:
        if f.grid != self.grid:
            raise InvalidInputError("field grid does not match operator grid")
        out = self.matvec(f.flat)
        if f.exterior is Exterior.POWER_TAIL:
            tail = self.power_tail(f.tail_exponent)
            out = out - tail.linear_columns() @ f.flat[tail.edges]
        return Field(self.grid, out.reshape(self.grid.shape), f.exterior, tail_exponent=f.tail_exponent)

    def power_tail(self, exponent: float) -> "PowerTailExterior":
        raise InvalidInputError(f"{self.kind.value} does not support a power-tail exterior")

    def table(self) -> dict[str, np.ndarray]:
        """The defining coefficient table, for inspection and CSV export."""
        raise NotImplementedError


class KernelOperator(DiscreteOperator):
    """``(A f)_i = d f_i - sum_{j != i} w_{i-j} f_j``, exterior values zero."""

    def __init__(self, spec: OperatorSpec):
        super().__init__(spec)
        g = self.grid
        M, h, s, c = g.points_per_axis, g.spacing, self.s, self.normalization
        scale = c * h ** (-2.0 * s)
        if g.dimension == 1:
            unit = _unit_weights_1d(s, M - 1)
            w = np.concatenate([unit[:0:-1], [0.0], unit[1:]])
            self._unit_tail = lambda K: np.where(K <= 1, unit[1] + _unit_tail_1d(s, 2), _unit_tail_1d(s, np.maximum(K, 2)))
            diag = 2.0 * (unit[1] + float(_unit_tail_1d(s, 2)))
        else:
            w = _cell_integrals_2d(-2.0 - 2.0 * s, M - 1)
            q = _square_boundary_integral(lambda r: r ** (-2.0 * s) / (2.0 * s))
            sq = 0.5 * _square_boundary_integral(lambda r: r ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s))
            o = M - 1
            for d1, d2 in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                w[o + d1, o + d2] += 0.5 * sq
            diag = q + 2.0 * sq
        self.weights = scale * w
        self.diag_value = scale * diag
        self._conv = _ToeplitzConv(self.weights, g.shape)

    def matvec(self, x):
        x = np.asarray(x, dtype=float).reshape(self.grid.shape)
        return (self.diag_value * x - self._conv(x)).reshape(-1)

    def diagonal(self):
        return np.full(self.size, self.diag_value)

    def tail(self) -> np.ndarray:
        """Per-node exterior coefficient ``t_i = d - sum_{j in box} w_ij``."""
        ones = np.ones(self.grid.shape)
        return (self.diag_value - self._conv(ones)).reshape(-1)

    def dense(self):
        if self.grid.dimension == 1:
            M = self.grid.points_per_axis
            col = self.weights[M - 1 :]
            return self.diag_value * np.eye(M) - toeplitz(col)
        M = self.grid.points_per_axis
        o = M - 1
        i = np.arange(M)
        di = i[:, None] - i[None, :]
        block = self.weights[o + di[:, None, :, None], o + di[None, :, None, :]]
        mat = -block.reshape(M * M, M * M)
        mat[np.diag_indices_from(mat)] += self.diag_value
        return mat

    def power_tail(self, exponent: float) -> "PowerTailExterior":
        exponent = float(exponent)
        cache = self.__dict__.setdefault("_tails", {})
        if exponent not in cache:
            cache[exponent] = PowerTailExterior(self, exponent)
        return cache[exponent]

    def table(self):
        o = self.grid.points_per_axis - 1
        if self.grid.dimension == 1:
            return {"offset": np.arange(-o, o + 1), "weight": self.weights}
        k = np.arange(-o, o + 1)
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        return {"offset0": k1.reshape(-1), "offset1": k2.reshape(-1), "weight": self.weights.reshape(-1)}


class PowerTailExterior:
    """Exterior of a 1D kernel operator filled by a power-law continuation.

    Beyond the right end the field is taken as ``f_edge * r(y)`` with
    ``r(y) = (x_edge / y)^p`` (mirror image on the left). The exterior is
    sampled at ``Q`` points: the first virtual nodes one by one, then
    panels growing geometrically with the distance from the edge, out to
    ``1e12`` box widths. ``K`` holds the
    kernel weight of each sample seen from each node, so the exterior term is
    ``K_left @ g(f_0 r) + K_right @ g(f_last r)`` for any pointwise map ``g``.
    With ``p = 0`` the continuation is the constant edge value and the sample
    set collapses to one closed-form tail per side.
    """

    def __init__(self, op: KernelOperator, exponent: float, near: int = 32, per_octave: int = 4):
        if op.grid.dimension != 1:
            raise UnsupportedDimensionError("power-tail exterior is implemented for N = 1 only")
        if not exponent >= 0:
            raise InvalidParameterError("tail exponent must be nonnegative")
        g = op.grid
        M, h, s = g.points_per_axis, g.spacing, op.s
        scale = op.normalization * h ** (-2.0 * s)
        i = np.arange(M, dtype=float)
        self.exponent = exponent
        self.edges = np.array([0, M - 1])
        if exponent == 0.0:
            k_right = scale * op._unit_tail(M - i)[:, None]
            self.ratios = np.ones(1)
        else:
            unit = _unit_weights_1d(s, M + near)
            j = np.arange(M, M + near)
            cols = [scale * unit[(j[None, :] - i[:, None]).astype(int)]]
            pos = list(j.astype(float))
            # panel breaks grow geometrically in the distance from the edge
            d = [near]
            while d[-1] < 1e12 * M:
                d.append(max(d[-1] + 1, int(round(d[-1] * 2.0 ** (1.0 / per_octave)))))
            b = M + np.array(d, dtype=float)
            ta = _unit_tail_1d(s, b[None, :-1] - i[:, None])
            tb = _unit_tail_1d(s, b[None, 1:] - i[:, None])
            cols.append(scale * (ta - tb))
            cols.append(scale * _unit_tail_1d(s, b[-1] - i)[:, None])
            pos += list(np.sqrt(b[:-1] * (b[1:] - 1.0))) + [2.0 * b[-1]]
            k_right = np.concatenate(cols, axis=1)
            x = -g.half_width + (np.array(pos) + 0.5) * h
            self.ratios = (g.axis()[-1] / x) ** exponent
        self.k_right = k_right
        self.k_left = k_right[::-1]

    def exterior_term(self, left_samples: np.ndarray, right_samples: np.ndarray) -> np.ndarray:
        return self.k_left @ left_samples + self.k_right @ right_samples

    def linear_columns(self) -> np.ndarray:
        """Columns ``C`` with exterior term ``C @ f[edges]`` for a linear field."""
        return np.column_stack([self.k_left @ self.ratios, self.k_right @ self.ratios])


class _ToeplitzConv:
    """Linear (non-circular) convolution with a fixed centred offset table."""

    def __init__(self, table: np.ndarray, shape: tuple[int, ...]):
        self.shape = shape
        self.fshape = tuple(sfft.next_fast_len(2 * m - 1 + m - 1, real=True) for m in shape)
        self.kernel_hat = sfft.rfftn(table, self.fshape)
        self.slices = tuple(slice(m - 1, 2 * m - 1) for m in shape)

    def __call__(self, x):
        y = sfft.irfftn(sfft.rfftn(x, self.fshape) * self.kernel_hat, self.fshape)
        return y[self.slices]


class PeriodicSpectralOperator(DiscreteOperator):
    def __init__(self, spec: OperatorSpec):
        super().__init__(spec)
        g = self.grid
        k = 2.0 * math.pi * sfft.fftfreq(g.points_per_axis, d=g.spacing)
        kr = 2.0 * math.pi * sfft.rfftfreq(g.points_per_axis, d=g.spacing)
        axes = [k] * (g.dimension - 1) + [kr]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.multiplier = np.sqrt(sum(m * m for m in mesh)) ** (2.0 * self.s)
        self.multiplier.reshape(-1)[0] = 0.0

    def matvec(self, x):
        x = np.asarray(x, dtype=float).reshape(self.grid.shape)
        return sfft.irfftn(sfft.rfftn(x) * self.multiplier, self.grid.shape).reshape(-1)

    def diagonal(self):
        # exact: every diagonal entry of a circulant equals the mean symbol
        full = self._full_multiplier()
        return np.full(self.size, full.mean())

    def _full_multiplier(self):
        g = self.grid
        k = 2.0 * math.pi * sfft.fftfreq(g.points_per_axis, d=g.spacing)
        mesh = np.meshgrid(*([k] * g.dimension), indexing="ij")
        return np.sqrt(sum(m * m for m in mesh)) ** (2.0 * self.s)

    def table(self):
        g = self.grid
        k = 2.0 * math.pi * sfft.fftfreq(g.points_per_axis, d=g.spacing)
        mesh = np.meshgrid(*([k] * g.dimension), indexing="ij")
        out = {f"k{i}": m.reshape(-1) for i, m in enumerate(mesh)}
        out["multiplier"] = self._full_multiplier().reshape(-1)
        return out


class DirichletSpectralOperator(DiscreteOperator):
    def __init__(self, spec: OperatorSpec):
        super().__init__(spec)
        g = self.grid
        M, h = g.points_per_axis, g.spacing
        lam1 = (2.0 / h * np.sin(np.pi * np.arange(1, M + 1) / (2.0 * M))) ** 2
        mesh = np.meshgrid(*([lam1] * g.dimension), indexing="ij")
        self.eigenvalues = sum(mesh)
        self.multiplier = self.eigenvalues**self.s

    def matvec(self, x):
        x = np.asarray(x, dtype=float).reshape(self.grid.shape)
        coef = sfft.dstn(x, type=2, norm="ortho")
        return sfft.idstn(coef * self.multiplier, type=2, norm="ortho").reshape(-1)

    def diagonal(self):
        return np.full(self.size, self.multiplier.mean())

    def table(self):
        idx = np.meshgrid(*([np.arange(1, self.grid.points_per_axis + 1)] * self.grid.dimension), indexing="ij")
        out = {f"mode{i}": m.reshape(-1) for i, m in enumerate(idx)}
        out["eigenvalue"] = self.eigenvalues.reshape(-1)
        out["multiplier"] = self.multiplier.reshape(-1)
        return out


def build_operator(spec: OperatorSpec) -> DiscreteOperator:
    if spec.kind is OperatorKind.PERIODIC_SPECTRAL:
        return PeriodicSpectralOperator(spec)
    if spec.kind is OperatorKind.DIRICHLET_SPECTRAL:
        return DirichletSpectralOperator(spec)
    return KernelOperator(spec)


def apply(op: DiscreteOperator, f: Field) -> Field:
    return op.apply(f)


def stroock_varopoulos_pairing(op: DiscreteOperator, f: Field, delta: float) -> float:
    """``<p(f), A f>`` with the nondecreasing test function ``p(y) = max(0, tanh(y / delta))``.

    Nonnegative for every kernel operator with nonnegative weights.
    """
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")
    pf = np.maximum(0.0, np.tanh(np.asarray(f.values, dtype=float) / delta))
    return float(np.sum(pf * op.apply(f).values) * f.grid.cell_volume)


# --------------------------------------------------------------------------
# Riesz potential


@functools.lru_cache(maxsize=16)
def _riesz_table(dimension: int, s: float, M: int, h: float) -> np.ndarray:
    c = riesz_constant(dimension, s)
    if dimension == 1:
        k = np.arange(1, M, dtype=float)
        one = ((k + 0.5) ** (2 * s) - (k - 0.5) ** (2 * s)) / (2 * s)
        centre = 2.0 * 0.5 ** (2 * s) / (2 * s)
        unit = np.concatenate([one[::-1], [centre], one])
    elif dimension == 2:
        unit = _cell_integrals_2d(2.0 * s - 2.0, M - 1)
        unit[M - 1, M - 1] = _square_boundary_integral(lambda r: r ** (2.0 * s) / (2.0 * s))
    else:
        raise UnsupportedDimensionError("Riesz potential is implemented for N <= 2")
    return c * h ** (2.0 * s) * unit


def riesz_potential(f: Field, s: float) -> Field:
    """``(-Delta)^(-s) f`` by convolution with ``c_{N,s} |y|^(2s-N)``, zero exterior."""
    s = _check_s(s)
    g = f.grid
    riesz_constant(g.dimension, s)
    if f.exterior is not Exterior.ZERO:
        raise InvalidInputError("Riesz potential needs a decaying (zero-exterior) field")
    table = _riesz_table(g.dimension, s, g.points_per_axis, g.spacing)
    conv = _ToeplitzConv(table, g.shape)
    return Field(g, conv(np.asarray(f.values)), Exterior.ZERO)


def one_d_kernel(x, s: float):
    """``|x|^(2s-1)``, the growth profile of the 1D Green function for ``s > 1/2``."""
    s = float(s)
    if not 0.5 < s < 1.0:
        raise InvalidParameterError(f"the 1D growing kernel needs 1/2 < s < 1, got {s}")
    out = np.abs(np.asarray(x, dtype=float)) ** (2.0 * s - 1.0)
    return float(out) if np.ndim(x) == 0 else out
