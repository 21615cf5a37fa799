"""Singular nonlinearities ``phi``, their epsilon-shifted versions and inverses.

Two closed-form families are built in:

* ``power:n``  ``phi(u) = -u**(-n)``, ``n > 0``
* ``log``      ``phi(u) = log(u)``

Both blow down to ``-inf`` at ``u = 0``. A solver never evaluates them there:
it works with ``phi_eps(v) = phi(v + eps) - phi(eps)``, which is finite,
increasing and vanishes at ``v = 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidParameterError

__all__ = [
    "Nonlinearity",
    "RegularizedNonlinearity",
    "Slowness",
    "phi",
    "phi_prime",
    "phi_eps",
    "phi_eps_prime",
    "beta",
    "is_slower",
    "singular_bound_constant",
    "parse_nonlinearity",
]


class Slowness(enum.Enum):
    SLOWER = "slower"
    NOT_SLOWER = "not_slower"


@dataclass(frozen=True)
class Nonlinearity:
    kind: str
    n: float = 0.0
    func: Callable | None = None
    deriv: Callable | None = None

    def __post_init__(self):
        if self.kind == "power":
            if not self.n > 0:
                raise InvalidParameterError(f"power nonlinearity needs n > 0, got {self.n}")
        elif self.kind == "log":
            object.__setattr__(self, "n", 0.0)
        elif self.kind == "custom":
            if self.func is None or self.deriv is None:
                raise InvalidParameterError("custom nonlinearity needs both phi and phi'")
        else:
            raise InvalidParameterError(f"unknown nonlinearity kind {self.kind!r}")

    @classmethod
    def power(cls, n: float) -> "Nonlinearity":
        return cls("power", float(n))

    @classmethod
    def log(cls) -> "Nonlinearity":
        return cls("log")

    @classmethod
    def custom(cls, func: Callable, deriv: Callable, n: float = 0.0) -> "Nonlinearity":
        return cls("custom", float(n), func, deriv)

    @property
    def exponent(self) -> float:
        """The singular exponent ``n`` (0 for the logarithm)."""
        return self.n

    def label(self) -> str:
        if self.kind == "power":
            return f"power:{self.n:g}"
        return self.kind

    def __call__(self, u):
        return phi(self, u)


def _positive(u):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0)):
        raise DomainError("phi is only defined for u > 0")
    return u


def _scalar(x, like):
    return float(x) if np.ndim(like) == 0 else x


def phi(nl: Nonlinearity, u):
    u_arr = _positive(u)
    if nl.kind == "power":
        out = -(u_arr ** (-nl.n))
    elif nl.kind == "log":
        out = np.log(u_arr)
    else:
        out = np.asarray(nl.func(u_arr), dtype=float)
    return _scalar(out, u)


def phi_prime(nl: Nonlinearity, u):
    u_arr = _positive(u)
    if nl.kind == "power":
        out = nl.n * u_arr ** (-nl.n - 1.0)
    elif nl.kind == "log":
        out = 1.0 / u_arr
    else:
        out = np.asarray(nl.deriv(u_arr), dtype=float)
    return _scalar(out, u)


@dataclass(frozen=True)
class RegularizedNonlinearity:
    base: Nonlinearity
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidParameterError(f"eps must be positive, got {self.eps}")

    def __call__(self, v):
        return phi_eps(self, v)

    def prime(self, v):
        return phi_eps_prime(self, v)


def _nonnegative(v):
    v = np.asarray(v, dtype=float)
    if np.any(~(v >= 0)):
        raise DomainError("phi_eps is only defined for v >= 0")
    return v


def phi_eps(rnl: RegularizedNonlinearity, v):
    """``phi(v + eps) - phi(eps)`` evaluated without cancellation."""
    v_arr = _nonnegative(v)
    eps, nl = rnl.eps, rnl.base
    if nl.kind == "power":
        out = -(eps ** (-nl.n)) * np.expm1(-nl.n * np.log1p(v_arr / eps))
    elif nl.kind == "log":
        out = np.log1p(v_arr / eps)
    else:
        out = np.asarray(nl.func(v_arr + eps), dtype=float) - float(nl.func(np.asarray(eps)))
    return _scalar(out, v)


def phi_eps_prime(rnl: RegularizedNonlinearity, v):
    v_arr = _nonnegative(v)
    return _scalar(phi_prime(rnl.base, v_arr + rnl.eps), v)


def beta(nl: Nonlinearity, w):
    """Inverse of ``phi``."""
    w_arr = np.asarray(w, dtype=float)
    if nl.kind == "power":
        if np.any(~(w_arr < 0)):
            raise DomainError("power nonlinearity takes only negative values")
        out = (-w_arr) ** (-1.0 / nl.n)
    elif nl.kind == "log":
        if not np.all(np.isfinite(w_arr)):
            raise DomainError("log nonlinearity inverse needs finite w")
        out = np.exp(w_arr)
    else:
        raise InvalidParameterError("no closed-form inverse for a custom nonlinearity")
    return _scalar(out, w)


def _geometric_sample(u_max: float, decades: float = 12.0, per_decade: int = 20) -> np.ndarray:
    return u_max * np.logspace(-decades, 0.0, int(decades * per_decade) + 1)


def is_slower(big_phi: Nonlinearity, small_phi: Nonlinearity, sample=None, u_max: float = 10.0) -> Slowness:
    """``SLOWER`` iff ``Phi' <= phi'`` at every sample point (1e-12 relative slack)."""
    r = _geometric_sample(u_max) if sample is None else np.asarray(sample, dtype=float)
    a = phi_prime(big_phi, r)
    b = phi_prime(small_phi, r)
    ok = np.all(a <= b + 1e-12 * np.abs(b))
    return Slowness.SLOWER if ok else Slowness.NOT_SLOWER


def singular_bound_constant(nl: Nonlinearity, n: float, m_max: float, samples: int = 241) -> float:
    """Numerical infimum of ``phi'(u) u**(n+1)`` over ``(0, m_max]``.

    The sample is geometric over twelve decades below ``m_max``. When the
    product still decays like a positive power of ``u`` at the bottom of the
    sample, the infimum over the open interval is 0 and 0.0 is returned.
    """
    if not m_max > 0:
        raise InvalidParameterError("M must be positive")
    u = m_max * np.logspace(-12.0, 0.0, max(int(samples), 3))
    g = phi_prime(nl, u) * u ** (n + 1.0)
    slope = np.log(g[1] / g[0]) / np.log(u[1] / u[0])
    if slope > 1e-3:
        return 0.0
    return float(g.min())


def parse_nonlinearity(text: str) -> Nonlinearity:
    """Parse the config grammar ``power:<n>`` or ``log``."""
    t = text.strip().lower()
    if t == "log":
        return Nonlinearity.log()
    if t.startswith("power:"):
        try:
            n = float(t.split(":", 1)[1])
        except ValueError:
            raise InvalidParameterError(f"bad power exponent in {text!r}") from None
        return Nonlinearity.power(n)
    raise InvalidParameterError(f"nonlinearity must be 'power:<n>' or 'log', got {text!r}")
