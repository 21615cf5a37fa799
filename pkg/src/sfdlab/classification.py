"""Finite-eps decision rule for extinction versus persistence."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

__all__ = ["Classification", "ClassificationRule", "SweepResult", "classify_extinction", "loglog_slope"]


class Classification(enum.Enum):
    EXTINCT = "extinct"
    PERSISTENT = "persistent"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ClassificationRule:
    """Thresholds of the eps-trend rule.

    ``theta``: largest final/initial ball-mass ratio still called extinct.
    ``sigma``: smallest log-log slope of mass against eps over the last three points.
    ``stabilization``: largest relative change of the last two masses called stable.
    """

    theta: float = 0.05
    sigma: float = 0.1
    stabilization: float = 0.05
    persistent_floor: float = 0.5

    def as_dict(self) -> dict[str, float]:
        return {
            "theta": self.theta,
            "sigma": self.sigma,
            "stabilization": self.stabilization,
            "persistent_floor": self.persistent_floor,
        }


@dataclass
class SweepResult:
    eps_values: list[float]
    ball_masses: list[float]
    tau: float | None = None
    slope: float = float("nan")
    classification: Classification = Classification.INCONCLUSIVE
    reports: list = field(default_factory=list)
    initial_ball_mass: float = float("nan")


def loglog_slope(eps_values, masses) -> float:
    """Least-squares slope of ``log m`` against ``log eps``."""
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(masses, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def classify_extinction(masses, eps_values, initial_mass: float | None = None, rule: ClassificationRule | None = None) -> Classification:
    """Classify an eps-sweep of ball masses.

    ``initial_mass`` is the ball mass of the initial data (or of the source for
    the elliptic problem); it defaults to the first sweep mass.
    """
    rule = rule or ClassificationRule()
    m = np.asarray(masses, dtype=float)
    e = np.asarray(eps_values, dtype=float)
    if m.size != e.size:
        raise InvalidInputError("masses and eps values differ in length")
    if m.size < 4:
        return Classification.INCONCLUSIVE
    if np.any(~(m > 0)):
        raise InvalidInputError("ball masses must be positive")
    ref = m[0] if initial_mass is None else float(initial_mass)
    decreasing = bool(np.all(np.diff(m) < 0))
    slope = loglog_slope(e[-3:], m[-3:])
    if decreasing and m[-1] <= rule.theta * ref and slope >= rule.sigma:
        return Classification.EXTINCT
    change = abs(m[-1] - m[-2]) / m[-2]
    if change <= rule.stabilization and m[-1] >= rule.persistent_floor * m[0]:
        return Classification.PERSISTENT
    return Classification.INCONCLUSIVE
