from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from sfdlab import (
    BallSpec,
    Classification,
    ClassificationRule,
    GreenRegime,
    LogHalf,
    Nonlinearity,
    OperatorKind,
    OperatorSpec,
    ParabolicProblem,
    PhaseProtocol,
    UniformGrid,
    VerySingular,
    chebyshev_times,
    classify_extinction,
    epsilon_sweep,
    evolve,
    expected_phase,
    explicit_solution,
    phase_diagram,
    s_continuity_probe,
    tail_decay_probe,
    verify_green_identity,
)
from sfdlab.errors import DomainError, InvalidInputError, InvalidParameterError, UnsupportedRegimeError
from sfdlab.extinction import nonlinearity_for

EPS = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
C = Classification


def _template(s, n, L=512.0, M=2048, dt=0.1 / 16, t_end=0.1, eps=1e-1):
    grid = UniformGrid(1, L, M)
    u0 = grid.sample(lambda x: np.exp(-x * x))
    return ParabolicProblem(OperatorSpec(s, OperatorKind.TRUNCATED_QUADRATURE, grid), nonlinearity_for(n), eps, u0, t_end, dt)


# classification rule


def test_classify_geometric_decay_extinct():
    assert classify_extinction([10.0 ** -k for k in range(5)], EPS, 1.0) is C.EXTINCT


def test_classify_constant_persistent():
    assert classify_extinction([0.7] * 5, EPS, 1.0) is C.PERSISTENT


def test_classify_oscillating_inconclusive():
    assert classify_extinction([0.9, 0.4, 0.8, 0.3, 0.7], EPS, 1.0) is C.INCONCLUSIVE


def test_classify_needs_four_points():
    assert classify_extinction([1.0, 0.1, 0.01], EPS[:3], 1.0) is C.INCONCLUSIVE


def test_classify_rejects_nonpositive_mass():
    with pytest.raises(InvalidInputError):
        classify_extinction([1.0, 0.5, 0.0, 0.1], EPS[:4], 1.0)


def test_classify_thresholds_overridable():
    masses = [1.0, 0.5, 0.25, 0.12, 0.06]
    assert classify_extinction(masses, EPS, 1.0) is C.INCONCLUSIVE
    assert classify_extinction(masses, EPS, 1.0, ClassificationRule(theta=0.1)) is C.EXTINCT


def test_expected_phase():
    assert expected_phase(0.75, 0.2) is C.PERSISTENT
    assert expected_phase(0.9, 0.9) is C.EXTINCT
    assert expected_phase(0.5, 0.0) is C.PERSISTENT
    assert expected_phase(0.5, 0.1) is C.EXTINCT
    assert expected_phase(0.3, 0.0) is C.EXTINCT


# sweeps and phase diagram


def test_sweep_single_entry_inconclusive():
    res = epsilon_sweep(_template(0.5, 1.0, L=8.0, M=64), [1e-1], 0.1, BallSpec(0.0, 1.0))
    assert res.classification is C.INCONCLUSIVE
    assert len(res.ball_masses) == 1


def test_sweep_validation():
    t = _template(0.5, 1.0, L=8.0, M=64)
    with pytest.raises(InvalidParameterError):
        epsilon_sweep(t, [1e-2, 1e-1], 0.1, BallSpec(0.0, 1.0))
    with pytest.raises(InvalidParameterError):
        epsilon_sweep(t, EPS, 0.5, BallSpec(0.0, 1.0))


@pytest.mark.slow
def test_sweep_extinct_range():
    res = epsilon_sweep(_template(0.3, 1.0), EPS, 0.1, BallSpec(0.0, 1.0))
    assert np.all(np.diff(res.ball_masses) < 0)
    assert res.classification is C.EXTINCT


@pytest.mark.slow
def test_sweep_persistent_range():
    res = epsilon_sweep(_template(0.75, 0.2), EPS, 0.1, BallSpec(0.0, 1.0))
    m = res.ball_masses
    assert np.all(np.diff(m) <= 0)
    assert abs(m[-1] - m[-2]) / m[-2] <= 0.05
    assert res.classification is C.PERSISTENT


@pytest.mark.slow
def test_phase_diagram_examples():
    pts = phase_diagram([], [], workers=1, points=[(0.75, 0.2), (0.9, 0.9), (0.5, 0.0)])
    assert [(p.s, p.n) for p in pts] == [(0.75, 0.2), (0.9, 0.9), (0.5, 0.0)]
    assert [p.classification for p in pts] == [C.PERSISTENT, C.EXTINCT, C.PERSISTENT]
    assert pts[1].margin == pytest.approx(0.1)


def test_phase_diagram_skips_band():
    proto = PhaseProtocol(half_width=8.0, points=64, eps_list=(1e-1, 1e-2, 1e-3, 1e-4))
    pts = phase_diagram([0.75], [0.45, 0.5], proto, workers=1)
    assert pts == []


def test_phase_diagram_rejects_bad_point():
    with pytest.raises(InvalidParameterError):
        phase_diagram([1.0], [0.5])


@pytest.mark.slow
def test_phase_classification_stable_under_refinement():
    spots = [(0.75, 0.2), (0.3, 1.0), (0.9, 0.9)]
    coarse = phase_diagram([], [], workers=1, points=spots)
    fine = phase_diagram([], [], PhaseProtocol().refined(), workers=1, points=spots)
    assert [p.classification for p in coarse] == [p.classification for p in fine]


# Green identity


def test_chebyshev_times():
    t = chebyshev_times(0.1, 0.2)
    assert len(t) == 33 and t[0] == 0.1 and t[-1] == 0.2
    assert np.all(np.diff(t) > 0)


def test_green_empty_interval():
    p = _template(0.75, 1.0, L=8.0, M=64, eps=1e-2)
    tr = evolve(p, [0.05], accumulate_phi=True)
    reps = verify_green_identity(tr, p, [0.0, 1.0, 2.0], 0.05, 0.05)
    assert all(r.lhs == 0 and r.rhs == 0 and r.residual == 0 for r in reps)
    assert reps[0].regime is GreenRegime.ONE_D_SUP_HALF


def test_green_regime_mismatch():
    p = _template(0.5, 1.0, L=8.0, M=64, eps=1e-2)
    tr = evolve(p, [0.05, 0.1], accumulate_phi=True)
    with pytest.raises(UnsupportedRegimeError):
        verify_green_identity(tr, p, [0.0], 0.05, 0.1)


def test_green_quadratures_agree_roughly():
    p = _template(0.3, 1.0, L=8.0, M=128, dt=0.1 / 64, eps=1e-2)
    times = [k * 0.1 / 64 for k in range(32, 65)]
    tr = evolve(p, times, accumulate_phi=True)
    a = verify_green_identity(tr, p, [0.0, 1.0], 0.05, 0.1, "scheme")
    b = verify_green_identity(tr, p, [0.0, 1.0], 0.05, 0.1, "trapezoid")
    assert a[0].regime is GreenRegime.SUPERCRITICAL
    for ra, rb in zip(a, b):
        assert ra.rhs == rb.rhs
        assert abs(ra.lhs - rb.lhs) <= 0.05 * abs(ra.lhs)


# explicit solutions


def test_log_half_values():
    assert explicit_solution(LogHalf(1.0), 0.0, 0.0) == 2.0
    np.testing.assert_array_equal(explicit_solution(LogHalf(1.0), np.linspace(-5, 5, 11), 1.0), 0.0)
    with pytest.raises(DomainError):
        explicit_solution(LogHalf(1.0), 0.0, 1.5)


def test_log_half_residual_by_quadrature():
    """d/dt U + (-Delta)^(1/2) log U at x = 0, t = 0.25 vanishes."""
    kind, t = LogHalf(1.0), 0.25
    log_u = lambda y: math.log(explicit_solution(kind, y, t))
    # symmetric profile: p.v. integral folds onto (0, inf)
    integrand = lambda y: 2.0 * (log_u(0.0) - log_u(y)) / (y * y)
    frac = (quad(integrand, 0, 1)[0] + quad(integrand, 1, np.inf)[0]) / math.pi
    h = 1e-6
    dudt = (explicit_solution(kind, 0.0, t + h) - explicit_solution(kind, 0.0, t - h)) / (2 * h)
    assert abs(dudt + frac) <= 1e-3


def test_very_singular_time_factor():
    kind = VerySingular(m=0.5, s=0.5, C=1.3, T=2.0)
    x = np.array([0.5, 1.0, 3.0])
    ratio = explicit_solution(kind, x, 1.0) / explicit_solution(kind, x, 0.0)
    np.testing.assert_allclose(ratio, (1.0 / 2.0) ** 2)
    np.testing.assert_allclose(explicit_solution(kind, x, 0.0), 1.3 * 4.0 * x ** -2.0)
    assert np.all(explicit_solution(kind, x, 2.0) == 0)


def test_very_singular_domain():
    with pytest.raises(DomainError):
        explicit_solution(VerySingular(0.5, 0.5, 1.0, 1.0), 0.0, 0.0)
    with pytest.raises(DomainError):
        explicit_solution(VerySingular(1.0, 0.5, 1.0, 1.0), 1.0, 0.0)
    with pytest.raises(DomainError):
        explicit_solution(VerySingular(0.5, 0.5, 1.0, 1.0), 1.0, 2.0)


# tails and continuity


def test_tail_probe_power():
    g = UniformGrid(1, 100.0, 2048)
    fit = tail_decay_probe(g.sample(lambda x: np.abs(x) ** -0.5))
    assert abs(fit.exponent + 0.5) <= 0.02
    assert fit.power_like


def test_tail_probe_gaussian():
    g = UniformGrid(1, 5.0, 256)
    fit = tail_decay_probe(g.sample(lambda x: np.exp(-x * x)))
    assert fit.exponent <= -3
    assert not fit.power_like


def test_tail_probe_rejects_nonpositive():
    g = UniformGrid(1, 5.0, 64)
    with pytest.raises(InvalidInputError):
        tail_decay_probe(g.zeros())


@pytest.mark.slow
def test_tail_of_persistent_run():
    eps = 1e-5
    p = _template(0.8, 0.3, eps=eps)
    tr = evolve(p, [0.1])
    v = tr.snapshot(0.1)
    fit = tail_decay_probe(v.with_values(v.values + eps))
    assert abs(fit.exponent + 2.0) <= 0.25 * 2.0


def test_continuity_zero_delta():
    p = _template(0.5, 1.0, L=8.0, M=64, eps=1e-2)
    res = s_continuity_probe(p, [0.1, 0.0])
    assert res.distances[-1] == 0.0
    assert res.distances[0] > 0
    assert not res.failed


def test_continuity_needs_half():
    with pytest.raises(InvalidParameterError):
        s_continuity_probe(_template(0.6, 1.0, L=8.0, M=64), [0.1])


@pytest.mark.slow
def test_continuity_final_distance_within_refinement_error():
    """Final distance at most twice the grid-refinement error of the s = 1/2 run."""

    def run(M):
        grid = UniformGrid(1, 256.0, M)
        u0 = grid.sample(lambda x: np.exp(-x * x))
        return ParabolicProblem(OperatorSpec(0.5, OperatorKind.TRUNCATED_QUADRATURE, grid), Nonlinearity.power(1.0), 1e-2, u0, 0.1, 0.1 / 32)

    base = run(2048)
    res = s_continuity_probe(base, [0.2, 0.1, 0.05, 0.025])
    coarse = evolve(base, [0.1]).snapshot(0.1).values
    fine = evolve(run(4096), [0.1]).snapshot(0.1).values
    # cell-centred nodes: average fine pairs onto the coarse cells
    refinement = np.sum(np.abs(fine.reshape(-1, 2).mean(axis=1) - coarse)) * base.grid.spacing
    assert res.distances[-1] <= 2 * refinement
