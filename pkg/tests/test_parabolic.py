from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import root

from sfdlab import (
    BallSpec,
    Exterior,
    LogHalf,
    Nonlinearity,
    OperatorKind,
    OperatorSpec,
    ParabolicProblem,
    Topology,
    UniformGrid,
    ab_violation,
    contraction_check,
    diagnostics,
    dirichlet_chain_check,
    evolve,
    explicit_solution,
    lp_norm,
    step,
)
from sfdlab.errors import InvalidInputError, InvalidParameterError

K = OperatorKind
AB_TIMES = (0.0625, 0.125, 0.25, 0.375, 0.5)


def _problem(u0, s=0.5, n=1.0, eps=1e-2, kind=K.TRUNCATED_QUADRATURE, L=8.0, t_end=0.1, dt=0.1 / 16, **kw):
    u0 = np.asarray(u0, dtype=float)
    topo = Topology.PERIODIC if kind is K.PERIODIC_SPECTRAL else Topology.TRUNCATED
    grid = UniformGrid(1, L, u0.size, topo)
    return ParabolicProblem(OperatorSpec(s, kind, grid), Nonlinearity.power(n), eps, grid.field(u0), t_end, dt, **kw)


def _gaussian(M, L=8.0, width=1.0, height=1.0):
    x = UniformGrid(1, L, M).axis()
    return height * np.exp(-(x / width) ** 2)


def test_constant_periodic_state_is_fixed():
    p = _problem(np.full(32, 0.4), kind=K.PERIODIC_SPECTRAL)
    nxt, _ = step(p.initial, p)
    np.testing.assert_allclose(nxt.values, 0.4, atol=1e-13)


def test_zero_state_is_fixed():
    p = _problem(np.zeros(32))
    nxt, _ = step(p.initial, p)
    assert np.all(nxt.values == 0)


def test_step_matches_dense_oracle(rng):
    eps, dt = 0.1, 0.05
    p = _problem(rng.random(8), eps=eps, dt=dt, L=2.0)
    nxt, rep = step(p.initial, p)
    dense = p.op.dense()
    g = p.initial.values
    # closed form of phi_eps for n = 1, smooth on v > -eps
    fun = lambda x: x + dt * dense @ (1 / eps - 1 / (x + eps)) - g
    sol = root(fun, g, method="hybr", tol=1e-15)
    assert np.max(np.abs(fun(sol.x))) <= 1e-13
    assert np.max(np.abs(nxt.values - sol.x)) <= 1e-10


def test_step_rejects_negative_state():
    p = _problem(np.ones(8))
    with pytest.raises(InvalidInputError):
        step(p.initial.with_values(-np.ones(8)), p)


def test_problem_validation():
    with pytest.raises(InvalidParameterError):
        _problem(np.ones(8), eps=0.0)
    with pytest.raises(InvalidParameterError):
        _problem(np.ones(8), t_end=0.1, dt=0.2)
    with pytest.raises(InvalidInputError):
        _problem(-np.ones(8))


def test_sample_times_validated():
    p = _problem(np.ones(8))
    with pytest.raises(InvalidParameterError):
        evolve(p, [0.5])


def test_trajectory_structure():
    p = _problem(_gaussian(64), t_end=0.1, dt=0.03)
    tr = evolve(p, [0.0, 0.05, 0.1])
    assert tr.times[0] == 0.0 and tr.times[-1] == 0.1
    assert np.all(np.diff(tr.times) > 0)
    assert len(tr.summaries) == tr.step_count + 1
    assert set(tr.snapshots) == {0.0, 0.05, 0.1}
    assert all(np.all(f.values >= 0) for f in tr.snapshots.values())


def test_constant_run_diagnostics():
    p = _problem(np.full(32, 0.5), kind=K.PERIODIC_SPECTRAL)
    tr = evolve(p, [0.05, 0.1])
    rep = diagnostics(tr, p)
    assert rep.mass_drift <= 1e-14
    assert rep.linf_monotone
    assert rep.ab_violation == 0.0


def test_periodic_mass_and_linf():
    p = _problem(_gaussian(128), kind=K.PERIODIC_SPECTRAL, s=0.3)
    tr = evolve(p)
    rep = diagnostics(tr, p)
    assert rep.max_step_mass_change <= 1e-12
    assert rep.linf_monotone


@pytest.mark.parametrize("kind", [K.PERIODIC_SPECTRAL, K.TRUNCATED_QUADRATURE])
@pytest.mark.parametrize("s,n", [(0.3, 1.0), (0.75, 0.5), (0.75, 2.0)])
def test_aronson_benilan_on_sample_times(kind, s, n):
    p = _problem(_gaussian(128), s=s, n=n, kind=kind, t_end=0.5, dt=0.5 / 64)
    tr = evolve(p, AB_TIMES)
    assert ab_violation(tr, n, p.eps) <= 1e-8


def test_aronson_benilan_from_first_step():
    p = _problem(_gaussian(128), s=0.3, n=1.0, kind=K.PERIODIC_SPECTRAL, t_end=0.5, dt=0.5 / 64)
    tr = evolve(p, [k * 0.5 / 64 for k in range(1, 65)])
    assert ab_violation(tr, 1.0, p.eps) <= 1e-8


def test_contraction_identical_data():
    p = _problem(_gaussian(64))
    assert abs(contraction_check(p, p, 0.1)) <= 1e-10


def test_contraction_ordered_data():
    p1 = _problem(_gaussian(64, height=0.5))
    p2 = _problem(_gaussian(64, height=1.0))
    assert contraction_check(p1, p2, 0.1) <= 1e-10
    a = evolve(p1, [0.1]).snapshot(0.1).values
    b = evolve(p2, [0.1]).snapshot(0.1).values
    assert np.all(a <= b + 1e-10)


def test_contraction_random_pair(rng):
    p1 = _problem(rng.random(64), s=0.6)
    p2 = p1.replace(initial=p1.grid.field(rng.random(64)))
    assert contraction_check(p1, p2, 0.1) <= 1e-8


def test_contraction_mismatch():
    p1 = _problem(np.ones(8))
    with pytest.raises(InvalidInputError):
        contraction_check(p1, p1.replace(eps=0.5), 0.1)


def test_lp_norms_do_not_grow(rng):
    p = _problem(rng.random(128), s=0.4, n=0.5)
    tr = evolve(p, [0.0, 0.025, 0.05, 0.1])
    for q in (1, 2, np.inf):
        n0 = lp_norm(tr.snapshots[0.0], q)
        for t in (0.025, 0.05, 0.1):
            assert lp_norm(tr.snapshots[t], q) <= n0 + 1e-10


def test_eps_monotone_trajectories():
    times = [0.025, 0.05, 0.1]
    big = evolve(_problem(_gaussian(128), s=0.3, eps=1e-1), times)
    small = evolve(_problem(_gaussian(128), s=0.3, eps=1e-2), times)
    for t in times:
        assert np.all(small.snapshot(t).values + 1e-2 <= big.snapshot(t).values + 1e-1 + 1e-9)


def test_chain_zero_data():
    grid = UniformGrid(1, 8.0, 64)
    mask = grid.field((np.abs(grid.axis()) < 4).astype(float))
    res = dirichlet_chain_check(grid.zeros(), mask, 0.3, Nonlinearity.power(1.0), 1e-2, 0.1, detail=True)
    assert res.holds
    assert res.max_excess == 0.0


@pytest.mark.parametrize("kind", [K.DIRICHLET_RESTRICTED, K.DIRICHLET_SPECTRAL])
def test_chain_gaussian_half_box(kind):
    grid = UniformGrid(1, 8.0, 256)
    u0 = grid.sample(lambda x: np.exp(-x * x))
    mask = grid.field((np.abs(grid.axis()) < 4).astype(float))
    assert dirichlet_chain_check(u0, mask, 0.3, Nonlinearity.power(1.0), 1e-2, 0.1, kind=kind)


def test_chain_full_mask():
    grid = UniformGrid(1, 8.0, 256)
    u0 = grid.sample(lambda x: np.where(np.abs(x) < 4, np.exp(-x * x), 0.0))
    mask = grid.field(np.ones(256))
    assert dirichlet_chain_check(u0, mask, 0.3, Nonlinearity.power(1.0), 1e-2, 0.1)


def test_chain_rejects_non_binary_mask():
    grid = UniformGrid(1, 8.0, 64)
    with pytest.raises(InvalidInputError):
        dirichlet_chain_check(grid.zeros(), grid.field(np.full(64, 0.5)), 0.3, Nonlinearity.power(1.0), 1e-2, 0.1)


def _explicit_error(dt):
    grid = UniformGrid(1, 200.0, 2048)
    kind = LogHalf(1.0)
    u0 = grid.sample(lambda x: explicit_solution(kind, x, 0.0), Exterior.POWER_TAIL, 0.0, 2.0)
    p = ParabolicProblem(OperatorSpec(0.5, K.TRUNCATED_QUADRATURE, grid), Nonlinearity.log(), 1e-8, u0, 0.5, dt)
    tr = evolve(p, [0.5])
    assert not tr.failed
    exact = explicit_solution(kind, grid.axis(), 0.5)
    return np.sum(np.abs(tr.snapshot(0.5).values - exact)) / np.sum(exact)


@pytest.mark.slow
def test_time_step_refinement_halves_explicit_error():
    ratio = _explicit_error(1 / 256) / _explicit_error(1 / 128)
    assert 0.4 <= ratio <= 0.6
