from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfdlab import (
    Nonlinearity,
    RegularizedNonlinearity,
    Slowness,
    beta,
    is_slower,
    parse_nonlinearity,
    phi,
    phi_eps,
    phi_eps_prime,
    phi_prime,
    singular_bound_constant,
)
from sfdlab.errors import DomainError, InvalidParameterError

KINDS = [Nonlinearity.power(0.5), Nonlinearity.power(1.0), Nonlinearity.power(2.0), Nonlinearity.log()]


def test_phi_values():
    assert phi(Nonlinearity.power(1), 2.0) == -0.5
    assert phi(Nonlinearity.log(), 1.0) == 0.0
    assert phi(Nonlinearity.power(2), 0.1) == pytest.approx(-100.0, rel=1e-14)


def test_phi_domain_guard():
    for nl in KINDS:
        with pytest.raises(DomainError):
            phi(nl, 0.0)
        with pytest.raises(DomainError):
            phi(nl, -1.0)


@pytest.mark.parametrize("nl", KINDS, ids=lambda nl: nl.label())
def test_phi_strictly_increasing_and_singular(nl):
    u = np.logspace(-8, 8, 400)
    assert np.all(phi_prime(nl, u) > 0)
    assert np.all(np.diff(phi(nl, u)) > 0)
    if nl.kind == "power" and nl.n >= 1:
        assert phi(nl, 1e-12) < -1e6
    assert phi(nl, 1e-100) < phi(nl, 1e-12) < phi(nl, 1.0)


def test_power_exponent_must_be_positive():
    with pytest.raises(InvalidParameterError):
        Nonlinearity.power(0.0)


def test_phi_eps_values():
    for nl in KINDS:
        assert phi_eps(RegularizedNonlinearity(nl, 0.3), 0.0) == 0.0
    assert phi_eps(RegularizedNonlinearity(Nonlinearity.power(1), 1.0), 1.0) == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(DomainError):
        phi_eps(RegularizedNonlinearity(Nonlinearity.log(), 1.0), -0.1)


@pytest.mark.parametrize("nl", KINDS, ids=lambda nl: nl.label())
@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-4, 1e-6])
def test_phi_eps_monotone(nl, eps):
    rnl = RegularizedNonlinearity(nl, eps)
    v = np.concatenate([[0.0], np.logspace(-10, 3, 300)])
    # strict in exact arithmetic; near saturation the increments drop below rounding
    assert np.all(np.diff(phi_eps(rnl, v)) >= 0)
    assert np.all(phi_eps_prime(rnl, v) > 0)


@pytest.mark.parametrize("nl", KINDS, ids=lambda nl: nl.label())
def test_phi_eps_derivative_matches_central_difference(nl):
    rnl = RegularizedNonlinearity(nl, 0.1)
    h = 1e-5
    for v in (0.05, 0.3, 1.0, 4.0):
        fd = (phi_eps(rnl, v + h) - phi_eps(rnl, v - h)) / (2 * h)
        exact = phi_eps_prime(rnl, v)
        # O(h^2) truncation plus rounding of the difference quotient
        assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


def test_phi_eps_blows_up_as_eps_vanishes():
    assert phi_eps(RegularizedNonlinearity(Nonlinearity.power(1), 1e-8), 1.0) > 1e6


def test_beta_values_and_round_trip():
    assert beta(Nonlinearity.power(1), -0.5) == pytest.approx(2.0)
    assert beta(Nonlinearity.log(), 0.0) == 1.0
    for nl in KINDS:
        for u in (1e-3, 1.0, 1e3):
            assert beta(nl, phi(nl, u)) == pytest.approx(u, rel=1e-12)
    with pytest.raises(DomainError):
        beta(Nonlinearity.power(1), 0.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 1e6), st.sampled_from([0.3, 1.0, 2.5]))
def test_beta_inverts_power_phi(u, n):
    nl = Nonlinearity.power(n)
    assert beta(nl, phi(nl, u)) == pytest.approx(u, rel=1e-10)


def test_is_slower_examples():
    base = Nonlinearity.power(1)
    half = Nonlinearity.custom(lambda u: 0.5 * phi(base, u), lambda u: 0.5 * phi_prime(base, u))
    assert is_slower(half, base) is Slowness.SLOWER
    assert is_slower(Nonlinearity.power(2), Nonlinearity.power(1), u_max=10.0) is Slowness.NOT_SLOWER
    assert is_slower(base, base) is Slowness.SLOWER


def test_singular_bound_constant_examples():
    for n in (0.5, 1.0, 3.0):
        assert singular_bound_constant(Nonlinearity.power(n), n, 7.0) == pytest.approx(n, rel=1e-12)
    assert singular_bound_constant(Nonlinearity.log(), 0.0, 10.0) == pytest.approx(1.0, rel=1e-12)
    custom = Nonlinearity.custom(lambda u: -1.0 / u, lambda u: 1.0 / u**2)
    assert singular_bound_constant(custom, 2.0, 1.0) == 0.0


def test_parse_nonlinearity_grammar():
    assert parse_nonlinearity("power:1.5") == Nonlinearity.power(1.5)
    assert parse_nonlinearity("log") == Nonlinearity.log()
    with pytest.raises(InvalidParameterError):
        parse_nonlinearity("cubic")
