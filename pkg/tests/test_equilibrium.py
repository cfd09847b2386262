import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from png_sfp.dynamics import SfpParams, choice, integrate_homogeneous
from png_sfp.game import GameError, asymmetric_matching_pennies, stag_hunt
from png_sfp.equilibrium import (
    check_monotone,
    entropy_term,
    interior_starts,
    multistart_qre,
    perturbed_payoff,
    qre_residual,
    solve_qre,
    star_potential,
    zero_sum_lyapunov,
)

prob = st.floats(0.02, 0.98)


def symmetric_stag_hunt_qre(beta):
    # P(H) = p solves p = s(beta (u_H - u_S)) with u_H - u_S = 3 p - 2
    f = lambda p: p - 1.0 / (1.0 + math.exp(-beta * (3 * p - 2)))  # noqa: E731
    # a third, unstable root lies between 2/3 and 0.9
    return brentq(f, 1e-12, 0.5, xtol=1e-15), brentq(f, 0.9, 1 - 1e-12, xtol=1e-15)


def test_zero_temperature_gives_uniform_play():
    g = asymmetric_matching_pennies()
    sol = solve_qre(g, 0.0)
    assert sol.converged and sol.iterations == 1
    np.testing.assert_allclose(sol.profile[2:8], 0.5)


def test_stag_hunt_equilibria_match_scalar_roots():
    g = stag_hunt()
    low, high = symmetric_stag_hunt_qre(5.0)
    clusters, solutions = multistart_qre(g, 5.0, n_starts=64)
    found = sorted(c.profile[0] for c in clusters)
    assert len(clusters) == 2
    np.testing.assert_allclose(found, [low, high], atol=1e-10)
    assert all(s.residual <= 1e-12 for s in solutions if s.converged)


def test_matching_pennies_equilibrium_is_unique_and_centered(rng):
    g = asymmetric_matching_pennies()
    profiles = []
    for _ in range(8):
        x0 = g.pinned(rng.dirichlet([1, 1], size=5).ravel())
        sol = solve_qre(g, 10.0, x0)
        assert sol.converged and qre_residual(g, sol.profile, 10.0) <= 1e-12
        profiles.append(sol.profile)
    np.testing.assert_allclose(np.array(profiles) - profiles[0], 0.0, atol=1e-10)
    np.testing.assert_allclose(profiles[0][4:6], 0.5, atol=1e-10)


def test_interior_starts_deterministic_and_interior():
    g = asymmetric_matching_pennies()
    a, b = interior_starts(g, 16), interior_starts(g, 16)
    np.testing.assert_array_equal(a, b)
    blocks = a.reshape(16, 5, 2)
    np.testing.assert_allclose(blocks.sum(axis=-1), 1.0)
    assert np.all(blocks[:, 1:4] > 0.01)


@settings(max_examples=25)
@given(prob, prob, prob)
def test_lyapunov_nonnegative(p2, p3, p4):
    g = asymmetric_matching_pennies()
    mu = g.pinned(np.array([1, 0, p2, 1 - p2, p3, 1 - p3, p4, 1 - p4, 0, 1.0]))
    assert zero_sum_lyapunov(g, mu, 10.0) >= -1e-12


def test_lyapunov_zero_at_equilibrium_and_refused_elsewhere():
    g = asymmetric_matching_pennies()
    q = solve_qre(g, 10.0).profile
    assert abs(zero_sum_lyapunov(g, q, 10.0)) < 1e-12
    with pytest.raises(GameError):
        zero_sum_lyapunov(stag_hunt(), stag_hunt().uniform_profile(), 10.0)


def test_logit_response_maximizes_perturbed_payoff(rng):
    g = stag_hunt()
    mu = g.profile([[0.4, 0.6], [0.55, 0.45]])
    best = perturbed_payoff(g, 1, [0.0, 1.0], mu, 10.0)
    x = choice(g, mu, 10.0)[:2]
    top = perturbed_payoff(g, 1, x, mu, 10.0)
    for _ in range(50):
        y = rng.dirichlet([1, 1])
        assert perturbed_payoff(g, 1, y, mu, 10.0) <= top + 1e-12
    assert best <= top


def test_star_potential_by_hand():
    g = stag_hunt()
    # normalized payoff [[2, 1], [1, 3]] at uniform beliefs is 7/4; two entropy terms of ln 2 / beta
    assert star_potential(g, g.uniform_profile(), 10.0) == pytest.approx(1.75 + 2 * math.log(2) / 10, rel=1e-14)
    with pytest.raises(GameError):
        star_potential(asymmetric_matching_pennies(), asymmetric_matching_pennies().uniform_profile(), 10.0)


@settings(max_examples=10)
@given(prob, prob)
def test_star_potential_ascends_along_homogeneous_dynamics(p1, p2):
    g = stag_hunt()
    traj = integrate_homogeneous(g, g.profile([[p1, 1 - p1], [p2, 1 - p2]]), 200, SfpParams(10.0, 10.0))
    values = star_potential(g, traj.states, 10.0)
    assert check_monotone(values, "increasing").ok
    assert values[5] == star_potential(g, traj.states[5], 10.0)


def test_entropy_term():
    assert entropy_term(np.array([1.0, 0.0]), 3.0) == 0.0
    assert entropy_term(np.array([0.5, 0.5]), 2.0) == pytest.approx(math.log(2) / 2)


def test_check_monotone_reports():
    r = check_monotone([3.0, 2.0, 2.0, 1.0])
    assert r.ok and not r.strict and not r.constant
    r = check_monotone([3.0, 2.0, 2.5, 1.0])
    assert not r.ok and r.first_violation == 2 and r.worst_violation == pytest.approx(0.5)
    assert check_monotone([1.0, 1.0 + 1e-12], "decreasing").ok
    assert check_monotone([0.0, 1.0, 2.0], "increasing").strict
