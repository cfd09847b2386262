import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from png_sfp.dynamics import (
    NumericalError,
    SfpParams,
    autonomous_rhs,
    choice,
    integrate,
    integrate_homogeneous,
    logit,
    t_of_tau,
    tau_of_t,
    utilities,
    write_trajectory_csv,
)
from png_sfp.game import asymmetric_matching_pennies, stag_hunt


def test_logit_by_hand():
    e = math.e
    np.testing.assert_allclose(logit([0.0, 1.0], 1.0), [1 / (1 + e), e / (1 + e)], rtol=1e-15)
    np.testing.assert_allclose(logit([3.0, -2.0, 7.0], 0.0), [1 / 3] * 3)
    # large arguments do not overflow
    np.testing.assert_allclose(logit([1000.0, 0.0], 10.0), [1.0, 0.0])


@given(arrays(float, 4, elements=st.floats(-50, 50)), st.floats(0, 20), st.floats(-100, 100))
def test_logit_is_a_distribution_and_shift_invariant(u, beta, c):
    p = logit(u, beta)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12
    np.testing.assert_allclose(logit(u + c, beta), p, atol=1e-12)


def test_stag_hunt_utilities_and_choice_by_hand():
    g = stag_hunt()
    y = g.uniform_profile()
    np.testing.assert_allclose(utilities(g, 1, y), [1.5, 2.0])
    x = choice(g, y, 10.0)
    # P(H) = 1 / (1 + exp(10 * 0.5))
    np.testing.assert_allclose(x[0], 1 / (1 + math.exp(5.0)), rtol=1e-13)


def test_static_populations_do_not_move():
    g = asymmetric_matching_pennies()
    d = autonomous_rhs(g, g.uniform_profile(), SfpParams())
    np.testing.assert_array_equal(d[:2], 0.0)
    np.testing.assert_array_equal(d[-2:], 0.0)


def test_rk4_exponential_decay():
    traj = integrate(lambda t, y: -y, [1.0], 0.0, 1.0, 0.01)
    assert abs(traj.final[0] - math.exp(-1)) < 1e-10
    assert traj.times[-1] == 1.0


def test_rk4_is_fourth_order():
    errs = [abs(integrate(lambda t, y: -y, [1.0], 0.0, 1.0, h).final[0] - math.exp(-1)) for h in (0.1, 0.05)]
    assert 14 < errs[0] / errs[1] < 18


def test_t_eval_times_are_hit_exactly():
    t_eval = [0.3, 0.77, 2.0]
    traj = integrate(lambda t, y: -y, [1.0], 0.0, 2.0, 0.25, t_eval=t_eval)
    np.testing.assert_array_equal(traj.times, [0.0] + t_eval)
    np.testing.assert_allclose(traj.states[:, 0], np.exp(-traj.times), rtol=1e-4)


def test_nonfinite_state_raises():
    with pytest.raises(NumericalError), np.errstate(over="ignore", invalid="ignore"):
        integrate(lambda t, y: y * y, [1.0], 0.0, 2.0, 0.1)


def test_stop_hook_ends_run():
    traj = integrate(lambda t, y: -y, [1.0], 0.0, 10.0, 0.01, stop=lambda t, y: y[0] < 0.5)
    assert traj.final[0] < 0.5 and traj.times[-1] < 1.0


@given(st.floats(0, 1e5), st.floats(0, 50))
def test_tau_time_inverse(t, lam):
    assert t_of_tau(tau_of_t(t, lam), lam) == pytest.approx(t, rel=1e-12, abs=1e-9)


def test_tau_and_t_integration_agree():
    g = stag_hunt()
    y0 = g.profile([[0.6, 0.4], [0.45, 0.55]])
    p = SfpParams(10.0, 10.0)
    t_eval = np.arange(1, 201, dtype=float)
    a = integrate_homogeneous(g, y0, 200, p, step=0.01, time="tau", t_eval=t_eval)
    b = integrate_homogeneous(g, y0, 200, p, step=0.01, time="t", t_eval=t_eval)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_allclose(a.states, b.states, atol=1e-6)


def test_equal_beliefs_stay_equal_in_symmetric_game():
    g = stag_hunt()
    traj = integrate_homogeneous(g, g.profile([[0.3, 0.7], [0.3, 0.7]]), 100, SfpParams())
    np.testing.assert_allclose(traj.states[:, :2], traj.states[:, 2:], atol=1e-14)


def test_trajectory_csv(tmp_path):
    g = stag_hunt()
    traj = integrate_homogeneous(g, g.uniform_profile(), 5, SfpParams(), t_eval=[1, 2, 3, 4, 5])
    write_trajectory_csv(tmp_path / "t.csv", g, traj)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,pop1_s0,pop1_s1,pop2_s0,pop2_s1"
    assert len(lines) == 7
