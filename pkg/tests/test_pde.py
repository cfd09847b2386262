import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from png_sfp.dynamics import NumericalError, SfpParams, logit
from png_sfp.game import GameError, asymmetric_matching_pennies, stag_hunt
from png_sfp.pde import (
    density_from_beta,
    grid_moments,
    mean_choice_from_density,
    pde_step,
    run_pde,
    write_density_csv,
    write_pde_moment_csv,
)

shape = st.floats(2.0, 40.0)


@given(shape, shape)
def test_beta_density_on_grid(a, b):
    g = density_from_beta(a, b, 200)
    assert g.density[0] == 0 and g.density[-1] == 0
    assert g.mass() == pytest.approx(1.0, abs=1e-14)
    m, v = grid_moments(g)
    assert m == pytest.approx(a / (a + b), abs=2e-3)


def test_invalid_densities():
    with pytest.raises(GameError):
        density_from_beta(1.0, 3.0)
    with pytest.raises(GameError):
        density_from_beta(3.0, 3.0, M=20)


@settings(max_examples=10)
@given(shape, shape, st.floats(0.5, 15.0))
def test_mass_and_boundaries_conserved(a, b, beta):
    game = stag_hunt()
    grids = {1: density_from_beta(a, b, 100), 2: density_from_beta(b, a, 100)}
    res = run_pde(game, grids, 50.0, SfpParams(beta, 10.0), snapshot_times=np.arange(1, 51))
    for pid in (1, 2):
        np.testing.assert_allclose(res.masses[pid], 1.0, atol=1e-12)
        snaps = res.snapshots[pid]
        assert np.all(snaps[:, 0] == 0) and np.all(snaps[:, -1] == 0)
        assert np.all(snaps >= 0)


def test_cfl_violation_raises():
    game = stag_hunt()
    grids = {1: density_from_beta(14, 6), 2: density_from_beta(14, 6)}
    with pytest.raises(NumericalError):
        pde_step(grids, game, 0.0, 1.0, SfpParams(10.0, 0.0))


def test_narrow_density_choice_is_logit_at_mean():
    game = stag_hunt()
    narrow = density_from_beta(2800, 1200, 400)
    x = mean_choice_from_density(game, 1, {1: narrow, 2: narrow}, 10.0)
    point = logit(game.payoff[(0, 1)] @ [0.7, 0.3], 10.0)
    np.testing.assert_allclose(x, point, atol=5e-3)


def test_static_neighbors_enter_through_fixed_strategy():
    game = asymmetric_matching_pennies()
    smooth = density_from_beta(2, 2, 200)
    grids = {2: smooth, 3: smooth, 4: smooth}
    x2 = mean_choice_from_density(game, 2, grids, 10.0)
    # pop 2 mismatches pop 1 (pure H) and matches pop 3: u_T - u_H = 4 - 4 m for belief m in H
    expect = quad(lambda m: 6 * m * (1 - m) / (1.0 + np.exp(-10.0 * (4.0 - 4.0 * m))), 0.0, 1.0)[0]
    assert x2[1] == pytest.approx(expect, abs=1e-4)
    with pytest.raises(GameError):
        run_pde(game, {2: smooth, 3: smooth}, 1.0, SfpParams())


def test_density_csv_outputs(tmp_path):
    game = stag_hunt()
    grids = {1: density_from_beta(14, 6, 50), 2: density_from_beta(14, 6, 50)}
    res = run_pde(game, grids, 2.0, SfpParams(), snapshot_times=[1.0, 2.0])
    write_density_csv(tmp_path / "d.csv", res)
    write_pde_moment_csv(tmp_path / "m.csv", game, res)
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 1 + 3 * 51
    assert (tmp_path / "m.csv").read_text().splitlines()[0].startswith("t,mean_pop1_s0,mean_pop1_s1")
