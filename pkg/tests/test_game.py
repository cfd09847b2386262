import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from png_sfp.game import (
    Edge,
    GameError,
    Population,
    PopulationNetworkGame,
    asymmetric_matching_pennies,
    coordination_offsets,
    coordination_payoffs,
    expected_payoff,
    is_coordination,
    is_star_forest,
    is_weighted_zero_sum,
    load_game,
    stag_hunt,
)

payoffs = arrays(float, (2, 3), elements=st.floats(-5, 5, allow_nan=False))


def two_pop(a, b, weights=None):
    pops = [Population("a", 2), Population("b", 3)]
    return PopulationNetworkGame(pops, [Edge("a", "b", a, b)], weights)


def test_stag_hunt_payoffs_by_hand():
    g = stag_hunt()
    h, s = [1.0, 0.0], [0.0, 1.0]
    assert expected_payoff(g, 1, [h, s]) == 2.0  # hare against a stag hunter
    assert expected_payoff(g, 2, [h, s]) == 0.0  # stag hunter alone
    assert expected_payoff(g, 1, [s, s]) == 4.0
    assert expected_payoff(g, 1, {1: [0.5, 0.5], 2: [0.5, 0.5]}) == pytest.approx(1.75)


def test_builtin_classification():
    sh, mp = stag_hunt(), asymmetric_matching_pennies()
    assert is_weighted_zero_sum(sh) == (False, 8.0)
    assert is_weighted_zero_sum(mp) == (True, 0.0)
    assert is_coordination(sh) and not is_coordination(sh, exact=True)
    assert not is_coordination(mp)
    assert is_star_forest(sh) and not is_star_forest(mp)
    assert [p.id for p in mp.populations if p.learns] == [2, 3, 4]


def test_stag_hunt_offsets_give_symmetric_payoffs():
    g = stag_hunt()
    off = coordination_offsets(g)
    np.testing.assert_allclose(off[(0, 1)], [-1.0, 1.0], atol=1e-12)
    norm = coordination_payoffs(g)
    np.testing.assert_allclose(norm[(0, 1)], [[2.0, 1.0], [1.0, 3.0]], atol=1e-12)
    np.testing.assert_allclose(norm[(0, 1)], norm[(1, 0)].T, atol=1e-12)


@given(payoffs, arrays(float, 2, elements=st.floats(0.1, 5)))
def test_negated_transpose_is_zero_sum(a, w):
    # w_a A + w_b B^T = 0 when B = -(w_a / w_b) A^T
    g = two_pop(a, -(w[0] / w[1]) * a.T, w)
    ok, residual = is_weighted_zero_sum(g)
    assert ok and residual <= 1e-9


@given(payoffs, arrays(float, 3, elements=st.floats(-3, 3)), arrays(float, 2, elements=st.floats(-3, 3)))
def test_coordination_up_to_column_offsets(a, c, d):
    g = two_pop(a + c[None, :], a.T + d[None, :])
    assert is_coordination(g)
    norm = coordination_payoffs(g)
    np.testing.assert_allclose(norm[(0, 1)], norm[(1, 0)].T, atol=1e-9)
    # offsets shift each row of utilities by a constant only
    ua = (a + c[None, :]) - norm[(0, 1)]
    np.testing.assert_allclose(ua - ua[0], 0.0, atol=1e-9)


def test_generic_game_is_neither_class(rng):
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(3, 2))
    g = two_pop(a, b)
    assert not is_weighted_zero_sum(g)[0]
    assert coordination_offsets(g) is None
    with pytest.raises(GameError):
        coordination_payoffs(g)


@given(st.lists(st.floats(0.01, 1.0), min_size=5, max_size=5))
def test_pack_unpack_roundtrip(raw):
    g = stag_hunt()
    x = np.array(raw[:4])
    blocks = g.unpack(x)
    np.testing.assert_array_equal(g.pack(blocks), x)


def test_json_roundtrip(tmp_path):
    for g in (stag_hunt(), asymmetric_matching_pennies()):
        path = tmp_path / "g.json"
        g.save(path)
        assert load_game(path) == g
        assert PopulationNetworkGame.loads(g.dumps()) == g


def test_invalid_games_rejected(tmp_path):
    with pytest.raises(GameError):
        PopulationNetworkGame([Population(1, 2), Population(1, 2)], [])
    with pytest.raises(GameError):
        two_pop(np.zeros((3, 2)), np.zeros((3, 2)))
    with pytest.raises(GameError):
        PopulationNetworkGame([Population(1, 2, fixed=np.array([0.6, 0.6]))], [])
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"populations": [{"id": 1, "strategies": 2}],
                               "edges": [{"from": 1, "to": 2, "payoff_from_to": [[0, 0]]}]}))
    with pytest.raises(GameError):
        load_game(bad)
    with pytest.raises(FileNotFoundError):
        load_game(tmp_path / "missing.json")


def test_project_repairs_small_drift():
    g = stag_hunt()
    y = g.project(np.array([0.5 + 1e-9, 0.5, -1e-12, 1.0]))
    np.testing.assert_allclose(y.reshape(2, 2).sum(axis=1), 1.0, atol=1e-15)
    assert np.all(y >= 0)
