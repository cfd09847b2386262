import json

import numpy as np
import pytest

from png_sfp import cli, experiments
from png_sfp.dynamics import NumericalError, SfpParams, integrate_homogeneous
from png_sfp.experiments import ConfigError, ExperimentConfig, label_nearest, run
from png_sfp.game import stag_hunt


def small(kind, out, **kw):
    return ExperimentConfig(kind, out=str(out), **kw)


def test_config_rejects_unknown_keys_and_values(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kind": "fig1", "colour": "red"})
    with pytest.raises(ConfigError):
        ExperimentConfig("fig1", grid=0)
    with pytest.raises(ConfigError):
        ExperimentConfig("sweep")
    cfg = ExperimentConfig.from_dict({"lambda": 3.0}, kind="roa")
    assert cfg.lam == 3.0 and cfg.resolved().beta == 5.0


def test_fig1_outputs_are_deterministic_and_independent_of_plotting(tmp_path):
    kw = dict(steps=60, runs=3, agents=40, grid=60)
    a = run(small("fig1", tmp_path / "a", **kw))
    run(small("fig1", tmp_path / "b", plot=False, **kw))
    assert (tmp_path / "a/fig1.csv").read_bytes() == (tmp_path / "b/fig1.csv").read_bytes()
    assert (tmp_path / "a/fig1.svg").exists() and not (tmp_path / "b/fig1.svg").exists()
    header = (tmp_path / "a/fig1.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "t" and "beta14_6_abm_mu2S" in header and "beta280_120_pde_x1S" in header
    assert set(a["cases"]) == {"beta280_120", "beta14_6"}
    assert a["cases"]["beta14_6"]["initial_mean_first"] == pytest.approx(0.7)


def test_roa_corner_and_homogeneous_basins(tmp_path):
    summary = run(small("roa", tmp_path, grid=21, variances=[0.0, 0.02], plot=False))
    best = summary["payoff_dominant"]
    rows = np.genfromtxt(tmp_path / "roa.csv", delimiter=",", names=True)
    corner = (np.isclose(rows["mu2H"], 0.05)) & (np.isclose(rows["mu1H"], 0.05))
    assert np.all(rows["label"][corner] == best)
    # variance 0: labels agree with separately integrated homogeneous trajectories
    eq = np.array([e["profile"] for e in summary["equilibria"]])
    zero = rows[rows["variance"] == 0]
    g = stag_hunt()
    picks = np.random.default_rng(0).choice(len(zero), 12, replace=False)
    for r in zero[picks]:
        y0 = g.profile([[r["mu1H"], 1 - r["mu1H"]], [r["mu2H"], 1 - r["mu2H"]]])
        final = integrate_homogeneous(g, y0, 1e8, SfpParams(5.0, 0.0), step=0.05).final
        assert label_nearest(final[None], eq, np.array([True]))[0] == r["label"]
    fr = [gr["payoff_dominant_fraction"] for gr in summary["grids"]]
    assert fr[1] >= fr[0]


def test_fig4_small(tmp_path):
    summary = run(small("fig4", tmp_path, steps=50, runs=2, agents=30, plot=False))
    assert len(summary["cases"]) == 3
    assert summary["qre"]["converged"]
    header = (tmp_path / "fig4.csv").read_text().splitlines()[0]
    assert header.startswith("t,case0_pop2_mean_s0,case0_pop2_strat_var_s0")


@pytest.mark.parametrize("solver", ["homog", "moments", "pde", "abm"])
def test_custom_potential_column(tmp_path, solver):
    initial = [{"mean": {"1": [0.6, 0.4], "2": [0.7, 0.3]}, "variance": 0.005}]
    summary = run(small("custom", tmp_path, game="stag_hunt", solver=solver, steps=200, potential=True,
                        initial=initial, agents=200, plot=solver == "moments"))
    assert summary["cases"][0]["potential"]["monotone"]
    rows = np.genfromtxt(tmp_path / "custom.csv", delimiter=",", names=True)
    assert "potential" in rows.dtype.names and rows["t"][-1] == 200


def test_custom_lyapunov_column(tmp_path):
    initial = [{"mean": {"2": [0.8, 0.2], "3": [0.3, 0.7], "4": [0.6, 0.4]}},
               {"mean": {"2": [0.1, 0.9], "3": [0.9, 0.1], "4": [0.2, 0.8]}}]
    summary = run(small("custom", tmp_path, game="matching_pennies", solver="homog", steps=500,
                        lyapunov=True, initial=initial))
    assert all(c["lyapunov"]["monotone"] for c in summary["cases"])


def test_custom_classification_mismatch(tmp_path):
    with pytest.raises(ConfigError):
        run(small("custom", tmp_path, game="stag_hunt", lyapunov=True))
    with pytest.raises(ConfigError):
        run(small("custom", tmp_path, game="matching_pennies", potential=True))


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main(["validate", "--game", "stag_hunt"]) == 0
    assert json.loads(capsys.readouterr().out)["star_forest"] is True
    assert cli.main(["custom", "--game", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "fig1", "unknown": 1}')
    assert cli.main(["fig1", "--config", str(bad)]) == 2
    assert cli.main(["custom", "--game", "stag_hunt", "--out", str(tmp_path), "--solver", "pde"]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["fig9"])
    assert exc.value.code == 2

    def fail(cfg):
        raise NumericalError("did not converge")

    monkeypatch.setitem(experiments.RUNNERS, "qre", fail)
    assert cli.main(["qre", "--game", "stag_hunt", "--out", str(tmp_path)]) == 1


def test_cli_qre_report(tmp_path):
    assert cli.main(["qre", "--game", "stag_hunt", "--beta", "5", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "qre.json").read_text())
    assert doc["cluster_count"] == 2 and doc["beta"] == 5.0


def test_cli_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"game": "stag_hunt", "solver": "homog", "steps": 5,
                               "initial": {"mean": {"1": [0.2, 0.8], "2": [0.2, 0.8]}}}))
    assert cli.main(["custom", "--config", str(cfg), "--out", str(tmp_path), "--steps", "7", "--no-plot"]) == 0
    rows = np.genfromtxt(tmp_path / "custom.csv", delimiter=",", names=True)
    assert rows["t"][-1] == 7 and rows["mean_pop1_s0"][0] == pytest.approx(0.2)
