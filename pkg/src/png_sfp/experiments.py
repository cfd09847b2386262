"""Experiment drivers: two-basin selection, basin maps, matching-pennies runs and custom runs.

Every driver writes CSV files (the canonical output), a JSON summary and,
unless disabled, SVG plots into the configured output directory, and returns
the summary. Runs are deterministic given the configuration and seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .abm import BeliefSpec, SimConfig, run_abm
from .dynamics import (
    NumericalError,
    SfpParams,
    choice,
    column_names,
    fmt,
    integrate_homogeneous,
)
from .equilibrium import (
    check_monotone,
    multistart_qre,
    solve_qre,
    star_potential,
    write_qre_report,
    zero_sum_lyapunov,
)
from .game import (
    PopulationNetworkGame,
    coordination_offsets,
    expected_payoff,
    is_coordination,
    is_star_forest,
    is_weighted_zero_sum,
    load_game,
)
from .moments import MomentState, beta_moments, closure_choice, integrate_moments, tau_mean_rhs
from .pde import density_from_beta, run_pde

KINDS = ("fig1", "roa", "fig4", "custom", "qre", "validate")
SOLVERS = ("abm", "moments", "pde", "homog")


class ConfigError(ValueError):
    """Invalid experiment configuration or unusable input/output path."""


@dataclass
class ExperimentConfig:
    """All parameters of one experiment. ``None`` fields take the per-kind default."""

    kind: str
    game: str | None = None
    solver: str | None = None
    beta: float | None = None
    lam: float | None = None
    steps: int | None = None
    seed: int = 0
    out: str = "."
    runs: int | None = None
    agents: int | None = None
    grid: int | None = None
    step: float | None = None
    variances: list | None = None
    cases: list | None = None
    beliefs: dict | None = None
    initial: list | None = None
    lyapunov: bool = False
    potential: bool = False
    plot: bool = True
    n_starts: int = 64
    record_every: int | None = None
    tau_max: float = 200.0
    rhs_tol: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.solver is not None and self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; expected one of {', '.join(SOLVERS)}")
        for name in ("steps", "runs", "agents", "grid", "n_starts", "record_every"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 1):
                raise ConfigError(f"{name} must be a positive integer, got {v}")
        for name in ("beta", "lam", "step", "tau_max", "rhs_tol"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and non-negative, got {v}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @classmethod
    def from_dict(cls, doc: Mapping, kind: str | None = None) -> "ExperimentConfig":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if kind is not None:
            doc["kind"] = kind
        if "kind" not in doc:
            raise ConfigError("config needs an experiment kind")
        if isinstance(doc.get("initial"), Mapping):
            doc["initial"] = [doc["initial"]]
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path, kind: str | None = None) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, Mapping):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(doc, kind)

    def override(self, **values) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in values.items() if v is not None})

    def resolved(self) -> "ExperimentConfig":
        """Copy with every ``None`` field replaced by the default for this kind."""
        values = {k: v for k, v in DEFAULTS.get(self.kind, {}).items() if getattr(self, k) is None}
        return replace(self, **values)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["lambda"] = doc.pop("lam")
        return doc


DEFAULTS = {
    "fig1": dict(game="stag_hunt", beta=10.0, lam=10.0, steps=10_000, runs=100, agents=1000, grid=200,
                 step=0.01, record_every=1, cases=[[280, 120], [14, 6]]),
    "roa": dict(game="stag_hunt", beta=5.0, lam=0.0, grid=41, step=0.01, variances=[0.0, 0.005, 0.01, 0.02]),
    "fig4": dict(game="matching_pennies", beta=10.0, lam=10.0, steps=10_000, runs=100, agents=1000,
                 record_every=10, beliefs={"1": [20, 10], "3": [6, 4], "5": [10, 5]},
                 cases=[{"2": [20, 10], "4": [10, 20]}, {"2": [10, 20], "4": [20, 10]},
                        {"2": [5, 5], "4": [5, 5]}]),
    "custom": dict(solver="moments", beta=10.0, lam=10.0, steps=1000, runs=1, agents=1000, grid=200,
                   step=0.01, record_every=1, initial=[{}]),
    "qre": dict(beta=10.0, lam=10.0),
    "validate": dict(),
}


# ---------------------------------------------------------------------------
# shared helpers


def _game(cfg: ExperimentConfig) -> PopulationNetworkGame:
    if cfg.game is None:
        raise ConfigError(f"{cfg.kind} needs a game (builtin name or JSON file)")
    try:
        return load_game(cfg.game)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None
    except OSError as exc:
        raise ConfigError(f"cannot read game {cfg.game}: {exc}") from None


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _params(cfg: ExperimentConfig) -> SfpParams:
    try:
        return SfpParams(float(cfg.beta), float(cfg.lam))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_columns(path: Path, columns: Mapping) -> None:
    """CSV from equal-length columns; integer arrays are written as integers."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([_cell(v) for v in row])


def _cell(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return fmt(v)


def _belief_spec(value) -> BeliefSpec:
    """``[a, b]`` is shorthand for a Beta belief on the first strategy; dicts use the full form."""
    if isinstance(value, Mapping):
        return BeliefSpec.from_dict(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return BeliefSpec.beta(*value)
    raise ConfigError(f"cannot read belief distribution {value!r}")


def _resolve_id(game: PopulationNetworkGame, key):
    for pid in game.ids:
        if str(pid) == str(key):
            return pid
    raise ConfigError(f"unknown population {key!r}")


def _binary_pair(game: PopulationNetworkGame) -> tuple:
    learners = [game.ids[i] for i in game.learning]
    if len(learners) != 2 or any(game.sizes[i] != 2 for i in game.learning):
        raise ConfigError("this experiment needs exactly two learning populations with two strategies each")
    return learners[0], learners[1]


def _label(game: PopulationNetworkGame, pid, s: int) -> str:
    pop = game.populations[game.index(pid)]
    return pop.labels[s] if pop.labels else f"s{s}"


def sup_gap(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def _selected(game: PopulationNetworkGame, pid, p_second: float) -> str:
    """Strategy a population has settled on: above 0.9 or below 0.1 probability of its second strategy."""
    if p_second > 0.9:
        return _label(game, pid, 1)
    return _label(game, pid, 0) if p_second < 0.1 else "none"


# ---------------------------------------------------------------------------
# two-basin selection under small and large belief variance


def run_fig1(cfg: ExperimentConfig) -> dict:
    """Mean beliefs and strategies for each initial Beta case under each solver.

    Each case draws beliefs about both populations from ``Beta(a, b)`` on the
    first strategy. Columns give the second-strategy belief of the first
    population about the second and the second-strategy play of the first.
    """
    cfg = cfg.resolved()
    game = _game(cfg)
    params = _params(cfg)
    a_id, b_id = _binary_pair(game)
    ia, ib = game.index(a_id), game.index(b_id)
    second_b = game.offsets[ib] + 1
    second_a = game.offsets[ia] + 1
    solvers = [cfg.solver] if cfg.solver else ["abm", "moments", "pde"]
    out = _out_dir(cfg)
    t = np.arange(cfg.steps + 1)
    mu_name = f"mu{b_id}{_label(game, b_id, 1)}"
    x_name = f"x{a_id}{_label(game, a_id, 1)}"
    columns = {"t": t}
    summary = {"config": cfg.to_dict(), "columns": [mu_name, x_name], "cases": {}}

    for a, b in cfg.cases:
        case = f"beta{a:g}_{b:g}"
        m0, v0 = beta_moments(a, b)
        curves = {}
        for solver in solvers:
            if solver == "abm":
                sim = SimConfig(agents=cfg.agents, params=params, steps=cfg.steps, seed=cfg.seed, runs=cfg.runs,
                                beliefs={pid: BeliefSpec.beta(a, b) for pid in (a_id, b_id)})
                res = run_abm(sim, game, record_every=1)
                curves[solver] = (res.run_mean(b_id, "belief_mean")[:, 1], res.run_mean(a_id, "strategy_mean")[:, 1])
            elif solver == "moments":
                state = MomentState.create(game, {a_id: [m0, 1 - m0], b_id: [m0, 1 - m0]}, v0)
                traj = integrate_moments(game, state, cfg.steps, params, step=cfg.step, t_eval=t[1:])
                x = closure_choice(game, traj.means, traj.variances, params.beta)
                curves[solver] = (traj.means[:, second_b], x[:, second_a])
            elif solver == "homog":
                y0 = game.profile({a_id: [m0, 1 - m0], b_id: [m0, 1 - m0]})
                traj = integrate_homogeneous(game, y0, cfg.steps, params, step=cfg.step, t_eval=t[1:])
                x = choice(game, traj.states, params.beta)
                curves[solver] = (traj.states[:, second_b], x[:, second_a])
            else:
                grids = {pid: density_from_beta(a, b, cfg.grid) for pid in (a_id, b_id)}
                res = run_pde(game, grids, cfg.steps, params, snapshot_times=t[1:])
                curves[solver] = (1.0 - res.means[b_id], 1.0 - res.choices[a_id])
            columns[f"{case}_{solver}_{mu_name}"] = curves[solver][0]
            columns[f"{case}_{solver}_{x_name}"] = curves[solver][1]

        entry = {"initial_mean_first": m0, "initial_variance": v0, "final": {}, "selected": {}, "sup_gap": {}}
        for solver, (mu, x) in curves.items():
            entry["final"][solver] = {mu_name: float(mu[-1]), x_name: float(x[-1])}
            entry["selected"][solver] = _selected(game, a_id, float(x[-1]))
        if "abm" in curves:
            for other in curves:
                if other != "abm":
                    entry["sup_gap"][f"abm_vs_{other}"] = {
                        mu_name: sup_gap(curves["abm"][0], curves[other][0]),
                        x_name: sup_gap(curves["abm"][1], curves[other][1]),
                    }
        summary["cases"][case] = entry

    _write_columns(out / "fig1.csv", columns)
    _write_json(out / "fig1_summary.json", summary)
    if cfg.plot:
        from .plotting import Panel, save_panels

        panels = [Panel(title=f"mean belief {mu_name}", ylabel=mu_name, logx=True),
                  Panel(title=f"mean strategy {x_name}", ylabel=x_name, logx=True)]
        styles = {"abm": dict(linewidth=4, alpha=0.4), "moments": dict(linewidth=1),
                  "pde": dict(linewidth=1, linestyle="--"), "homog": dict(linewidth=1, linestyle=":")}
        for n, (a, b) in enumerate(cfg.cases):
            case = f"beta{a:g}_{b:g}"
            for solver in solvers:
                style = dict(styles[solver], color=f"C{n}")
                panels[0].line(t, columns[f"{case}_{solver}_{mu_name}"], f"Beta({a:g},{b:g}) {solver}", **style)
                panels[1].line(t, columns[f"{case}_{solver}_{x_name}"], f"Beta({a:g},{b:g}) {solver}", **style)
        save_panels(out / "fig1.svg", panels)
    return summary


# ---------------------------------------------------------------------------
# basin maps over initial mean beliefs


@dataclass
class RoaGrid:
    """Equilibrium reached from each cell of a grid of initial mean beliefs.

    ``labels[r, c]`` indexes ``equilibria`` for the start with first-strategy
    mean ``axis[c]`` about the second population and ``axis[r]`` about the
    first; -1 marks cells that did not settle.
    """

    variance: float
    axis: np.ndarray
    labels: np.ndarray
    finals: np.ndarray
    stop_tau: np.ndarray
    equilibria: np.ndarray = field(repr=False)

    def fractions(self) -> np.ndarray:
        n = len(self.equilibria)
        return np.array([(self.labels == k).mean() for k in range(n)])


def settle_means(game: PopulationNetworkGame, means: np.ndarray, sigma2: float, params: SfpParams,
                 step: float = 0.01, tau_max: float = 200.0, rhs_tol: float = 1e-8):
    """Integrate batched mean dynamics in reparameterized time until each row settles.

    A row stops once the max norm of its right-hand side is at most
    ``rhs_tol``. Returns final means, stop times and a converged mask.
    """
    y = np.array(means, dtype=float)
    var = np.full(game.dim, float(sigma2))
    stop = np.full(len(y), np.nan)
    active = np.arange(len(y))
    tau = 0.0
    n_steps = int(math.ceil(tau_max / step - 1e-9))

    def rhs(s, z):
        return tau_mean_rhs(game, z, s, params, var)

    for n in range(n_steps + 1):
        if active.size == 0:
            break
        z = y[active]
        k1 = rhs(tau, z)
        done = np.abs(k1).max(axis=1) <= rhs_tol
        if np.any(done):
            stop[active[done]] = tau
            active, z, k1 = active[~done], z[~done], k1[~done]
        if n == n_steps or active.size == 0:
            break
        h = min(step, tau_max - tau)
        k2 = rhs(tau + 0.5 * h, z + 0.5 * h * k1)
        k3 = rhs(tau + 0.5 * h, z + 0.5 * h * k2)
        k4 = rhs(tau + h, z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise NumericalError(f"non-finite mean beliefs at tau={tau + h}")
        y[active] = z
        tau = tau_max if n + 1 == n_steps else (n + 1) * step
    return y, stop, np.isfinite(stop)


def label_nearest(finals: np.ndarray, equilibria: np.ndarray, converged: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(finals[:, None, :] - equilibria[None, :, :], axis=-1)
    labels = d.argmin(axis=1)
    return np.where(converged, labels, -1)


def payoff_dominant(game: PopulationNetworkGame, equilibria) -> int:
    """Index of the profile with the largest weighted total expected payoff."""
    totals = [sum(w * expected_payoff(game, pid, game.unpack(q)) for pid, w in zip(game.ids, game.weights)) for q in equilibria]
    return int(np.argmax(totals))


def roa_grids(cfg: ExperimentConfig, game: PopulationNetworkGame, equilibria: np.ndarray) -> list[RoaGrid]:
    params = _params(cfg)
    a_id, b_id = _binary_pair(game)
    ia, ib = game.index(a_id), game.index(b_id)
    axis = np.linspace(0.0, 1.0, cfg.grid)
    mb, ma = np.meshgrid(axis, axis, indexing="xy")  # columns vary the belief about b
    starts = np.tile(game.uniform_profile(), (ma.size, 1))
    starts[:, game.offsets[ia]] = ma.ravel()
    starts[:, game.offsets[ia] + 1] = 1.0 - ma.ravel()
    starts[:, game.offsets[ib]] = mb.ravel()
    starts[:, game.offsets[ib] + 1] = 1.0 - mb.ravel()
    out = []
    for v in cfg.variances:
        if not (math.isfinite(v) and v >= 0):
            raise ConfigError(f"variances must be finite and non-negative, got {v}")
        finals, stop, ok = settle_means(game, starts, v, params, cfg.step, cfg.tau_max, cfg.rhs_tol)
        labels = label_nearest(finals, equilibria, ok)
        shape = (cfg.grid, cfg.grid)
        out.append(RoaGrid(float(v), axis, labels.reshape(shape), finals.reshape(shape + (game.dim,)),
                           stop.reshape(shape), equilibria))
    return out


def run_roa(cfg: ExperimentConfig) -> dict:
    """Basin map of the equilibria for every initial variance in ``cfg.variances``."""
    cfg = cfg.resolved()
    game = _game(cfg)
    params = _params(cfg)
    a_id, b_id = _binary_pair(game)
    clusters, _ = multistart_qre(game, params.beta, n_starts=cfg.n_starts)
    if not clusters:
        raise NumericalError("no logit equilibrium found from any start")
    equilibria = np.array([c.profile for c in clusters])
    best = payoff_dominant(game, equilibria)
    grids = roa_grids(cfg, game, equilibria)
    out = _out_dir(cfg)

    ia, ib = game.index(a_id), game.index(b_id)
    fa, fb = game.offsets[ia], game.offsets[ib]
    name_a = f"mu{a_id}{_label(game, a_id, 0)}"
    name_b = f"mu{b_id}{_label(game, b_id, 0)}"
    rows = {k: [] for k in ("variance", name_b, name_a, "label", "stop_tau", f"final_{name_a}", f"final_{name_b}")}
    for g in grids:
        mb, ma = np.meshgrid(g.axis, g.axis, indexing="xy")
        rows["variance"].append(np.full(mb.size, g.variance))
        rows[name_b].append(mb.ravel())
        rows[name_a].append(ma.ravel())
        rows["label"].append(g.labels.ravel())
        rows["stop_tau"].append(g.stop_tau.ravel())
        rows[f"final_{name_a}"].append(g.finals[..., fa].ravel())
        rows[f"final_{name_b}"].append(g.finals[..., fb].ravel())
    _write_columns(out / "roa.csv", {k: np.concatenate(v) for k, v in rows.items()})

    summary = {
        "config": cfg.to_dict(),
        "equilibria": [{"profile": [float(v) for v in q], "count": c.count} for q, c in zip(equilibria, clusters)],
        "payoff_dominant": best,
        "grids": [
            {
                "variance": g.variance,
                "fractions": [float(f) for f in g.fractions()],
                "payoff_dominant_fraction": float(g.fractions()[best]),
                "unconverged": int((g.labels < 0).sum()),
            }
            for g in grids
        ],
    }
    _write_json(out / "roa_summary.json", summary)
    if cfg.plot:
        from .plotting import save_label_maps

        save_label_maps(out / "roa.svg", [(f"variance {g.variance:g}", g.labels) for g in grids],
                        (0.0, 1.0, 0.0, 1.0), f"initial {name_b}", f"initial {name_a}", len(equilibria))
    return summary


# ---------------------------------------------------------------------------
# matching pennies on a line


def run_fig4(cfg: ExperimentConfig) -> dict:
    """Agent simulations from several initial belief cases, with a logit-equilibrium cross-check."""
    cfg = cfg.resolved()
    game = _game(cfg)
    params = _params(cfg)
    base = {_resolve_id(game, k): _belief_spec(v) for k, v in (cfg.beliefs or {}).items()}
    qre = solve_qre(game, params.beta)
    if not qre.converged:
        raise NumericalError(f"logit equilibrium iteration did not converge (residual {qre.residual:g})")
    learners = [game.ids[i] for i in game.learning]
    out = _out_dir(cfg)
    columns = {}
    summary = {"config": cfg.to_dict(), "qre": qre.to_dict(game), "cases": []}
    results = []
    for n, case in enumerate(cfg.cases):
        beliefs = dict(base)
        beliefs.update({_resolve_id(game, k): _belief_spec(v) for k, v in case.items()})
        sim = SimConfig(agents=cfg.agents, params=params, steps=cfg.steps, seed=cfg.seed, runs=cfg.runs,
                        beliefs=beliefs)
        res = run_abm(sim, game, record_every=cfg.record_every)
        results.append(res)
        columns.setdefault("t", res.times)
        for pid in learners:
            columns[f"case{n}_pop{pid}_mean_s0"] = res.run_mean(pid, "strategy_mean")[:, 0]
            columns[f"case{n}_pop{pid}_strat_var_s0"] = res.run_mean(pid, "strategy_var")[:, 0]
        final = np.concatenate([res.run_mean(pid, "strategy_mean")[-1] for pid in game.ids])
        gap = max(sup_gap(final[game.offsets[i]:game.offsets[i + 1]],
                          qre.profile[game.offsets[i]:game.offsets[i + 1]]) for i in game.learning)
        summary["cases"].append({
            "beliefs": {str(k): v.to_dict() for k, v in beliefs.items()},
            "final_mean_s0": {str(pid): float(res.run_mean(pid, "strategy_mean")[-1, 0]) for pid in learners},
            "final_strat_var": {str(pid): float(res.run_mean(pid, "strategy_var")[-1, 0]) for pid in learners},
            "qre_gap": gap,
        })
    _write_columns(out / "fig4.csv", columns)
    _write_json(out / "fig4_summary.json", summary)
    if cfg.plot:
        from .plotting import Panel, save_panels

        centre = learners[len(learners) // 2]
        label = _label(game, centre, 0)
        panel = Panel(title=f"population {centre}: mean P({label}) ± 1 s.d.", ylabel=f"P({label})", logx=True)
        for n, res in enumerate(results):
            m = res.run_mean(centre, "strategy_mean")[:, 0]
            sd = np.sqrt(res.run_mean(centre, "strategy_var")[:, 0])
            panel.band(res.times, m - sd, m + sd, color=f"C{n}")
            panel.line(res.times, m, f"case {n}", color=f"C{n}")
        save_panels(out / "fig4.svg", [panel])
    return summary


# ---------------------------------------------------------------------------
# custom runs


def _initial_moments(game: PopulationNetworkGame, spec: Mapping) -> MomentState:
    unknown = set(spec) - {"mean", "variance"}
    if unknown:
        raise ConfigError(f"unknown initial-condition keys: {', '.join(sorted(unknown))}")
    mean = game.uniform_profile()
    for key, v in (spec.get("mean") or {}).items():
        i = game.index(_resolve_id(game, key))
        mean[game.offsets[i]:game.offsets[i + 1]] = v
    var = spec.get("variance", 0.0)
    if isinstance(var, Mapping):
        packed = np.zeros(game.dim)
        for key, v in var.items():
            i = game.index(_resolve_id(game, key))
            packed[game.offsets[i]:game.offsets[i + 1]] = v
        var = packed
    return MomentState.create(game, mean, var)


def _matched_beta(m: float, v: float) -> tuple[float, float]:
    """Beta parameters with mean ``m`` and variance ``v``."""
    if not v > 0:
        raise ConfigError(f"a Beta distribution needs positive variance, got {v:g}")
    common = m * (1.0 - m) / v - 1.0
    if not common > 0:
        raise ConfigError(f"no Beta distribution has mean {m:g} and variance {v:g}")
    return m * common, (1.0 - m) * common


def _abm_beliefs(game: PopulationNetworkGame, cfg: ExperimentConfig, state: MomentState) -> dict:
    if cfg.beliefs:
        doc = {str(k): (v if isinstance(v, Mapping) else BeliefSpec.beta(*v).to_dict())
               for k, v in cfg.beliefs.items()}
        return SimConfig.from_dict({"beliefs": doc}, game).beliefs
    out = {}
    for i in game.learning:
        sl = slice(game.offsets[i], game.offsets[i + 1])
        m, v = state.mean[sl], state.variance[sl]
        if np.all(v == 0):
            out[game.ids[i]] = BeliefSpec.point(m)
        elif game.sizes[i] == 2:
            out[game.ids[i]] = BeliefSpec.beta(*_matched_beta(m[0], v[0]))
        else:
            raise ConfigError("belief variance for a population with more than two strategies needs "
                              "an explicit Dirichlet belief distribution")
    return out


def _custom_trajectory(cfg: ExperimentConfig, game: PopulationNetworkGame, params: SfpParams,
                       state: MomentState) -> dict:
    """Times, packed mean beliefs, packed belief variances and packed mean strategies."""
    t_eval = np.arange(1, cfg.steps + 1, cfg.record_every, dtype=float)
    if t_eval[-1] != cfg.steps:
        t_eval = np.append(t_eval, float(cfg.steps))
    if cfg.solver == "homog":
        traj = integrate_homogeneous(game, state.mean, cfg.steps, params, step=cfg.step, t_eval=t_eval)
        return dict(t=traj.times, mean=traj.states, var=np.zeros_like(traj.states),
                    x=choice(game, traj.states, params.beta))
    if cfg.solver == "moments":
        traj = integrate_moments(game, state, cfg.steps, params, step=cfg.step, t_eval=t_eval)
        return dict(t=traj.times, mean=traj.means, var=traj.variances,
                    x=closure_choice(game, traj.means, traj.variances, params.beta))
    if cfg.solver == "pde":
        grids = {}
        for i in game.learning:
            if game.sizes[i] != 2:
                raise ConfigError("densities need two-strategy populations")
            m, v = state.mean[game.offsets[i]], state.variance[game.offsets[i]]
            grids[game.ids[i]] = density_from_beta(*_matched_beta(m, v), cfg.grid)
        res = run_pde(game, grids, cfg.steps, params, snapshot_times=t_eval)
        mean = np.tile(game.pinned(game.uniform_profile()), (len(res.times), 1))
        var = np.zeros_like(mean)
        x = np.tile(choice(game, game.uniform_profile(), params.beta), (len(res.times), 1))
        for i in game.learning:
            o, pid = game.offsets[i], game.ids[i]
            mean[:, o], mean[:, o + 1] = res.means[pid], 1.0 - res.means[pid]
            var[:, o] = var[:, o + 1] = res.variances[pid]
            x[:, o], x[:, o + 1] = res.choices[pid], 1.0 - res.choices[pid]
        return dict(t=res.times, mean=mean, var=var, x=x)
    sim = SimConfig(agents=cfg.agents, params=params, steps=cfg.steps, seed=cfg.seed, runs=cfg.runs,
                    beliefs=_abm_beliefs(game, cfg, state))
    res = run_abm(sim, game, record_every=cfg.record_every)
    cat = lambda key: np.concatenate([res.run_mean(pid, key) for pid in game.ids], axis=1)  # noqa: E731
    return dict(t=res.times, mean=cat("belief_mean"), var=cat("belief_var"), x=cat("strategy_mean"))


def run_custom(cfg: ExperimentConfig) -> dict:
    """One trajectory per initial condition with any solver, plus optional Lyapunov or potential values."""
    cfg = cfg.resolved()
    game = _game(cfg)
    params = _params(cfg)
    if cfg.lyapunov:
        ok, residual = is_weighted_zero_sum(game)
        if not ok:
            raise ConfigError(f"Lyapunov values need a weighted zero-sum game (largest payoff sum {residual:g})")
    if cfg.potential and not (is_star_forest(game) and is_coordination(game)):
        raise ConfigError("potential values need a coordination game on a star forest")
    if (cfg.lyapunov or cfg.potential) and not params.beta > 0:
        raise ConfigError("Lyapunov and potential values need beta > 0")
    out = _out_dir(cfg)
    rows = {"case": [], "t": []}
    names = {"mean": column_names(game, "mean_"), "var": column_names(game, "var_"), "x": column_names(game, "x_")}
    for key in names:
        for name in names[key]:
            rows[name] = []
    summary = {"config": cfg.to_dict(), "cases": []}
    for n, spec in enumerate(cfg.initial):
        traj = _custom_trajectory(cfg, game, params, _initial_moments(game, spec))
        rows["case"].append(np.full(len(traj["t"]), n))
        rows["t"].append(traj["t"])
        for key, cols in names.items():
            for k, name in enumerate(cols):
                rows[name].append(traj[key][:, k])
        entry = {"final_mean": [float(v) for v in traj["mean"][-1]]}
        for flag, fn, direction in (("lyapunov", zero_sum_lyapunov, "decreasing"),
                                    ("potential", star_potential, "increasing")):
            if getattr(cfg, flag):
                values = np.asarray(fn(game, traj["mean"], params.beta))
                rows.setdefault(flag, []).append(values)
                report = check_monotone(values, direction)
                entry[flag] = {"monotone": report.ok, "worst_violation": report.worst_violation,
                               "final": float(values[-1])}
        summary["cases"].append(entry)
    _write_columns(out / "custom.csv", {k: np.concatenate(v) for k, v in rows.items()})
    _write_json(out / "custom_summary.json", summary)
    if cfg.plot:
        from .plotting import Panel, save_panels

        t = np.concatenate(rows["t"])
        case = np.concatenate(rows["case"])
        panel = Panel(title="mean beliefs", ylabel="belief", logx=True)
        for name in names["mean"]:
            col = np.concatenate(rows[name])
            for n in range(len(cfg.initial)):
                panel.line(t[case == n], col[case == n], f"{name} case {n}" if len(cfg.initial) > 1 else name)
        panels = [panel]
        for flag in ("lyapunov", "potential"):
            if flag in rows:
                p = Panel(title=flag, ylabel=flag, logx=True)
                col = np.concatenate(rows[flag])
                for n in range(len(cfg.initial)):
                    p.line(t[case == n], col[case == n])
                panels.append(p)
        save_panels(out / "custom.svg", panels)
    return summary


# ---------------------------------------------------------------------------
# equilibrium listing and game checks


def run_qre(cfg: ExperimentConfig) -> dict:
    cfg = cfg.resolved()
    game = _game(cfg)
    params = _params(cfg)
    clusters, solutions = multistart_qre(game, params.beta, n_starts=cfg.n_starts)
    if not clusters:
        raise NumericalError("no logit equilibrium found from any start")
    out = _out_dir(cfg)
    write_qre_report(out / "qre.json", game, params.beta, clusters, solutions)
    return {"clusters": len(clusters), "converged": int(sum(s.converged for s in solutions)),
            "profiles": [[float(v) for v in c.profile] for c in clusters]}


def run_validate(cfg: ExperimentConfig) -> dict:
    """Structural report on a game: sizes, learners, zero-sum and coordination classes."""
    cfg = cfg.resolved()
    game = _game(cfg)
    zero_sum, residual = is_weighted_zero_sum(game)
    offsets = coordination_offsets(game)
    return {
        "populations": [str(pid) for pid in game.ids],
        "strategies": list(game.sizes),
        "learning": [str(game.ids[i]) for i in game.learning],
        "components": len(game.components()),
        "weighted_zero_sum": zero_sum,
        "zero_sum_residual": residual,
        "coordination": is_coordination(game, exact=True),
        "coordination_up_to_offsets": offsets is not None,
        "star_forest": is_star_forest(game),
    }


RUNNERS = {
    "fig1": run_fig1,
    "roa": run_roa,
    "fig4": run_fig4,
    "custom": run_custom,
    "qre": run_qre,
    "validate": run_validate,
}


def run(cfg: ExperimentConfig) -> dict:
    return RUNNERS[cfg.kind](cfg)
