"""Agent-based smooth fictitious play with per-agent belief weights.

Every agent of a learning population keeps a weight vector over the
strategies of each neighbor population. Each step all agents play the logit
response to their normalized weights, and then every agent adds the
neighbor's population-mean mixed strategy to its weights. Independent
replicate runs are simulated side by side on a leading array axis.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import SfpParams, fmt, logit
from .game import GameError, PopulationNetworkGame


@dataclass(frozen=True)
class BeliefSpec:
    """Initial distribution of one belief vector: ``beta``, ``dirichlet`` or ``point``."""

    kind: str
    params: tuple

    @classmethod
    def beta(cls, a: float, b: float) -> "BeliefSpec":
        return cls("beta", (float(a), float(b)))

    @classmethod
    def dirichlet(cls, alpha) -> "BeliefSpec":
        return cls("dirichlet", tuple(float(v) for v in alpha))

    @classmethod
    def point(cls, mean) -> "BeliefSpec":
        return cls("point", tuple(float(v) for v in mean))

    def validate(self, size: int) -> None:
        p = np.asarray(self.params, dtype=float)
        if not np.all(np.isfinite(p)):
            raise GameError(f"non-finite {self.kind} parameters {self.params}")
        if self.kind == "beta":
            if size != 2 or p.size != 2 or np.any(p <= 0):
                raise GameError(f"Beta needs two positive parameters and a binary target, got {self.params}")
        elif self.kind == "dirichlet":
            if p.size != size or np.any(p <= 0):
                raise GameError(f"Dirichlet needs {size} positive parameters, got {self.params}")
        elif self.kind == "point":
            if p.size != size or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
                raise GameError(f"point belief must be an interior probability vector of length {size}")
        else:
            raise GameError(f"unknown belief distribution {self.kind!r}")

    def sample(self, rng: np.random.Generator, n: int, size: int) -> np.ndarray:
        """``n`` belief vectors; Beta and Dirichlet via normalized Gamma variates."""
        if self.kind == "point":
            return np.tile(np.asarray(self.params), (n, 1))
        alpha = np.asarray(self.params)
        g = rng.standard_gamma(alpha, size=(n, size))
        return g / g.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        if self.kind == "beta":
            return {"kind": "beta", "a": self.params[0], "b": self.params[1]}
        if self.kind == "dirichlet":
            return {"kind": "dirichlet", "alpha": list(self.params)}
        return {"kind": "point", "mean": list(self.params)}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "BeliefSpec":
        kind = doc.get("kind")
        try:
            if kind == "beta":
                return cls.beta(doc["a"], doc["b"])
            if kind == "dirichlet":
                return cls.dirichlet(doc["alpha"])
            if kind == "point":
                return cls.point(doc["mean"])
        except KeyError as exc:
            raise GameError(f"belief spec {dict(doc)} is missing {exc}") from None
        raise GameError(f"unknown belief distribution {kind!r}")


@dataclass
class SimConfig:
    """Simulation settings.

    ``beliefs`` maps a target population id, or an ``(observer, target)``
    pair, to the initial distribution of beliefs about that target. Pairs
    take precedence; unlisted targets start at the uniform point belief.
    Beliefs about a static population are pinned to its fixed strategy
    unless a distribution is given for them, in which case they are learned
    like any other belief.
    """

    agents: int = 1000
    params: SfpParams = field(default_factory=SfpParams)
    steps: int = 10_000
    seed: int = 0
    runs: int = 1
    beliefs: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.agents) != self.agents or self.agents < 1:
            raise GameError(f"agents must be a positive integer, got {self.agents}")
        if int(self.steps) != self.steps or self.steps < 0:
            raise GameError(f"steps must be a non-negative integer, got {self.steps}")
        if int(self.runs) != self.runs or self.runs < 1:
            raise GameError(f"runs must be a positive integer, got {self.runs}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise GameError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def belief_spec(self, game: PopulationNetworkGame, i: int, j: int) -> BeliefSpec | None:
        """Initial distribution for beliefs of ``i`` about ``j``; None means pinned."""
        obs, tgt = game.ids[i], game.ids[j]
        spec = self.beliefs.get((obs, tgt), self.beliefs.get(tgt))
        if spec is None and game.populations[j].fixed is not None:
            return None
        if spec is None:
            spec = BeliefSpec.point([1.0 / game.sizes[j]] * game.sizes[j])
        spec.validate(game.sizes[j])
        return spec

    def to_dict(self) -> dict:
        beliefs = {}
        for key, spec in self.beliefs.items():
            name = f"{key[0]}->{key[1]}" if isinstance(key, tuple) else str(key)
            beliefs[name] = spec.to_dict()
        return {
            "agents": self.agents,
            "beta": self.params.beta,
            "lambda": self.params.lam,
            "steps": self.steps,
            "seed": self.seed,
            "runs": self.runs,
            "beliefs": beliefs,
        }

    @classmethod
    def from_dict(cls, doc: Mapping, game: PopulationNetworkGame) -> "SimConfig":
        by_name = {str(pid): pid for pid in game.ids}

        def resolve(name: str):
            if name not in by_name:
                raise GameError(f"belief key refers to unknown population {name!r}")
            return by_name[name]

        beliefs = {}
        for key, spec in doc.get("beliefs", {}).items():
            if "->" in key:
                a, b = key.split("->", 1)
                beliefs[(resolve(a.strip()), resolve(b.strip()))] = BeliefSpec.from_dict(spec)
            else:
                beliefs[resolve(key)] = BeliefSpec.from_dict(spec)
        defaults = SfpParams()
        return cls(
            agents=int(doc.get("agents", 1000)),
            params=SfpParams(float(doc.get("beta", defaults.beta)), float(doc.get("lambda", defaults.lam))),
            steps=int(doc.get("steps", 10_000)),
            seed=int(doc.get("seed", 0)),
            runs=int(doc.get("runs", 1)),
            beliefs=beliefs,
        )

    @classmethod
    def load(cls, path, game: PopulationNetworkGame) -> "SimConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), game)


@dataclass
class AbmState:
    """Weights of all agents in all runs.

    ``kappa[(i, j)]`` has shape ``(|S_j|, runs, agents)`` and holds the
    weights agents of population ``i`` keep about neighbor ``j``. Beliefs
    about static populations are pinned to their fixed strategy and carry no
    weights.
    """

    t: int
    kappa: dict
    runs: int
    agents: int

    def copy(self) -> "AbmState":
        return AbmState(self.t, {k: v.copy() for k, v in self.kappa.items()}, self.runs, self.agents)


def learning_pairs(game: PopulationNetworkGame, config: SimConfig) -> list[tuple[int, int]]:
    """(observer, target) index pairs whose beliefs evolve, in a fixed order."""
    return [(i, j) for i in game.learning for j in game.neighbors[i]
            if config.belief_spec(game, i, j) is not None]


def init_population(config: SimConfig, game: PopulationNetworkGame, seed: int | None = None) -> AbmState:
    """Sample initial beliefs and set weights to ``lam * belief``.

    Run ``r`` and pair ``p`` draw from their own stream spawned from the seed,
    so a run's initial state does not depend on how many runs are simulated.
    """
    lam = config.params.lam
    if not lam > 0:
        raise GameError("agent weights need lambda > 0")
    seed = config.seed if seed is None else seed
    kappa = {}
    for p, (i, j) in enumerate(learning_pairs(game, config)):
        spec = config.belief_spec(game, i, j)
        draws = []
        for r in range(config.runs):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r, p)))
            draws.append(spec.sample(rng, config.agents, game.sizes[j]))
        mu = np.moveaxis(np.stack(draws), -1, 0)
        if np.any(mu <= 0):
            raise GameError(f"initial beliefs about population {game.ids[j]!r} hit the boundary; "
                            "use larger distribution parameters")
        kappa[(i, j)] = np.ascontiguousarray(lam * mu)
    return AbmState(0, kappa, config.runs, config.agents)


def beliefs(game: PopulationNetworkGame, state: AbmState, i: int, j: int) -> np.ndarray:
    """Beliefs of agents of ``i`` about ``j``, shape ``(|S_j|, runs, agents)``."""
    if (i, j) not in state.kappa:
        return game.populations[j].fixed[:, None, None]
    k = state.kappa[(i, j)]
    return k / k.sum(axis=0)


def _logit_first_axis(u: np.ndarray, beta: float) -> np.ndarray:
    z = beta * u
    z -= z.max(axis=0)
    np.exp(z, out=z)
    z /= z.sum(axis=0)
    return z


def agent_strategies(game: PopulationNetworkGame, state: AbmState, beta: float) -> dict:
    """Mixed strategy of every agent of every learning population, ``(|S_i|, runs, agents)``."""
    out = {}
    for i in game.learning:
        u = np.zeros((game.sizes[i], state.runs, state.agents))
        for j in game.neighbors[i]:
            u += np.tensordot(game.payoff[(i, j)], beliefs(game, state, i, j), axes=(1, 0))
        out[i] = _logit_first_axis(u, beta)
    return out


def population_means(game: PopulationNetworkGame, strategies: Mapping) -> dict:
    """Mean mixed strategy per population, ``(|S_i|, runs)``; static populations report their fixed strategy."""
    out = {}
    for k, pop in enumerate(game.populations):
        out[k] = pop.fixed[:, None] if pop.fixed is not None else strategies[k].mean(axis=-1)
    return out


def abm_step(state: AbmState, game: PopulationNetworkGame, params: SfpParams,
             strategies: Mapping | None = None) -> AbmState:
    """Synchronous update: all agents add the pre-step population means to their weights.

    ``strategies`` may pass in the agents' current mixed strategies if
    already computed.
    """
    if strategies is None:
        strategies = agent_strategies(game, state, params.beta)
    xbar = population_means(game, strategies)
    kappa = {(i, j): k + xbar[j][:, :, None] for (i, j), k in state.kappa.items()}
    return AbmState(state.t + 1, kappa, state.runs, state.agents)


def population_stats(game: PopulationNetworkGame, state: AbmState, beta: float,
                     strategies: Mapping | None = None) -> dict:
    """Sample moments (ddof=0) within each run, for each population.

    Returns per population id a dict with ``strategy_mean``/``strategy_var``
    of its agents' mixed strategies and ``belief_mean``/``belief_var`` of the
    beliefs held about it, pooled over all observing agents. Every array has
    shape ``(runs, |S|)``.
    """
    if strategies is None:
        strategies = agent_strategies(game, state, beta)
    runs = state.runs
    out = {}
    for k, pop in enumerate(game.populations):
        size = game.sizes[k]
        entry = {}
        if pop.fixed is not None:
            entry["strategy_mean"] = np.tile(pop.fixed, (runs, 1))
            entry["strategy_var"] = np.zeros((runs, size))
        else:
            entry["strategy_mean"] = strategies[k].mean(axis=-1).T
            entry["strategy_var"] = strategies[k].var(axis=-1).T
        held = [beliefs(game, state, i, k) for i in game.learning if (i, k) in state.kappa]
        if held:
            pooled = np.concatenate(held, axis=-1)
            entry["belief_mean"] = pooled.mean(axis=-1).T
            entry["belief_var"] = pooled.var(axis=-1).T
        elif pop.fixed is not None:
            entry["belief_mean"] = np.tile(pop.fixed, (runs, 1))
            entry["belief_var"] = np.zeros((runs, size))
        else:
            entry["belief_mean"] = np.full((runs, size), np.nan)
            entry["belief_var"] = np.full((runs, size), np.nan)
        out[pop.id] = entry
    return out


STAT_KEYS = ("strategy_mean", "belief_mean", "belief_var", "strategy_var")


@dataclass
class AbmResult:
    """Statistics at t = 0..steps. ``stats[pop][key]`` has shape ``(steps + 1, runs, |S|)``."""

    times: np.ndarray
    stats: dict
    final: AbmState

    def run_mean(self, pop_id, key: str) -> np.ndarray:
        """Average over runs, ``(steps + 1, |S|)``."""
        return self.stats[pop_id][key].mean(axis=1)


def run_abm(config: SimConfig, game: PopulationNetworkGame, record_every: int = 1) -> AbmResult:
    """Simulate ``config.runs`` independent runs for ``config.steps`` steps.

    Games where every learning population and all its neighbors have two
    strategies use a specialized kernel that tracks only first-strategy
    weights; it follows the same update as ``abm_step``.
    """
    if record_every < 1:
        raise GameError("record_every must be >= 1")
    state = init_population(config, game)
    if _all_binary(game):
        return _run_binary(config, game, state, record_every)
    rec = {pid: {key: [] for key in STAT_KEYS} for pid in game.ids}
    times = []
    beta = config.params.beta
    while True:
        strategies = agent_strategies(game, state, beta)
        if state.t % record_every == 0 or state.t == config.steps:
            times.append(state.t)
            for pid, entry in population_stats(game, state, beta, strategies).items():
                for key in STAT_KEYS:
                    rec[pid][key].append(entry[key])
        if state.t == config.steps:
            break
        state = abm_step(state, game, config.params, strategies)
    stats = {pid: {key: np.array(v) for key, v in d.items()} for pid, d in rec.items()}
    return AbmResult(np.array(times), stats, state)


def _all_binary(game: PopulationNetworkGame) -> bool:
    return all(game.sizes[i] == 2 and all(game.sizes[j] == 2 for j in game.neighbors[i])
               for i in game.learning)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function computed in place on a fresh array (clipped so exp cannot overflow)."""
    z = np.clip(z, -700.0, 700.0)
    np.negative(z, out=z)
    np.exp(z, out=z)
    z += 1.0
    return np.reciprocal(z, out=z)


def _run_binary(config: SimConfig, game: PopulationNetworkGame, state: AbmState, record_every: int) -> AbmResult:
    beta, lam = config.params.beta, config.params.lam
    runs = config.runs
    weights = {pair: k[0].copy() for pair, k in state.kappa.items()}  # first-strategy weights
    # utility gap u_H - u_S of population i is offset[i] + sum_j slope[i, j] * mu_jH
    offset, slope = {}, {}
    for i in game.learning:
        offset[i] = 0.0
        for j in game.neighbors[i]:
            gap = game.payoff[(i, j)][0] - game.payoff[(i, j)][1]
            if (i, j) not in weights:
                offset[i] += float(gap @ game.populations[j].fixed)
            else:
                offset[i] += gap[1]
                slope[(i, j)] = gap[0] - gap[1]
    observers = {k: [i for i in game.learning if (i, k) in weights] for k in range(len(game))}
    static_xbar = {k: np.full(runs, pop.fixed[0]) for k, pop in enumerate(game.populations)
                   if pop.fixed is not None}
    rec = {pid: {key: [] for key in STAT_KEYS} for pid in game.ids}
    times = []
    t = 0
    while True:
        scale = 1.0 / (lam + t)
        mu = {pair: w * scale for pair, w in weights.items()}
        x = {}
        for i in game.learning:
            gap = offset[i]
            for j in game.neighbors[i]:
                if (i, j) in slope:
                    gap = gap + slope[(i, j)] * mu[(i, j)]
            x[i] = _sigmoid(beta * np.broadcast_to(gap, (runs, config.agents)))
        xbar = {i: x[i].mean(axis=1) for i in game.learning}
        xbar.update(static_xbar)
        if t % record_every == 0 or t == config.steps:
            times.append(t)
            for k, pop in enumerate(game.populations):
                entry = rec[pop.id]
                if pop.fixed is not None:
                    entry["strategy_mean"].append(np.tile(pop.fixed, (runs, 1)))
                    entry["strategy_var"].append(np.zeros((runs, 2)))
                else:
                    sv = x[k].var(axis=1)
                    entry["strategy_mean"].append(np.stack([xbar[k], 1.0 - xbar[k]], axis=1))
                    entry["strategy_var"].append(np.stack([sv, sv], axis=1))
                if observers[k]:
                    # pool equal-sized observer groups
                    means = [mu[(i, k)].mean(axis=1) for i in observers[k]]
                    pooled = sum(means) / len(means)
                    var = sum(mu[(i, k)].var(axis=1) + (m - pooled) ** 2
                              for i, m in zip(observers[k], means)) / len(means)
                    entry["belief_mean"].append(np.stack([pooled, 1.0 - pooled], axis=1))
                    entry["belief_var"].append(np.stack([var, var], axis=1))
                elif pop.fixed is not None:
                    entry["belief_mean"].append(np.tile(pop.fixed, (runs, 1)))
                    entry["belief_var"].append(np.zeros((runs, 2)))
                else:
                    entry["belief_mean"].append(np.full((runs, 2), np.nan))
                    entry["belief_var"].append(np.full((runs, 2), np.nan))
        if t == config.steps:
            break
        for (i, j), w in weights.items():
            w += xbar[j][:, None]
        t += 1
    total = lam + t
    kappa = {pair: np.stack([w, total - w]) for pair, w in weights.items()}
    stats = {pid: {key: np.array(v) for key, v in d.items()} for pid, d in rec.items()}
    return AbmResult(np.array(times), stats, AbmState(t, kappa, runs, config.agents))


def write_stats_csv(path, game: PopulationNetworkGame, result: AbmResult) -> None:
    """Run-averaged statistics, one row per recorded step."""
    cols = []
    for key, name in (("strategy_mean", "mean"), ("belief_mean", "belief_mean"),
                      ("belief_var", "belief_var"), ("strategy_var", "strat_var")):
        for pop in game.populations:
            for k in range(pop.strategies):
                cols.append((pop.id, key, k, f"pop{pop.id}_{name}_s{k}"))
    means = {(pid, key): result.run_mean(pid, key) for pid in game.ids for key in STAT_KEYS}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [c[3] for c in cols])
        for n, t in enumerate(result.times):
            w.writerow([str(int(t))] + [fmt(means[(pid, key)][n, k]) for pid, key, k, _ in cols])


def standard_error_of_variance(samples: np.ndarray) -> float:
    """Standard error of the ddof=0 sample variance, from the sample fourth moment."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    m4 = np.mean(d ** 4)
    return math.sqrt(max(m4 - m2 * m2, 0.0) / n)
